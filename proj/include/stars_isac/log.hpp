// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#pragma once

#include <string>

namespace stars_isac::log {

// Level names: trace, debug, info, warn, error, off. Initial level comes from
// the STARS_ISAC_LOG environment variable (default warn).
void set_level(const std::string &level);
void debug(const std::string &msg);
void info(const std::string &msg);
void warn(const std::string &msg);
void error(const std::string &msg);

} // namespace stars_isac::log
