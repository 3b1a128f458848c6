// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#include "stars_isac/log.hpp"

#include <cstdlib>
#include <memory>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

namespace stars_isac::log {
namespace {

std::shared_ptr<spdlog::logger> &logger() {
    static std::shared_ptr<spdlog::logger> lg = [] {
        auto l = spdlog::stderr_logger_mt("stars_isac");
        l->set_pattern("[%l] %v");
        const char *env = std::getenv("STARS_ISAC_LOG");
        l->set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
        return l;
    }();
    return lg;
}

} // namespace

void set_level(const std::string &level) { logger()->set_level(spdlog::level::from_str(level)); }
void debug(const std::string &msg) { logger()->debug(msg); }
void info(const std::string &msg) { logger()->info(msg); }
void warn(const std::string &msg) { logger()->warn(msg); }
void error(const std::string &msg) { logger()->error(msg); }

} // namespace stars_isac::log
