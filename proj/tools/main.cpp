// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#include "stars_isac/cli.hpp"

int main(int argc, char **argv) { return stars_isac::cli::main(argc, argv); }
