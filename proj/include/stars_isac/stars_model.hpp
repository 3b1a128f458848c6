// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#pragma once

#include "stars_isac/types.hpp"

#include <json.hpp>
#include <random>
#include <string>
#include <vector>

namespace stars_isac {

enum class Side { T, R };

struct StarsConfig {
    StarsType stars_type = StarsType::coupled;
    rvec beta_T, beta_R; // amplitudes in [0, 1]
    rvec phi_T, phi_R;   // phases in [0, 2 pi)
    rvec alpha;          // on/off states, 0 or 1
    int L_beta = 2;
    int L_phi = 2;
    bool quantized = false;

    int size() const { return static_cast<int>(alpha.size()); }
};

// Uniform random phases, equal split amplitudes sqrt(0.5), all elements on. For
// the coupled type the reflection phase is the transmission phase plus pi/2.
StarsConfig initial_config(StarsType type, int M, std::mt19937_64 &rng, int L_beta = 2, int L_phi = 4);

cvec coefficients(const StarsConfig &cfg, Side side);

// Throws std::invalid_argument for levels below 1.
int pin_count(StarsType type, int L_beta, int L_phi);

double stars_power(const StarsConfig &cfg, double p_pin_w, double p_cir_w);

double wrap_phase(double phi); // into [0, 2 pi)

// Floor quantizers on amplitudes and phases. For the coupled type only the
// transmission phase is quantized; the reflection phase follows at +-pi/2.
StarsConfig quantize(const StarsConfig &cfg);
StarsConfig quantize(const StarsConfig &cfg, int L_beta, int L_phi);

// Empty iff every architecture invariant holds within tol.
std::vector<std::string> check_feasibility(const StarsConfig &cfg, double tol);

double max_unit_energy_error(const StarsConfig &cfg);
double max_coupled_phase_error(const StarsConfig &cfg); // max |cos(phi_T - phi_R)| over on elements

nlohmann::json to_json(const StarsConfig &cfg);

} // namespace stars_isac
