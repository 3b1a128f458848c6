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

// Positions are polar around the BS. The STARS sits at (bs_stars_distance_m,
// stars_angle_deg); users are stars_user_distance_m away from the STARS.
struct Geometry {
    double bs_target_distance_m = 5.0;
    double bs_stars_distance_m = 30.0;
    double stars_user_distance_m = 50.0;
    double target_stars_distance_m = 0.0; // 0 = derive from the two BS-centred positions
    double target_angle_deg = 0.0;
    double stars_angle_deg = 45.0;
    double user_angle_deg = 45.0;
    double user_spread_deg = 10.0; // users spread over user_angle +- spread when K > 1
    double antenna_spacing_wl = 0.5;
    double element_spacing_wl = 0.5;
};

struct ScenarioParams {
    int n_antennas = 4;
    int n_users = 2;
    int n_elements = 8;
    double carrier_freq_hz = 3.5e9;
    double ref_pathloss_db = -20.0;
    double pathloss_exponent = 2.2;
    double rician_factor = 3.0;
    double noise_user_dbm = -90.0;
    double noise_sensing_dbm = -90.0;
    double bs_power_budget_dbm = 36.0;
    double stars_power_budget_dbm = 25.0;
    double rate_min_bpshz = 1.0;
    double sensing_sinr_min_db = 3.0;
    double sensing_inr_max_db = 10.0;
    double decode_constant = 0.3;
    double p_pin_w = 0.33e-3;
    double p_cir_w = 0.1;
    double p_bs_w = 10.0;
    int quant_min = 2;
    int quant_max = 32768;
    double absorption_coeff = 0.5;
    Geometry geometry;
    StarsType stars_type = StarsType::coupled;
    double pdd_learning_rate = 0.5;
    bool relaxed_fixed_amplitude = false;
    std::uint64_t seed = 1;

    double noise_user_w() const;
    double noise_sensing_w() const;
    double bs_power_budget_w() const;
    double stars_power_budget_w() const;
    double sensing_sinr_min() const;
    double sensing_inr_max() const;
    double target_stars_distance() const;
    std::vector<double> user_angles_deg() const;
};

double dbm_to_watt(double dbm);
double watt_to_dbm(double watt);
double db_to_linear(double db);

// Throws std::invalid_argument naming the offending field. Returns warnings.
std::vector<std::string> validate(const ScenarioParams &p);

nlohmann::json to_json(const ScenarioParams &p);
// Starts from compiled-in defaults and overrides field by field.
ScenarioParams scenario_from_json(const nlohmann::json &j);
ScenarioParams load_scenario(const std::string &path);
void save_scenario(const ScenarioParams &p, const std::string &path);

// Child seeds for Monte-Carlo realizations, derived from the master seed by counter.
std::uint64_t child_seed(std::uint64_t master, std::uint64_t counter);
std::mt19937_64 make_rng(std::uint64_t master, std::uint64_t counter = 0);

} // namespace stars_isac
