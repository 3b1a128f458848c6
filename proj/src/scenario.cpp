// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#include "stars_isac/scenario.hpp"
#include "stars_isac/log.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace stars_isac {

std::string to_string(StarsType t) {
    switch (t) {
    case StarsType::relaxed: return "relaxed";
    case StarsType::independent: return "independent";
    case StarsType::coupled: return "coupled";
    }
    return "unknown";
}

StarsType stars_type_from_string(const std::string &s) {
    if (s == "relaxed") return StarsType::relaxed;
    if (s == "independent") return StarsType::independent;
    if (s == "coupled") return StarsType::coupled;
    throw std::invalid_argument("unknown stars_type '" + s + "'");
}

double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
double watt_to_dbm(double watt) { return 10.0 * std::log10(watt) + 30.0; }
double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

double ScenarioParams::noise_user_w() const { return dbm_to_watt(noise_user_dbm); }
double ScenarioParams::noise_sensing_w() const { return dbm_to_watt(noise_sensing_dbm); }
double ScenarioParams::bs_power_budget_w() const { return dbm_to_watt(bs_power_budget_dbm); }
double ScenarioParams::stars_power_budget_w() const { return dbm_to_watt(stars_power_budget_dbm); }
double ScenarioParams::sensing_sinr_min() const { return db_to_linear(sensing_sinr_min_db); }
double ScenarioParams::sensing_inr_max() const { return db_to_linear(sensing_inr_max_db); }

double ScenarioParams::target_stars_distance() const {
    if (geometry.target_stars_distance_m > 0.0) return geometry.target_stars_distance_m;
    const double a = geometry.bs_target_distance_m;
    const double b = geometry.bs_stars_distance_m;
    const double dphi = (geometry.stars_angle_deg - geometry.target_angle_deg) * kPi / 180.0;
    return std::sqrt(std::max(a * a + b * b - 2.0 * a * b * std::cos(dphi), 1e-6));
}

std::vector<double> ScenarioParams::user_angles_deg() const {
    std::vector<double> out(static_cast<std::size_t>(std::max(n_users, 0)));
    if (n_users == 1) {
        out[0] = geometry.user_angle_deg;
        return out;
    }
    for (int k = 0; k < n_users; ++k) {
        const double frac = static_cast<double>(k) / static_cast<double>(n_users - 1);
        out[static_cast<std::size_t>(k)] =
            geometry.user_angle_deg - geometry.user_spread_deg + 2.0 * geometry.user_spread_deg * frac;
    }
    return out;
}

namespace {

bool is_pow2_in_range(int v) {
    if (v < 2 || v > 32768) return false;
    return (v & (v - 1)) == 0;
}

void require(bool ok, const std::string &field, const std::string &why) {
    if (!ok) throw std::invalid_argument(field + " " + why);
}

} // namespace

std::vector<std::string> validate(const ScenarioParams &p) {
    std::vector<std::string> warnings;
    require(p.n_antennas >= 1, "n_antennas", "must be positive");
    require(p.n_users >= 1, "n_users", "must be positive");
    require(p.n_elements >= 1, "n_elements", "must be positive");
    require(p.carrier_freq_hz > 0.0, "carrier_freq_hz", "must be positive");
    require(p.rician_factor >= 0.0, "rician_factor", "must be nonnegative");
    require(p.p_pin_w > 0.0, "p_pin_w", "must be positive");
    require(p.p_cir_w > 0.0, "p_cir_w", "must be positive");
    require(p.p_bs_w > 0.0, "p_bs_w", "must be positive");
    require(p.decode_constant >= 0.0, "decode_constant", "must be nonnegative");
    require(p.rate_min_bpshz >= 0.0, "rate_min_bpshz", "must be nonnegative");
    require(std::isfinite(p.bs_power_budget_dbm), "bs_power_budget_dbm", "must be finite");
    require(std::isfinite(p.stars_power_budget_dbm), "stars_power_budget_dbm", "must be finite");
    require(std::isfinite(p.noise_user_dbm), "noise_user_dbm", "must be finite");
    require(std::isfinite(p.noise_sensing_dbm), "noise_sensing_dbm", "must be finite");
    require(p.absorption_coeff > 0.0 && p.absorption_coeff <= 1.0, "absorption_coeff", "must lie in (0, 1]");
    require(p.pdd_learning_rate > 0.0 && p.pdd_learning_rate <= 1.0, "pdd_learning_rate", "must lie in (0, 1]");
    require(is_pow2_in_range(p.quant_min), "quant_min", "out of range");
    require(is_pow2_in_range(p.quant_max), "quant_max", "out of range");
    require(p.quant_min <= p.quant_max, "quant_min", "exceeds quant_max");

    const Geometry &g = p.geometry;
    require(g.bs_target_distance_m > 0.0, "bs_target_distance_m", "must be positive");
    require(g.bs_stars_distance_m > 0.0, "bs_stars_distance_m", "must be positive");
    require(g.stars_user_distance_m > 0.0, "stars_user_distance_m", "must be positive");
    require(g.target_stars_distance_m >= 0.0, "target_stars_distance_m", "must be nonnegative");
    require(g.antenna_spacing_wl > 0.0, "antenna_spacing_wl", "must be positive");
    require(g.element_spacing_wl > 0.0, "element_spacing_wl", "must be positive");
    require(g.user_spread_deg >= 0.0, "user_spread_deg", "must be nonnegative");
    for (auto [name, v] : {std::pair{"target_angle_deg", g.target_angle_deg},
                           std::pair{"stars_angle_deg", g.stars_angle_deg},
                           std::pair{"user_angle_deg", g.user_angle_deg}})
        require(v >= -180.0 && v <= 180.0, name, "must lie in [-180, 180]");

    if (p.pathloss_exponent < 2.0)
        warnings.push_back("pathloss_exponent below 2 is unusual for outdoor links");
    return warnings;
}

// Flat key table: every scalar field appears once, keyed by its snake_case name.
namespace {

template <class F>
void for_each_field(ScenarioParams &p, F &&f) {
    f("n_antennas", p.n_antennas);
    f("n_users", p.n_users);
    f("n_elements", p.n_elements);
    f("carrier_freq_hz", p.carrier_freq_hz);
    f("ref_pathloss_db", p.ref_pathloss_db);
    f("pathloss_exponent", p.pathloss_exponent);
    f("rician_factor", p.rician_factor);
    f("noise_user_dbm", p.noise_user_dbm);
    f("noise_sensing_dbm", p.noise_sensing_dbm);
    f("bs_power_budget_dbm", p.bs_power_budget_dbm);
    f("stars_power_budget_dbm", p.stars_power_budget_dbm);
    f("rate_min_bpshz", p.rate_min_bpshz);
    f("sensing_sinr_min_db", p.sensing_sinr_min_db);
    f("sensing_inr_max_db", p.sensing_inr_max_db);
    f("decode_constant", p.decode_constant);
    f("p_pin_w", p.p_pin_w);
    f("p_cir_w", p.p_cir_w);
    f("p_bs_w", p.p_bs_w);
    f("quant_min", p.quant_min);
    f("quant_max", p.quant_max);
    f("absorption_coeff", p.absorption_coeff);
    f("pdd_learning_rate", p.pdd_learning_rate);
    f("relaxed_fixed_amplitude", p.relaxed_fixed_amplitude);
    f("seed", p.seed);
    f("bs_target_distance_m", p.geometry.bs_target_distance_m);
    f("bs_stars_distance_m", p.geometry.bs_stars_distance_m);
    f("stars_user_distance_m", p.geometry.stars_user_distance_m);
    f("target_stars_distance_m", p.geometry.target_stars_distance_m);
    f("target_angle_deg", p.geometry.target_angle_deg);
    f("stars_angle_deg", p.geometry.stars_angle_deg);
    f("user_angle_deg", p.geometry.user_angle_deg);
    f("user_spread_deg", p.geometry.user_spread_deg);
    f("antenna_spacing_wl", p.geometry.antenna_spacing_wl);
    f("element_spacing_wl", p.geometry.element_spacing_wl);
}

} // namespace

nlohmann::json to_json(const ScenarioParams &p) {
    nlohmann::json j = nlohmann::json::object();
    ScenarioParams copy = p;
    for_each_field(copy, [&](const char *key, auto &v) { j[key] = v; });
    j["stars_type"] = to_string(p.stars_type);
    return j;
}

ScenarioParams scenario_from_json(const nlohmann::json &j) {
    if (!j.is_object()) throw std::invalid_argument("scenario document must be a JSON object");
    ScenarioParams p;
    std::map<std::string, bool> known;
    for_each_field(p, [&](const char *key, auto &v) {
        known[key] = true;
        auto it = j.find(key);
        if (it == j.end()) return;
        try {
            v = it->template get<std::remove_reference_t<decltype(v)>>();
        } catch (const nlohmann::json::exception &e) {
            throw std::invalid_argument(std::string(key) + " has the wrong type: " + e.what());
        }
    });
    known["stars_type"] = true;
    if (auto it = j.find("stars_type"); it != j.end()) {
        if (!it->is_string()) throw std::invalid_argument("stars_type must be a string");
        p.stars_type = stars_type_from_string(it->get<std::string>());
    }
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw std::invalid_argument("unknown field '" + it.key() + "'");
    for (const auto &w : validate(p)) log::warn(w);
    return p;
}

ScenarioParams load_scenario(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scenario file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    nlohmann::json j;
    try {
        j = ss.str().find_first_not_of(" \t\r\n") == std::string::npos ? nlohmann::json::object()
                                                                      : nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::parse_error &e) {
        throw std::invalid_argument("scenario parse failure in '" + path + "': " + e.what());
    }
    return scenario_from_json(j);
}

void save_scenario(const ScenarioParams &p, const std::string &path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write scenario file '" + path + "'");
    out << to_json(p).dump(2) << "\n";
}

std::uint64_t child_seed(std::uint64_t master, std::uint64_t counter) {
    std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                      static_cast<std::uint32_t>(counter), static_cast<std::uint32_t>(counter >> 32)};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

std::mt19937_64 make_rng(std::uint64_t master, std::uint64_t counter) {
    return std::mt19937_64(child_seed(master, counter));
}

} // namespace stars_isac
