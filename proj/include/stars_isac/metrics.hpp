// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#pragma once

#include "stars_isac/channel.hpp"
#include "stars_isac/scenario.hpp"
#include "stars_isac/stars_model.hpp"
#include "stars_isac/types.hpp"

#include <json.hpp>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace stars_isac {

struct BeamformerSet {
    std::vector<cvec> w_c; // K precoders of length N
    cmat W_s;              // N x N sensing precoder
    cvec u_s;              // receive combiner

    double transmit_power() const;
    double comm_power() const;
    double sense_power() const;
};

BeamformerSet zero_beamformers(int N, int K);

double comm_sinr(int k, const cvec &theta_T, const ChannelSet &ch, const BeamformerSet &bf, double sigma_k2_w);
std::vector<double> comm_sinrs(const cvec &theta_T, const ChannelSet &ch, const BeamformerSet &bf, double sigma_k2_w);

// absorption * g g^H + absorption^2 * G^H diag(theta_R) G
cmat sensing_channel(const cvec &theta_R, const ChannelSet &ch, double absorption);

// Both throw std::invalid_argument for a zero combiner.
double sensing_sinr(const BeamformerSet &bf, const cmat &H_s, double sigma_s2_w);
double sensing_inr(const BeamformerSet &bf, const cmat &H_s, double sigma_s2_w);

struct PowerBreakdown {
    double transmit_comm = 0.0;
    double transmit_sense = 0.0;
    double rate_dependent = 0.0;
    double bs_static = 0.0;
    double stars = 0.0;
    double total() const { return transmit_comm + transmit_sense + rate_dependent + bs_static + stars; }
};

PowerBreakdown total_power(const BeamformerSet &bf, const StarsConfig &cfg, double sum_rate, const ScenarioParams &p);

double sum_rate(const std::vector<double> &sinrs);
double energy_efficiency(double sum_rate, double total_power_w);

enum class PatternMode { isac, comm_only, sense_only };
PatternMode pattern_mode_from_string(const std::string &s);
std::string to_string(PatternMode m);

// Gain in dB per grid angle (degrees), floored at -200 dB. Throws on an empty grid.
std::vector<double> beampattern(const BeamformerSet &bf, double spacing_over_lambda,
                                const std::vector<double> &angles_deg, PatternMode mode = PatternMode::isac);

// Every functional for one (channels, STARS, beamformers) triple.
struct Evaluation {
    std::vector<double> comm_sinr;
    std::vector<double> rates;
    double sum_rate = 0.0;
    double sensing_sinr = 0.0;
    double sensing_inr = 0.0;
    PowerBreakdown power;
    double ee = 0.0;
    // Margins: >= 0 means the constraint holds. Rate and power in their natural
    // units, sensing in linear ratio units.
    std::map<std::string, double> margins;

    double worst_margin() const;
    bool feasible(double tol) const;
};

Evaluation evaluate(const ScenarioParams &p, const ChannelSet &ch, const StarsConfig &cfg, const BeamformerSet &bf);

struct EEReport {
    double ee_bits_per_hz_per_joule = 0.0;
    double sum_rate = 0.0;
    std::vector<double> per_user_rate;
    std::vector<double> comm_sinr;
    double sensing_sinr = 0.0;
    double sensing_inr = 0.0;
    PowerBreakdown power_breakdown;
    std::vector<std::pair<int, double>> iteration_trace;
    std::map<std::string, double> constraint_residuals;
    nlohmann::json config_snapshot;
};

EEReport make_report(const Evaluation &ev, const StarsConfig &cfg);
nlohmann::json to_json(const EEReport &r);
nlohmann::json to_json(const BeamformerSet &bf);
nlohmann::json to_json(const PowerBreakdown &pb);

void write_beampattern_csv(const std::string &path, const std::vector<double> &angles_deg,
                           const std::vector<double> &gains_db);
void write_trace_csv(const std::string &path, const std::vector<std::pair<int, double>> &trace);

} // namespace stars_isac
