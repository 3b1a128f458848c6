// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#include "stars_isac/metrics.hpp"

#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace stars_isac {

EEReport make_report(const Evaluation &ev, const StarsConfig &cfg) {
    EEReport r;
    r.ee_bits_per_hz_per_joule = ev.ee;
    r.sum_rate = ev.sum_rate;
    r.per_user_rate = ev.rates;
    r.comm_sinr = ev.comm_sinr;
    r.sensing_sinr = ev.sensing_sinr;
    r.sensing_inr = ev.sensing_inr;
    r.power_breakdown = ev.power;
    r.constraint_residuals = ev.margins;
    r.config_snapshot = to_json(cfg);
    return r;
}

nlohmann::json to_json(const PowerBreakdown &pb) {
    return nlohmann::json{{"transmit_comm", pb.transmit_comm}, {"transmit_sense", pb.transmit_sense},
                          {"rate_dependent", pb.rate_dependent}, {"bs_static", pb.bs_static},
                          {"stars", pb.stars},                   {"total", pb.total()}};
}

namespace {

nlohmann::json complex_vec(const cvec &v) {
    nlohmann::json re = nlohmann::json::array(), im = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        re.push_back(v(i).real());
        im.push_back(v(i).imag());
    }
    return nlohmann::json{{"re", re}, {"im", im}};
}

} // namespace

nlohmann::json to_json(const BeamformerSet &bf) {
    nlohmann::json wc = nlohmann::json::array();
    for (const auto &w : bf.w_c) wc.push_back(complex_vec(w));
    nlohmann::json ws = nlohmann::json::array();
    for (Eigen::Index c = 0; c < bf.W_s.cols(); ++c) ws.push_back(complex_vec(bf.W_s.col(c)));
    return nlohmann::json{{"w_c", wc}, {"W_s_columns", ws}, {"u_s", complex_vec(bf.u_s)}};
}

nlohmann::json to_json(const EEReport &r) {
    nlohmann::json trace = nlohmann::json::array();
    for (const auto &[it, obj] : r.iteration_trace) trace.push_back({it, obj});
    return nlohmann::json{{"ee_bits_per_hz_per_joule", r.ee_bits_per_hz_per_joule},
                          {"sum_rate", r.sum_rate},
                          {"per_user_rate", r.per_user_rate},
                          {"comm_sinr", r.comm_sinr},
                          {"sensing_sinr", r.sensing_sinr},
                          {"sensing_inr", r.sensing_inr},
                          {"power_breakdown", to_json(r.power_breakdown)},
                          {"iteration_trace", trace},
                          {"constraint_residuals", r.constraint_residuals},
                          {"config_snapshot", r.config_snapshot}};
}

void write_beampattern_csv(const std::string &path, const std::vector<double> &angles_deg,
                           const std::vector<double> &gains_db) {
    if (angles_deg.size() != gains_db.size()) throw std::invalid_argument("beampattern csv: length mismatch");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "angle_deg,gain_db\n" << std::setprecision(10);
    for (std::size_t i = 0; i < angles_deg.size(); ++i) out << angles_deg[i] << ',' << gains_db[i] << '\n';
}

void write_trace_csv(const std::string &path, const std::vector<std::pair<int, double>> &trace) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "iter,objective\n" << std::setprecision(12);
    for (const auto &[it, obj] : trace) out << it << ',' << obj << '\n';
}

} // namespace stars_isac
