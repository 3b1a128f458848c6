// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#include "stars_isac/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace stars_isac {

double BeamformerSet::comm_power() const {
    double s = 0.0;
    for (const auto &w : w_c) s += w.squaredNorm();
    return s;
}

double BeamformerSet::sense_power() const { return W_s.squaredNorm(); }

double BeamformerSet::transmit_power() const { return comm_power() + sense_power(); }

BeamformerSet zero_beamformers(int N, int K) {
    BeamformerSet bf;
    bf.w_c.assign(static_cast<std::size_t>(K), cvec::Zero(N));
    bf.W_s = cmat::Zero(N, N);
    bf.u_s = cvec::Zero(N);
    if (N > 0) bf.u_s(0) = 1.0;
    return bf;
}

double comm_sinr(int k, const cvec &theta_T, const ChannelSet &ch, const BeamformerSet &bf, double sigma_k2_w) {
    // Effective row channel theta_T^T H_k seen by user k.
    const Eigen::RowVectorXcd h = theta_T.transpose() * ch.H[static_cast<std::size_t>(k)];
    double signal = 0.0, interference = 0.0;
    for (std::size_t j = 0; j < bf.w_c.size(); ++j) {
        const double p = std::norm((h * bf.w_c[j])(0));
        if (static_cast<int>(j) == k)
            signal = p;
        else
            interference += p;
    }
    interference += (h * bf.W_s).squaredNorm();
    return signal / (interference + sigma_k2_w);
}

std::vector<double> comm_sinrs(const cvec &theta_T, const ChannelSet &ch, const BeamformerSet &bf, double sigma_k2_w) {
    std::vector<double> out(static_cast<std::size_t>(ch.n_users()));
    for (int k = 0; k < ch.n_users(); ++k) out[static_cast<std::size_t>(k)] = comm_sinr(k, theta_T, ch, bf, sigma_k2_w);
    return out;
}

cmat sensing_channel(const cvec &theta_R, const ChannelSet &ch, double absorption) {
    return absorption * ch.g_s * ch.g_s.adjoint() +
           absorption * absorption * ch.G.adjoint() * theta_R.asDiagonal() * ch.G;
}

namespace {

double echo_interference(const Eigen::RowVectorXcd &uh, const BeamformerSet &bf) {
    double s = 0.0;
    for (const auto &w : bf.w_c) s += std::norm((uh * w)(0));
    return s;
}

} // namespace

double sensing_sinr(const BeamformerSet &bf, const cmat &H_s, double sigma_s2_w) {
    const double un = bf.u_s.squaredNorm();
    if (!(un > 0.0)) throw std::invalid_argument("sensing_sinr: receive combiner is zero");
    const Eigen::RowVectorXcd uh = bf.u_s.adjoint() * H_s;
    return (uh * bf.W_s).squaredNorm() / (echo_interference(uh, bf) + sigma_s2_w * un);
}

double sensing_inr(const BeamformerSet &bf, const cmat &H_s, double sigma_s2_w) {
    const double un = bf.u_s.squaredNorm();
    if (!(un > 0.0)) throw std::invalid_argument("sensing_inr: receive combiner is zero");
    const Eigen::RowVectorXcd uh = bf.u_s.adjoint() * H_s;
    return echo_interference(uh, bf) / (sigma_s2_w * un);
}

PowerBreakdown total_power(const BeamformerSet &bf, const StarsConfig &cfg, double sum_rate, const ScenarioParams &p) {
    PowerBreakdown pb;
    pb.transmit_comm = bf.comm_power();
    pb.transmit_sense = bf.sense_power();
    pb.rate_dependent = p.decode_constant * sum_rate;
    pb.bs_static = p.p_bs_w;
    pb.stars = stars_power(cfg, p.p_pin_w, p.p_cir_w);
    return pb;
}

double sum_rate(const std::vector<double> &sinrs) {
    double r = 0.0;
    for (double g : sinrs) r += std::log2(1.0 + g);
    return r;
}

double energy_efficiency(double rate, double total_power_w) { return rate / total_power_w; }

PatternMode pattern_mode_from_string(const std::string &s) {
    if (s == "isac") return PatternMode::isac;
    if (s == "comm" || s == "comm_only") return PatternMode::comm_only;
    if (s == "sense" || s == "sense_only") return PatternMode::sense_only;
    throw std::invalid_argument("unknown beampattern mode '" + s + "'");
}

std::string to_string(PatternMode m) {
    switch (m) {
    case PatternMode::isac: return "isac";
    case PatternMode::comm_only: return "comm_only";
    case PatternMode::sense_only: return "sense_only";
    }
    return "isac";
}

std::vector<double> beampattern(const BeamformerSet &bf, double spacing_over_lambda,
                                const std::vector<double> &angles_deg, PatternMode mode) {
    if (angles_deg.empty()) throw std::invalid_argument("beampattern: empty angle grid");
    const int N = static_cast<int>(bf.W_s.rows() > 0 ? bf.W_s.rows() : (bf.w_c.empty() ? 0 : bf.w_c[0].size()));
    std::vector<double> out;
    out.reserve(angles_deg.size());
    for (double deg : angles_deg) {
        // Same steering convention as the channels: the field radiated towards deg is a^T w.
        const cvec a = array_response(N, spacing_over_lambda, deg * kPi / 180.0);
        double g = 0.0;
        if (mode != PatternMode::comm_only && bf.W_s.size() > 0) g += (a.transpose() * bf.W_s).squaredNorm();
        if (mode != PatternMode::sense_only)
            for (const auto &w : bf.w_c) g += std::norm(a.conjugate().dot(w));
        out.push_back(g > 1e-20 ? 10.0 * std::log10(g) : -200.0);
    }
    return out;
}

double Evaluation::worst_margin() const {
    double w = std::numeric_limits<double>::infinity();
    for (const auto &[name, v] : margins) w = std::min(w, v);
    return w;
}

bool Evaluation::feasible(double tol) const { return worst_margin() >= -tol; }

Evaluation evaluate(const ScenarioParams &p, const ChannelSet &ch, const StarsConfig &cfg, const BeamformerSet &bf) {
    Evaluation ev;
    const cvec tT = coefficients(cfg, Side::T);
    const cvec tR = coefficients(cfg, Side::R);
    ev.comm_sinr = comm_sinrs(tT, ch, bf, p.noise_user_w());
    for (double g : ev.comm_sinr) ev.rates.push_back(std::log2(1.0 + g));
    ev.sum_rate = sum_rate(ev.comm_sinr);
    const cmat Hs = sensing_channel(tR, ch, p.absorption_coeff);
    ev.sensing_sinr = sensing_sinr(bf, Hs, p.noise_sensing_w());
    ev.sensing_inr = sensing_inr(bf, Hs, p.noise_sensing_w());
    ev.power = total_power(bf, cfg, ev.sum_rate, p);
    ev.ee = energy_efficiency(ev.sum_rate, ev.power.total());

    double min_rate_margin = std::numeric_limits<double>::infinity();
    for (double r : ev.rates) min_rate_margin = std::min(min_rate_margin, r - p.rate_min_bpshz);
    ev.margins["rate_min"] = ev.rates.empty() ? 0.0 : min_rate_margin;
    ev.margins["bs_power"] = p.bs_power_budget_w() - bf.transmit_power();
    ev.margins["stars_power"] = p.stars_power_budget_w() - ev.power.stars;
    ev.margins["sensing_sinr"] = ev.sensing_sinr - p.sensing_sinr_min();
    ev.margins["sensing_inr"] = p.sensing_inr_max() - ev.sensing_inr;
    return ev;
}

} // namespace stars_isac
