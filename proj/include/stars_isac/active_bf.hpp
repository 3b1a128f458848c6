// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#pragma once

#include "stars_isac/channel.hpp"
#include "stars_isac/convex_core.hpp"
#include "stars_isac/metrics.hpp"
#include "stars_isac/scenario.hpp"
#include "stars_isac/stars_model.hpp"
#include "stars_isac/types.hpp"

#include <random>
#include <string>
#include <utility>
#include <vector>

namespace stars_isac {

// A / (A + B); throws std::invalid_argument when A + B == 0.
double dinkelbach_lambda(double A, double B);

// Per-user lower bound on the rate around a previous iterate. With the SINR
// gamma_bar = A/B and lambda = A/C there (C = A + B), the bound on log2(1 + SINR)
// is f + multiplier * (lambda + (A - lambda C) / C_prev) / ln 2 plus the
// ln-to-log2 correction folded into f. The value is tight at the previous point.
struct RateSurrogate {
    double f = 0.0;               // log2(1 + gamma_bar) - gamma_bar
    double multiplier = 1.0;      // 1 + gamma_bar
    double dinkelbach_term = 0.0; // A - lambda * C
    double value = 0.0;           // bound evaluated at (A, C) in bits
};

// A and C are the signal and signal-plus-interference-plus-noise powers at the
// evaluation point, C_prev the latter at the expansion point.
RateSurrogate dual_rate_surrogate(double gamma_bar, double A, double C, double lambda, double C_prev);
RateSurrogate dual_rate_surrogate(double gamma_bar, double A, double C, double lambda);

// q(x) = ||F x + c||^2 and its tangent plane at x0: q(x0) + Re{g^H (x - x0)}.
struct AffineMinorant {
    cvec x0;
    double value0 = 0.0;
    cvec gradient;

    double operator()(const cvec &x) const;
};

AffineMinorant linearize_quadratic(const cmat &F, const cvec &c, const cvec &x0);
double quadratic_value(const cmat &F, const cvec &c, const cvec &x);

// Noise-normalized data seen by the transmit/receive beamforming blocks.
struct ActiveData {
    int N = 0, K = 0;
    std::vector<Eigen::RowVectorXcd> h; // user channels theta_T^T H_k / sigma_k
    cmat Hs;                            // sensing channel / sigma_s
    double rate_min = 0.0;              // bits/s/Hz, <= 0 disables
    double sinr_min = 0.0;              // linear, <= 1e-20 disables
    double inr_max = 0.0;               // linear, >= 1e20 disables
    double power_budget = 0.0;          // W
    double xi = 0.0;                    // rate-dependent power factor
    double static_power = 0.0;          // BS static plus STARS power

    bool sensing_enabled() const { return sinr_min > 1e-20; }
    bool inr_enabled() const { return inr_max < 1e20; }
};

ActiveData make_active_data(const ChannelSet &ch, const StarsConfig &cfg, const ScenarioParams &p);

// Gradients (in the Re{g^H dx} convention) used by the linearizations.
cvec signal_gradient(const Eigen::RowVectorXcd &h, const cvec &w);       // d|h w|^2 / dw
cmat sensing_gradient_Ws(const cmat &Hs, const cvec &u, const cmat &Ws); // d||u^H Hs Ws||^2 / dWs
cvec sensing_gradient_u(const cmat &Hs, const cmat &Ws, const cvec &u);  // d||u^H Hs Ws||^2 / du

// Exact quantities at a beamformer set (normalized units).
double signal_power(const ActiveData &d, const BeamformerSet &bf, int k);
double total_received(const ActiveData &d, const BeamformerSet &bf, int k); // A + B
double echo_power(const ActiveData &d, const BeamformerSet &bf);            // ||u^H Hs Ws||^2
double leak_power(const ActiveData &d, const BeamformerSet &bf);            // sum_k |u^H Hs w_k|^2
double active_sum_rate(const ActiveData &d, const BeamformerSet &bf);
double active_ee(const ActiveData &d, const BeamformerSet &bf);

// Smallest constraint margin, each margin normalized so that >= 0 means satisfied.
double active_worst_margin(const ActiveData &d, const BeamformerSet &bf);

struct SCAState {
    std::vector<double> gamma_bar, lambda, A, C;
    BeamformerSet breve;
    double eta = 0.0;
};

SCAState make_sca_state(const ActiveData &d, const BeamformerSet &bf);

// Surrogate per-user rate at bf around the state's expansion point.
double surrogate_rate(const ActiveData &d, const SCAState &s, const BeamformerSet &bf, int k);

// Largest |surrogate - exact| over every linearized quantity at the expansion
// point; zero up to rounding by construction.
double max_surrogate_gap(const ActiveData &d, const SCAState &s);

struct WcProblem {
    ConvexProblem problem;
    std::vector<Var> w;
    Var t; // only used in restoration mode
};

struct WsProblem {
    ConvexProblem problem;
    Var Ws;
    Var t;
};

// Precoders and sensing covariance together. The power budget and the sensing
// SINR couple them, so alternating between the two alone can stall.
struct TransmitProblem {
    ConvexProblem problem;
    std::vector<Var> w;
    Var Ws;
    Var t;
};

struct UsProblem {
    ConvexProblem problem;
    Var u;
    Var t;
};

// In restoration mode the block maximizes the smallest normalized margin
// instead of the energy-efficiency surrogate.
WcProblem build_wc_subproblem(const ActiveData &d, const SCAState &s, bool restoration = false);
WsProblem build_Ws_subproblem(const ActiveData &d, const SCAState &s, bool restoration = false);
TransmitProblem build_transmit_subproblem(const ActiveData &d, const SCAState &s, bool restoration = false);
UsProblem build_us_subproblem(const ActiveData &d, const SCAState &s, bool restoration = false);

struct ActiveOptions {
    int max_passes = 50;
    double rel_tol = 1e-4;
    SolverOptions solver{};
};

struct ActiveResult {
    BeamformerSet bf;
    double eta = 0.0;                        // energy efficiency at bf
    std::vector<std::pair<int, double>> trace; // (pass, EE), feasible passes only
    bool feasible = false;
    int passes = 0;
    double rate_threshold_used = 0.0;
    std::vector<std::string> notes;
};

// Matched filters projected away from the sensing receiver, 70/30 power split
// between communication and sensing, combiner along the dominant echo.
BeamformerSet initial_beamformers(const ActiveData &d);
BeamformerSet random_beamformers(const ActiveData &d, std::mt19937_64 &rng);

// One block-coordinate run from `init` with the thresholds in `d`.
ActiveResult run_active_blocks(const ActiveData &d, const BeamformerSet &init, const ActiveOptions &opt = {});

// Full solve with the fallback ladder: halved rate threshold as a stepping
// stone, then a random restart, then an explicit infeasibility report.
ActiveResult solve_active(const ChannelSet &ch, const StarsConfig &cfg, const ScenarioParams &p,
                          const BeamformerSet &init, const ActiveOptions &opt = {});
ActiveResult solve_active(const ChannelSet &ch, const StarsConfig &cfg, const ScenarioParams &p,
                          const ActiveOptions &opt = {});

} // namespace stars_isac
