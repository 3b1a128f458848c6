// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#pragma once

#include "stars_isac/active_bf.hpp"
#include "stars_isac/channel.hpp"
#include "stars_isac/metrics.hpp"
#include "stars_isac/scenario.hpp"
#include "stars_isac/stars_model.hpp"
#include "stars_isac/types.hpp"

#include <functional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace stars_isac {

// u^H H_s W_s = theta_R^T G_tilde + c_s and u^H H_s w_k = theta_R^T G_bar[k] + c_bar[k].
struct SensingRows {
    cmat G_tilde;                // M x N
    Eigen::RowVectorXcd c_s;     // 1 x N
    std::vector<cvec> G_bar;     // K vectors of length M
    std::vector<cplx> c_bar;     // K scalars
};

SensingRows build_sensing_row_vectors(const ChannelSet &ch, const BeamformerSet &bf, double absorption);

// Everything the passive stage needs with the beamformers fixed, noise-normalized.
struct PassiveData {
    int N = 0, K = 0, M = 0;
    SensingRows rows;            // divided by sigma_s
    std::vector<cmat> H;         // H_k / sigma_k, M x N
    BeamformerSet bf;
    rvec alpha;                  // on/off mask
    double rate_min = 0.0;
    double sinr_min = 0.0;
    double inr_max = 0.0;
    double un = 1.0;             // ||u_s||^2
    double xi = 0.0;
    double fixed_power = 0.0;    // transmit + BS static + STARS power

    bool sensing_enabled() const { return sinr_min > 1e-20; }
    bool inr_enabled() const { return inr_max < 1e20; }
};

PassiveData make_passive_data(const ChannelSet &ch, const BeamformerSet &bf, const StarsConfig &cfg,
                              const ScenarioParams &p);

// Exact functionals of (theta_T, theta_R) in normalized units.
std::vector<double> passive_rates(const PassiveData &d, const cvec &theta_T);
double passive_echo(const PassiveData &d, const cvec &theta_R);
double passive_leak(const PassiveData &d, const cvec &theta_R);
double passive_ee(const PassiveData &d, const cvec &theta_T);
double passive_worst_margin(const PassiveData &d, const cvec &theta_T, const cvec &theta_R);

// Gradients in the Re{g^H dx} convention.
cvec sensing_gradient_theta(const SensingRows &rows, const cvec &theta_R); // d||theta^T G~ + c_s||^2 / dtheta
cvec sensing_gradient_f1(const Eigen::RowVectorXcd &f1, const Eigen::RowVectorXcd &c_s); // d||f1 + c_s||^2 / df1

struct PddState {
    Eigen::RowVectorXcd f1;              // aux for theta_R^T G~
    std::vector<cplx> f2;                // aux for theta_R^T G_bar_k
    std::vector<Eigen::RowVectorXcd> f3; // aux for theta_T^T H_k
    cvec f_T, f_R;                       // aux copies of theta (coupled only)
    Eigen::RowVectorXcd z1;
    std::vector<cplx> z2;
    std::vector<Eigen::RowVectorXcd> z3;
    cvec z4_T, z4_R;
    double rho = 1.0;
    double rho_min = 0.0;
    double epsilon_th = 1e-4;
    double consensus_weight = 1.0; // weight of the f_T/f_R group
};

// Consensus start: every aux equals its primal expression, duals zero.
PddState init_pdd_state(const PassiveData &d, const cvec &theta_T, const cvec &theta_R);

// Augmented-Lagrangian penalty of the aux residuals (the f_T/f_R term only when coupled).
double augmented_term(const PddState &s, const PassiveData &d, const cvec &theta_T, const cvec &theta_R,
                      bool coupled);

// Largest infinity-norm residual group.
double violation(const PddState &s, const PassiveData &d, const cvec &theta_T, const cvec &theta_R, bool coupled);

struct AuxOutcome {
    PddState state;
    bool solved = false;
    std::string message;
};

// Minimizes the penalty minus the efficiency surrogate over the aux variables,
// subject to linearized rate, sensing, leakage and efficiency constraints.
// `eta` is the current efficiency; the one implied by the previous aux point
// is used instead when lower, so the previous point stays feasible.
// `backoff` tightens the rate, sensing and leakage thresholds by that relative
// amount (never past the previous point) to absorb the consensus residual.
AuxOutcome pdd_aux_update(const PddState &s, const PassiveData &d, const cvec &theta_T, const cvec &theta_R,
                          double eta, const SolverOptions &solver = {}, double backoff = 0.0);

struct ElementCoeffs {
    double c1 = 0.0, c3 = 0.0, c5 = 0.0;
    cplx c2, c4, c6;
};

// Quadratic pieces of the penalty: theta^H Phi theta - 2 Re{theta^H v} per group.
struct PenaltyQuadratics {
    cmat Phi1, Phi2, Phi3;
    cvec v1, v2, v3;
};

PenaltyQuadratics penalty_quadratics(const PddState &s, const PassiveData &d);

// Per-element coefficients: the penalty restricted to element m reads
// c1|tR|^2 - 2Re{conj(c2) tR} + c3|tR|^2 - 2Re{conj(c4) tR} + c5|tT|^2 - 2Re{conj(c6) tT} + const.
ElementCoeffs element_coeffs(const PenaltyQuadratics &q, int m, const cvec &theta_T, const cvec &theta_R);
std::vector<ElementCoeffs> element_coeffs(const PddState &s, const PassiveData &d, const cvec &theta_T,
                                          const cvec &theta_R);

struct ElementUpdate {
    double phi_T = 0.0, phi_R = 0.0, beta_T = 0.0, beta_R = 1.0;
};

// Amplitude objective over chi in [0, pi/2] with beta_R = cos chi, beta_T = sin chi.
double amplitude_objective(const ElementCoeffs &c, double chi);
// Minimizer of f on [lo, hi]: coarse grid, then ternary search to `tol` width.
double grid_ternary_min(const std::function<double(double)> &f, double lo, double hi, double tol = 1e-8,
                        int grid = 64);

ElementUpdate independent_element_update(const ElementCoeffs &c);

struct CoupledUpdate {
    cplx psi_T, psi_R;
    double beta_T = 0.0, beta_R = 1.0;
    double phi_T = 0.0, phi_R = 0.0; // wrapped, with the sign of a negative amplitude folded in
    bool first_candidate = true;
    double objective_first = 0.0, objective_second = 0.0;
    double varsigma = 0.0, omega = 0.0;
    // False when the angle-rule amplitudes lose to the exact minimizer on the
    // quarter circle for the chosen phases, which then replaces them.
    bool rule_kept = true;
};

// zeta_Y = rho * z4_Y - theta_Y for one element; beta_tilde are the current aux amplitudes.
CoupledUpdate coupled_element_update(cplx zeta_T, cplx zeta_R, double beta_tilde_T, double beta_tilde_R);

// Regularized least squares for (theta_T, theta_R) in the coupled scheme; the
// consensus group enters with its weight, which keeps the system positive definite.
std::pair<cvec, cvec> coupled_theta_update(const PddState &s, const PassiveData &d);

// Dual ascent when the violation is below the threshold (threshold then
// tightens by 0.8), otherwise rho *= c_rho. Returns true on a dual step.
bool dual_and_penalty_update(PddState &s, const PassiveData &d, const cvec &theta_T, const cvec &theta_R,
                             bool coupled, double c_rho);

struct PassiveOptions {
    int max_outer = 100;
    double rho0 = 1e4; // noise-normalized units
    double rho_floor_ratio = 1e-10;
    double constraint_backoff = 1e-2;
    double consensus_scale = 0.5; // consensus weight relative to the mean Gram diagonal
    double epsilon0 = 1e-4;
    int max_inner = 50;
    double rel_tol = 1e-4;
    // Relaxed scheme
    int pccp_iters = 30;
    double kappa0 = 1.0, kappa_growth = 2.0, kappa_max = 1e4;
    double slack_tol = 1e-6;
    SolverOptions solver{};
};

struct PassiveResult {
    StarsConfig cfg;
    double ee = 0.0;
    bool feasible = false;
    bool converged = false;
    bool improved = false;
    int outer_iterations = 0;
    double final_violation = 0.0;
    double max_unit_energy_error = 0.0; // over every inner iteration
    double max_slack = 0.0;             // relaxed scheme
    std::vector<std::tuple<int, double, double, double>> trace; // (iter, f_v or slack, rho or kappa, EE)
    std::vector<std::string> notes;
};

PassiveResult solve_relaxed(const ChannelSet &ch, const BeamformerSet &bf, const ScenarioParams &p,
                            const StarsConfig &init, const PassiveOptions &opt = {});

// Independent and coupled schemes; relaxed dispatches to solve_relaxed.
// `pinned_amplitudes` keeps beta fixed at the init values and only moves phases.
PassiveResult solve_passive(StarsType type, const ChannelSet &ch, const BeamformerSet &bf, const ScenarioParams &p,
                            const StarsConfig &init, const PassiveOptions &opt = {}, bool pinned_amplitudes = false);

} // namespace stars_isac
