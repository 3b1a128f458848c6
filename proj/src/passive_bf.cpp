// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#include "stars_isac/passive_bf.hpp"

#include "stars_isac/log.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace stars_isac {

namespace {

constexpr double kLn2 = 0.69314718055994530942;
constexpr double kMarginTol = 1e-9;

using Row = Eigen::RowVectorXcd;

double inf_norm(const Row &r) { return r.size() == 0 ? 0.0 : r.cwiseAbs().maxCoeff(); }
double inf_norm(const cvec &v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

cmat as_row_matrix(const cvec &a) { return a.transpose(); }

std::vector<int> on_elements(const rvec &alpha) {
    std::vector<int> on;
    for (int m = 0; m < alpha.size(); ++m)
        if (alpha(m) > 0.5) on.push_back(m);
    return on;
}

// Full-length coefficient vector from values on the active elements.
cmat selector(int M, const std::vector<int> &on) {
    cmat S = cmat::Zero(M, static_cast<Eigen::Index>(on.size()));
    for (std::size_t i = 0; i < on.size(); ++i) S(on[i], static_cast<Eigen::Index>(i)) = 1.0;
    return S;
}

struct RatePieces {
    double A = 0.0, C = 0.0;
};

// Signal and total received power for the user row vector y = h (theta^T H_k / sigma).
RatePieces rate_pieces(const Row &y, const BeamformerSet &bf, int k) {
    RatePieces r;
    r.A = std::norm((y * bf.w_c[static_cast<std::size_t>(k)])(0));
    r.C = 1.0 + (y * bf.W_s).squaredNorm();
    for (const auto &w : bf.w_c) r.C += std::norm((y * w)(0));
    return r;
}

// R~ = k0 + a * A_lin - c * C, tight at the expansion point.
struct RateCoeffs {
    double k0, a, c;
};

RateCoeffs rate_coeffs(const RatePieces &p) {
    const double g = p.A / (p.C - p.A);
    const double lam = dinkelbach_lambda(p.A, p.C - p.A);
    return {std::log2(1.0 + g) + (-g + (1.0 + g) * lam) / kLn2, (1.0 + g) / (p.C * kLn2),
            (1.0 + g) * lam / (p.C * kLn2)};
}

double sum_rate_from(const std::vector<double> &r) {
    double s = 0.0;
    for (double x : r) s += x;
    return s;
}

} // namespace

SensingRows build_sensing_row_vectors(const ChannelSet &ch, const BeamformerSet &bf, double absorption) {
    SensingRows r;
    const cvec &u = bf.u_s;
    const double a2 = absorption * absorption;
    const cvec Gu_conj = (ch.G * u).conjugate(); // diag(u^H G^H)
    r.G_tilde = a2 * Gu_conj.asDiagonal() * ch.G * bf.W_s;
    const cplx ug = u.dot(ch.g_s); // u^H g
    r.c_s = absorption * ug * (ch.g_s.adjoint() * bf.W_s);
    for (const auto &w : bf.w_c) {
        r.G_bar.push_back(a2 * Gu_conj.asDiagonal() * (ch.G * w));
        r.c_bar.push_back(absorption * ug * ch.g_s.dot(w));
    }
    return r;
}

PassiveData make_passive_data(const ChannelSet &ch, const BeamformerSet &bf, const StarsConfig &cfg,
                              const ScenarioParams &p) {
    PassiveData d;
    d.N = ch.n_antennas();
    d.K = ch.n_users();
    d.M = ch.n_elements();
    d.rows = build_sensing_row_vectors(ch, bf, p.absorption_coeff);
    const double ss = std::sqrt(p.noise_sensing_w());
    d.rows.G_tilde /= ss;
    d.rows.c_s /= ss;
    for (auto &g : d.rows.G_bar) g /= ss;
    for (auto &c : d.rows.c_bar) c /= ss;
    const double su = std::sqrt(p.noise_user_w());
    for (const auto &H : ch.H) d.H.push_back(H / su);
    d.bf = bf;
    d.alpha = cfg.alpha;
    d.rate_min = p.rate_min_bpshz;
    d.sinr_min = p.sensing_sinr_min();
    d.inr_max = p.sensing_inr_max();
    d.un = bf.u_s.squaredNorm();
    d.xi = p.decode_constant;
    d.fixed_power = bf.transmit_power() + p.p_bs_w + stars_power(cfg, p.p_pin_w, p.p_cir_w);
    return d;
}

std::vector<double> passive_rates(const PassiveData &d, const cvec &theta_T) {
    std::vector<double> r;
    for (int k = 0; k < d.K; ++k) {
        const RatePieces p = rate_pieces(theta_T.transpose() * d.H[static_cast<std::size_t>(k)], d.bf, k);
        r.push_back(std::log2(p.C / (p.C - p.A)));
    }
    return r;
}

double passive_echo(const PassiveData &d, const cvec &theta_R) {
    return (theta_R.transpose() * d.rows.G_tilde + d.rows.c_s).squaredNorm();
}

double passive_leak(const PassiveData &d, const cvec &theta_R) {
    double s = 0.0;
    for (int k = 0; k < d.K; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        s += std::norm(theta_R.cwiseProduct(d.rows.G_bar[ku]).sum() + d.rows.c_bar[ku]);
    }
    return s;
}

double passive_ee(const PassiveData &d, const cvec &theta_T) {
    const double R = sum_rate_from(passive_rates(d, theta_T));
    return R / (d.fixed_power + d.xi * R);
}

double passive_worst_margin(const PassiveData &d, const cvec &theta_T, const cvec &theta_R) {
    double w = std::numeric_limits<double>::infinity();
    if (d.rate_min > 0.0)
        for (double r : passive_rates(d, theta_T)) w = std::min(w, r - d.rate_min);
    const double I = passive_leak(d, theta_R);
    if (d.sensing_enabled()) w = std::min(w, passive_echo(d, theta_R) / (d.sinr_min * (I + d.un)) - 1.0);
    if (d.inr_enabled()) w = std::min(w, 1.0 - I / (d.inr_max * d.un));
    return w;
}

cvec sensing_gradient_theta(const SensingRows &rows, const cvec &theta_R) {
    const cvec r = rows.G_tilde.transpose() * theta_R + rows.c_s.transpose();
    return 2.0 * rows.G_tilde.conjugate() * r;
}

cvec sensing_gradient_f1(const Row &f1, const Row &c_s) { return 2.0 * (f1 + c_s).transpose(); }

// ---------------------------------------------------------------------------
// PDD pieces

namespace {

Row f1_target(const PassiveData &d, const cvec &tR) { return tR.transpose() * d.rows.G_tilde; }
cplx f2_target(const PassiveData &d, const cvec &tR, int k) {
    return (tR.transpose() * d.rows.G_bar[static_cast<std::size_t>(k)])(0);
}
Row f3_target(const PassiveData &d, const cvec &tT, int k) {
    return tT.transpose() * d.H[static_cast<std::size_t>(k)];
}

} // namespace

PddState init_pdd_state(const PassiveData &d, const cvec &theta_T, const cvec &theta_R) {
    PddState s;
    s.f1 = f1_target(d, theta_R);
    s.z1 = Row::Zero(d.N);
    for (int k = 0; k < d.K; ++k) {
        s.f2.push_back(f2_target(d, theta_R, k));
        s.z2.emplace_back(0.0);
        s.f3.push_back(f3_target(d, theta_T, k));
        s.z3.push_back(Row::Zero(d.N));
    }
    s.f_T = theta_T;
    s.f_R = theta_R;
    s.z4_T = cvec::Zero(d.M);
    s.z4_R = cvec::Zero(d.M);
    return s;
}

double augmented_term(const PddState &s, const PassiveData &d, const cvec &theta_T, const cvec &theta_R,
                      bool coupled) {
    double acc = (s.f1 - f1_target(d, theta_R) + s.rho * s.z1).squaredNorm();
    for (int k = 0; k < d.K; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        acc += std::norm(s.f2[ku] - f2_target(d, theta_R, k) + s.rho * s.z2[ku]);
        acc += (s.f3[ku] - f3_target(d, theta_T, k) + s.rho * s.z3[ku]).squaredNorm();
    }
    if (coupled) {
        acc += s.consensus_weight * (s.f_T - theta_T + s.rho * s.z4_T).squaredNorm();
        acc += s.consensus_weight * (s.f_R - theta_R + s.rho * s.z4_R).squaredNorm();
    }
    return acc / (2.0 * s.rho);
}

double violation(const PddState &s, const PassiveData &d, const cvec &theta_T, const cvec &theta_R, bool coupled) {
    double v = inf_norm(Row(s.f1 - f1_target(d, theta_R)));
    double v2 = 0.0, v3 = 0.0;
    for (int k = 0; k < d.K; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        v2 = std::max(v2, std::abs(s.f2[ku] - f2_target(d, theta_R, k)));
        v3 = std::max(v3, inf_norm(Row(s.f3[ku] - f3_target(d, theta_T, k))));
    }
    v = std::max({v, v2, v3});
    if (coupled) v = std::max({v, inf_norm(cvec(s.f_T - theta_T)), inf_norm(cvec(s.f_R - theta_R))});
    return v;
}

AuxOutcome pdd_aux_update(const PddState &s, const PassiveData &d, const cvec &theta_T, const cvec &theta_R,
                          double eta, const SolverOptions &solver, double backoff) {
    AuxOutcome out;
    out.state = s;
    const int N = d.N, K = d.K;
    const cmat I_N = cmat::Identity(N, N);

    ConvexProblem P;
    const Var f1 = P.add_complex("f1", N);
    const Var f2 = P.add_complex("f2", K);
    std::vector<Var> f3;
    for (int k = 0; k < K; ++k) f3.push_back(P.add_complex("f3_" + std::to_string(k), N));

    // Penalty term, with every residual written as a column vector.
    QuadExpr penalty;
    penalty.add_sq_norm(
        CAffine(N).add(f1, I_N).add_offset(cvec((s.rho * s.z1 - f1_target(d, theta_R)).transpose())));
    {
        cvec off(K);
        for (int k = 0; k < K; ++k)
            off(k) = s.rho * s.z2[static_cast<std::size_t>(k)] - f2_target(d, theta_R, k);
        penalty.add_sq_norm(CAffine(K).add(f2, cmat::Identity(K, K)).add_offset(off));
    }
    for (int k = 0; k < K; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        penalty.add_sq_norm(
            CAffine(N).add(f3[ku], I_N).add_offset(cvec((s.rho * s.z3[ku] - f3_target(d, theta_T, k)).transpose())));
    }
    penalty *= 1.0 / (2.0 * s.rho);

    // Rates in f3, linearized at the previous aux point.
    const BeamformerSet &bf = d.bf;
    QuadExpr rate_sum;
    std::vector<double> prev_rates;
    for (int k = 0; k < K; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        const RatePieces rp = rate_pieces(s.f3[ku], bf, k);
        prev_rates.push_back(std::log2(rp.C / (rp.C - rp.A)));
        const RateCoeffs rc = rate_coeffs(rp);
        const cvec &wk = bf.w_c[ku];
        const cvec x0 = s.f3[ku].transpose();
        const cvec g = 2.0 * wk.conjugate() * (wk.transpose() * x0)(0);
        LinExpr A_lin = re_inner(g, f3[ku]);
        A_lin.constant += rp.A - g.dot(x0).real();
        QuadExpr C(1.0);
        for (const auto &w : bf.w_c) C.add_sq_norm(CAffine(1).add(f3[ku], as_row_matrix(w)));
        C.add_sq_norm(CAffine(static_cast<int>(bf.W_s.cols())).add(f3[ku], bf.W_s.transpose()));
        const QuadExpr R = QuadExpr(rc.k0) + QuadExpr(rc.a * A_lin) - rc.c * C;
        rate_sum += R;
        if (d.rate_min > 0.0) {
            // The back-off never cuts off the previous point.
            const double need = std::min(d.rate_min * (1.0 + backoff), std::max(prev_rates.back(), d.rate_min));
            P.add_ge(R, QuadExpr(need), "rate" + std::to_string(k));
        }
    }

    // Leakage in f2 (convex), echo in f1 linearized.
    QuadExpr leak;
    {
        cvec off(K);
        for (int k = 0; k < K; ++k) off(k) = d.rows.c_bar[static_cast<std::size_t>(k)];
        leak.add_sq_norm(CAffine(K).add(f2, cmat::Identity(K, K)).add_offset(off));
    }
    double I0 = 0.0;
    for (int k = 0; k < K; ++k)
        I0 += std::norm(s.f2[static_cast<std::size_t>(k)] + d.rows.c_bar[static_cast<std::size_t>(k)]);
    if (d.sensing_enabled()) {
        const cvec x0 = s.f1.transpose();
        const AffineMinorant S = linearize_quadratic(I_N, d.rows.c_s.transpose(), x0);
        LinExpr S_lin = re_inner(S.gradient, f1);
        S_lin.constant += S.value0 - S.gradient.dot(x0).real();
        const double gamma =
            std::min(d.sinr_min * (1.0 + backoff), std::max(d.sinr_min, S.value0 / (I0 + d.un)));
        const double scale = gamma * (I0 + d.un);
        P.add_ge((1.0 / scale) * (QuadExpr(S_lin) - gamma * (leak + QuadExpr(d.un))), QuadExpr(0.0),
                 "sensing_sinr");
    }
    if (d.inr_enabled()) {
        const double cap = std::max(d.inr_max * d.un * (1.0 - backoff), std::min(I0, d.inr_max * d.un));
        P.add_le((1.0 / cap) * leak, QuadExpr(1.0), "sensing_inr");
    }

    // Efficiency floor: R (1 - eta xi) >= eta P, with eta no larger than the
    // efficiency of the previous aux point.
    const double R0 = sum_rate_from(prev_rates);
    const double eta_f = R0 / (d.fixed_power + d.xi * R0);
    const double eta_use = std::min(eta, eta_f);
    const double weight = std::max(1.0 - eta_use * d.xi, 1e-6);
    const double p_scale = d.fixed_power + d.xi * R0;
    if (eta_use > 0.0)
        P.add_ge((weight / (eta_use * d.fixed_power)) * rate_sum, QuadExpr(1.0), "ee_floor");

    P.minimize(penalty - (1.0 / p_scale) * (weight * rate_sum - QuadExpr(eta_use * d.fixed_power)));

    P.set_warm_start(f1, cvec(s.f1.transpose()));
    {
        cvec f2v(K);
        for (int k = 0; k < K; ++k) f2v(k) = s.f2[static_cast<std::size_t>(k)];
        P.set_warm_start(f2, f2v);
    }
    for (int k = 0; k < K; ++k) P.set_warm_start(f3[static_cast<std::size_t>(k)], cvec(s.f3[static_cast<std::size_t>(k)].transpose()));

    const SolveOutcome so = P.solve(solver);
    out.message = so.message;
    if (!so.usable()) return out;
    out.state.f1 = so.complex_value(f1).transpose();
    const cvec f2v = so.complex_value(f2);
    for (int k = 0; k < K; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        out.state.f2[ku] = f2v(k);
        out.state.f3[ku] = so.complex_value(f3[ku]).transpose();
    }
    out.solved = true;
    return out;
}

PenaltyQuadratics penalty_quadratics(const PddState &s, const PassiveData &d) {
    PenaltyQuadratics q;
    const cmat &Gt = d.rows.G_tilde;
    q.Phi1 = Gt.conjugate() * Gt.transpose();
    q.v1 = Gt.conjugate() * (s.f1 + s.rho * s.z1).transpose();
    q.Phi2 = cmat::Zero(d.M, d.M);
    q.v2 = cvec::Zero(d.M);
    q.Phi3 = cmat::Zero(d.M, d.M);
    q.v3 = cvec::Zero(d.M);
    for (int k = 0; k < d.K; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        const cvec &Gb = d.rows.G_bar[ku];
        q.Phi2 += Gb.conjugate() * Gb.transpose();
        q.v2 += Gb.conjugate() * (s.f2[ku] + s.rho * s.z2[ku]);
        const cmat &H = d.H[ku];
        q.Phi3 += H.conjugate() * H.transpose();
        q.v3 += H.conjugate() * (s.f3[ku] + s.rho * s.z3[ku]).transpose();
    }
    return q;
}

ElementCoeffs element_coeffs(const PenaltyQuadratics &q, int m, const cvec &theta_T, const cvec &theta_R) {
    ElementCoeffs c;
    c.c1 = q.Phi1(m, m).real();
    c.c3 = q.Phi2(m, m).real();
    c.c5 = q.Phi3(m, m).real();
    c.c2 = q.Phi1(m, m) * theta_R(m) - (q.Phi1.row(m) * theta_R).value() + q.v1(m);
    c.c4 = q.Phi2(m, m) * theta_R(m) - (q.Phi2.row(m) * theta_R).value() + q.v2(m);
    c.c6 = q.Phi3(m, m) * theta_T(m) - (q.Phi3.row(m) * theta_T).value() + q.v3(m);
    return c;
}

std::vector<ElementCoeffs> element_coeffs(const PddState &s, const PassiveData &d, const cvec &theta_T,
                                          const cvec &theta_R) {
    const PenaltyQuadratics q = penalty_quadratics(s, d);
    std::vector<ElementCoeffs> out;
    for (int m = 0; m < d.M; ++m) out.push_back(element_coeffs(q, m, theta_T, theta_R));
    return out;
}

double amplitude_objective(const ElementCoeffs &c, double chi) {
    const double co = std::cos(chi), si = std::sin(chi);
    return (c.c1 + c.c3) * co * co - 2.0 * std::abs(c.c2 + c.c4) * co + c.c5 * si * si - 2.0 * std::abs(c.c6) * si;
}

double grid_ternary_min(const std::function<double(double)> &f, double lo, double hi, double tol, int grid) {
    grid = std::max(grid, 2);
    const double step = (hi - lo) / grid;
    int best = 0;
    double fbest = f(lo);
    for (int i = 1; i <= grid; ++i) {
        const double v = f(lo + i * step);
        if (v < fbest) {
            fbest = v;
            best = i;
        }
    }
    double a = std::max(lo, lo + (best - 1) * step), b = std::min(hi, lo + (best + 1) * step);
    while (b - a > tol) {
        const double m1 = a + (b - a) / 3.0, m2 = b - (b - a) / 3.0;
        if (f(m1) <= f(m2))
            b = m2;
        else
            a = m1;
    }
    const double x = 0.5 * (a + b);
    return f(x) <= fbest ? x : lo + best * step;
}

ElementUpdate independent_element_update(const ElementCoeffs &c) {
    ElementUpdate u;
    u.phi_R = wrap_phase(std::arg(c.c2 + c.c4));
    u.phi_T = wrap_phase(std::arg(c.c6));
    const double chi = grid_ternary_min([&](double x) { return amplitude_objective(c, x); }, 0.0, kPi / 2.0);
    u.beta_T = std::sin(chi);
    u.beta_R = std::cos(chi);
    return u;
}

CoupledUpdate coupled_element_update(cplx zeta_T, cplx zeta_R, double beta_tilde_T, double beta_tilde_R) {
    CoupledUpdate u;
    const cplx a = beta_tilde_T * std::conj(zeta_T);
    const cplx b = beta_tilde_R * std::conj(zeta_R);
    // Candidate objective: Re{a psi_T + b psi_R}.
    auto candidate = [&](cplx ups, cplx rot, cplx &pT, cplx &pR) {
        pT = ups == cplx(0.0) ? cplx(-1.0) : -std::exp(-kJ * std::arg(ups));
        pR = rot * pT;
        return (a * pT + b * pR).real();
    };
    cplx pT1, pR1, pT2, pR2;
    u.objective_first = candidate(a + kJ * b, kJ, pT1, pR1);
    u.objective_second = candidate(a - kJ * b, -kJ, pT2, pR2);
    u.first_candidate = u.objective_first <= u.objective_second;
    u.psi_T = u.first_candidate ? pT1 : pT2;
    u.psi_R = u.first_candidate ? pR1 : pR2;

    // Amplitudes from the three-branch angle rule; the sign here is 1 for
    // positive arguments and 0 otherwise.
    const double cc = (u.psi_T * std::conj(zeta_T)).real();
    const double dd = (u.psi_R * std::conj(zeta_R)).imag();
    const double r = std::hypot(cc, dd);
    const double sgn = cc > 0.0 ? 1.0 : 0.0;
    u.varsigma = r > 0.0 ? sgn * std::acos(std::clamp(cc / r, -1.0, 1.0)) : 0.0;
    if (u.varsigma >= -kPi / 2.0 && u.varsigma < kPi / 4.0)
        u.omega = 0.0;
    else if (u.varsigma >= -kPi && u.varsigma < -kPi / 2.0)
        u.omega = -kPi / 2.0 - u.varsigma;
    else
        u.omega = -kPi / 2.0;
    double bT = std::sin(u.omega), bR = std::cos(u.omega);
    double phT = std::arg(u.psi_T), phR = std::arg(u.psi_R);
    // Objective weights of the two amplitudes for the chosen phases.
    const double wT = (u.psi_T * std::conj(zeta_T)).real();
    const double wR = (u.psi_R * std::conj(zeta_R)).real();
    auto amp_obj = [&](double xT, double xR, double sT, double sR) { return sT * xT * wT + sR * xR * wR; };
    // Folding a negative amplitude into the phase flips the sign of its weight.
    const double rule_obj = amp_obj(std::abs(bT), std::abs(bR), bT < 0.0 ? -1.0 : 1.0, bR < 0.0 ? -1.0 : 1.0);
    double eT, eR;
    if (wT < 0.0 && wR < 0.0) {
        const double n = std::hypot(wT, wR);
        eT = -wT / n;
        eR = -wR / n;
    } else if (wT <= wR) {
        eT = 1.0;
        eR = 0.0;
    } else {
        eT = 0.0;
        eR = 1.0;
    }
    u.rule_kept = rule_obj <= amp_obj(eT, eR, 1.0, 1.0) + 1e-15 * (std::abs(wT) + std::abs(wR));
    if (!u.rule_kept) {
        bT = eT;
        bR = eR;
    }
    if (bT < 0.0) {
        bT = -bT;
        phT += kPi;
    }
    if (bR < 0.0) {
        bR = -bR;
        phR += kPi;
    }
    u.beta_T = bT;
    u.beta_R = bR;
    u.phi_T = wrap_phase(phT);
    u.phi_R = wrap_phase(phR);
    return u;
}

std::pair<cvec, cvec> coupled_theta_update(const PddState &s, const PassiveData &d) {
    const PenaltyQuadratics q = penalty_quadratics(s, d);
    const std::vector<int> on = on_elements(d.alpha);
    const cmat S = selector(d.M, on);
    const auto n = static_cast<Eigen::Index>(on.size());
    const cmat I = cmat::Identity(n, n);
    const double mu = s.consensus_weight;
    const cvec rhs_R = S.transpose() * (q.v1 + q.v2 + mu * (s.f_R + s.rho * s.z4_R));
    const cvec rhs_T = S.transpose() * (q.v3 + mu * (s.f_T + s.rho * s.z4_T));
    const cmat A_R = S.transpose() * (q.Phi1 + q.Phi2) * S + mu * I;
    const cmat A_T = S.transpose() * q.Phi3 * S + mu * I;
    const cvec tR = S * cvec(A_R.ldlt().solve(rhs_R));
    const cvec tT = S * cvec(A_T.ldlt().solve(rhs_T));
    return {tT, tR};
}

bool dual_and_penalty_update(PddState &s, const PassiveData &d, const cvec &theta_T, const cvec &theta_R,
                             bool coupled, double c_rho) {
    const double fv = violation(s, d, theta_T, theta_R, coupled);
    if (fv <= s.epsilon_th) {
        const double inv = 1.0 / s.rho;
        s.z1 += inv * (s.f1 - f1_target(d, theta_R));
        for (int k = 0; k < d.K; ++k) {
            const auto ku = static_cast<std::size_t>(k);
            s.z2[ku] += inv * (s.f2[ku] - f2_target(d, theta_R, k));
            s.z3[ku] += inv * (s.f3[ku] - f3_target(d, theta_T, k));
        }
        if (coupled) {
            s.z4_T += inv * (s.f_T - theta_T);
            s.z4_R += inv * (s.f_R - theta_R);
        }
        s.epsilon_th *= 0.8;
        return true;
    }
    s.rho = std::max(s.rho * c_rho, s.rho_min);
    return false;
}

// ---------------------------------------------------------------------------
// Drivers

namespace {

StarsConfig config_from_theta(const StarsConfig &base, const cvec &tT, const cvec &tR) {
    StarsConfig c = base;
    for (int m = 0; m < c.size(); ++m) {
        if (c.alpha(m) < 0.5) continue;
        c.beta_T(m) = std::abs(tT(m));
        c.beta_R(m) = std::abs(tR(m));
        if (c.beta_T(m) > 0.0) c.phi_T(m) = wrap_phase(std::arg(tT(m)));
        if (c.beta_R(m) > 0.0) c.phi_R(m) = wrap_phase(std::arg(tR(m)));
    }
    return c;
}

// Tracks the best feasible configuration by exact efficiency.
struct BestTracker {
    StarsConfig cfg;
    double ee = -std::numeric_limits<double>::infinity();
    bool feasible = false;

    bool offer(const StarsConfig &c, double e, bool feas) {
        if ((feas && !feasible) || (feas == feasible && e > ee)) {
            cfg = c;
            ee = e;
            feasible = feas;
            return true;
        }
        return false;
    }
};

PassiveResult finish(BestTracker &best, const ChannelSet &ch, const BeamformerSet &bf, const ScenarioParams &p,
                     PassiveResult res, double init_ee) {
    res.cfg = best.cfg;
    const Evaluation ev = evaluate(p, ch, res.cfg, bf);
    res.ee = ev.ee;
    res.feasible = best.feasible;
    res.improved = ev.ee > init_ee + 1e-12;
    return res;
}

} // namespace

namespace {

enum class BetaMode { free, half, pinned };

PassiveResult relaxed_impl(const ChannelSet &ch, const BeamformerSet &bf, const ScenarioParams &p,
                           const StarsConfig &init, const PassiveOptions &opt, BetaMode mode) {
    PassiveResult res;
    const PassiveData d = make_passive_data(ch, bf, init, p);
    const std::vector<int> on = on_elements(init.alpha);
    const auto n = static_cast<int>(on.size());
    const cmat S = selector(d.M, on);
    cvec tT = coefficients(init, Side::T), tR = coefficients(init, Side::R);

    // With fixed amplitudes the start itself has to sit on the amplitude circle.
    StarsConfig start = init;
    if (mode == BetaMode::half) {
        for (int m : on) {
            start.beta_T(m) = 0.5;
            start.beta_R(m) = 0.5;
        }
        tT = coefficients(start, Side::T);
        tR = coefficients(start, Side::R);
    }
    BestTracker best;
    const double init_ee = passive_ee(d, tT);
    best.offer(start, init_ee, passive_worst_margin(d, tT, tR) >= -kMarginTol);
    if (n == 0) {
        res.converged = true;
        return finish(best, ch, bf, p, res, init_ee);
    }

    const bool fixed_beta = mode != BetaMode::free;
    rvec bT(n), bR(n);
    for (int i = 0; i < n; ++i) {
        bT(i) = mode == BetaMode::half ? 0.5 : init.beta_T(on[static_cast<std::size_t>(i)]);
        bR(i) = mode == BetaMode::half ? 0.5 : init.beta_R(on[static_cast<std::size_t>(i)]);
    }

    double kappa = opt.kappa0;
    double prev_obj = -std::numeric_limits<double>::infinity();
    const cmat I_n = cmat::Identity(n, n);
    for (int it = 1; it <= opt.pccp_iters; ++it) {
        ConvexProblem P;
        const Var vT = P.add_complex("theta_T", n);
        const Var vR = P.add_complex("theta_R", n);
        Var vbT, vbR;
        if (!fixed_beta) {
            vbT = P.add_real("beta_T", n);
            vbR = P.add_real("beta_R", n);
        }
        const Var va = P.add_real("slack_upper", 2 * n);
        const Var vb = P.add_real("slack_lower", 2 * n);

        // Rates in theta_T around the current point.
        QuadExpr rate_sum;
        for (int k = 0; k < d.K; ++k) {
            const auto ku = static_cast<std::size_t>(k);
            const cmat HS = d.H[ku].transpose() * S; // N x n: (theta^T H_k)^T
            const RatePieces rp = rate_pieces(tT.transpose() * d.H[ku], bf, k);
            const RateCoeffs rc = rate_coeffs(rp);
            const cvec a = HS.transpose() * bf.w_c[ku];
            const cvec x0 = S.transpose() * tT;
            const AffineMinorant Am = linearize_quadratic(a.transpose(), cvec::Zero(1), x0);
            LinExpr A_lin = re_inner(Am.gradient, vT);
            A_lin.constant += Am.value0 - Am.gradient.dot(x0).real();
            QuadExpr C(1.0);
            for (const auto &w : bf.w_c) C.add_sq_norm(CAffine(1).add(vT, cmat(w.transpose() * HS)));
            C.add_sq_norm(CAffine(static_cast<int>(bf.W_s.cols())).add(vT, cmat(bf.W_s.transpose() * HS)));
            const QuadExpr R = QuadExpr(rc.k0) + QuadExpr(rc.a * A_lin) - rc.c * C;
            rate_sum += R;
            if (d.rate_min > 0.0) P.add_ge(R, QuadExpr(d.rate_min), "rate" + std::to_string(k));
        }

        // Sensing constraints in theta_R.
        const cvec xR0 = S.transpose() * tR;
        QuadExpr leak;
        for (int k = 0; k < d.K; ++k) {
            const auto ku = static_cast<std::size_t>(k);
            leak.add_sq_norm(CAffine(1)
                                 .add(vR, cmat(d.rows.G_bar[ku].transpose() * S))
                                 .add_offset(cvec::Constant(1, d.rows.c_bar[ku])));
        }
        const double I0 = passive_leak(d, tR);
        if (d.sensing_enabled()) {
            const AffineMinorant Sm =
                linearize_quadratic(cmat(d.rows.G_tilde.transpose() * S), cvec(d.rows.c_s.transpose()), xR0);
            LinExpr S_lin = re_inner(Sm.gradient, vR);
            S_lin.constant += Sm.value0 - Sm.gradient.dot(xR0).real();
            const double scale = d.sinr_min * (I0 + d.un);
            P.add_ge((1.0 / scale) * (QuadExpr(S_lin) - d.sinr_min * (leak + QuadExpr(d.un))), QuadExpr(0.0),
                     "sensing_sinr");
        }
        if (d.inr_enabled()) P.add_le((1.0 / (d.inr_max * d.un)) * leak, QuadExpr(1.0), "sensing_inr");

        // |theta| = beta as two convexified inequalities with slacks.
        LinExpr slack_sum;
        for (int side = 0; side < 2; ++side) {
            const Var &vt = side == 0 ? vT : vR;
            const cvec &full = side == 0 ? tT : tR;
            for (int i = 0; i < n; ++i) {
                const int m = on[static_cast<std::size_t>(i)];
                const int si = side * n + i;
                const double bb = side == 0 ? bT(i) : bR(i);
                cmat e = cmat::Zero(1, n);
                e(0, i) = 1.0;
                QuadExpr mod2;
                mod2.add_sq_norm(CAffine(1).add(vt, e));
                // beta^2 and its tangent at the current beta
                QuadExpr beta_sq, beta_tan;
                if (fixed_beta) {
                    beta_sq = QuadExpr(bb * bb);
                    beta_tan = QuadExpr(bb * bb);
                } else {
                    const Var &vb_side = side == 0 ? vbT : vbR;
                    beta_sq.add_sq_norm(CAffine(1).add(vb_side, [&] {
                        cmat sel = cmat::Zero(1, n);
                        sel(0, i) = 1.0;
                        return sel;
                    }()));
                    beta_tan = QuadExpr(2.0 * bb * scalar(vb_side, i) - LinExpr(bb * bb));
                }
                P.add_le(mod2, beta_tan + QuadExpr(scalar(va, si)), "mod_upper");
                cvec ei = cvec::Zero(n);
                ei(i) = full(m);
                LinExpr tan_mod = 2.0 * re_inner(ei, vt);
                tan_mod.constant -= std::norm(full(m));
                P.add_ge(QuadExpr(tan_mod), beta_sq - QuadExpr(scalar(vb, si)), "mod_lower");
                slack_sum += scalar(va, si) + scalar(vb, si);
                P.add_ge(QuadExpr(scalar(va, si)), QuadExpr(0.0));
                P.add_ge(QuadExpr(scalar(vb, si)), QuadExpr(0.0));
            }
        }
        if (!fixed_beta)
            for (int i = 0; i < n; ++i) {
                P.add_ge(QuadExpr(scalar(vbT, i)), QuadExpr(0.0));
                P.add_le(QuadExpr(scalar(vbT, i)), QuadExpr(1.0));
                P.add_ge(QuadExpr(scalar(vbR, i)), QuadExpr(0.0));
                P.add_le(QuadExpr(scalar(vbR, i)), QuadExpr(1.0));
            }

        const double R0 = sum_rate_from(passive_rates(d, tT));
        const double eta = R0 / (d.fixed_power + d.xi * R0);
        const double weight = std::max(1.0 - eta * d.xi, 1e-6);
        P.maximize((weight / (d.fixed_power + d.xi * R0)) * rate_sum - QuadExpr(kappa * slack_sum));

        P.set_warm_start(vT, cvec(S.transpose() * tT));
        P.set_warm_start(vR, xR0);
        if (!fixed_beta) {
            P.set_warm_start(vbT, bT);
            P.set_warm_start(vbR, bR);
        }
        rvec slack0 = rvec::Zero(2 * n);
        for (int i = 0; i < n; ++i) {
            const int m = on[static_cast<std::size_t>(i)];
            slack0(i) = std::abs(std::norm(tT(m)) - bT(i) * bT(i)) + 1e-3;
            slack0(n + i) = std::abs(std::norm(tR(m)) - bR(i) * bR(i)) + 1e-3;
        }
        P.set_warm_start(va, slack0);
        P.set_warm_start(vb, slack0);

        const SolveOutcome so = P.solve(opt.solver);
        if (!so.usable()) {
            res.notes.push_back("relaxed subproblem " + to_string(so.status) + " at iteration " + std::to_string(it) +
                                ": " + so.message);
            break;
        }
        tT = S * so.complex_value(vT);
        tR = S * so.complex_value(vR);
        if (!fixed_beta) {
            bT = so.real_value(vbT);
            bR = so.real_value(vbR);
        }
        double max_slack = 0.0;
        for (int i = 0; i < n; ++i) {
            const int m = on[static_cast<std::size_t>(i)];
            max_slack = std::max({max_slack, std::abs(std::abs(tT(m)) - bT(i)), std::abs(std::abs(tR(m)) - bR(i))});
        }
        res.max_slack = max_slack;

        // Candidate configuration with beta tied to |theta|.
        StarsConfig cand = config_from_theta(init, tT, tR);
        if (fixed_beta)
            for (int i = 0; i < n; ++i) {
                cand.beta_T(on[static_cast<std::size_t>(i)]) = bT(i);
                cand.beta_R(on[static_cast<std::size_t>(i)]) = bR(i);
            }
        for (int m : on) {
            if (cand.beta_T(m) > 1.0 - 1e-7) cand.beta_T(m) = 1.0;
            if (cand.beta_R(m) > 1.0 - 1e-7) cand.beta_R(m) = 1.0;
        }
        const cvec cT = coefficients(cand, Side::T), cR = coefficients(cand, Side::R);
        const double ee = passive_ee(d, cT);
        best.offer(cand, ee, passive_worst_margin(d, cT, cR) >= -kMarginTol && max_slack <= 1e-5);
        const double obj = ee - kappa * so.real_value(va).sum() - kappa * so.real_value(vb).sum();
        res.trace.emplace_back(it, max_slack, kappa, obj);
        res.outer_iterations = it;

        const bool settled = std::abs(obj - prev_obj) <= opt.rel_tol * std::max(std::abs(obj), 1e-12);
        prev_obj = obj;
        if (settled && max_slack <= opt.slack_tol) {
            res.converged = true;
            break;
        }
        kappa = std::min(kappa * opt.kappa_growth, opt.kappa_max);
    }
    if (res.max_slack > opt.slack_tol)
        res.notes.push_back("relaxed slacks above tolerance: " + std::to_string(res.max_slack));
    return finish(best, ch, bf, p, res, init_ee);
}

} // namespace

PassiveResult solve_relaxed(const ChannelSet &ch, const BeamformerSet &bf, const ScenarioParams &p,
                            const StarsConfig &init, const PassiveOptions &opt) {
    return relaxed_impl(ch, bf, p, init, opt, p.relaxed_fixed_amplitude ? BetaMode::half : BetaMode::free);
}

PassiveResult solve_passive(StarsType type, const ChannelSet &ch, const BeamformerSet &bf, const ScenarioParams &p,
                            const StarsConfig &init, const PassiveOptions &opt, bool pinned_amplitudes) {
    if (type == StarsType::relaxed) {
        if (pinned_amplitudes) return relaxed_impl(ch, bf, p, init, opt, BetaMode::pinned);
        return solve_relaxed(ch, bf, p, init, opt);
    }
    PassiveResult res;
    StarsConfig base = init;
    base.stars_type = type;
    const PassiveData d = make_passive_data(ch, bf, base, p);
    const bool coupled = type == StarsType::coupled;
    const std::vector<int> on = on_elements(base.alpha);

    cvec tT = coefficients(base, Side::T), tR = coefficients(base, Side::R);
    BestTracker best;
    const double init_ee = passive_ee(d, tT);
    best.offer(base, init_ee, passive_worst_margin(d, tT, tR) >= -kMarginTol);
    if (on.empty()) {
        res.converged = true;
        return finish(best, ch, bf, p, res, init_ee);
    }

    PddState s = init_pdd_state(d, tT, tR);
    s.rho = opt.rho0;
    s.rho_min = opt.rho0 * opt.rho_floor_ratio;
    s.epsilon_th = opt.epsilon0;
    if (coupled) {
        // Scale the consensus group to the channel groups so the least-squares
        // step can actually move theta towards the aux copy.
        const PenaltyQuadratics q = penalty_quadratics(s, d);
        double mean_diag = 0.0;
        for (int m : on) mean_diag += (q.Phi1(m, m) + q.Phi2(m, m) + q.Phi3(m, m)).real();
        s.consensus_weight = std::max(1.0, opt.consensus_scale * mean_diag / static_cast<double>(on.size()));
    }
    StarsConfig current = base; // structured iterate
    double prev_ee = init_ee;
    const double c_rho = p.pdd_learning_rate;

    for (int outer = 1; outer <= opt.max_outer; ++outer) {
        const double eta = passive_ee(d, tT);
        const AuxOutcome aux = pdd_aux_update(s, d, tT, tR, eta, opt.solver, opt.constraint_backoff);
        if (aux.solved)
            s = aux.state;
        else
            res.notes.push_back("aux subproblem failed at outer " + std::to_string(outer) + ": " + aux.message);

        if (!coupled) {
            const PenaltyQuadratics q = penalty_quadratics(s, d);
            for (int sweep = 0; sweep < opt.max_inner; ++sweep) {
                double change = 0.0;
                for (int m : on) {
                    const ElementCoeffs c = element_coeffs(q, m, tT, tR);
                    if (pinned_amplitudes) {
                        current.phi_R(m) = wrap_phase(std::arg(c.c2 + c.c4));
                        current.phi_T(m) = wrap_phase(std::arg(c.c6));
                    } else {
                        const ElementUpdate u = independent_element_update(c);
                        current.beta_T(m) = u.beta_T;
                        current.beta_R(m) = u.beta_R;
                        current.phi_T(m) = u.phi_T;
                        current.phi_R(m) = u.phi_R;
                    }
                    const cplx nT = current.beta_T(m) * std::exp(kJ * current.phi_T(m));
                    const cplx nR = current.beta_R(m) * std::exp(kJ * current.phi_R(m));
                    change = std::max({change, std::abs(nT - tT(m)), std::abs(nR - tR(m))});
                    tT(m) = nT;
                    tR(m) = nR;
                }
                res.max_unit_energy_error = std::max(res.max_unit_energy_error, max_unit_energy_error(current));
                if (change < 1e-9) break;
            }
        } else {
            for (int inner = 0; inner < opt.max_inner; ++inner) {
                auto [nT, nR] = coupled_theta_update(s, d);
                tT = nT;
                tR = nR;
                double change = 0.0;
                for (int m : on) {
                    const cplx zT = s.rho * s.z4_T(m) - tT(m);
                    const cplx zR = s.rho * s.z4_R(m) - tR(m);
                    const CoupledUpdate u = coupled_element_update(zT, zR, current.beta_T(m), current.beta_R(m));
                    if (!pinned_amplitudes) {
                        current.beta_T(m) = u.beta_T;
                        current.beta_R(m) = u.beta_R;
                        current.phi_T(m) = u.phi_T;
                        current.phi_R(m) = u.phi_R;
                    } else {
                        current.phi_T(m) = wrap_phase(std::arg(u.psi_T));
                        current.phi_R(m) = wrap_phase(std::arg(u.psi_R));
                    }
                    const cplx fT = current.beta_T(m) * std::exp(kJ * current.phi_T(m));
                    const cplx fR = current.beta_R(m) * std::exp(kJ * current.phi_R(m));
                    change = std::max({change, std::abs(fT - s.f_T(m)), std::abs(fR - s.f_R(m))});
                    s.f_T(m) = fT;
                    s.f_R(m) = fR;
                }
                res.max_unit_energy_error = std::max(res.max_unit_energy_error, max_unit_energy_error(current));
                if (change < 1e-9) break;
            }
        }

        // The structured iterate (theta for independent, the aux copy for coupled).
        const cvec cT = coefficients(current, Side::T), cR = coefficients(current, Side::R);
        const double ee = passive_ee(d, cT);
        const bool feas = passive_worst_margin(d, cT, cR) >= -kMarginTol;
        best.offer(current, ee, feas);

        const double fv = violation(s, d, tT, tR, coupled);
        res.trace.emplace_back(outer, fv, s.rho, ee);
        res.outer_iterations = outer;
        res.final_violation = fv;
        const bool small_step = std::abs(ee - prev_ee) < opt.rel_tol * std::max(std::abs(ee), 1e-12);
        prev_ee = ee;
        if (fv <= s.epsilon_th && small_step && outer > 1) {
            res.converged = true;
            break;
        }
        dual_and_penalty_update(s, d, tT, tR, coupled, c_rho);
    }
    if (!res.converged) res.notes.push_back("passive stage stopped at the outer iteration cap");
    log::debug("passive " + to_string(type) + ": " + std::to_string(res.outer_iterations) + " outer iterations, EE " +
               std::to_string(init_ee) + " -> " + std::to_string(best.ee));
    return finish(best, ch, bf, p, res, init_ee);
}

} // namespace stars_isac
