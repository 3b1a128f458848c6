// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#include "stars_isac/active_bf.hpp"

#include "stars_isac/log.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace stars_isac {

namespace {

constexpr double kLn2 = 0.69314718055994530942;
constexpr double kFeasTol = 1e-10;

using Row = Eigen::RowVectorXcd;

cmat as_row_matrix(const Row &r) {
    cmat m(1, r.size());
    m.row(0) = r;
    return m;
}

// Coefficient matrix mapping vec(W) (column-major) to the row vector h W.
cmat row_times_matrix_map(const Row &h, int N) {
    cmat A = cmat::Zero(N, static_cast<Eigen::Index>(N) * N);
    for (int j = 0; j < N; ++j)
        for (int i = 0; i < N; ++i) A(j, i + j * N) = h(i);
    return A;
}

cvec vec_of(const cmat &W) { return Eigen::Map<const cvec>(W.data(), W.size()); }

} // namespace

double dinkelbach_lambda(double A, double B) {
    if (A + B == 0.0) throw std::invalid_argument("dinkelbach_lambda: A + B must be positive");
    return A / (A + B);
}

RateSurrogate dual_rate_surrogate(double gamma_bar, double A, double C, double lambda, double C_prev) {
    RateSurrogate r;
    r.f = std::log2(1.0 + gamma_bar) - gamma_bar;
    r.multiplier = 1.0 + gamma_bar;
    r.dinkelbach_term = A - lambda * C;
    // Natural-log transform scaled to bits; log2(1 + gamma_bar) is kept exact.
    r.value = std::log2(1.0 + gamma_bar) +
              (-gamma_bar + r.multiplier * (lambda + r.dinkelbach_term / C_prev)) / kLn2;
    return r;
}

RateSurrogate dual_rate_surrogate(double gamma_bar, double A, double C, double lambda) {
    return dual_rate_surrogate(gamma_bar, A, C, lambda, C);
}

double AffineMinorant::operator()(const cvec &x) const { return value0 + gradient.dot(x - x0).real(); }

double quadratic_value(const cmat &F, const cvec &c, const cvec &x) { return (F * x + c).squaredNorm(); }

AffineMinorant linearize_quadratic(const cmat &F, const cvec &c, const cvec &x0) {
    if (F.rows() != c.size() || F.cols() != x0.size()) throw std::invalid_argument("linearize_quadratic: shape mismatch");
    AffineMinorant m;
    m.x0 = x0;
    const cvec r = F * x0 + c;
    m.value0 = r.squaredNorm();
    m.gradient = 2.0 * F.adjoint() * r;
    return m;
}

ActiveData make_active_data(const ChannelSet &ch, const StarsConfig &cfg, const ScenarioParams &p) {
    ActiveData d;
    d.N = ch.n_antennas();
    d.K = ch.n_users();
    const cvec tT = coefficients(cfg, Side::T);
    const cvec tR = coefficients(cfg, Side::R);
    const double su = std::sqrt(p.noise_user_w());
    for (int k = 0; k < d.K; ++k) d.h.push_back(tT.transpose() * ch.H[static_cast<std::size_t>(k)] / su);
    d.Hs = sensing_channel(tR, ch, p.absorption_coeff) / std::sqrt(p.noise_sensing_w());
    d.rate_min = p.rate_min_bpshz;
    d.sinr_min = p.sensing_sinr_min();
    d.inr_max = p.sensing_inr_max();
    d.power_budget = p.bs_power_budget_w();
    d.xi = p.decode_constant;
    d.static_power = p.p_bs_w + stars_power(cfg, p.p_pin_w, p.p_cir_w);
    return d;
}

cvec signal_gradient(const Row &h, const cvec &w) { return 2.0 * h.adjoint() * (h * w)(0); }

cmat sensing_gradient_Ws(const cmat &Hs, const cvec &u, const cmat &Ws) {
    const Row b = u.adjoint() * Hs;
    return 2.0 * b.adjoint() * (b * Ws);
}

cvec sensing_gradient_u(const cmat &Hs, const cmat &Ws, const cvec &u) {
    const cmat HW = Hs * Ws;
    return 2.0 * HW * (HW.adjoint() * u);
}

double signal_power(const ActiveData &d, const BeamformerSet &bf, int k) {
    const auto ku = static_cast<std::size_t>(k);
    return std::norm((d.h[ku] * bf.w_c[ku])(0));
}

double total_received(const ActiveData &d, const BeamformerSet &bf, int k) {
    const Row &h = d.h[static_cast<std::size_t>(k)];
    double c = 1.0 + (h * bf.W_s).squaredNorm();
    for (const auto &w : bf.w_c) c += std::norm((h * w)(0));
    return c;
}

double echo_power(const ActiveData &d, const BeamformerSet &bf) {
    return (bf.u_s.adjoint() * d.Hs * bf.W_s).squaredNorm();
}

double leak_power(const ActiveData &d, const BeamformerSet &bf) {
    const Row b = bf.u_s.adjoint() * d.Hs;
    double s = 0.0;
    for (const auto &w : bf.w_c) s += std::norm((b * w)(0));
    return s;
}

double active_sum_rate(const ActiveData &d, const BeamformerSet &bf) {
    double r = 0.0;
    for (int k = 0; k < d.K; ++k) {
        const double A = signal_power(d, bf, k);
        r += std::log2(1.0 + A / (total_received(d, bf, k) - A));
    }
    return r;
}

double active_ee(const ActiveData &d, const BeamformerSet &bf) {
    const double R = active_sum_rate(d, bf);
    return R / (bf.transmit_power() + d.xi * R + d.static_power);
}

namespace {

struct Margins {
    std::vector<double> rate; // bits above the threshold
    double power = 0.0;       // relative to the budget
    double sensing = std::numeric_limits<double>::infinity();
    double inr = std::numeric_limits<double>::infinity();

    double worst() const {
        double w = std::min({power, sensing, inr});
        for (double r : rate) w = std::min(w, r);
        return w;
    }
};

Margins margins(const ActiveData &d, const BeamformerSet &bf) {
    Margins m;
    if (d.rate_min > 0.0)
        for (int k = 0; k < d.K; ++k) {
            const double A = signal_power(d, bf, k);
            m.rate.push_back(std::log2(1.0 + A / (total_received(d, bf, k) - A)) - d.rate_min);
        }
    m.power = (d.power_budget - bf.transmit_power()) / std::max(d.power_budget, 1e-300);
    const double un = bf.u_s.squaredNorm();
    const double I = leak_power(d, bf);
    if (d.sensing_enabled()) m.sensing = echo_power(d, bf) / (d.sinr_min * (I + un)) - 1.0;
    if (d.inr_enabled()) m.inr = 1.0 - I / (d.inr_max * un);
    return m;
}

} // namespace

double active_worst_margin(const ActiveData &d, const BeamformerSet &bf) { return margins(d, bf).worst(); }

SCAState make_sca_state(const ActiveData &d, const BeamformerSet &bf) {
    SCAState s;
    s.breve = bf;
    for (int k = 0; k < d.K; ++k) {
        const double A = signal_power(d, bf, k);
        const double C = total_received(d, bf, k);
        s.A.push_back(A);
        s.C.push_back(C);
        s.gamma_bar.push_back(A / (C - A));
        s.lambda.push_back(dinkelbach_lambda(A, C - A));
    }
    s.eta = active_ee(d, bf);
    return s;
}

namespace {

// R~_k = k0 + a * A_lin - c * C
struct RateCoeffs {
    double k0, a, c;
};

RateCoeffs rate_coeffs(const SCAState &s, int k) {
    const auto ku = static_cast<std::size_t>(k);
    const double g = s.gamma_bar[ku], lam = s.lambda[ku], Cb = s.C[ku];
    return {std::log2(1.0 + g) + (-g + (1.0 + g) * lam) / kLn2, (1.0 + g) / (Cb * kLn2),
            (1.0 + g) * lam / (Cb * kLn2)};
}

} // namespace

double surrogate_rate(const ActiveData &d, const SCAState &s, const BeamformerSet &bf, int k) {
    const auto ku = static_cast<std::size_t>(k);
    const cvec g = signal_gradient(d.h[ku], s.breve.w_c[ku]);
    const double A_lin = s.A[ku] + g.dot(bf.w_c[ku] - s.breve.w_c[ku]).real();
    const RateSurrogate r =
        dual_rate_surrogate(s.gamma_bar[ku], A_lin, total_received(d, bf, k), s.lambda[ku], s.C[ku]);
    return r.value;
}

double max_surrogate_gap(const ActiveData &d, const SCAState &s) {
    const BeamformerSet &b = s.breve;
    double gap = 0.0;
    for (int k = 0; k < d.K; ++k) {
        const double A = signal_power(d, b, k);
        const double exact = std::log2(1.0 + A / (total_received(d, b, k) - A));
        gap = std::max(gap, std::abs(surrogate_rate(d, s, b, k) - exact));
    }
    // Echo power linearized in W_s and in u, and ||u||^2 in u, at their own points.
    const Row bRow = b.u_s.adjoint() * d.Hs;
    const AffineMinorant echo_W =
        linearize_quadratic(row_times_matrix_map(bRow, d.N), cvec::Zero(d.N), vec_of(b.W_s));
    gap = std::max(gap, std::abs(echo_W(vec_of(b.W_s)) - echo_power(d, b)) / (1.0 + echo_power(d, b)));
    const cmat HW = d.Hs * b.W_s;
    const AffineMinorant echo_u = linearize_quadratic(HW.adjoint(), cvec::Zero(HW.cols()), b.u_s);
    gap = std::max(gap, std::abs(echo_u(b.u_s) - echo_power(d, b)) / (1.0 + echo_power(d, b)));
    const AffineMinorant un =
        linearize_quadratic(cmat::Identity(d.N, d.N), cvec::Zero(d.N), b.u_s);
    gap = std::max(gap, std::abs(un(b.u_s) - b.u_s.squaredNorm()));
    return gap;
}

WcProblem build_wc_subproblem(const ActiveData &d, const SCAState &s, bool restoration) {
    WcProblem out;
    ConvexProblem &P = out.problem;
    const BeamformerSet &b = s.breve;
    for (int k = 0; k < d.K; ++k) out.w.push_back(P.add_complex("w_c" + std::to_string(k), d.N));
    if (restoration) out.t = P.add_real("t");
    const QuadExpr t = restoration ? QuadExpr(scalar(out.t)) : QuadExpr(0.0);

    const double wsn = b.W_s.squaredNorm();
    QuadExpr comm_power;
    for (const auto &w : out.w) comm_power.add_sq_norm(CAffine(d.N).add(w, cmat::Identity(d.N, d.N)));

    QuadExpr rate_sum;
    for (int k = 0; k < d.K; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        const Row &h = d.h[ku];
        const RateCoeffs rc = rate_coeffs(s, k);
        const cvec g = signal_gradient(h, b.w_c[ku]);
        LinExpr A_lin = re_inner(g, out.w[ku]);
        A_lin.constant += s.A[ku] - g.dot(b.w_c[ku]).real();
        QuadExpr C(1.0 + (h * b.W_s).squaredNorm());
        const cmat hm = as_row_matrix(h);
        for (const auto &w : out.w) C.add_sq_norm(CAffine(1).add(w, hm));
        const QuadExpr R = QuadExpr(rc.k0) + QuadExpr(rc.a * A_lin) - rc.c * C;
        rate_sum += R;
        if (d.rate_min > 0.0) P.add_ge(R - QuadExpr(d.rate_min), t, "rate" + std::to_string(k));
    }
    P.add_le((1.0 / d.power_budget) * comm_power, QuadExpr((d.power_budget - wsn) / d.power_budget), "bs_power");

    const double un = b.u_s.squaredNorm();
    const Row bRow = b.u_s.adjoint() * d.Hs;
    QuadExpr leak;
    for (const auto &w : out.w) leak.add_sq_norm(CAffine(1).add(w, as_row_matrix(bRow)));
    const double I0 = leak_power(d, b);
    if (d.sensing_enabled()) {
        const double S = echo_power(d, b);
        const double scale = d.sinr_min * (I0 + un);
        P.add_ge((1.0 / scale) * (QuadExpr(S - d.sinr_min * un) - d.sinr_min * leak), t, "sensing_sinr");
    }
    if (d.inr_enabled()) {
        const double scale = d.inr_max * un;
        P.add_ge(QuadExpr(1.0) - (1.0 / scale) * leak, t, "sensing_inr");
    }

    if (restoration) {
        P.add_le(t, QuadExpr(1.0), "t_cap");
        P.maximize(t);
        P.set_warm_start(out.t, rvec(rvec::Constant(1, std::min(margins(d, b).worst(), 0.0) - 1.0)));
    } else {
        const double weight = std::max(1.0 - s.eta * d.xi, 1e-6);
        P.maximize(weight * rate_sum - s.eta * comm_power);
    }
    for (int k = 0; k < d.K; ++k) P.set_warm_start(out.w[static_cast<std::size_t>(k)], b.w_c[static_cast<std::size_t>(k)]);
    return out;
}

WsProblem build_Ws_subproblem(const ActiveData &d, const SCAState &s, bool restoration) {
    WsProblem out;
    ConvexProblem &P = out.problem;
    const BeamformerSet &b = s.breve;
    const int N = d.N;
    out.Ws = P.add_complex_matrix("W_s", N, N);
    if (restoration) out.t = P.add_real("t");
    const QuadExpr t = restoration ? QuadExpr(scalar(out.t)) : QuadExpr(0.0);

    QuadExpr sense_power;
    sense_power.add_sq_norm(CAffine(N * N).add(out.Ws, cmat::Identity(N * N, N * N)));

    QuadExpr rate_sum;
    for (int k = 0; k < d.K; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        const Row &h = d.h[ku];
        const RateCoeffs rc = rate_coeffs(s, k);
        double c_fixed = 1.0;
        for (const auto &w : b.w_c) c_fixed += std::norm((h * w)(0));
        QuadExpr C(c_fixed);
        C.add_sq_norm(CAffine(N).add(out.Ws, row_times_matrix_map(h, N)));
        const QuadExpr R = QuadExpr(rc.k0 + rc.a * s.A[ku]) - rc.c * C;
        rate_sum += R;
        if (d.rate_min > 0.0) P.add_ge(R - QuadExpr(d.rate_min), t, "rate" + std::to_string(k));
    }
    const double cp = b.comm_power();
    P.add_le((1.0 / d.power_budget) * sense_power, QuadExpr((d.power_budget - cp) / d.power_budget), "bs_power");

    if (d.sensing_enabled()) {
        const double un = b.u_s.squaredNorm();
        const double I0 = leak_power(d, b);
        const double S = echo_power(d, b);
        const cvec f1 = vec_of(sensing_gradient_Ws(d.Hs, b.u_s, b.W_s));
        LinExpr S_lin = re_inner(f1, out.Ws);
        S_lin.constant += S - f1.dot(vec_of(b.W_s)).real();
        const double need = d.sinr_min * (I0 + un);
        P.add_ge((1.0 / need) * QuadExpr(S_lin - LinExpr(need)), t, "sensing_sinr");
    }

    if (restoration) {
        P.add_le(t, QuadExpr(1.0), "t_cap");
        P.maximize(t);
        P.set_warm_start(out.t, rvec(rvec::Constant(1, std::min(margins(d, b).worst(), 0.0) - 1.0)));
    } else {
        const double weight = std::max(1.0 - s.eta * d.xi, 1e-6);
        P.maximize(weight * rate_sum - s.eta * sense_power);
    }
    P.set_warm_start(out.Ws, b.W_s);
    return out;
}

TransmitProblem build_transmit_subproblem(const ActiveData &d, const SCAState &s, bool restoration) {
    TransmitProblem out;
    ConvexProblem &P = out.problem;
    const BeamformerSet &b = s.breve;
    const int N = d.N;
    for (int k = 0; k < d.K; ++k) out.w.push_back(P.add_complex("w_c" + std::to_string(k), N));
    out.Ws = P.add_complex_matrix("W_s", N, N);
    if (restoration) out.t = P.add_real("t");
    const QuadExpr t = restoration ? QuadExpr(scalar(out.t)) : QuadExpr(0.0);

    QuadExpr power;
    for (const auto &w : out.w) power.add_sq_norm(CAffine(N).add(w, cmat::Identity(N, N)));
    power.add_sq_norm(CAffine(N * N).add(out.Ws, cmat::Identity(N * N, N * N)));

    QuadExpr rate_sum;
    for (int k = 0; k < d.K; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        const Row &h = d.h[ku];
        const RateCoeffs rc = rate_coeffs(s, k);
        const cvec g = signal_gradient(h, b.w_c[ku]);
        LinExpr A_lin = re_inner(g, out.w[ku]);
        A_lin.constant += s.A[ku] - g.dot(b.w_c[ku]).real();
        QuadExpr C(1.0);
        const cmat hm = as_row_matrix(h);
        for (const auto &w : out.w) C.add_sq_norm(CAffine(1).add(w, hm));
        C.add_sq_norm(CAffine(N).add(out.Ws, row_times_matrix_map(h, N)));
        const QuadExpr R = QuadExpr(rc.k0) + QuadExpr(rc.a * A_lin) - rc.c * C;
        rate_sum += R;
        if (d.rate_min > 0.0) P.add_ge(R - QuadExpr(d.rate_min), t, "rate" + std::to_string(k));
    }
    P.add_le((1.0 / d.power_budget) * power, QuadExpr(1.0), "bs_power");

    const double un = b.u_s.squaredNorm();
    const Row bRow = b.u_s.adjoint() * d.Hs;
    QuadExpr leak;
    for (const auto &w : out.w) leak.add_sq_norm(CAffine(1).add(w, as_row_matrix(bRow)));
    const double I0 = leak_power(d, b);
    if (d.sensing_enabled()) {
        const double S = echo_power(d, b);
        const cvec f1 = vec_of(sensing_gradient_Ws(d.Hs, b.u_s, b.W_s));
        LinExpr S_lin = re_inner(f1, out.Ws);
        S_lin.constant += S - f1.dot(vec_of(b.W_s)).real();
        const double scale = d.sinr_min * (I0 + un);
        P.add_ge((1.0 / scale) * (QuadExpr(S_lin - LinExpr(d.sinr_min * un)) - d.sinr_min * leak), t,
                 "sensing_sinr");
    }
    if (d.inr_enabled()) {
        const double scale = d.inr_max * un;
        P.add_ge(QuadExpr(1.0) - (1.0 / scale) * leak, t, "sensing_inr");
    }

    if (restoration) {
        P.add_le(t, QuadExpr(1.0), "t_cap");
        P.maximize(t);
        P.set_warm_start(out.t, rvec(rvec::Constant(1, std::min(margins(d, b).worst(), 0.0) - 1.0)));
    } else {
        const double weight = std::max(1.0 - s.eta * d.xi, 1e-6);
        P.maximize(weight * rate_sum - s.eta * power);
    }
    for (int k = 0; k < d.K; ++k) P.set_warm_start(out.w[static_cast<std::size_t>(k)], b.w_c[static_cast<std::size_t>(k)]);
    P.set_warm_start(out.Ws, b.W_s);
    return out;
}

UsProblem build_us_subproblem(const ActiveData &d, const SCAState &s, bool restoration) {
    UsProblem out;
    ConvexProblem &P = out.problem;
    const BeamformerSet &b = s.breve;
    const int N = d.N;
    out.u = P.add_complex("u_s", N);
    out.t = P.add_real("t");
    const QuadExpr t(scalar(out.t));

    const double un = b.u_s.squaredNorm();
    QuadExpr u_norm;
    u_norm.add_sq_norm(CAffine(N).add(out.u, cmat::Identity(N, N)));
    QuadExpr leak;
    for (const auto &w : b.w_c) {
        const cvec hw = d.Hs * w;
        leak.add_sq_norm(CAffine(1).add(out.u, as_row_matrix(hw.adjoint())));
    }
    const double I0 = leak_power(d, b);
    bool has_goal = false;
    if (d.sensing_enabled()) {
        const double S = echo_power(d, b);
        const cvec f2 = sensing_gradient_u(d.Hs, b.W_s, b.u_s);
        LinExpr S_lin = re_inner(f2, out.u);
        S_lin.constant += S - f2.dot(b.u_s).real();
        const double scale = d.sinr_min * (I0 + un);
        P.add_ge((1.0 / scale) * (QuadExpr(S_lin) - d.sinr_min * (leak + u_norm)), t, "sensing_sinr");
        has_goal = true;
    }
    if (d.inr_enabled()) {
        // ||u||^2 is replaced by its tangent, which lies below it.
        LinExpr un_lin = 2.0 * re_inner(b.u_s, out.u);
        un_lin.constant -= un;
        const double scale = d.inr_max * un;
        const QuadExpr margin = (1.0 / scale) * (QuadExpr(d.inr_max * un_lin) - leak);
        if (restoration || !has_goal)
            P.add_ge(margin, t, "sensing_inr");
        else
            P.add_ge(margin, QuadExpr(0.0), "sensing_inr");
        has_goal = true;
    }
    P.add_le(u_norm, QuadExpr(1.0), "u_norm");
    if (!has_goal) P.add_le(t, QuadExpr(0.0), "t_cap");
    P.maximize(t);
    P.set_warm_start(out.u, b.u_s);
    P.set_warm_start(out.t, rvec(rvec::Constant(1, std::min(margins(d, b).worst(), 0.0) - 1.0)));
    return out;
}

BeamformerSet initial_beamformers(const ActiveData &d) {
    const int N = d.N, K = d.K;
    BeamformerSet bf = zero_beamformers(N, K);
    const double P = d.power_budget;
    bf.W_s = std::sqrt(0.3 * P / N) * cmat::Identity(N, N);
    const cmat HW = d.Hs * bf.W_s;
    if (HW.norm() > 0.0) {
        Eigen::JacobiSVD<cmat> svd(HW, Eigen::ComputeThinU);
        bf.u_s = svd.matrixU().col(0);
    }
    const Row bRow = bf.u_s.adjoint() * d.Hs;
    for (int k = 0; k < K; ++k) {
        cvec w = d.h[static_cast<std::size_t>(k)].adjoint();
        if (d.inr_enabled() && bRow.norm() > 0.0) {
            const cvec bh = bRow.adjoint() / bRow.norm();
            const cvec proj = w - bh * bh.dot(w);
            if (proj.norm() > 1e-12 * w.norm()) w = proj;
        }
        if (w.norm() == 0.0) w = cvec::Ones(N);
        bf.w_c[static_cast<std::size_t>(k)] = w * std::sqrt(0.7 * P / K) / w.norm();
    }
    return bf;
}

BeamformerSet random_beamformers(const ActiveData &d, std::mt19937_64 &rng) {
    const int N = d.N, K = d.K;
    std::normal_distribution<double> nd(0.0, 1.0);
    auto cn = [&] { return cplx(nd(rng), nd(rng)); };
    BeamformerSet bf = zero_beamformers(N, K);
    const double P = d.power_budget;
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) bf.W_s(i, j) = cn();
    bf.W_s *= std::sqrt(0.3 * P) / bf.W_s.norm();
    for (int i = 0; i < N; ++i) bf.u_s(i) = cn();
    bf.u_s.normalize();
    const Row bRow = bf.u_s.adjoint() * d.Hs;
    for (int k = 0; k < K; ++k) {
        cvec w(N);
        for (int i = 0; i < N; ++i) w(i) = cn();
        if (d.inr_enabled() && bRow.norm() > 0.0 && N > 1) {
            const cvec bh = bRow.adjoint() / bRow.norm();
            w -= bh * bh.dot(w);
        }
        bf.w_c[static_cast<std::size_t>(k)] = w * std::sqrt(0.7 * P / K) / w.norm();
    }
    return bf;
}

namespace {

BeamformerSet with_wc(BeamformerSet b, const SolveOutcome &o, const std::vector<Var> &w) {
    for (std::size_t k = 0; k < w.size(); ++k) b.w_c[k] = o.complex_value(w[k]);
    return b;
}

// Accept a candidate block update. A feasible point must stay feasible and not
// lose efficiency; an infeasible one must improve its worst margin.
bool accept(const ActiveData &d, const BeamformerSet &cur, const BeamformerSet &cand, bool sensing_block) {
    const Margins mc = margins(d, cur), mn = margins(d, cand);
    if (!std::isfinite(mn.worst())) return false;
    if (mc.worst() >= -kFeasTol) {
        if (mn.worst() < -kFeasTol) return false;
        if (sensing_block) return mn.sensing >= mc.sensing || !d.sensing_enabled();
        const double e0 = active_ee(d, cur), e1 = active_ee(d, cand);
        return e1 >= e0 - 1e-12 * std::max(1.0, std::abs(e0));
    }
    return mn.worst() > mc.worst();
}

} // namespace

ActiveResult run_active_blocks(const ActiveData &d, const BeamformerSet &init, const ActiveOptions &opt) {
    ActiveResult res;
    res.rate_threshold_used = d.rate_min;
    BeamformerSet bf = init;
    if (bf.u_s.norm() > 0.0) bf.u_s.normalize();
    BeamformerSet best;
    double best_ee = -1.0;

    for (int pass = 1; pass <= opt.max_passes; ++pass) {
        res.passes = pass;
        const double worst_before = active_worst_margin(d, bf);
        const bool feasible_before = worst_before >= -kFeasTol;
        const double ee_before = active_ee(d, bf);

        // Precoders and sensing covariance jointly.
        {
            const bool restore = active_worst_margin(d, bf) < -kFeasTol;
            TransmitProblem w = build_transmit_subproblem(d, make_sca_state(d, bf), restore);
            const SolveOutcome o = w.problem.solve(opt.solver);
            if (o.usable()) {
                BeamformerSet cand = with_wc(bf, o, w.w);
                cand.W_s = o.matrix_value(w.Ws);
                if (accept(d, bf, cand, false)) bf = cand;
            } else {
                log::debug("transmit block: " + to_string(o.status) + " " + o.message);
            }
        }
        // Receive combiner; it does not enter the efficiency.
        if (d.sensing_enabled() || d.inr_enabled()) {
            const bool restore = active_worst_margin(d, bf) < -kFeasTol;
            UsProblem u = build_us_subproblem(d, make_sca_state(d, bf), restore);
            const SolveOutcome o = u.problem.solve(opt.solver);
            if (o.usable()) {
                BeamformerSet cand = bf;
                cand.u_s = o.complex_value(u.u);
                if (cand.u_s.norm() > 0.0) {
                    cand.u_s.normalize();
                    if (accept(d, bf, cand, true)) bf = cand;
                }
            } else {
                log::debug("u_s block: " + to_string(o.status) + " " + o.message);
            }
        }

        const double worst_after = active_worst_margin(d, bf);
        const bool feasible_after = worst_after >= -kFeasTol;
        const double ee = active_ee(d, bf);
        if (feasible_after) {
            res.trace.emplace_back(pass, ee);
            if (ee > best_ee) {
                best_ee = ee;
                best = bf;
            }
        }
        if (feasible_before && feasible_after) {
            if (ee - ee_before <= opt.rel_tol * std::max(std::abs(ee_before), 1e-300)) break;
        } else if (!feasible_after && worst_after <= worst_before + 1e-9 * std::max(1.0, std::abs(worst_before))) {
            res.notes.push_back("restoration stalled at worst margin " + std::to_string(worst_after));
            break;
        }
    }

    res.feasible = best_ee >= 0.0;
    res.bf = res.feasible ? best : bf;
    res.eta = active_ee(d, res.bf);
    return res;
}

ActiveResult solve_active(const ChannelSet &ch, const StarsConfig &cfg, const ScenarioParams &p,
                          const BeamformerSet &init, const ActiveOptions &opt) {
    const ActiveData d = make_active_data(ch, cfg, p);
    ActiveResult r = run_active_blocks(d, init, opt);
    if (r.feasible) return r;
    std::vector<std::string> notes = r.notes;
    ActiveResult fallback = r;
    double fallback_margin = active_worst_margin(d, r.bf);

    if (d.rate_min > 0.0) {
        const std::string msg = "no feasible point from the given start; retrying with the rate threshold halved";
        log::info(msg);
        notes.push_back(msg);
        ActiveData half = d;
        half.rate_min = 0.5 * d.rate_min;
        ActiveResult h = run_active_blocks(half, init, opt);
        if (h.feasible) {
            ActiveResult full = run_active_blocks(d, h.bf, opt);
            if (full.feasible) {
                full.notes.insert(full.notes.begin(), notes.begin(), notes.end());
                full.notes.push_back("recovered from the halved-threshold solution");
                return full;
            }
            fallback = h;
            fallback_margin = -std::numeric_limits<double>::infinity();
        }
    }

    {
        const std::string msg = "retrying from a random start";
        log::info(msg);
        notes.push_back(msg);
        auto rng = make_rng(ch.seed ^ p.seed, 0x5eedULL);
        ActiveResult rr = run_active_blocks(d, random_beamformers(d, rng), opt);
        if (rr.feasible) {
            rr.notes.insert(rr.notes.begin(), notes.begin(), notes.end());
            return rr;
        }
        if (fallback_margin > -std::numeric_limits<double>::infinity() &&
            active_worst_margin(d, rr.bf) > fallback_margin)
            fallback = rr;
    }

    const std::string msg = "active beamforming infeasible after the fallback ladder";
    log::warn(msg);
    notes.push_back(msg);
    fallback.notes = notes;
    fallback.feasible = false;
    fallback.eta = active_ee(d, fallback.bf);
    return fallback;
}

ActiveResult solve_active(const ChannelSet &ch, const StarsConfig &cfg, const ScenarioParams &p,
                          const ActiveOptions &opt) {
    return solve_active(ch, cfg, p, initial_beamformers(make_active_data(ch, cfg, p)), opt);
}

} // namespace stars_isac
