// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#include "stars_isac/quant_select.hpp"

#include "stars_isac/active_bf.hpp"
#include "stars_isac/log.hpp"
#include "stars_isac/passive_bf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace stars_isac {

namespace {

constexpr double kLn2 = 0.69314718055994530942;
constexpr double kFeasTol = 1e-7;

// (feasible, ee) ordering used by every search in this file.
bool better(bool feas_a, double ee_a, bool feas_b, double ee_b) {
    if (feas_a != feas_b) return feas_a;
    return ee_a > ee_b;
}

} // namespace

XThreshold x_threshold(const ScenarioParams &p, const rvec &alpha) {
    const double budget = p.stars_power_budget_w();
    if (budget < p.p_cir_w) throw std::invalid_argument("x_threshold: STARS budget below circuit power");
    XThreshold t;
    const double on = alpha.sum();
    if (on <= 0.0) {
        t.no_elements = true;
        return t;
    }
    const double raw = std::floor((budget - p.p_cir_w) / (on * p.p_pin_w) + 1e-12);
    if (raw > kMaxQuantExponent) {
        t.uncapped_exceeds = true;
        t.x = kMaxQuantExponent;
    } else {
        t.x = static_cast<int>(std::max(raw, 0.0));
    }
    return t;
}

long long composite_levels(StarsType type, int L_beta, int L_phi) {
    const long long b = L_beta, f = L_phi;
    switch (type) {
    case StarsType::relaxed: return b * b * f * f;
    case StarsType::independent: return b * f * f;
    case StarsType::coupled: return b * f;
    }
    return 0;
}

std::vector<std::pair<int, int>> enumerate_pairs(int x, StarsType type, int L_min, int L_max) {
    if (x < 1) throw std::invalid_argument("enumerate_pairs: x must be >= 1");
    if (x > 30) throw std::invalid_argument("enumerate_pairs: x too large");
    std::vector<std::pair<int, int>> out;
    const long long target = type == StarsType::coupled ? (1LL << (x - 1)) : (1LL << x);
    if (target < L_min || target > L_max) return out;
    for (int eb = 0; eb <= x; ++eb) {
        int ep = -1;
        switch (type) {
        case StarsType::coupled: ep = x - 1 - eb; break;
        case StarsType::independent:
            if ((x - eb) % 2 == 0) ep = (x - eb) / 2;
            break;
        case StarsType::relaxed:
            if (x % 2 == 0 && 2 * eb <= x) ep = x / 2 - eb;
            break;
        }
        if (ep < 0) continue;
        const int Lb = 1 << eb, Lp = 1 << ep;
        if (composite_levels(type, Lb, Lp) == target) out.emplace_back(Lb, Lp);
    }
    std::sort(out.begin(), out.end());
    return out;
}

QuantChoice select_quantization(const StarsConfig &cfg, const ChannelSet &ch, const BeamformerSet &bf,
                                const ScenarioParams &p) {
    QuantChoice q;
    const XThreshold th = x_threshold(p, cfg.alpha);
    q.x_threshold = th.x;
    if (th.no_elements) q.notes.emplace_back("every element is off");
    for (int x = 2; x <= th.x; ++x) {
        const auto pairs = enumerate_pairs(x, cfg.stars_type, p.quant_min, p.quant_max);
        if (pairs.empty()) {
            q.skipped_x.push_back(x);
            continue;
        }
        for (const auto &[Lb, Lp] : pairs) {
            const StarsConfig c = quantize(cfg, Lb, Lp);
            const Evaluation ev = evaluate(p, ch, c, bf);
            QuantCandidate cand{x, Lb, Lp, ev.ee, ev.feasible(kFeasTol)};
            q.pairs_evaluated.push_back(cand);
            // Strict improvement only: the first of equal candidates wins, and
            // within one x pairs come in increasing (L_beta, L_phi).
            bool take = !q.found || better(cand.feasible, cand.ee, q.feasible, q.ee);
            if (q.found && cand.feasible == q.feasible && cand.ee == q.ee)
                take = std::pair{Lb, Lp} < std::pair{q.L_beta, q.L_phi};
            if (take) {
                q.found = true;
                q.x = x;
                q.L_beta = Lb;
                q.L_phi = Lp;
                q.ee = cand.ee;
                q.feasible = cand.feasible;
                q.L_total = composite_levels(cfg.stars_type, Lb, Lp);
            }
        }
    }
    if (!q.found) {
        q.notes.emplace_back("no admissible quantization pair; keeping the previous levels");
        log::warn("select_quantization: no admissible pair (x threshold " + std::to_string(th.x) + ")");
    } else if (!q.feasible) {
        q.notes.emplace_back("no feasible quantization pair; best infeasible pair kept");
    }
    return q;
}

StarsConfig apply_quantization(const StarsConfig &cfg, const QuantChoice &q) {
    if (!q.found) return cfg;
    return quantize(cfg, q.L_beta, q.L_phi);
}

void write_quant_table_csv(const std::string &path, const QuantChoice &q) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f.precision(12);
    f << "x,L_beta,L_phi,ee,feasible\n";
    for (const auto &c : q.pairs_evaluated)
        f << c.x << ',' << c.L_beta << ',' << c.L_phi << ',' << c.ee << ',' << (c.feasible ? 1 : 0) << '\n';
    if (!f) throw std::runtime_error("write failed: " + path);
}

// ---------------------------------------------------------------------------
// On/off selection

namespace {

StarsConfig with_alpha(const StarsConfig &cfg, const rvec &alpha) {
    StarsConfig c = cfg;
    c.alpha = alpha;
    return c;
}

struct Scored {
    rvec alpha;
    double ee = -std::numeric_limits<double>::infinity();
    bool feasible = false;
};

Scored score(const ChannelSet &ch, const BeamformerSet &bf, const StarsConfig &cfg, const ScenarioParams &p,
             const rvec &alpha) {
    const Evaluation ev = evaluate(p, ch, with_alpha(cfg, alpha), bf);
    return {alpha, ev.ee, ev.feasible(kFeasTol)};
}

// Signal and total received power for the row y = alpha^T B_k.
struct Pieces {
    double A = 0.0, C = 0.0;
};

Pieces pieces(const Eigen::RowVectorXcd &y, const BeamformerSet &bf, int k) {
    Pieces r;
    r.A = std::norm((y * bf.w_c[static_cast<std::size_t>(k)])(0));
    r.C = 1.0 + (y * bf.W_s).squaredNorm();
    for (const auto &w : bf.w_c) r.C += std::norm((y * w)(0));
    return r;
}

} // namespace

SelectionResult solve_selection(const ChannelSet &ch, const BeamformerSet &bf, const StarsConfig &cfg,
                                const ScenarioParams &p, const SelectionOptions &opt) {
    SelectionResult res;
    const int M = cfg.size();
    const rvec ones = rvec::Ones(M);
    const StarsConfig full = with_alpha(cfg, ones);
    const cvec cT = coefficients(full, Side::T), cR = coefficients(full, Side::R);
    const PassiveData d = make_passive_data(ch, bf, full, p);
    const int npin = pin_count(cfg.stars_type, cfg.L_beta, cfg.L_phi);
    const double unit_power = npin * p.p_pin_w;
    const double base_power = d.fixed_power - stars_power(full, p.p_pin_w, p.p_cir_w) + p.p_cir_w;
    const double stars_room = p.stars_power_budget_w() - p.p_cir_w;

    // alpha^T B_k with B_k = diag(theta_T) H_k; sensing rows carry theta_R the same way.
    std::vector<cmat> B;
    for (const auto &H : d.H) B.push_back(cT.asDiagonal() * H);
    const cmat Gt = cR.asDiagonal() * d.rows.G_tilde;
    std::vector<cvec> Gb;
    for (const auto &g : d.rows.G_bar) Gb.push_back(cR.cwiseProduct(g));

    rvec abar = cfg.alpha;
    for (int t = 1; t <= opt.max_iters; ++t) {
        const double eps = opt.epsilon0 / std::sqrt(static_cast<double>(t));
        res.epsilons.push_back(eps);
        ConvexProblem P;
        const Var va = P.add_real("alpha", M);
        const Var vs = P.add_real("binary_slack", M);
        const cvec x0 = abar.cast<cplx>();

        QuadExpr rate_sum;
        double R0 = 0.0;
        for (int k = 0; k < d.K; ++k) {
            const auto ku = static_cast<std::size_t>(k);
            const Eigen::RowVectorXcd y0 = abar.cast<cplx>().transpose() * B[ku];
            const Pieces pc = pieces(y0, bf, k);
            const double g = pc.A / (pc.C - pc.A);
            const double lam = dinkelbach_lambda(pc.A, pc.C - pc.A);
            const double k0 = std::log2(1.0 + g) + (-g + (1.0 + g) * lam) / kLn2;
            const double ca = (1.0 + g) / (pc.C * kLn2), cc = (1.0 + g) * lam / (pc.C * kLn2);
            R0 += std::log2(1.0 + g);
            const cvec a = B[ku] * bf.w_c[ku];
            const AffineMinorant Am = linearize_quadratic(a.transpose(), cvec::Zero(1), x0);
            LinExpr A_lin = re_inner(Am.gradient, va);
            A_lin.constant += Am.value0 - Am.gradient.dot(x0).real();
            QuadExpr C(1.0);
            for (const auto &w : bf.w_c) C.add_sq_norm(CAffine(1).add(va, cmat((B[ku] * w).transpose())));
            C.add_sq_norm(CAffine(static_cast<int>(bf.W_s.cols())).add(va, cmat((B[ku] * bf.W_s).transpose())));
            const QuadExpr R = QuadExpr(k0) + QuadExpr(ca * A_lin) - cc * C;
            rate_sum += R;
            if (d.rate_min > 0.0) P.add_ge(R, QuadExpr(d.rate_min), "rate" + std::to_string(k));
        }

        QuadExpr leak;
        double I0 = 0.0;
        for (int k = 0; k < d.K; ++k) {
            const auto ku = static_cast<std::size_t>(k);
            leak.add_sq_norm(CAffine(1)
                                 .add(va, cmat(Gb[ku].transpose()))
                                 .add_offset(cvec::Constant(1, d.rows.c_bar[ku])));
            I0 += std::norm(Gb[ku].cwiseProduct(x0).sum() + d.rows.c_bar[ku]);
        }
        if (d.sensing_enabled()) {
            const AffineMinorant Sm = linearize_quadratic(cmat(Gt.transpose()), cvec(d.rows.c_s.transpose()), x0);
            LinExpr S_lin = re_inner(Sm.gradient, va);
            S_lin.constant += Sm.value0 - Sm.gradient.dot(x0).real();
            const double scale = d.sinr_min * (I0 + d.un);
            P.add_ge((1.0 / scale) * (QuadExpr(S_lin) - d.sinr_min * (leak + QuadExpr(d.un))), QuadExpr(0.0),
                     "sensing_sinr");
        }
        if (d.inr_enabled()) P.add_le((1.0 / (d.inr_max * d.un)) * leak, QuadExpr(1.0), "sensing_inr");

        LinExpr on_sum, slack_sum;
        for (int m = 0; m < M; ++m) {
            const LinExpr am = scalar(va, m), sm = scalar(vs, m);
            on_sum += am;
            slack_sum += sm;
            P.add_ge(QuadExpr(am), QuadExpr(-eps), "box_low");
            P.add_le(QuadExpr(am), QuadExpr(1.0 + eps), "box_high");
            // alpha - alpha^2 <= eps with alpha^2 replaced by its tangent
            const double ab = abar(m);
            P.add_le(QuadExpr((1.0 - 2.0 * ab) * am + LinExpr(ab * ab)), QuadExpr(LinExpr(eps) + sm), "binary");
            P.add_ge(QuadExpr(sm), QuadExpr(0.0));
        }
        P.add_le(QuadExpr((unit_power / stars_room) * on_sum), QuadExpr(1.0), "stars_power");

        const double Pbar = base_power + unit_power * abar.sum() + d.xi * R0;
        const double eta = R0 / Pbar;
        const double weight = std::max(1.0 - eta * d.xi, 1e-6);
        P.maximize((1.0 / Pbar) * (weight * rate_sum - QuadExpr(eta * unit_power * on_sum)) -
                   QuadExpr(opt.binary_penalty * slack_sum));

        P.set_warm_start(va, abar);
        rvec s0(M);
        for (int m = 0; m < M; ++m) s0(m) = std::max(abar(m) - abar(m) * abar(m) - eps, 0.0) + 1e-3;
        P.set_warm_start(vs, s0);

        const SolveOutcome so = P.solve(opt.solver);
        res.iterations = t;
        if (!so.usable()) {
            res.notes.push_back("selection subproblem " + to_string(so.status) + " at iteration " + std::to_string(t) +
                                ": " + so.message);
            break;
        }
        const rvec a = so.real_value(va);
        const double step = (a - abar).cwiseAbs().maxCoeff();
        abar = a;
        double dist = 0.0;
        for (int m = 0; m < M; ++m) dist = std::max(dist, std::min(std::abs(a(m)), std::abs(a(m) - 1.0)));
        if (dist <= opt.binary_tol) {
            res.converged = true;
            break;
        }
        if (t > 1 && step <= opt.binary_tol) {
            res.notes.push_back("relaxed iterate stalled at distance " + std::to_string(dist) + " from binary");
            break;
        }
    }
    res.alpha_relaxed = abar;

    rvec alpha(M);
    for (int m = 0; m < M; ++m) alpha(m) = abar(m) >= 0.5 ? 1.0 : 0.0;

    // Greedy repair of the STARS budget: drop the element whose removal hurts least.
    auto stars_ok = [&](const rvec &al) { return al.sum() * unit_power <= stars_room + 1e-12; };
    while (!stars_ok(alpha)) {
        Scored pick;
        int drop = -1;
        for (int m = 0; m < M; ++m) {
            if (alpha(m) < 0.5) continue;
            rvec trial = alpha;
            trial(m) = 0.0;
            const Scored sc = score(ch, bf, cfg, p, trial);
            if (drop < 0 || sc.ee > pick.ee) {
                pick = sc;
                drop = m;
            }
        }
        alpha(drop) = 0.0;
        res.repaired = true;
    }
    if (res.repaired) {
        res.notes.emplace_back("rounded pattern exceeded the STARS budget; elements dropped greedily");
        log::info("solve_selection: greedy repair applied");
    }

    Scored cur = score(ch, bf, cfg, p, alpha);
    if (opt.flip_polish) {
        for (int round = 0; round < M; ++round) {
            bool moved = false;
            for (int m = 0; m < M; ++m) {
                rvec trial = cur.alpha;
                trial(m) = 1.0 - trial(m);
                if (!stars_ok(trial)) continue;
                const Scored sc = score(ch, bf, cfg, p, trial);
                if (better(sc.feasible, sc.ee, cur.feasible, cur.ee)) {
                    cur = sc;
                    moved = true;
                }
            }
            if (!moved) break;
        }
    }
    // Never hand back something worse than the incoming pattern.
    if (stars_ok(cfg.alpha)) {
        const Scored in = score(ch, bf, cfg, p, cfg.alpha);
        if (better(in.feasible, in.ee, cur.feasible, cur.ee)) {
            cur = in;
            res.notes.emplace_back("incoming pattern kept");
        }
    }
    res.alpha = cur.alpha;
    res.ee = cur.ee;
    res.feasible = cur.feasible;
    return res;
}

std::pair<rvec, double> brute_force_selection(const ChannelSet &ch, const BeamformerSet &bf, const StarsConfig &cfg,
                                              const ScenarioParams &p) {
    const int M = cfg.size();
    if (M > 20) throw std::invalid_argument("brute_force_selection: M > 20");
    const double unit_power = pin_count(cfg.stars_type, cfg.L_beta, cfg.L_phi) * p.p_pin_w;
    const double room = p.stars_power_budget_w() - p.p_cir_w;
    Scored best;
    bool any = false;
    for (long mask = 0; mask < (1L << M); ++mask) {
        rvec a(M);
        for (int m = 0; m < M; ++m) a(m) = (mask >> m) & 1 ? 1.0 : 0.0;
        if (a.sum() * unit_power > room + 1e-12) continue;
        const Scored sc = score(ch, bf, cfg, p, a);
        if (!any || better(sc.feasible, sc.ee, best.feasible, best.ee)) {
            best = sc;
            any = true;
        }
    }
    return {best.alpha, best.ee};
}

} // namespace stars_isac
