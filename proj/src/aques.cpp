// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#include "stars_isac/aques.hpp"

#include "stars_isac/log.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <stdexcept>

namespace stars_isac {

namespace {

// Stream counters for the per-realization generators; channels use 0.
constexpr std::uint64_t kInitStream = 0x5151;
constexpr std::uint64_t kBaselineStream = 0x7a7a;

struct Candidate {
    StarsConfig cfg;
    BeamformerSet bf;
    Evaluation ev;
    bool feasible = false;
    bool valid = false;
};

bool binary_alpha(const StarsConfig &c) {
    for (int m = 0; m < c.size(); ++m)
        if (c.alpha(m) != 0.0 && c.alpha(m) != 1.0) return false;
    return true;
}

// Quantized amplitudes sit on the floor grid, so the unit-energy identity is
// not part of this check.
bool quant_ok(const StarsConfig &c, const ScenarioParams &p) {
    if (!c.quantized) return false;
    const long long L = composite_levels(c.stars_type, c.L_beta, c.L_phi);
    return L >= p.quant_min && L <= p.quant_max;
}

Candidate make_candidate(const ScenarioParams &p, const ChannelSet &ch, const StarsConfig &cfg,
                         const BeamformerSet &bf) {
    Candidate c;
    c.cfg = cfg;
    c.bf = bf;
    c.ev = evaluate(p, ch, cfg, bf);
    c.feasible = c.ev.feasible(kAquesFeasTol) && quant_ok(cfg, p) && binary_alpha(cfg);
    c.valid = true;
    return c;
}

bool offer(Candidate &best, const Candidate &c) {
    if (!best.valid || (c.feasible && !best.feasible) || (c.feasible == best.feasible && c.ev.ee > best.ev.ee)) {
        best = c;
        return true;
    }
    return false;
}

} // namespace

AquesResult run_aques(const ScenarioParams &p, const ChannelSet &ch, const AquesOptions &opt) {
    if (ch.n_users() < 1) throw std::invalid_argument("run_aques: at least one user is required");
    AquesResult res;
    const int M = ch.n_elements();

    StarsConfig cont; // continuous coefficients carried between passes
    if (opt.init) {
        cont = *opt.init;
    } else {
        std::mt19937_64 rng = make_rng(ch.seed, kInitStream);
        cont = initial_config(p.stars_type, M, rng);
    }
    StarsConfig cur = cont; // what the active stage sees
    std::optional<BeamformerSet> bf_prev;

    Candidate best;
    StageFlags best_flags;
    double prev_best = -std::numeric_limits<double>::infinity();

    for (int pass = 1; pass <= opt.max_passes; ++pass) {
        StageFlags flags;
        const ActiveResult act =
            bf_prev ? solve_active(ch, cur, p, *bf_prev, opt.active) : solve_active(ch, cur, p, opt.active);
        flags.active_feasible = act.feasible;
        for (const auto &n : act.notes) res.notes.push_back("pass " + std::to_string(pass) + " active: " + n);

        // The previous pass's final STARS state under the refreshed beamformers.
        if (pass > 1 && offer(best, make_candidate(p, ch, cur, act.bf))) best_flags = flags;

        // The penalty schedule stalls well before a stationary point, so the
        // passive stage is restarted from its own output while that still pays.
        // The relaxed scheme runs its own convex-concave loop to completion.
        const int restarts = p.stars_type == StarsType::relaxed ? 0 : opt.passive_restarts;
        for (int r = 0; r <= restarts; ++r) {
            const PassiveResult pas =
                solve_passive(p.stars_type, ch, act.bf, p, cont, opt.passive, opt.pinned_amplitudes);
            flags.passive_feasible = pas.feasible;
            res.max_unit_energy_error = std::max(res.max_unit_energy_error, pas.max_unit_energy_error);
            for (const auto &n : pas.notes) res.notes.push_back("pass " + std::to_string(pass) + " passive: " + n);
            const double before = evaluate(p, ch, cont, act.bf).ee;
            cont = pas.cfg;
            if (!pas.improved || pas.ee - before <= opt.restart_gain * std::abs(pas.ee)) break;
        }

        StarsConfig next = cont;
        if (opt.quantization) {
            const QuantChoice q = select_quantization(cont, ch, act.bf, p);
            flags.quantization_found = q.found;
            flags.quantization_feasible = q.feasible;
            if (q.found) {
                next = apply_quantization(cont, q);
                res.quant = q;
            } else {
                next = quantize(cont); // previous levels
            }
        } else {
            next = quantize(cont);
        }

        if (opt.selection) {
            const SelectionResult sel = solve_selection(ch, act.bf, next, p, opt.select);
            flags.selection_feasible = sel.feasible;
            next.alpha = sel.alpha;
            cont.alpha = sel.alpha;
            for (const auto &n : sel.notes) res.notes.push_back("pass " + std::to_string(pass) + " selection: " + n);
        }

        if (offer(best, make_candidate(p, ch, next, act.bf))) best_flags = flags;
        res.outer_trace.emplace_back(pass, best.ev.ee);
        res.passes = pass;

        const double gain = best.ev.ee - prev_best;
        const bool settled =
            pass > 1 && std::isfinite(prev_best) && gain <= opt.rel_tol * std::max(std::abs(best.ev.ee), 1e-12);
        log::debug("aques pass " + std::to_string(pass) + " best EE " + std::to_string(best.ev.ee) +
                   (best.feasible ? " feasible" : " infeasible"));
        prev_best = best.ev.ee;
        cur = next;
        bf_prev = act.bf;
        if (settled) {
            res.converged = true;
            break;
        }
    }

    res.bf = best.bf;
    res.stars = best.cfg;
    res.continuous = cont;
    res.eval = best.ev;
    res.feasible = best.feasible;
    res.flags = best_flags;
    res.report = make_report(best.ev, best.cfg);
    res.report.iteration_trace = res.outer_trace;
    if (!res.feasible) {
        res.notes.emplace_back("no feasible iterate found; best infeasible iterate returned");
        log::warn("run_aques: returned iterate violates a constraint");
    }
    return res;
}

nlohmann::json to_json(const AquesResult &r) {
    nlohmann::json trace = nlohmann::json::array();
    for (const auto &[pass, ee] : r.outer_trace) trace.push_back({pass, ee});
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto &c : r.quant.pairs_evaluated)
        pairs.push_back({{"x", c.x}, {"L_beta", c.L_beta}, {"L_phi", c.L_phi}, {"ee", c.ee}, {"feasible", c.feasible}});
    return nlohmann::json{
        {"report", to_json(r.report)},
        {"beamformers", to_json(r.bf)},
        {"stars", to_json(r.stars)},
        {"quantization",
         {{"x_threshold", r.quant.x_threshold},
          {"x", r.quant.x},
          {"L_total", r.quant.L_total},
          {"L_beta", r.quant.L_beta},
          {"L_phi", r.quant.L_phi},
          {"ee", r.quant.ee},
          {"found", r.quant.found},
          {"skipped_x", r.quant.skipped_x},
          {"pairs_evaluated", pairs}}},
        {"outer_trace", trace},
        {"flags",
         {{"active_feasible", r.flags.active_feasible},
          {"passive_feasible", r.flags.passive_feasible},
          {"quantization_found", r.flags.quantization_found},
          {"quantization_feasible", r.flags.quantization_feasible},
          {"selection_feasible", r.flags.selection_feasible}}},
        {"feasible", r.feasible},
        {"converged", r.converged},
        {"passes", r.passes},
        {"max_unit_energy_error", r.max_unit_energy_error},
        {"notes", r.notes}};
}

void write_outer_trace_csv(const std::string &path, const std::vector<std::pair<int, double>> &trace) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "pass,ee\n" << std::setprecision(12);
    for (const auto &[pass, ee] : trace) out << pass << ',' << ee << '\n';
}

// ---------------------------------------------------------------------------
// Linear precoders

namespace {

cmat effective_users(const ChannelSet &ch, const cvec &theta_T) {
    cmat Hm(ch.n_antennas(), ch.n_users()); // columns h_k
    for (int k = 0; k < ch.n_users(); ++k)
        Hm.col(k) = (theta_T.transpose() * ch.H[static_cast<std::size_t>(k)]).adjoint();
    return Hm;
}

BeamformerSet finish_linear(const ChannelSet &ch, const cvec &theta_R, const ScenarioParams &p, cmat Wc,
                            double comm_fraction) {
    const int N = ch.n_antennas(), K = ch.n_users();
    const double P = p.bs_power_budget_w();
    BeamformerSet bf = zero_beamformers(N, K);
    const double fn = Wc.norm();
    if (fn > 0.0) Wc *= std::sqrt(comm_fraction * P) / fn;
    for (int k = 0; k < K; ++k) bf.w_c[static_cast<std::size_t>(k)] = Wc.col(k);
    bf.W_s = std::sqrt((1.0 - comm_fraction) * P / N) * cmat::Identity(N, N);
    const cmat HW = sensing_channel(theta_R, ch, p.absorption_coeff) * bf.W_s;
    if (HW.norm() > 0.0) {
        Eigen::JacobiSVD<cmat> svd(HW, Eigen::ComputeThinU);
        bf.u_s = svd.matrixU().col(0);
    } else {
        bf.u_s = cvec::Zero(N);
        bf.u_s(0) = 1.0;
    }
    return bf;
}

} // namespace

BeamformerSet zf_beamformer(const ChannelSet &ch, const cvec &theta_T, const cvec &theta_R, const ScenarioParams &p,
                            double comm_fraction, std::vector<std::string> *warnings) {
    const cmat Hm = effective_users(ch, theta_T);
    const cmat gram = Hm.adjoint() * Hm;
    Eigen::SelfAdjointEigenSolver<cmat> es(gram);
    const double lmax = es.eigenvalues().maxCoeff(), lmin = es.eigenvalues().minCoeff();
    cmat inv;
    if (Hm.cols() > Hm.rows() || lmin <= 1e-12 * std::max(lmax, 1e-300)) {
        const std::string w = "ZF: effective user channels rank deficient; regularized pseudo-inverse used";
        log::warn(w);
        if (warnings) warnings->push_back(w);
        inv = (gram + 1e-9 * std::max(lmax, 1e-300) * cmat::Identity(gram.rows(), gram.cols())).inverse();
    } else {
        inv = gram.inverse();
    }
    return finish_linear(ch, theta_R, p, Hm * inv, comm_fraction);
}

BeamformerSet mmse_beamformer(const ChannelSet &ch, const cvec &theta_T, const cvec &theta_R,
                              const ScenarioParams &p, double comm_fraction) {
    const cmat Hm = effective_users(ch, theta_T);
    const int K = ch.n_users();
    const double reg = K * p.noise_user_w() / p.bs_power_budget_w();
    // K x K form of (H H^H + reg I)^-1 H; stays well conditioned when K < N.
    const cmat A = Hm.adjoint() * Hm + reg * cmat::Identity(K, K);
    return finish_linear(ch, theta_R, p, cmat(Hm * A.ldlt().solve(cmat::Identity(K, K))), comm_fraction);
}

BeamformerSet sensing_only_beamformer(const ChannelSet &ch, const StarsConfig &cfg, const ScenarioParams &p) {
    const int N = ch.n_antennas(), K = ch.n_users();
    BeamformerSet bf = zero_beamformers(N, K);
    const cmat Hs = sensing_channel(coefficients(cfg, Side::R), ch, p.absorption_coeff);
    Eigen::JacobiSVD<cmat> svd(Hs, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const cvec v = svd.matrixV().col(0);
    bf.W_s = cmat::Zero(N, N);
    bf.W_s.col(0) = std::sqrt(p.bs_power_budget_w()) * v;
    bf.u_s = svd.matrixU().col(0);
    return bf;
}

BeamformerSet comm_only_beamformer(const ChannelSet &ch, const StarsConfig &cfg, const ScenarioParams &p) {
    ScenarioParams q = p;
    q.sensing_sinr_min_db = -300.0;
    q.sensing_inr_max_db = 300.0;
    return solve_active(ch, cfg, q).bf;
}

// ---------------------------------------------------------------------------
// Baselines

Baseline baseline_from_string(const std::string &s) {
    if (s == "aques") return Baseline::aques;
    if (s == "zf") return Baseline::zf;
    if (s == "mmse") return Baseline::mmse;
    if (s == "random") return Baseline::random;
    if (s == "mode_switching") return Baseline::mode_switching;
    if (s == "phase_only") return Baseline::phase_only;
    if (s == "amplitude_only") return Baseline::amplitude_only;
    if (s == "fixed_75pct_on") return Baseline::fixed_75pct_on;
    throw std::invalid_argument("unknown baseline '" + s + "'");
}

std::string to_string(Baseline b) {
    switch (b) {
    case Baseline::aques: return "aques";
    case Baseline::zf: return "zf";
    case Baseline::mmse: return "mmse";
    case Baseline::random: return "random";
    case Baseline::mode_switching: return "mode_switching";
    case Baseline::phase_only: return "phase_only";
    case Baseline::amplitude_only: return "amplitude_only";
    case Baseline::fixed_75pct_on: return "fixed_75pct_on";
    }
    return "aques";
}

StarsConfig baseline_config(Baseline kind, std::mt19937_64 &rng, const ScenarioParams &p) {
    const int M = p.n_elements;
    StarsConfig c = initial_config(p.stars_type, M, rng);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    switch (kind) {
    case Baseline::random:
        for (int m = 0; m < M; ++m) {
            const double chi = u01(rng) * kPi / 2.0;
            c.beta_T(m) = std::sin(chi);
            c.beta_R(m) = std::cos(chi);
        }
        break;
    case Baseline::mode_switching:
        for (int m = 0; m < M; ++m) {
            const bool t = u01(rng) < 0.5;
            c.beta_T(m) = t ? 1.0 : 0.0;
            c.beta_R(m) = t ? 0.0 : 1.0;
        }
        break;
    case Baseline::fixed_75pct_on: {
        const int on = static_cast<int>(std::ceil(0.75 * M));
        std::vector<int> idx(static_cast<std::size_t>(M));
        for (int m = 0; m < M; ++m) idx[static_cast<std::size_t>(m)] = m;
        std::shuffle(idx.begin(), idx.end(), rng);
        c.alpha = rvec::Zero(M);
        for (int i = 0; i < on; ++i) c.alpha(idx[static_cast<std::size_t>(i)]) = 1.0;
        break;
    }
    default: break; // equal split sqrt(0.5), random phases
    }
    return c;
}

namespace {

BaselineOutcome from_aques(Baseline kind, const AquesResult &r) {
    BaselineOutcome o;
    o.kind = kind;
    o.stars = r.stars;
    o.bf = r.bf;
    o.eval = r.eval;
    o.feasible = r.feasible;
    o.trace = r.outer_trace;
    o.notes = r.notes;
    return o;
}

BaselineOutcome from_pair(Baseline kind, const ScenarioParams &p, const ChannelSet &ch, const StarsConfig &cfg,
                          const BeamformerSet &bf) {
    BaselineOutcome o;
    o.kind = kind;
    o.stars = cfg;
    o.bf = bf;
    o.eval = evaluate(p, ch, cfg, bf);
    o.feasible = o.eval.feasible(kAquesFeasTol);
    return o;
}

// Coordinate search on the amplitude split with phases and beamformers fixed.
StarsConfig amplitude_search(const ScenarioParams &p, const ChannelSet &ch, StarsConfig c, const BeamformerSet &bf) {
    constexpr int kGrid = 16;
    for (int sweep = 0; sweep < 2; ++sweep)
        for (int m = 0; m < c.size(); ++m) {
            double best_ee = -1.0;
            bool best_feas = false;
            double best_chi = 0.0;
            for (int g = 0; g <= kGrid; ++g) {
                const double chi = g * (kPi / 2.0) / kGrid;
                c.beta_T(m) = std::sin(chi);
                c.beta_R(m) = std::cos(chi);
                const Evaluation ev = evaluate(p, ch, c, bf);
                const bool f = ev.feasible(kAquesFeasTol);
                if ((f && !best_feas) || (f == best_feas && ev.ee > best_ee)) {
                    best_ee = ev.ee;
                    best_feas = f;
                    best_chi = chi;
                }
            }
            c.beta_T(m) = std::sin(best_chi);
            c.beta_R(m) = std::cos(best_chi);
        }
    return c;
}

} // namespace

BaselineOutcome run_baseline(Baseline kind, const ScenarioParams &p, const ChannelSet &ch,
                             const AquesResult *reference) {
    std::mt19937_64 rng = make_rng(ch.seed, kBaselineStream);
    switch (kind) {
    case Baseline::aques: return from_aques(kind, run_aques(p, ch));
    case Baseline::zf:
    case Baseline::mmse: {
        AquesResult own;
        if (!reference) {
            own = run_aques(p, ch);
            reference = &own;
        }
        const cvec tT = coefficients(reference->stars, Side::T), tR = coefficients(reference->stars, Side::R);
        std::vector<std::string> warn;
        const BeamformerSet bf =
            kind == Baseline::zf ? zf_beamformer(ch, tT, tR, p, 0.7, &warn) : mmse_beamformer(ch, tT, tR, p);
        BaselineOutcome o = from_pair(kind, p, ch, reference->stars, bf);
        o.notes = warn;
        return o;
    }
    case Baseline::random: {
        StarsConfig c = quantize(baseline_config(kind, rng, p));
        const BeamformerSet bf = random_beamformers(make_active_data(ch, c, p), rng);
        return from_pair(kind, p, ch, c, bf);
    }
    case Baseline::mode_switching:
    case Baseline::phase_only: {
        AquesOptions opt;
        opt.init = baseline_config(kind, rng, p);
        opt.pinned_amplitudes = true;
        opt.selection = false;
        return from_aques(kind, run_aques(p, ch, opt));
    }
    case Baseline::amplitude_only: {
        StarsConfig c = baseline_config(kind, rng, p);
        BeamformerSet bf = solve_active(ch, c, p).bf;
        c = amplitude_search(p, ch, c, bf);
        c = quantize(c);
        bf = solve_active(ch, c, p, bf).bf;
        return from_pair(kind, p, ch, c, bf);
    }
    case Baseline::fixed_75pct_on: {
        AquesOptions opt;
        opt.init = baseline_config(kind, rng, p);
        opt.selection = false;
        return from_aques(kind, run_aques(p, ch, opt));
    }
    }
    throw std::invalid_argument("run_baseline: unknown kind");
}

} // namespace stars_isac
