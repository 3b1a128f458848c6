// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stars_isac/active_bf.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace stars_isac;
using namespace stars_isac::testing;
using doctest::Approx;

namespace {

cvec vec_of(const cmat &m) { return Eigen::Map<const cvec>(m.data(), m.size()); }
cmat mat_of(const cvec &v, int r, int c) { return Eigen::Map<const cmat>(v.data(), r, c); }

struct Instance {
    ScenarioParams p;
    ChannelSet ch;
    StarsConfig cfg;
    ActiveData d;
};

Instance default_instance(std::uint64_t seed) {
    Instance in;
    in.p.seed = seed;
    in.ch = generate_channels(in.p, 0);
    auto rng = make_rng(seed, 0x5151);
    in.cfg = initial_config(in.p.stars_type, in.p.n_elements, rng);
    in.d = make_active_data(in.ch, in.cfg, in.p);
    return in;
}

} // namespace

TEST_CASE("dinkelbach ratio") {
    CHECK(dinkelbach_lambda(1.0, 3.0) == 0.25);
    CHECK(dinkelbach_lambda(2.0, 0.0) == 1.0);
    CHECK(dinkelbach_lambda(0.0, 2.0) == 0.0);
    CHECK_THROWS_AS(dinkelbach_lambda(0.0, 0.0), std::invalid_argument);
}

TEST_CASE("dual rate surrogate") {
    const RateSurrogate z = dual_rate_surrogate(0.0, 0.0, 1.0, 0.0);
    CHECK(z.f == 0.0);
    CHECK(z.multiplier == 1.0);
    const RateSurrogate o = dual_rate_surrogate(1.0, 1.0, 2.0, 0.5);
    CHECK(o.f == Approx(0.0));
    CHECK(o.multiplier == 2.0);

    // Tight at the fixed point on random signal and interference powers.
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(1e-3, 50.0);
    for (int i = 0; i < 200; ++i) {
        const double A = u(rng), B = u(rng);
        const double g = A / B;
        const RateSurrogate r = dual_rate_surrogate(g, A, A + B, dinkelbach_lambda(A, B));
        CHECK(r.value == Approx(std::log2(1.0 + g)).epsilon(1e-12));
        CHECK(std::abs(r.dinkelbach_term) <= 1e-12 * (A + B));
    }
}

TEST_CASE("quadratic linearization") {
    const AffineMinorant m = linearize_quadratic(cmat::Ones(1, 1), cvec::Zero(1), cvec::Ones(1));
    CHECK(m(cvec::Constant(1, 2.0)) == Approx(3.0));
    CHECK(quadratic_value(cmat::Ones(1, 1), cvec::Zero(1), cvec::Constant(1, 2.0)) == Approx(4.0));

    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const cmat F = random_cmat(3, 4, rng);
        const cvec c = random_cvec(3, rng), x0 = random_cvec(4, rng);
        const AffineMinorant lin = linearize_quadratic(F, c, x0);
        CHECK(lin(x0) == Approx(quadratic_value(F, c, x0)).epsilon(1e-14));
        const cvec g = fd_gradient([&](const cvec &x) { return quadratic_value(F, c, x); }, x0);
        CHECK(rel_err(lin.gradient, g) <= 1e-6);
        // minorant everywhere
        const cvec x = random_cvec(4, rng, 2.0);
        CHECK(lin(x) <= quadratic_value(F, c, x) + 1e-12);
    }
}

TEST_CASE("beamforming gradients match finite differences") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const int N = 4;
        const Eigen::RowVectorXcd h = random_cvec(N, rng).transpose();
        const cvec w = random_cvec(N, rng);
        const cvec gA = fd_gradient([&](const cvec &x) { return std::norm((h * x)(0)); }, w);
        CHECK(rel_err(signal_gradient(h, w), gA) <= 1e-6);

        // interference-plus-signal C_k = sum_j |h w_j|^2 + ||h W_s||^2 as a function of one w_j
        const cvec w2 = random_cvec(N, rng);
        const cmat Ws0 = random_cmat(N, N, rng);
        const cvec gB = fd_gradient(
            [&](const cvec &x) { return std::norm((h * w)(0)) + std::norm((h * x)(0)) + (h * Ws0).squaredNorm(); }, w2);
        CHECK(rel_err(signal_gradient(h, w2), gB) <= 1e-6);

        const cmat Hs = random_cmat(N, N, rng);
        const cvec u = random_cvec(N, rng);
        const cmat Ws = random_cmat(N, N, rng);
        const cvec gW = fd_gradient(
            [&](const cvec &x) { return (u.adjoint() * Hs * mat_of(x, N, N)).squaredNorm(); }, vec_of(Ws));
        CHECK(rel_err(vec_of(sensing_gradient_Ws(Hs, u, Ws)), gW) <= 1e-6);

        const cvec gu = fd_gradient([&](const cvec &x) { return (x.adjoint() * Hs * Ws).squaredNorm(); }, u);
        CHECK(rel_err(sensing_gradient_u(Hs, Ws, u), gu) <= 1e-6);
    }
}

TEST_CASE("surrogates are tight at the expansion point") {
    std::mt19937_64 rng(4);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Instance in = default_instance(seed);
        for (int trial = 0; trial < 4; ++trial) {
            const BeamformerSet bf = trial == 0 ? initial_beamformers(in.d) : random_beamformers(in.d, rng);
            const SCAState s = make_sca_state(in.d, bf);
            CHECK(max_surrogate_gap(in.d, s) <= 1e-8);
            for (int k = 0; k < in.d.K; ++k) {
                const double A = signal_power(in.d, bf, k);
                const double exact = std::log2(1.0 + A / (total_received(in.d, bf, k) - A));
                CHECK(surrogate_rate(in.d, s, bf, k) == Approx(exact).epsilon(1e-10));
                CHECK(s.lambda[k] >= 0.0);
                CHECK(s.lambda[k] <= 1.0);
            }
        }
    }
}

TEST_CASE("zero leakage keeps the INR constraint satisfied for any combiner") {
    Instance in = default_instance(2);
    BeamformerSet bf = initial_beamformers(in.d);
    for (auto &w : bf.w_c) w.setZero();
    std::mt19937_64 rng(5);
    for (int i = 0; i < 10; ++i) {
        bf.u_s = random_cvec(in.d.N, rng);
        CHECK(leak_power(in.d, bf) == 0.0);
    }
}

TEST_CASE("block subproblems stay feasible at the previous iterate") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const Instance in = default_instance(seed);
        const ActiveResult r = solve_active(in.ch, in.cfg, in.p);
        REQUIRE(r.feasible);
        const SCAState s = make_sca_state(in.d, r.bf);

        WcProblem wc = build_wc_subproblem(in.d, s);
        const SolveOutcome o1 = wc.problem.solve();
        CHECK(o1.usable());
        WsProblem ws = build_Ws_subproblem(in.d, s);
        CHECK(ws.problem.solve().usable());
        UsProblem us = build_us_subproblem(in.d, s);
        CHECK(us.problem.solve().usable());

        if (o1.usable()) {
            BeamformerSet next = r.bf;
            for (int k = 0; k < in.d.K; ++k) next.w_c[k] = o1.complex_value(wc.w[k]);
            CHECK(active_ee(in.d, next) >= active_ee(in.d, r.bf) - 1e-6 * active_ee(in.d, r.bf));
        }
    }
}

TEST_CASE("efficiency trace is monotone and the result feasible on 20 seeds") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const Instance in = default_instance(seed);
        const ActiveResult r = solve_active(in.ch, in.cfg, in.p);
        CAPTURE(seed);
        REQUIRE(r.feasible);
        for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i].second >= r.trace[i - 1].second - 1e-6);
        const Evaluation ev = evaluate(in.p, in.ch, in.cfg, r.bf);
        CHECK(ev.feasible(1e-5));
        CHECK(r.eta == Approx(ev.ee).epsilon(1e-9));
    }
}

TEST_CASE("vanishing budget with thresholds disabled drives the beamformers to zero") {
    Instance in = default_instance(3);
    in.p.rate_min_bpshz = 0.0;
    in.p.sensing_sinr_min_db = -300.0;
    in.p.sensing_inr_max_db = 300.0;
    in.p.bs_power_budget_dbm = -60.0; // 1 nW
    const ActiveResult r = solve_active(in.ch, in.cfg, in.p);
    CHECK(r.bf.transmit_power() <= 1e-9 * (1.0 + 1e-6));
    CHECK(r.eta < 1e-6);
}

TEST_CASE("scalar instance matches a transmit-power grid search") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        for (bool sensing : {false, true}) {
            ScenarioParams p = scalar_scenario();
            p.seed = seed;
            if (!sensing) {
                p.sensing_sinr_min_db = -300.0;
                p.sensing_inr_max_db = 300.0;
            }
            const ChannelSet ch = generate_channels(p, 0);
            auto rng = make_rng(seed, 0x5151);
            const StarsConfig cfg = initial_config(p.stars_type, 1, rng);
            const ActiveData d = make_active_data(ch, cfg, p);
            const double oracle = scalar_grid_ee(d);
            CAPTURE(seed);
            CAPTURE(sensing);
            const ActiveResult r = solve_active(ch, cfg, p);
            if (!std::isfinite(oracle)) {
                CHECK_FALSE(r.feasible);
                continue;
            }
            CHECK(r.feasible);
            CHECK(std::abs(r.eta - oracle) <= 0.02 * oracle);
        }
    }
}

TEST_CASE("infeasible thresholds produce an explicit report") {
    Instance in = default_instance(1);
    in.p.rate_min_bpshz = 60.0;
    const ActiveResult r = solve_active(in.ch, in.cfg, in.p);
    CHECK_FALSE(r.feasible);
    CHECK_FALSE(r.notes.empty());
}
