// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stars_isac/convex_core.hpp"
#include "test_util.hpp"

using namespace stars_isac;
using namespace stars_isac::testing;
using doctest::Approx;

TEST_CASE("bounded scalar maximization") {
    ConvexProblem P;
    const Var eta = P.add_real("eta");
    P.maximize(scalar(eta));
    P.add_le(scalar(eta), 3.0, "cap");
    const SolveOutcome s = P.solve();
    REQUIRE(s.status == SolveStatus::optimal);
    CHECK(s.scalar_value(eta) == Approx(3.0).epsilon(1e-7));
    CHECK(s.objective_value == Approx(3.0).epsilon(1e-7));
}

TEST_CASE("unconstrained least squares recovers the centre") {
    std::mt19937_64 rng(1);
    const cvec c = random_cvec(4, rng);
    ConvexProblem P;
    const Var x = P.add_complex("x", 4);
    P.minimize(QuadExpr().add_sq_norm(CAffine(4).add(x, cmat::Identity(4, 4)).add_offset(-c)));
    const SolveOutcome s = P.solve();
    REQUIRE(s.status == SolveStatus::optimal);
    CHECK((s.complex_value(x) - c).norm() < 1e-6);
}

TEST_CASE("minimum-norm point on a hyperplane") {
    const rvec a = (rvec(3) << 1.0, -2.0, 0.5).finished();
    ConvexProblem P;
    const Var x = P.add_real("x", 3);
    QuadExpr f;
    f.add_sq_norm(CAffine(3).add(x, cmat::Identity(3, 3)));
    LinExpr ax;
    for (int i = 0; i < 3; ++i) ax += a(i) * scalar(x, i);
    P.minimize(f);
    P.add_eq(ax, 1.0, "plane");
    const SolveOutcome s = P.solve();
    REQUIRE(s.status == SolveStatus::optimal);
    CHECK((s.real_value(x) - a / a.squaredNorm()).norm() < 1e-6);
}

TEST_CASE("complex problem agrees with its realified twin") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        const cmat A = random_cmat(3, 3, rng);
        const cvec b = random_cvec(3, rng);
        const cvec a = random_cvec(3, rng);
        ConvexProblem Pc;
        const Var z = Pc.add_complex("z", 3);
        Pc.maximize(re_inner(a, z));
        Pc.add_soc(CAffine(3).add(z, A).add_offset(b), 2.0 + b.norm(), "ball");
        const SolveOutcome sc = Pc.solve();

        // The same problem over stacked real and imaginary parts.
        rmat Ar(6, 6);
        Ar << A.real(), -A.imag(), A.imag(), A.real();
        cvec br(6);
        br << b.real().cast<cplx>(), b.imag().cast<cplx>();
        rvec ar(6);
        ar << a.real(), a.imag();
        ConvexProblem Pr;
        const Var x = Pr.add_real("x", 6);
        Pr.maximize(re_inner(ar.cast<cplx>(), x));
        Pr.add_soc(CAffine(6).add(x, Ar.cast<cplx>()).add_offset(br), 2.0 + b.norm(), "ball");
        const SolveOutcome sr = Pr.solve();
        REQUIRE(sc.status == SolveStatus::optimal);
        REQUIRE(sr.status == SolveStatus::optimal);
        CHECK(sc.objective_value == Approx(sr.objective_value).epsilon(1e-7));
    }
}

TEST_CASE("optimal outcomes honour the residual contract") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + trial % 4;
        const cmat Q = random_cmat(n, n, rng);
        const cvec q = random_cvec(n, rng);
        ConvexProblem P;
        const Var x = P.add_complex("x", n);
        const Var t = P.add_real("t");
        P.maximize(re_inner(q, x) - 0.1 * scalar(t));
        P.add_le(QuadExpr().add_sq_norm(CAffine(n).add(x, Q)), scalar(t), "epi");
        P.add_le(scalar(t), 5.0, "t_cap");
        const SolveOutcome s = P.solve();
        REQUIRE(s.status == SolveStatus::optimal);
        CHECK(s.kkt_residual <= 1e-8);
        CHECK(s.max_violation <= 1e-6);
    }
}

TEST_CASE("a feasible warm start is never worse than a cold start") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        const cvec q = random_cvec(3, rng);
        auto build = [&](ConvexProblem &P) {
            const Var x = P.add_complex("x", 3);
            P.maximize(re_inner(q, x) - QuadExpr().add_sq_norm(CAffine(3).add(x, cmat::Identity(3, 3))));
            P.add_soc(CAffine(3).add(x, cmat::Identity(3, 3)), 0.5, "ball");
            return x;
        };
        ConvexProblem cold, warm;
        build(cold);
        const Var x = build(warm);
        warm.set_warm_start(x, cvec(0.1 * q / q.norm()));
        const SolveOutcome a = cold.solve(), b = warm.solve();
        REQUIRE(a.status == SolveStatus::optimal);
        // Both solves stop at the same relative gap tolerance.
        CHECK(b.objective_value >= a.objective_value - 2e-8 * (1.0 + std::abs(a.objective_value)));
    }
}

TEST_CASE("infeasible problems are reported, not relaxed") {
    ConvexProblem P;
    const Var x = P.add_real("x");
    P.maximize(scalar(x));
    P.add_le(scalar(x), -1.0, "upper");
    P.add_ge(scalar(x), 1.0, "lower");
    const SolveOutcome s = P.solve();
    CHECK(s.status != SolveStatus::optimal);
    CHECK_FALSE(s.usable());
}

TEST_CASE("non-convex forms are rejected at construction") {
    ConvexProblem P;
    const Var x = P.add_complex("x", 2);
    CHECK_THROWS_AS(P.maximize(QuadExpr().add_hermitian(x, cmat::Identity(2, 2))), std::invalid_argument);
    CHECK_THROWS_AS(P.add_ge(QuadExpr().add_hermitian(x, cmat::Identity(2, 2)), 1.0, "bad"), std::invalid_argument);
    ConvexProblem other;
    const Var y = other.add_real("y", 5);
    CHECK_THROWS(P.add_le(scalar(y, 4), 1.0, "foreign"));
}

TEST_CASE("solves are deterministic and the dump lists every constraint") {
    std::mt19937_64 rng(5);
    const cvec q = random_cvec(3, rng);
    auto run = [&] {
        ConvexProblem P;
        const Var x = P.add_complex("x", 3);
        P.maximize(re_inner(q, x));
        P.add_soc(CAffine(3).add(x, cmat::Identity(3, 3)), 1.0, "unit_ball");
        return std::make_pair(P.solve(), P.dump());
    };
    const auto [a, da] = run();
    const auto [b, db] = run();
    CHECK(a.assignment == b.assignment);
    CHECK(da.find("unit_ball") != std::string::npos);
    CHECK(a.objective_value == Approx(q.norm()).epsilon(1e-7));
}
