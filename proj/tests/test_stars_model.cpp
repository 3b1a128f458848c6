// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stars_isac/stars_model.hpp"
#include "test_util.hpp"

using namespace stars_isac;
using doctest::Approx;

namespace {

StarsConfig uniform(StarsType t, int M, double bT, double bR, double pT, double pR) {
    StarsConfig c;
    c.stars_type = t;
    c.beta_T = rvec::Constant(M, bT);
    c.beta_R = rvec::Constant(M, bR);
    c.phi_T = rvec::Constant(M, pT);
    c.phi_R = rvec::Constant(M, pR);
    c.alpha = rvec::Ones(M);
    return c;
}

} // namespace

TEST_CASE("coefficients") {
    StarsConfig c = uniform(StarsType::independent, 3, 1.0, 0.0, 0.0, 0.0);
    c.alpha = rvec::Zero(3);
    CHECK(coefficients(c, Side::T).norm() == 0.0);
    c.alpha(0) = 1.0;
    CHECK(std::abs(coefficients(c, Side::T)(0) - cplx(1.0)) < 1e-15);
    c.beta_T(1) = 0.6;
    c.phi_T(1) = kPi / 2;
    c.alpha(1) = 1.0;
    CHECK(std::abs(coefficients(c, Side::T)(1) - cplx(0.0, 0.6)) < 1e-15);
}

TEST_CASE("pin counts") {
    CHECK(pin_count(StarsType::coupled, 2, 4) == 4);
    CHECK(pin_count(StarsType::relaxed, 4, 4) == 8);
    CHECK(pin_count(StarsType::independent, 2, 2) == 3);
    CHECK_THROWS_AS(pin_count(StarsType::coupled, 0, 4), std::invalid_argument);
}

TEST_CASE("stars power") {
    StarsConfig d = uniform(StarsType::independent, 4, std::sqrt(0.5), std::sqrt(0.5), 0.0, 0.0);
    d.L_beta = 2;
    d.L_phi = 2;
    REQUIRE(pin_count(d.stars_type, 2, 2) == 3);
    CHECK(stars_power(d, 0.33e-3, 0.1) == Approx(0.10396).epsilon(1e-12));
    d.alpha = rvec::Zero(4);
    CHECK(stars_power(d, 0.33e-3, 0.1) == 0.1);
    d.alpha << 1, 1, 0, 0;
    const double half = stars_power(d, 0.33e-3, 0.1) - 0.1;
    CHECK(half == Approx(0.5 * (0.10396 - 0.1)).epsilon(1e-12));
}

TEST_CASE("floor quantizers") {
    StarsConfig c = uniform(StarsType::relaxed, 3, 0.7, 1.0, kPi, 0.1);
    c.beta_T(1) = 1.0;
    const StarsConfig q = quantize(c, 4, 4);
    CHECK(q.beta_T(0) == Approx(0.5));
    CHECK(q.beta_T(1) == Approx(1.0));
    CHECK(q.phi_T(0) == Approx(kPi));
    CHECK(q.quantized);
    CHECK_THROWS_AS(quantize(c, 0, 4), std::invalid_argument);
}

TEST_CASE("quantization is idempotent and keeps the coupled phase offset") {
    std::mt19937_64 rng(3);
    for (StarsType t : {StarsType::relaxed, StarsType::independent, StarsType::coupled}) {
        for (int trial = 0; trial < 50; ++trial) {
            const StarsConfig c = initial_config(t, 6, rng);
            for (auto [lb, lp] : {std::pair{2, 4}, std::pair{4, 8}, std::pair{1, 16}}) {
                const StarsConfig q = quantize(c, lb, lp);
                const StarsConfig qq = quantize(q, lb, lp);
                CHECK((q.beta_T - qq.beta_T).cwiseAbs().maxCoeff() < 1e-12);
                CHECK((q.phi_T - qq.phi_T).cwiseAbs().maxCoeff() < 1e-12);
                CHECK((q.phi_R - qq.phi_R).cwiseAbs().maxCoeff() < 1e-12);
                if (t == StarsType::coupled) CHECK(max_coupled_phase_error(q) < 1e-12);
            }
        }
    }
}

TEST_CASE("feasibility checks") {
    const double s = std::sqrt(0.5);
    CHECK(check_feasibility(uniform(StarsType::independent, 2, s, s, 0.3, 1.1), 1e-9).empty());
    CHECK(check_feasibility(uniform(StarsType::coupled, 2, s, s, 0.0, kPi / 2), 1e-9).empty());
    const auto v = check_feasibility(uniform(StarsType::independent, 1, 0.9, 0.9, 0.0, 0.0), 1e-9);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("amplitude sum 1.62") != std::string::npos);
    CHECK_FALSE(check_feasibility(uniform(StarsType::coupled, 1, s, s, 0.0, 0.3), 1e-9).empty());
    CHECK(check_feasibility(uniform(StarsType::relaxed, 1, 0.2, 0.3, 0.0, 0.3), 1e-9).empty());
    StarsConfig c = uniform(StarsType::relaxed, 2, 0.2, 0.3, 0.0, 0.0);
    c.alpha(1) = 0.5;
    CHECK_FALSE(check_feasibility(c, 1e-9).empty());
}

TEST_CASE("initial configurations satisfy the architecture invariants") {
    std::mt19937_64 rng(4);
    for (StarsType t : {StarsType::relaxed, StarsType::independent, StarsType::coupled}) {
        const StarsConfig c = initial_config(t, 16, rng);
        CHECK(check_feasibility(c, 1e-12).empty());
        CHECK(max_unit_energy_error(c) < 1e-15);
        for (int m = 0; m < 16; ++m) {
            CHECK(c.phi_T(m) >= 0.0);
            CHECK(c.phi_T(m) < 2 * kPi);
        }
    }
}

TEST_CASE("wrap_phase") {
    CHECK(wrap_phase(-0.5) == Approx(2 * kPi - 0.5));
    CHECK(wrap_phase(2 * kPi) == Approx(0.0));
    CHECK(wrap_phase(7.0) == Approx(7.0 - 2 * kPi));
}
