// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#pragma once

#include "stars_isac/active_bf.hpp"
#include "stars_isac/channel.hpp"
#include "stars_isac/passive_bf.hpp"
#include "stars_isac/scenario.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace stars_isac::testing {

// Scenario with one antenna, one user and one element.
// With one antenna the sensing stream lands on the user at full strength and the
// default thresholds admit no point at all; these still bind on some draws.
inline ScenarioParams scalar_scenario() {
    ScenarioParams p;
    p.n_antennas = 1;
    p.n_users = 1;
    p.n_elements = 1;
    p.sensing_sinr_min_db = -10.0;
    p.sensing_inr_max_db = 50.0;
    return p;
}

// Best efficiency of the single-antenna, single-user system over a uniform grid
// of communication powers. The sensing power is the smallest one meeting the
// sensing SINR floor, since any more only costs power and interferes with the
// user. Returns -inf when no grid point is feasible.
inline double scalar_grid_ee(const ActiveData &d, int points = 10000) {
    const double a = d.h[0].squaredNorm(); // normalized |h|^2
    const double b = std::norm(d.Hs(0, 0));
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < points; ++i) {
        const double p = d.power_budget * static_cast<double>(i) / (points - 1);
        double q = 0.0;
        if (d.sensing_enabled()) {
            if (b <= 0.0) continue;
            q = d.sinr_min * (b * p + 1.0) / b;
        }
        if (p + q > d.power_budget * (1.0 + 1e-12)) continue;
        if (d.inr_enabled() && b * p > d.inr_max) continue;
        const double rate = std::log2(1.0 + a * p / (a * q + 1.0));
        if (d.rate_min > 0.0 && rate < d.rate_min) continue;
        best = std::max(best, rate / (p + q + d.xi * rate + d.static_power));
    }
    return best;
}

// Random aux and dual values around a random surface point.
inline PddState random_pdd_state(const PassiveData &d, std::mt19937_64 &rng, cvec &tT, cvec &tR) {
    tT = random_cvec(d.M, rng, 0.5);
    tR = random_cvec(d.M, rng, 0.5);
    PddState s = init_pdd_state(d, tT, tR);
    std::uniform_real_distribution<double> u(0.1, 10.0);
    s.rho = u(rng);
    const double scale = 0.1 * (1.0 + s.f1.norm());
    s.f1 += random_cvec(d.N, rng, scale).transpose();
    s.z1 = random_cvec(d.N, rng, scale / s.rho).transpose();
    for (int k = 0; k < d.K; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        s.f2[ku] += random_cvec(1, rng, scale)(0);
        s.z2[ku] = random_cvec(1, rng, scale / s.rho)(0);
        s.f3[ku] += random_cvec(d.N, rng, scale).transpose();
        s.z3[ku] = random_cvec(d.N, rng, scale / s.rho).transpose();
    }
    s.f_T += random_cvec(d.M, rng, 0.1);
    s.f_R += random_cvec(d.M, rng, 0.1);
    s.z4_T = random_cvec(d.M, rng, 0.1);
    s.z4_R = random_cvec(d.M, rng, 0.1);
    return s;
}

// Largest gap between the full penalty and its per-element quadratic when one
// element of a random state is moved, relative to 1 + |penalty|.
inline double element_reconstruction_gap(const PassiveData &d, std::mt19937_64 &rng) {
    cvec tT, tR;
    const PddState s = random_pdd_state(d, rng, tT, tR);
    const int m = static_cast<int>(rng() % static_cast<std::uint64_t>(d.M));
    const ElementCoeffs c = element_coeffs(s, d, tT, tR)[static_cast<std::size_t>(m)];
    const double scale = 2.0 * s.rho;
    auto quad = [&](cplx t_T, cplx t_R) {
        return (c.c1 + c.c3) * std::norm(t_R) - 2.0 * (std::conj(c.c2 + c.c4) * t_R).real() + c.c5 * std::norm(t_T) -
               2.0 * (std::conj(c.c6) * t_T).real();
    };
    const double base = scale * augmented_term(s, d, tT, tR, false) - quad(tT(m), tR(m));
    double gap = 0.0;
    for (int probe = 0; probe < 3; ++probe) {
        cvec xT = tT, xR = tR;
        xT(m) = random_cvec(1, rng)(0);
        xR(m) = random_cvec(1, rng)(0);
        const double full = scale * augmented_term(s, d, xT, xR, false);
        gap = std::max(gap, std::abs(full - quad(xT(m), xR(m)) - base) / (1.0 + std::abs(full)));
    }
    return gap;
}

} // namespace stars_isac::testing
