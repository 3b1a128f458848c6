// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#pragma once

#include "stars_isac/metrics.hpp"
#include "stars_isac/types.hpp"

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

namespace stars_isac::testing {

// Hand-rolled generators for property tests.
inline cvec random_cvec(int n, std::mt19937_64 &rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    cvec v(n);
    for (int i = 0; i < n; ++i) v(i) = cplx(g(rng), g(rng));
    return v;
}

inline cmat random_cmat(int r, int c, std::mt19937_64 &rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    cmat m(r, c);
    for (int j = 0; j < c; ++j)
        for (int i = 0; i < r; ++i) m(i, j) = cplx(g(rng), g(rng));
    return m;
}

inline cvec random_unit_modulus(int n, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> u(0.0, 2.0 * kPi);
    cvec v(n);
    for (int i = 0; i < n; ++i) v(i) = std::polar(1.0, u(rng));
    return v;
}

inline BeamformerSet random_bf(int N, int K, std::mt19937_64 &rng, double scale = 1.0) {
    BeamformerSet bf;
    for (int k = 0; k < K; ++k) bf.w_c.push_back(random_cvec(N, rng, scale));
    bf.W_s = random_cmat(N, N, rng, scale);
    bf.u_s = random_cvec(N, rng);
    return bf;
}

// Complex gradient in the Re{g^H dx} convention by central differences of a
// real function of a complex vector.
template <class F> cvec fd_gradient(const F &f, const cvec &x, double h = 1e-6) {
    cvec g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        cvec a = x, b = x;
        a(i) += h;
        b(i) -= h;
        const double dre = (f(a) - f(b)) / (2.0 * h);
        a = x;
        b = x;
        a(i) += cplx(0.0, h);
        b(i) -= cplx(0.0, h);
        const double dim = (f(a) - f(b)) / (2.0 * h);
        g(i) = cplx(dre, dim);
    }
    return g;
}

inline double rel_err(const cvec &a, const cvec &b) {
    const double scale = std::max(a.norm(), b.norm());
    return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

inline std::filesystem::path temp_dir(const std::string &name) {
    auto d = std::filesystem::temp_directory_path() / ("stars_isac_test_" + name);
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
}

} // namespace stars_isac::testing
