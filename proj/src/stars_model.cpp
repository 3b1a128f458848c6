// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#include "stars_isac/stars_model.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace stars_isac {

StarsConfig initial_config(StarsType type, int M, std::mt19937_64 &rng, int L_beta, int L_phi) {
    StarsConfig c;
    c.stars_type = type;
    c.beta_T = rvec::Constant(M, std::sqrt(0.5));
    c.beta_R = rvec::Constant(M, std::sqrt(0.5));
    c.phi_T.resize(M);
    c.phi_R.resize(M);
    std::uniform_real_distribution<double> u(0.0, 2.0 * kPi);
    for (int m = 0; m < M; ++m) {
        c.phi_T(m) = u(rng);
        c.phi_R(m) = type == StarsType::coupled ? wrap_phase(c.phi_T(m) + kPi / 2.0) : u(rng);
    }
    c.alpha = rvec::Ones(M);
    c.L_beta = L_beta;
    c.L_phi = L_phi;
    return c;
}

cvec coefficients(const StarsConfig &cfg, Side side) {
    const rvec &b = side == Side::T ? cfg.beta_T : cfg.beta_R;
    const rvec &p = side == Side::T ? cfg.phi_T : cfg.phi_R;
    cvec th(cfg.size());
    for (int m = 0; m < cfg.size(); ++m) th(m) = cfg.alpha(m) * std::polar(b(m), p(m));
    return th;
}

int pin_count(StarsType type, int L_beta, int L_phi) {
    if (L_beta < 1 || L_phi < 1) throw std::invalid_argument("pin_count: quantization levels must be >= 1");
    const double lb = std::log2(static_cast<double>(L_beta));
    const double lp = std::log2(static_cast<double>(L_phi));
    double x = 0.0;
    switch (type) {
    case StarsType::relaxed: x = 2.0 * lb + 2.0 * lp; break;
    case StarsType::independent: x = lb + 2.0 * lp; break;
    case StarsType::coupled: x = lb + lp + 1.0; break;
    }
    // Guard against log2 rounding (e.g. 2.0000000000000004) before the ceiling.
    return static_cast<int>(std::ceil(x - 1e-9));
}

double stars_power(const StarsConfig &cfg, double p_pin_w, double p_cir_w) {
    return cfg.alpha.sum() * pin_count(cfg.stars_type, cfg.L_beta, cfg.L_phi) * p_pin_w + p_cir_w;
}

double wrap_phase(double phi) {
    double r = std::fmod(phi, 2.0 * kPi);
    if (r < 0.0) r += 2.0 * kPi;
    if (r >= 2.0 * kPi) r = 0.0;
    return r;
}

StarsConfig quantize(const StarsConfig &cfg) { return quantize(cfg, cfg.L_beta, cfg.L_phi); }

StarsConfig quantize(const StarsConfig &cfg, int L_beta, int L_phi) {
    if (L_beta < 1 || L_phi < 1) throw std::invalid_argument("quantize: levels must be >= 1");
    StarsConfig q = cfg;
    q.L_beta = L_beta;
    q.L_phi = L_phi;
    const double lb = L_beta, lp = L_phi;
    // The 1e-9 nudge keeps codepoints fixed under re-quantization despite rounding.
    auto qb = [&](double b) { return std::floor(b * lb + 1e-9) / lb; };
    auto qp = [&](double p) {
        const double w = wrap_phase(p);
        const double k = std::floor(w / (2.0 * kPi) * lp + 1e-9);
        return wrap_phase(k * (2.0 * kPi / lp));
    };
    for (int m = 0; m < cfg.size(); ++m) {
        q.beta_T(m) = qb(cfg.beta_T(m));
        q.beta_R(m) = qb(cfg.beta_R(m));
        q.phi_T(m) = qp(cfg.phi_T(m));
        if (cfg.stars_type == StarsType::coupled) {
            // The reflection phase is the transmission phase plus a signed quarter turn.
            const double s = std::sin(cfg.phi_R(m) - cfg.phi_T(m)) >= 0.0 ? 1.0 : -1.0;
            q.phi_R(m) = wrap_phase(q.phi_T(m) + s * kPi / 2.0);
        } else {
            q.phi_R(m) = qp(cfg.phi_R(m));
        }
    }
    q.quantized = true;
    return q;
}

double max_unit_energy_error(const StarsConfig &cfg) {
    double e = 0.0;
    for (int m = 0; m < cfg.size(); ++m)
        e = std::max(e, std::abs(cfg.beta_T(m) * cfg.beta_T(m) + cfg.beta_R(m) * cfg.beta_R(m) - 1.0));
    return e;
}

double max_coupled_phase_error(const StarsConfig &cfg) {
    double e = 0.0;
    for (int m = 0; m < cfg.size(); ++m)
        if (cfg.alpha(m) > 0.5) e = std::max(e, std::abs(std::cos(cfg.phi_T(m) - cfg.phi_R(m))));
    return e;
}

std::vector<std::string> check_feasibility(const StarsConfig &cfg, double tol) {
    std::vector<std::string> out;
    char buf[160];
    const int M = cfg.size();
    if (cfg.beta_T.size() != M || cfg.beta_R.size() != M || cfg.phi_T.size() != M || cfg.phi_R.size() != M) {
        out.emplace_back("vector lengths disagree");
        return out;
    }
    for (int m = 0; m < M; ++m) {
        for (auto [name, b] : {std::pair{"beta_T", cfg.beta_T(m)}, std::pair{"beta_R", cfg.beta_R(m)}})
            if (b < -tol || b > 1.0 + tol) {
                std::snprintf(buf, sizeof buf, "%s %.6g outside [0, 1] at element %d", name, b, m);
                out.emplace_back(buf);
            }
        if (cfg.alpha(m) != 0.0 && cfg.alpha(m) != 1.0) {
            std::snprintf(buf, sizeof buf, "alpha %.6g not binary at element %d", cfg.alpha(m), m);
            out.emplace_back(buf);
        }
        if (cfg.stars_type != StarsType::relaxed) {
            const double s = cfg.beta_T(m) * cfg.beta_T(m) + cfg.beta_R(m) * cfg.beta_R(m);
            if (std::abs(s - 1.0) > tol) {
                std::snprintf(buf, sizeof buf, "amplitude sum %.3g ≠ 1 at element %d", s, m);
                out.emplace_back(buf);
            }
        }
        if (cfg.stars_type == StarsType::coupled) {
            const double c = std::cos(cfg.phi_T(m) - cfg.phi_R(m));
            if (std::abs(c) > tol) {
                std::snprintf(buf, sizeof buf, "coupled phase cos %.3g ≠ 0 at element %d", c, m);
                out.emplace_back(buf);
            }
        }
    }
    return out;
}

nlohmann::json to_json(const StarsConfig &cfg) {
    auto vec = [](const rvec &v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    return nlohmann::json{{"stars_type", to_string(cfg.stars_type)},
                          {"beta_T", vec(cfg.beta_T)},
                          {"beta_R", vec(cfg.beta_R)},
                          {"phi_T", vec(cfg.phi_T)},
                          {"phi_R", vec(cfg.phi_R)},
                          {"alpha", vec(cfg.alpha)},
                          {"L_beta", cfg.L_beta},
                          {"L_phi", cfg.L_phi},
                          {"quantized", cfg.quantized}};
}

} // namespace stars_isac
