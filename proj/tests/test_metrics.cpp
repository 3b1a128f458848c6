// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stars_isac/metrics.hpp"
#include "test_util.hpp"

#include <algorithm>

using namespace stars_isac;
using namespace stars_isac::testing;
using doctest::Approx;

namespace {

ChannelSet scalar_channels(cplx g, cplx v) {
    ChannelSet ch;
    ch.G_c = cmat::Constant(1, 1, g);
    ch.g_s = cvec::Zero(1);
    ch.r_s = cvec::Zero(1);
    ch.v = {cvec::Constant(1, v)};
    assemble_channels(ch);
    return ch;
}

} // namespace

TEST_CASE("scalar communication SINR") {
    const ChannelSet ch = scalar_channels(1.0, 1.0);
    BeamformerSet bf = zero_beamformers(1, 1);
    const double p = 0.37, s2 = 0.05;
    bf.w_c[0](0) = std::sqrt(p);
    const cvec theta = cvec::Ones(1);
    CHECK(comm_sinr(0, theta, ch, bf, s2) == Approx(p / s2));
    bf.w_c[0](0) = 0.0;
    CHECK(comm_sinr(0, theta, ch, bf, s2) == 0.0);
}

TEST_CASE("symmetric users see equal SINRs") {
    ChannelSet ch;
    ch.G_c = cmat::Identity(2, 2);
    ch.g_s = cvec::Zero(2);
    ch.r_s = cvec::Zero(2);
    ch.v = {cvec::Ones(2), cvec::Ones(2)};
    assemble_channels(ch);
    BeamformerSet bf = zero_beamformers(2, 2);
    bf.w_c[0] << 1.0, 0.5;
    bf.w_c[1] << 0.5, 1.0;
    const auto g = comm_sinrs(cvec::Ones(2), ch, bf, 0.1);
    CHECK(g[0] == Approx(g[1]));
}

TEST_CASE("sensing channel") {
    std::mt19937_64 rng(1);
    ScenarioParams p;
    p.n_elements = 3;
    p.n_antennas = 2;
    const ChannelSet ch = generate_channels(p, 0);
    const double a0 = 0.5;
    const cmat H0 = sensing_channel(cvec::Zero(3), ch, a0);
    CHECK((H0 - a0 * ch.g_s * ch.g_s.adjoint()).norm() < 1e-15);
    Eigen::JacobiSVD<cmat> svd(H0);
    CHECK(svd.singularValues()(1) <= 1e-12 * svd.singularValues()(0));
    CHECK(sensing_channel(random_cvec(3, rng), ch, 0.0).norm() == 0.0);

    // elementwise expansion
    const cvec th = random_cvec(3, rng);
    const cmat H = sensing_channel(th, ch, a0);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            cplx e = a0 * ch.g_s(i) * std::conj(ch.g_s(j));
            for (int m = 0; m < 3; ++m) e += a0 * a0 * std::conj(ch.G(m, i)) * th(m) * ch.G(m, j);
            CHECK(std::abs(H(i, j) - e) < 1e-12 * (1.0 + std::abs(e)));
        }
}

TEST_CASE("sensing SINR and INR") {
    std::mt19937_64 rng(2);
    const cmat Hs = random_cmat(3, 3, rng);
    BeamformerSet bf = random_bf(3, 2, rng);
    const double s = sensing_sinr(bf, Hs, 0.1), i = sensing_inr(bf, Hs, 0.1);
    BeamformerSet scaled = bf;
    scaled.u_s *= cplx(-2.5, 1.0);
    CHECK(sensing_sinr(scaled, Hs, 0.1) == Approx(s).epsilon(1e-12));
    CHECK(sensing_inr(scaled, Hs, 0.1) == Approx(i).epsilon(1e-12));
    BeamformerSet nc = bf;
    for (auto &w : nc.w_c) w.setZero();
    CHECK(sensing_inr(nc, Hs, 0.1) == 0.0);
    BeamformerSet ns = bf;
    ns.W_s.setZero();
    CHECK(sensing_sinr(ns, Hs, 0.1) == 0.0);
    BeamformerSet nu = bf;
    nu.u_s.setZero();
    CHECK_THROWS_AS(sensing_sinr(nu, Hs, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(sensing_inr(nu, Hs, 0.1), std::invalid_argument);
}

TEST_CASE("power accounting") {
    ScenarioParams p;
    StarsConfig off;
    off.stars_type = StarsType::coupled;
    off.beta_T = off.beta_R = off.phi_T = off.phi_R = rvec::Zero(4);
    off.alpha = rvec::Zero(4);
    const PowerBreakdown z = total_power(zero_beamformers(4, 2), off, 0.0, p);
    CHECK(z.total() == Approx(p.p_bs_w + p.p_cir_w));
    const PowerBreakdown r = total_power(zero_beamformers(4, 2), off, 10.0, p);
    CHECK(r.rate_dependent == Approx(3.0));

    std::mt19937_64 rng(3);
    const BeamformerSet bf = random_bf(4, 2, rng);
    const PowerBreakdown b = total_power(bf, off, 4.2, p);
    const double sum = b.transmit_comm + b.transmit_sense + b.rate_dependent + b.bs_static + b.stars;
    CHECK(std::abs(b.total() - sum) <= 1e-12 * sum);
    cmat Rw = bf.W_s * bf.W_s.adjoint();
    for (const auto &w : bf.w_c) Rw += w * w.adjoint();
    CHECK(b.transmit_comm + b.transmit_sense == Approx(Rw.trace().real()).epsilon(1e-12));
}

TEST_CASE("rate and efficiency") {
    CHECK(sum_rate({1.0, 1.0, 1.0}) == Approx(3.0));
    CHECK(energy_efficiency(4.0, 20.0) == Approx(0.5 * energy_efficiency(4.0, 10.0)));
}

TEST_CASE("evaluation matches an independent recomputation") {
    ScenarioParams p;
    p.n_antennas = 2;
    p.n_users = 2;
    p.n_elements = 3;
    const ChannelSet ch = generate_channels(p, 1);
    std::mt19937_64 rng(4);
    StarsConfig cfg = initial_config(StarsType::independent, 3, rng);
    const BeamformerSet bf = random_bf(2, 2, rng, 0.3);
    const Evaluation ev = evaluate(p, ch, cfg, bf);

    cvec tT(3), tR(3);
    for (int m = 0; m < 3; ++m) {
        tT(m) = cfg.alpha(m) * cfg.beta_T(m) * std::exp(kJ * cfg.phi_T(m));
        tR(m) = cfg.alpha(m) * cfg.beta_R(m) * std::exp(kJ * cfg.phi_R(m));
    }
    double rate = 0.0;
    for (int k = 0; k < 2; ++k) {
        Eigen::RowVectorXcd h = Eigen::RowVectorXcd::Zero(2);
        for (int m = 0; m < 3; ++m) h += tT(m) * ch.v[k](m) * ch.G.row(m);
        double sig = std::norm(h.dot(bf.w_c[k].conjugate()));
        double intf = std::norm(h.dot(bf.w_c[1 - k].conjugate())) + (h * bf.W_s).squaredNorm();
        rate += std::log2(1.0 + sig / (intf + p.noise_user_w()));
    }
    double pw = p.p_bs_w + p.decode_constant * rate + p.p_cir_w +
                3 * pin_count(cfg.stars_type, cfg.L_beta, cfg.L_phi) * p.p_pin_w;
    for (const auto &w : bf.w_c) pw += w.squaredNorm();
    pw += bf.W_s.squaredNorm();
    CHECK(ev.sum_rate == Approx(rate).epsilon(1e-12));
    CHECK(ev.ee == Approx(rate / pw).epsilon(1e-12));
}

TEST_CASE("beampattern") {
    const std::vector<double> grid = [] {
        std::vector<double> g;
        for (int i = 0; i <= 360; ++i) g.push_back(-90.0 + 0.5 * i);
        return g;
    }();
    const double target = 20.0;
    BeamformerSet bf = zero_beamformers(8, 1);
    bf.w_c[0] = array_response(8, 0.5, target * kPi / 180.0).conjugate() / std::sqrt(8.0);
    auto g = beampattern(bf, 0.5, grid, PatternMode::comm_only);
    const auto best = std::max_element(g.begin(), g.end()) - g.begin();
    CHECK(grid[static_cast<std::size_t>(best)] == Approx(target));

    const auto z = beampattern(zero_beamformers(4, 2), 0.5, grid);
    for (double v : z) CHECK(v == -200.0);

    BeamformerSet one = zero_beamformers(1, 1);
    one.w_c[0](0) = 0.7;
    const auto flat = beampattern(one, 0.5, grid);
    for (double v : flat) CHECK(v == Approx(flat[0]));
    CHECK_THROWS(beampattern(bf, 0.5, {}));
}

TEST_CASE("margins and feasibility") {
    Evaluation ev;
    ev.margins = {{"a", 0.5}, {"b", -1e-8}};
    CHECK(ev.worst_margin() == -1e-8);
    CHECK(ev.feasible(1e-7));
    CHECK_FALSE(ev.feasible(1e-9));
}
