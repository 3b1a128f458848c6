// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stars_isac/aques.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace stars_isac;
using namespace stars_isac::testing;
using doctest::Approx;

namespace {

cmat effective(const ChannelSet &ch, const cvec &tT) {
    cmat Hm(ch.n_antennas(), ch.n_users());
    for (int k = 0; k < ch.n_users(); ++k) Hm.col(k) = (tT.transpose() * ch.H[k]).adjoint();
    return Hm;
}

double direction_gap(const cvec &a, const cvec &b) {
    // 1 - |<a, b>| / (|a||b|): zero when the two are parallel
    return 1.0 - std::abs(a.dot(b)) / (a.norm() * b.norm());
}

} // namespace

TEST_CASE("scenarios without users are rejected") {
    ScenarioParams p;
    p.n_users = 0;
    CHECK_THROWS_AS(validate(p), std::invalid_argument);
}

TEST_CASE("identical seeds give identical results") {
    ScenarioParams p;
    p.seed = 5;
    const ChannelSet ch = generate_channels(p, 0);
    const AquesResult a = run_aques(p, ch), b = run_aques(p, ch);
    CHECK(to_json(a).dump() == to_json(b).dump());
}

TEST_CASE("outer trace is nondecreasing and the result satisfies every constraint") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        ScenarioParams p;
        p.seed = seed;
        const ChannelSet ch = generate_channels(p, 0);
        const AquesResult r = run_aques(p, ch);
        CAPTURE(seed);
        for (std::size_t i = 1; i < r.outer_trace.size(); ++i)
            CHECK(r.outer_trace[i].second >= r.outer_trace[i - 1].second - 1e-5);
        if (r.feasible) {
            CHECK(r.eval.feasible(1e-4));
            CHECK(r.stars.quantized);
            for (int m = 0; m < r.stars.size(); ++m) {
                const double lt = r.stars.beta_T(m) * r.stars.L_beta, lr = r.stars.beta_R(m) * r.stars.L_beta;
                CHECK(std::abs(lt - std::round(lt)) <= 1e-9);
                CHECK(std::abs(lr - std::round(lr)) <= 1e-9);
            }
            for (int m = 0; m < r.stars.size(); ++m) CHECK((r.stars.alpha(m) == 0.0 || r.stars.alpha(m) == 1.0));
            CHECK(max_coupled_phase_error(r.stars) <= 1e-6);
            CHECK(r.quant.L_total >= p.quant_min);
            CHECK(r.quant.L_total <= p.quant_max);
        } else {
            CHECK_FALSE(r.notes.empty());
        }
        CHECK(r.max_unit_energy_error <= 1e-9);
        CHECK(r.report.ee_bits_per_hz_per_joule == Approx(r.eval.ee));
    }
}

TEST_CASE("ZF nulls inter-user interference and spends the whole budget") {
    std::mt19937_64 rng(1);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        ScenarioParams p;
        p.seed = seed;
        const ChannelSet ch = generate_channels(p, 0);
        const StarsConfig cfg = initial_config(p.stars_type, p.n_elements, rng);
        const cvec tT = coefficients(cfg, Side::T), tR = coefficients(cfg, Side::R);
        const BeamformerSet bf = zf_beamformer(ch, tT, tR, p);
        for (int k = 0; k < p.n_users; ++k) {
            const Eigen::RowVectorXcd h = tT.transpose() * ch.H[k];
            const double sig = std::norm((h * bf.w_c[k])(0));
            for (int j = 0; j < p.n_users; ++j)
                if (j != k) CHECK(std::norm((h * bf.w_c[j])(0)) <= 1e-8 * sig);
        }
        CHECK(std::abs(bf.transmit_power() - p.bs_power_budget_w()) <= 1e-9 * p.bs_power_budget_w());
        const BeamformerSet mm = mmse_beamformer(ch, tT, tR, p);
        CHECK(std::abs(mm.transmit_power() - p.bs_power_budget_w()) <= 1e-9 * p.bs_power_budget_w());
    }
}

TEST_CASE("single-user ZF is the matched filter") {
    ScenarioParams p;
    p.n_users = 1;
    const ChannelSet ch = generate_channels(p, 0);
    std::mt19937_64 rng(2);
    const StarsConfig cfg = initial_config(p.stars_type, p.n_elements, rng);
    const cvec tT = coefficients(cfg, Side::T), tR = coefficients(cfg, Side::R);
    const BeamformerSet bf = zf_beamformer(ch, tT, tR, p);
    CHECK(direction_gap(bf.w_c[0], effective(ch, tT).col(0)) <= 1e-12);
}

TEST_CASE("MMSE limits") {
    ScenarioParams p;
    const ChannelSet ch = generate_channels(p, 0);
    std::mt19937_64 rng(3);
    const StarsConfig cfg = initial_config(p.stars_type, p.n_elements, rng);
    const cvec tT = coefficients(cfg, Side::T), tR = coefficients(cfg, Side::R);
    const cmat Hm = effective(ch, tT);

    ScenarioParams loud = p;
    loud.noise_user_dbm = 200.0;
    const BeamformerSet big = mmse_beamformer(ch, tT, tR, loud);
    for (int k = 0; k < p.n_users; ++k) CHECK(direction_gap(big.w_c[k], Hm.col(k)) <= 1e-6);

    ScenarioParams quiet = p;
    quiet.noise_user_dbm = -250.0;
    const BeamformerSet small = mmse_beamformer(ch, tT, tR, quiet);
    const BeamformerSet zf = zf_beamformer(ch, tT, tR, quiet);
    for (int k = 0; k < p.n_users; ++k) CHECK(direction_gap(small.w_c[k], zf.w_c[k]) <= 1e-6);
}

TEST_CASE("rank-deficient effective channels warn") {
    ScenarioParams p;
    p.n_users = 5; // more users than antennas
    const ChannelSet ch = generate_channels(p, 0);
    std::mt19937_64 rng(4);
    const StarsConfig cfg = initial_config(p.stars_type, p.n_elements, rng);
    std::vector<std::string> warnings;
    const BeamformerSet bf =
        zf_beamformer(ch, coefficients(cfg, Side::T), coefficients(cfg, Side::R), p, 0.7, &warnings);
    CHECK_FALSE(warnings.empty());
    CHECK(std::isfinite(bf.transmit_power()));
}

TEST_CASE("baseline configurations") {
    ScenarioParams p;
    p.n_elements = 10;
    std::mt19937_64 rng(5);
    const StarsConfig ms = baseline_config(Baseline::mode_switching, rng, p);
    for (int m = 0; m < ms.size(); ++m) CHECK(ms.beta_T(m) * ms.beta_R(m) == 0.0);
    const StarsConfig f = baseline_config(Baseline::fixed_75pct_on, rng, p);
    CHECK(f.alpha.sum() == std::ceil(0.75 * 10));
    const StarsConfig po = baseline_config(Baseline::phase_only, rng, p);
    for (int m = 0; m < po.size(); ++m) CHECK(po.beta_T(m) == Approx(std::sqrt(0.5)));

    std::mt19937_64 r1(9), r2(9);
    const StarsConfig a = baseline_config(Baseline::random, r1, p), b = baseline_config(Baseline::random, r2, p);
    CHECK(a.beta_T == b.beta_T);
    CHECK(a.phi_T == b.phi_T);
    CHECK(max_unit_energy_error(a) <= 1e-15);

    CHECK(baseline_from_string("mmse") == Baseline::mmse);
    CHECK(to_string(Baseline::fixed_75pct_on) == "fixed_75pct_on");
    CHECK_THROWS_AS(baseline_from_string("genetic"), std::invalid_argument);
}

TEST_CASE("baseline runs") {
    ScenarioParams p;
    p.seed = 2;
    const ChannelSet ch = generate_channels(p, 0);
    const AquesResult ref = run_aques(p, ch);
    const BaselineOutcome rnd1 = run_baseline(Baseline::random, p, ch, &ref);
    const BaselineOutcome rnd2 = run_baseline(Baseline::random, p, ch, &ref);
    CHECK(rnd1.eval.ee == rnd2.eval.ee);
    CHECK(ref.eval.ee >= rnd1.eval.ee);

    const BaselineOutcome zf = run_baseline(Baseline::zf, p, ch, &ref);
    CHECK(zf.stars.beta_T == ref.stars.beta_T);

    const BaselineOutcome ms = run_baseline(Baseline::mode_switching, p, ch);
    for (int m = 0; m < ms.stars.size(); ++m) CHECK(ms.stars.beta_T(m) * ms.stars.beta_R(m) == 0.0);

    const BaselineOutcome f = run_baseline(Baseline::fixed_75pct_on, p, ch);
    CHECK(f.stars.alpha.sum() == std::ceil(0.75 * p.n_elements));
}

TEST_CASE("beamformer variants") {
    ScenarioParams p;
    const ChannelSet ch = generate_channels(p, 0);
    std::mt19937_64 rng(6);
    const StarsConfig cfg = initial_config(p.stars_type, p.n_elements, rng);
    const BeamformerSet s = sensing_only_beamformer(ch, cfg, p);
    CHECK(s.transmit_power() == Approx(p.bs_power_budget_w()));
    CHECK(s.comm_power() == 0.0);
    const BeamformerSet c = comm_only_beamformer(ch, cfg, p);
    CHECK(c.comm_power() > 0.0);
}

TEST_CASE("result serialization") {
    ScenarioParams p;
    p.seed = 3;
    const ChannelSet ch = generate_channels(p, 0);
    const AquesResult r = run_aques(p, ch);
    const nlohmann::json j = to_json(r);
    for (const char *key : {"report", "stars", "quantization", "outer_trace", "feasible", "converged", "passes"})
        CHECK(j.contains(key));
    const auto dir = temp_dir("aques");
    write_outer_trace_csv((dir / "t.csv").string(), r.outer_trace);
    CHECK(std::filesystem::file_size(dir / "t.csv") > 0);
}
