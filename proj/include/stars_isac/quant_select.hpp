// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#pragma once

#include "stars_isac/channel.hpp"
#include "stars_isac/convex_core.hpp"
#include "stars_isac/metrics.hpp"
#include "stars_isac/scenario.hpp"
#include "stars_isac/stars_model.hpp"
#include "stars_isac/types.hpp"

#include <string>
#include <utility>
#include <vector>

namespace stars_isac {

struct XThreshold {
    int x = 0;
    bool uncapped_exceeds = false; // the raw floor was above the cap
    bool no_elements = false;      // every element off
};

constexpr int kMaxQuantExponent = 15;

// floor((P_stars_budget - P_CIR) / (sum(alpha) * P_PIN)), capped at 15.
// Throws std::invalid_argument when the budget is below the circuit power.
XThreshold x_threshold(const ScenarioParams &p, const rvec &alpha);

// Power-of-two (L_beta, L_phi) whose composite level count equals 2^x
// (2^(x-1) for the coupled type), with the composite inside [L_min, L_max].
// Sorted by L_beta.
std::vector<std::pair<int, int>> enumerate_pairs(int x, StarsType type, int L_min, int L_max);

// Composite level count of a pair for the given architecture.
long long composite_levels(StarsType type, int L_beta, int L_phi);

struct QuantCandidate {
    int x = 0;
    int L_beta = 0, L_phi = 0;
    double ee = 0.0;
    bool feasible = false;
};

struct QuantChoice {
    int x_threshold = 0;
    int x = 0;
    long long L_total = 0;
    int L_beta = 0, L_phi = 0;
    double ee = 0.0;
    bool feasible = false;
    bool found = false;
    std::vector<QuantCandidate> pairs_evaluated;
    std::vector<int> skipped_x; // exponents with no admissible factorization
    std::vector<std::string> notes;
};

// Exhaustive search over x = 2..x_threshold with the beamformers fixed.
// Feasible pairs win over infeasible ones; ties go to the smaller (L_beta, L_phi).
QuantChoice select_quantization(const StarsConfig &cfg, const ChannelSet &ch, const BeamformerSet &bf,
                                const ScenarioParams &p);

// Applies a choice; keeps cfg unchanged when nothing was found.
StarsConfig apply_quantization(const StarsConfig &cfg, const QuantChoice &q);

// Columns: x,L_beta,L_phi,ee,feasible
void write_quant_table_csv(const std::string &path, const QuantChoice &q);

struct SelectionOptions {
    double epsilon0 = 0.1;
    int max_iters = 50;
    double binary_tol = 1e-3;
    double binary_penalty = 10.0; // weight on the slack of the binary-forcing constraint
    bool flip_polish = true;
    SolverOptions solver{};
};

struct SelectionResult {
    rvec alpha;               // binary
    rvec alpha_relaxed;       // last relaxed iterate
    std::vector<double> epsilons;
    int iterations = 0;
    bool converged = false;   // every relaxed entry reached the binary tolerance
    bool repaired = false;
    double ee = 0.0;
    bool feasible = false;
    std::vector<std::string> notes;
};

// On/off selection with the coefficients and beamformers fixed.
SelectionResult solve_selection(const ChannelSet &ch, const BeamformerSet &bf, const StarsConfig &cfg,
                                const ScenarioParams &p, const SelectionOptions &opt = {});

// Every on/off pattern of an M <= 20 surface; returns (best alpha, best EE), feasible patterns first.
std::pair<rvec, double> brute_force_selection(const ChannelSet &ch, const BeamformerSet &bf, const StarsConfig &cfg,
                                              const ScenarioParams &p);

} // namespace stars_isac
