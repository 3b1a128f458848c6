// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#pragma once

#include "stars_isac/active_bf.hpp"
#include "stars_isac/channel.hpp"
#include "stars_isac/metrics.hpp"
#include "stars_isac/passive_bf.hpp"
#include "stars_isac/quant_select.hpp"
#include "stars_isac/scenario.hpp"
#include "stars_isac/stars_model.hpp"

#include <json.hpp>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace stars_isac {

struct AquesOptions {
    int max_passes = 20;
    double rel_tol = 1e-4;
    bool quantization = true;
    bool selection = true;
    bool pinned_amplitudes = false;        // passive stage moves phases only
    int passive_restarts = 3;
    double restart_gain = 1e-3;            // relative gain that justifies another restart
    std::optional<StarsConfig> init;       // default: random phases, equal split
    ActiveOptions active{};
    // Short passive runs: restarts and outer passes recover the rest faster.
    PassiveOptions passive = [] {
        PassiveOptions o;
        o.max_outer = 40;
        return o;
    }();
    SelectionOptions select{};
};

struct StageFlags {
    bool active_feasible = true;
    bool passive_feasible = true;
    bool quantization_found = true;
    bool quantization_feasible = true;
    bool selection_feasible = true;
};

struct AquesResult {
    EEReport report;
    Evaluation eval;
    BeamformerSet bf;
    StarsConfig stars;      // quantized, selected
    StarsConfig continuous; // last unquantized passive output
    QuantChoice quant;
    std::vector<std::pair<int, double>> outer_trace; // (pass, best EE so far)
    StageFlags flags;       // from the pass that produced the returned iterate
    bool feasible = false;  // every constraint holds at the returned iterate
    bool converged = false;
    int passes = 0;
    double max_unit_energy_error = 0.0; // over every passive inner iteration
    std::vector<std::string> notes;
};

// Feasibility tolerance applied to the returned iterate.
constexpr double kAquesFeasTol = 1e-6;

// Alternates active, passive, quantization and selection stages until the
// best efficiency stops improving by rel_tol or max_passes is reached.
AquesResult run_aques(const ScenarioParams &p, const ChannelSet &ch, const AquesOptions &opt = {});

nlohmann::json to_json(const AquesResult &r);
void write_outer_trace_csv(const std::string &path, const std::vector<std::pair<int, double>> &trace);

// Communication precoders from the effective channels h_k = (theta_T^T H_k)^H,
// scaled to comm_fraction * P_th; the rest of the budget goes to a scaled
// identity sensing precoder and the combiner is the dominant echo direction.
BeamformerSet zf_beamformer(const ChannelSet &ch, const cvec &theta_T, const cvec &theta_R,
                            const ScenarioParams &p, double comm_fraction = 0.7,
                            std::vector<std::string> *warnings = nullptr);
BeamformerSet mmse_beamformer(const ChannelSet &ch, const cvec &theta_T, const cvec &theta_R,
                              const ScenarioParams &p, double comm_fraction = 0.7);

// Sensing-only: the whole budget on the dominant right singular vector of the
// sensing channel. Communication-only: the active stage with sensing
// constraints removed.
BeamformerSet sensing_only_beamformer(const ChannelSet &ch, const StarsConfig &cfg, const ScenarioParams &p);
BeamformerSet comm_only_beamformer(const ChannelSet &ch, const StarsConfig &cfg, const ScenarioParams &p);

enum class Baseline { aques, zf, mmse, random, mode_switching, phase_only, amplitude_only, fixed_75pct_on };
Baseline baseline_from_string(const std::string &s); // throws std::invalid_argument
std::string to_string(Baseline b);

// The named degenerate STARS configuration (before any optimization).
StarsConfig baseline_config(Baseline kind, std::mt19937_64 &rng, const ScenarioParams &p);

struct BaselineOutcome {
    Baseline kind = Baseline::aques;
    StarsConfig stars;
    BeamformerSet bf;
    Evaluation eval;
    bool feasible = false;
    std::vector<std::pair<int, double>> trace;
    std::vector<std::string> notes;
};

// Runs one scheme on the given channels. ZF and MMSE use `reference` for the
// STARS coefficients when given, otherwise a full AQUES run provides them.
BaselineOutcome run_baseline(Baseline kind, const ScenarioParams &p, const ChannelSet &ch,
                             const AquesResult *reference = nullptr);

} // namespace stars_isac
