// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#pragma once

#include "stars_isac/aques.hpp"
#include "stars_isac/scenario.hpp"

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace stars_isac::cli {

// Exit codes.
constexpr int kOk = 0;
constexpr int kError = 1;
constexpr int kInfeasible = 2;

struct RunFlags {
    std::string out_dir = "out";
    int runs = 1;
    std::uint64_t seed = 1;
    bool seed_given = false;
    int threads = 0; // 0: hardware concurrency
    std::string stars;    // empty: keep the scenario value
    std::string baseline = "aques";
};

// One axis of a sweep: "name=v1,v2,..." or "name=start:stop:step".
struct SweepAxis {
    std::string name;
    std::vector<std::string> values;
};

SweepAxis parse_sweep(const std::string &spec); // throws std::invalid_argument
// Applies one sweep value; "baseline" is not a scenario field and is reported back through `baseline`.
void apply_sweep_value(ScenarioParams &p, std::string &baseline, const std::string &name, const std::string &value);

// Runs fn(i) for i in [0, n) on `threads` workers; results are indexed, so the
// merge order never depends on scheduling.
void parallel_for(int n, int threads, const std::function<void(int)> &fn);

struct RunSummary {
    double mean_ee = 0.0, std_ee = 0.0, mean_rate = 0.0, mean_power_w = 0.0;
    int runs = 0, feasible_runs = 0;
};

// Monte-Carlo realizations 0..runs-1 of one scheme.
std::vector<BaselineOutcome> monte_carlo(const ScenarioParams &p, Baseline kind, int runs, int threads);
RunSummary summarize(const std::vector<BaselineOutcome> &outs);

int cmd_run(const std::string &scenario_path, const RunFlags &flags);
int cmd_sweep(const std::string &scenario_path, const std::vector<std::string> &sweep_specs, const RunFlags &flags);
int cmd_beampattern(const std::string &scenario_path, const std::string &mode, const RunFlags &flags);

// Angles of the beampattern grid: -90 to 90 degrees in 0.5 degree steps.
std::vector<double> pattern_grid();

int main(int argc, char **argv);

} // namespace stars_isac::cli
