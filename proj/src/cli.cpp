// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#include "stars_isac/cli.hpp"

#include "stars_isac/channel.hpp"
#include "stars_isac/log.hpp"
#include "stars_isac/metrics.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace stars_isac::cli {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split(const std::string &s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep))
        if (!cur.empty()) out.push_back(cur);
    return out;
}

double to_double(const std::string &s, const std::string &what) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception &) {
        throw std::invalid_argument(what + ": '" + s + "' is not a number");
    }
    if (pos != s.size()) throw std::invalid_argument(what + ": '" + s + "' is not a number");
    return v;
}

int to_int(const std::string &s, const std::string &what) {
    const double v = to_double(s, what);
    if (v != std::floor(v)) throw std::invalid_argument(what + ": '" + s + "' is not an integer");
    return static_cast<int>(v);
}

// %.12g keeps CSV output stable across platforms with the same libc.
std::string num(double v) {
    std::ostringstream o;
    o << std::setprecision(12) << v;
    return o.str();
}

ScenarioParams load_with_flags(const std::string &path, const RunFlags &flags) {
    ScenarioParams p = load_scenario(path);
    if (!flags.stars.empty()) p.stars_type = stars_type_from_string(flags.stars);
    if (flags.seed_given) p.seed = flags.seed;
    for (const auto &w : validate(p)) log::warn(w);
    return p;
}

void ensure_dir(const std::string &d) {
    std::error_code ec;
    fs::create_directories(d, ec);
    if (ec) throw std::runtime_error("cannot create output directory '" + d + "': " + ec.message());
}

std::ofstream open_out(const std::string &path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    return f;
}

nlohmann::json outcome_json(const BaselineOutcome &o, int run) {
    nlohmann::json trace = nlohmann::json::array();
    for (const auto &[pass, ee] : o.trace) trace.push_back({pass, ee});
    EEReport rep = make_report(o.eval, o.stars);
    rep.iteration_trace = o.trace;
    return nlohmann::json{{"run", run},
                          {"scheme", to_string(o.kind)},
                          {"feasible", o.feasible},
                          {"report", to_json(rep)},
                          {"beamformers", to_json(o.bf)},
                          {"notes", o.notes}};
}

nlohmann::json summary_json(const RunSummary &s) {
    return nlohmann::json{{"mean_ee", s.mean_ee},           {"std_ee", s.std_ee},
                          {"mean_rate", s.mean_rate},       {"mean_power_w", s.mean_power_w},
                          {"runs", s.runs},                 {"feasible_runs", s.feasible_runs}};
}

} // namespace

SweepAxis parse_sweep(const std::string &spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw std::invalid_argument("sweep spec must read name=v1,v2,...");
    SweepAxis a;
    a.name = spec.substr(0, eq);
    const std::string rhs = spec.substr(eq + 1);
    static const std::vector<std::string> known{"p_th_dbm",           "n_elements", "n_antennas", "n_users",
                                                "p_pin_w",            "bs_stars_distance_m",     "stars_type",
                                                "baseline"};
    if (std::find(known.begin(), known.end(), a.name) == known.end())
        throw std::invalid_argument("unknown sweep parameter '" + a.name + "'");
    if (rhs.find(':') != std::string::npos) {
        const auto parts = split(rhs, ':');
        if (parts.size() != 3) throw std::invalid_argument("range must read start:stop:step");
        const double lo = to_double(parts[0], a.name), hi = to_double(parts[1], a.name),
                     st = to_double(parts[2], a.name);
        if (st <= 0.0 || hi < lo) throw std::invalid_argument("range needs step > 0 and stop >= start");
        const auto n = static_cast<int>(std::floor((hi - lo) / st + 1e-9));
        for (int i = 0; i <= n; ++i) a.values.push_back(num(lo + i * st));
    } else {
        a.values = split(rhs, ',');
    }
    if (a.values.empty()) throw std::invalid_argument("sweep '" + a.name + "' has no values");
    return a;
}

void apply_sweep_value(ScenarioParams &p, std::string &baseline, const std::string &name, const std::string &value) {
    if (name == "p_th_dbm") p.bs_power_budget_dbm = to_double(value, name);
    else if (name == "n_elements") p.n_elements = to_int(value, name);
    else if (name == "n_antennas") p.n_antennas = to_int(value, name);
    else if (name == "n_users") p.n_users = to_int(value, name);
    else if (name == "p_pin_w") p.p_pin_w = to_double(value, name);
    else if (name == "bs_stars_distance_m") p.geometry.bs_stars_distance_m = to_double(value, name);
    else if (name == "stars_type") p.stars_type = stars_type_from_string(value);
    else if (name == "baseline") {
        baseline_from_string(value);
        baseline = value;
    } else throw std::invalid_argument("unknown sweep parameter '" + name + "'");
}

void parallel_for(int n, int threads, const std::function<void(int)> &fn) {
    if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    threads = std::min(threads, std::max(n, 1));
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    auto worker = [&] {
        for (int i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!err) err = std::current_exception();
            }
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto &t : pool) t.join();
    }
    if (err) std::rethrow_exception(err);
}

std::vector<BaselineOutcome> monte_carlo(const ScenarioParams &p, Baseline kind, int runs, int threads) {
    std::vector<BaselineOutcome> outs(static_cast<std::size_t>(runs));
    parallel_for(runs, threads, [&](int r) {
        const ChannelSet ch = generate_channels(p, static_cast<std::uint64_t>(r));
        outs[static_cast<std::size_t>(r)] = run_baseline(kind, p, ch);
    });
    return outs;
}

RunSummary summarize(const std::vector<BaselineOutcome> &outs) {
    RunSummary s;
    s.runs = static_cast<int>(outs.size());
    if (outs.empty()) return s;
    for (const auto &o : outs) {
        s.mean_ee += o.eval.ee;
        s.mean_rate += o.eval.sum_rate;
        s.mean_power_w += o.eval.power.total();
        s.feasible_runs += o.feasible ? 1 : 0;
    }
    s.mean_ee /= s.runs;
    s.mean_rate /= s.runs;
    s.mean_power_w /= s.runs;
    double v = 0.0;
    for (const auto &o : outs) v += (o.eval.ee - s.mean_ee) * (o.eval.ee - s.mean_ee);
    s.std_ee = s.runs > 1 ? std::sqrt(v / (s.runs - 1)) : 0.0;
    return s;
}

std::vector<double> pattern_grid() {
    std::vector<double> g;
    for (int i = 0; i <= 360; ++i) g.push_back(-90.0 + 0.5 * i);
    return g;
}

int cmd_run(const std::string &scenario_path, const RunFlags &flags) {
    const ScenarioParams p = load_with_flags(scenario_path, flags);
    const Baseline kind = baseline_from_string(flags.baseline);
    if (flags.runs < 1) throw std::invalid_argument("--runs must be >= 1");
    ensure_dir(flags.out_dir);
    const auto outs = monte_carlo(p, kind, flags.runs, flags.threads);
    const RunSummary s = summarize(outs);

    nlohmann::json runs = nlohmann::json::array();
    for (int r = 0; r < flags.runs; ++r) runs.push_back(outcome_json(outs[static_cast<std::size_t>(r)], r));
    const nlohmann::json doc{{"scenario", to_json(p)}, {"scheme", to_string(kind)}, {"summary", summary_json(s)},
                             {"runs", runs}};
    open_out(flags.out_dir + "/report.json") << doc.dump(2) << '\n';

    {
        auto f = open_out(flags.out_dir + "/trace.csv");
        f << "run,pass,ee\n";
        for (int r = 0; r < flags.runs; ++r)
            for (const auto &[pass, ee] : outs[static_cast<std::size_t>(r)].trace)
                f << r << ',' << pass << ',' << num(ee) << '\n';
    }
    {
        const auto grid = pattern_grid();
        const auto gains = beampattern(outs[0].bf, p.geometry.antenna_spacing_wl, grid, PatternMode::isac);
        write_beampattern_csv(flags.out_dir + "/beampattern.csv", grid, gains);
    }
    std::cout << "scheme " << to_string(kind) << ": mean EE " << num(s.mean_ee) << " bit/Hz/J over " << s.runs
              << " run(s), " << s.feasible_runs << " feasible\n";
    return s.feasible_runs == s.runs ? kOk : kInfeasible;
}

int cmd_sweep(const std::string &scenario_path, const std::vector<std::string> &sweep_specs, const RunFlags &flags) {
    if (sweep_specs.empty() || sweep_specs.size() > 2)
        throw std::invalid_argument("--sweep must be given once or twice");
    const ScenarioParams base = load_with_flags(scenario_path, flags);
    std::vector<SweepAxis> axes;
    for (const auto &s : sweep_specs) axes.push_back(parse_sweep(s));
    if (axes.size() == 2 && axes[0].name == axes[1].name) throw std::invalid_argument("sweep axes must differ");
    ensure_dir(flags.out_dir);

    std::vector<std::vector<std::string>> cells;
    for (const auto &v0 : axes[0].values) {
        if (axes.size() == 1) {
            cells.push_back({v0});
        } else {
            for (const auto &v1 : axes[1].values) cells.push_back({v0, v1});
        }
    }
    auto f = open_out(flags.out_dir + "/sweep.csv");
    for (const auto &a : axes) f << a.name << ',';
    f << "mean_ee,std_ee,mean_rate,mean_power_w,runs,feasible_runs\n";
    bool all_feasible = true;
    for (const auto &cell : cells) {
        ScenarioParams p = base;
        std::string baseline = flags.baseline;
        for (std::size_t i = 0; i < axes.size(); ++i) apply_sweep_value(p, baseline, axes[i].name, cell[i]);
        validate(p);
        const RunSummary s = summarize(monte_carlo(p, baseline_from_string(baseline), flags.runs, flags.threads));
        all_feasible = all_feasible && s.feasible_runs == s.runs;
        for (const auto &v : cell) f << v << ',';
        f << num(s.mean_ee) << ',' << num(s.std_ee) << ',' << num(s.mean_rate) << ',' << num(s.mean_power_w) << ','
          << s.runs << ',' << s.feasible_runs << '\n';
        f.flush();
        log::info("sweep cell done: mean EE " + num(s.mean_ee));
    }
    return all_feasible ? kOk : kInfeasible;
}

int cmd_beampattern(const std::string &scenario_path, const std::string &mode, const RunFlags &flags) {
    const ScenarioParams p = load_with_flags(scenario_path, flags);
    const PatternMode pm = pattern_mode_from_string(mode);
    ensure_dir(flags.out_dir);
    const ChannelSet ch = generate_channels(p, 0);
    const AquesResult r = run_aques(p, ch);
    BeamformerSet bf = r.bf;
    if (pm == PatternMode::sense_only) bf = sensing_only_beamformer(ch, r.stars, p);
    if (pm == PatternMode::comm_only) bf = comm_only_beamformer(ch, r.stars, p);
    const auto grid = pattern_grid();
    write_beampattern_csv(flags.out_dir + "/beampattern.csv", grid,
                          beampattern(bf, p.geometry.antenna_spacing_wl, grid, pm));
    std::cout << "beampattern (" << mode << ") written to " << flags.out_dir << "/beampattern.csv\n";
    return kOk;
}

int main(int argc, char **argv) {
    CLI::App app{"Energy-efficiency optimization for STARS-assisted ISAC systems"};
    app.require_subcommand(1);
    RunFlags flags;
    std::string scenario;
    std::vector<std::string> sweeps;
    std::string mode = "isac";

    auto add_common = [&](CLI::App *sub) {
        sub->add_option("scenario", scenario, "Scenario JSON file")->required();
        sub->add_option("--out", flags.out_dir, "Output directory");
        sub->add_option("--runs", flags.runs, "Monte-Carlo realizations")->check(CLI::PositiveNumber);
        sub->add_option("--seed", flags.seed, "Master seed (overrides the scenario)")
            ->each([&](const std::string &) { flags.seed_given = true; });
        sub->add_option("--threads", flags.threads, "Worker threads (0: hardware concurrency)")
            ->check(CLI::NonNegativeNumber);
        sub->add_option("--stars", flags.stars, "STARS type: relaxed, independent, coupled");
        sub->add_option("--baseline", flags.baseline,
                        "Scheme: aques, zf, mmse, random, mode_switching, phase_only, amplitude_only, fixed_75pct_on");
    };
    CLI::App *run = app.add_subcommand("run", "Run one scenario over --runs realizations");
    add_common(run);
    CLI::App *sweep = app.add_subcommand("sweep", "Grid over one or two parameters");
    add_common(sweep);
    sweep->add_option("--sweep", sweeps, "name=v1,v2,... or name=start:stop:step (repeatable, at most twice)")
        ->required();
    CLI::App *bp = app.add_subcommand("beampattern", "Sample the transmit beampattern");
    add_common(bp);
    bp->add_option("--mode", mode, "isac, comm_only or sense_only");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kError;
    }
    try {
        if (run->parsed()) return cmd_run(scenario, flags);
        if (sweep->parsed()) return cmd_sweep(scenario, sweeps, flags);
        if (bp->parsed()) return cmd_beampattern(scenario, mode, flags);
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kError;
    }
    return kError;
}

} // namespace stars_isac::cli
