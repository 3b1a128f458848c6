// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stars_isac/cli.hpp"
#include "test_util.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace stars_isac;
using namespace stars_isac::testing;
namespace fs = std::filesystem;

namespace {

int run_tool(const std::string &args) {
    const std::string cmd = std::string(STARS_ISAC_TOOL_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines(const fs::path &p) {
    std::vector<std::string> out;
    std::ifstream in(p);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

fs::path write_scenario(const fs::path &dir, const nlohmann::json &j) {
    const fs::path p = dir / "scenario.json";
    std::ofstream(p) << j.dump(2);
    return p;
}

} // namespace

TEST_CASE("sweep specifications") {
    const cli::SweepAxis a = cli::parse_sweep("p_th_dbm=28:44:4");
    CHECK(a.name == "p_th_dbm");
    CHECK(a.values == std::vector<std::string>{"28", "32", "36", "40", "44"});
    const cli::SweepAxis b = cli::parse_sweep("stars_type=relaxed,independent,coupled");
    CHECK(b.values.size() == 3);
    CHECK_THROWS_AS(cli::parse_sweep("colour=1,2"), std::invalid_argument);
    CHECK_THROWS_AS(cli::parse_sweep("p_th_dbm"), std::invalid_argument);
    CHECK_THROWS_AS(cli::parse_sweep("p_th_dbm=44:28:4"), std::invalid_argument);

    ScenarioParams p;
    std::string baseline = "aques";
    cli::apply_sweep_value(p, baseline, "p_th_dbm", "40");
    CHECK(p.bs_power_budget_dbm == 40.0);
    cli::apply_sweep_value(p, baseline, "baseline", "zf");
    CHECK(baseline == "zf");
    cli::apply_sweep_value(p, baseline, "stars_type", "relaxed");
    CHECK(p.stars_type == StarsType::relaxed);
    CHECK_THROWS(cli::apply_sweep_value(p, baseline, "n_elements", "2.5"));
    CHECK_THROWS(cli::apply_sweep_value(p, baseline, "baseline", "genetic"));
}

TEST_CASE("worker pool visits every index once") {
    for (int threads : {1, 3, 8}) {
        std::vector<std::atomic<int>> hits(37);
        cli::parallel_for(37, threads, [&](int i) { hits[static_cast<std::size_t>(i)]++; });
        for (auto &h : hits) CHECK(h.load() == 1);
    }
    CHECK_THROWS(cli::parallel_for(4, 2, [](int i) {
        if (i == 2) throw std::runtime_error("boom");
    }));
}

TEST_CASE("summary statistics") {
    std::vector<BaselineOutcome> outs(2);
    outs[0].eval.ee = 1.0;
    outs[1].eval.ee = 3.0;
    outs[0].feasible = true;
    const cli::RunSummary s = cli::summarize(outs);
    CHECK(s.mean_ee == doctest::Approx(2.0));
    CHECK(s.std_ee == doctest::Approx(std::sqrt(2.0)));
    CHECK(s.runs == 2);
    CHECK(s.feasible_runs == 1);
}

TEST_CASE("beampattern grid") {
    const auto g = cli::pattern_grid();
    CHECK(g.size() == 361);
    CHECK(g.front() == -90.0);
    CHECK(g.back() == 90.0);
}

TEST_CASE("missing scenario file exits with 1") {
    const auto dir = temp_dir("cli_missing");
    CHECK(run_tool("run /nonexistent/scenario.json --out " + (dir / "o").string()) == cli::kError);
    CHECK(run_tool("sweep /nonexistent/scenario.json --sweep p_th_dbm=30 --out " + (dir / "o").string()) ==
          cli::kError);
    CHECK(run_tool("run") != cli::kOk);
}

TEST_CASE("unknown sweep parameter exits with 1") {
    const auto dir = temp_dir("cli_badsweep");
    const fs::path sc = write_scenario(dir, nlohmann::json::object());
    CHECK(run_tool("sweep " + sc.string() + " --sweep colour=1,2 --out " + (dir / "o").string()) == cli::kError);
}

TEST_CASE("repeated runs are byte-identical and --stars overrides the file") {
    const auto dir = temp_dir("cli_run");
    const fs::path sc = write_scenario(dir, {{"stars_type", "independent"}});
    const std::string a = (dir / "a").string(), b = (dir / "b").string();
    const int ca = run_tool("run " + sc.string() + " --runs 1 --seed 7 --threads 1 --stars coupled --out " + a);
    const int cb = run_tool("run " + sc.string() + " --runs 1 --seed 7 --threads 1 --stars coupled --out " + b);
    CHECK((ca == cli::kOk || ca == cli::kInfeasible));
    CHECK(ca == cb);
    for (const char *f : {"report.json", "trace.csv", "beampattern.csv"}) {
        CAPTURE(f);
        REQUIRE(fs::exists(dir / "a" / f));
        CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    }
    const auto report = nlohmann::json::parse(slurp(dir / "a" / "report.json"));
    CHECK(report["scenario"]["stars_type"] == "coupled");
    CHECK(report["scenario"]["seed"] == 7);
    CHECK(report["summary"]["runs"] == 1);
    CHECK(lines(dir / "a" / "trace.csv").front() == "run,pass,ee");
    const auto bp = lines(dir / "a" / "beampattern.csv");
    CHECK(bp.front() == "angle_deg,gain_db");
    CHECK(bp.size() == 362);
}

TEST_CASE("sweep writes one row per grid cell") {
    const auto dir = temp_dir("cli_sweep");
    const fs::path sc = write_scenario(dir, nlohmann::json::object());
    const std::string out = (dir / "o").string();
    const int code =
        run_tool("sweep " + sc.string() + " --sweep p_th_dbm=28:44:4 --baseline random --runs 2 --threads 1 --out " + out);
    CHECK((code == cli::kOk || code == cli::kInfeasible));
    const auto rows = lines(dir / "o" / "sweep.csv");
    REQUIRE(rows.size() == 6);
    CHECK(rows[0] == "p_th_dbm,mean_ee,std_ee,mean_rate,mean_power_w,runs,feasible_runs");
    CHECK(rows[1].rfind("28,", 0) == 0);
    CHECK(rows[5].rfind("44,", 0) == 0);

    const int code2 = run_tool("sweep " + sc.string() +
                               " --sweep p_th_dbm=30,40 --sweep baseline=random,zf --runs 1 --threads 1 --out " + out);
    CHECK((code2 == cli::kOk || code2 == cli::kInfeasible));
    CHECK(lines(dir / "o" / "sweep.csv").size() == 5);
}

TEST_CASE("beampattern command writes 361 samples") {
    const auto dir = temp_dir("cli_bp");
    const fs::path sc = write_scenario(dir, nlohmann::json::object());
    for (const char *mode : {"sense_only", "comm_only"}) {
        const std::string out = (dir / mode).string();
        CHECK(run_tool("beampattern " + sc.string() + " --mode " + mode + " --out " + out) == cli::kOk);
        CHECK(lines(dir / mode / "beampattern.csv").size() == 362);
    }
    CHECK(run_tool("beampattern " + sc.string() + " --mode sideways --out " + (dir / "x").string()) == cli::kError);
}
