#include "event_net/config.hpp"
#include "event_net/errors.hpp"
#include "event_net/harness.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace event_net;
namespace fs = std::filesystem;

namespace {

const char* kTableOne = R"({
  "seed": 7,
  "horizon": 201000,
  "crm": {"retransmissions": 5, "persistence": 0.2},
  "loops": [{"count": 10, "plant": {"A": 1, "B": 1}, "trigger": {"memory": 1, "event_probs": [0.3171, 0.5138]}}]
})";

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("event_net_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(config, defaults_are_filled_and_written_back) {
  const auto cfg = parse_config(kTableOne);
  EXPECT_EQ(cfg.network.loops.size(), 10u);
  EXPECT_EQ(cfg.network.crm.slots_per_sample, 5);
  EXPECT_EQ(cfg.network.burn_in, 1000);
  EXPECT_EQ(cfg.max_delay, 10);
  EXPECT_EQ(cfg.setting(), NetworkSetting::kRetransmissions);
  EXPECT_DOUBLE_EQ(cfg.network.loops[0].plant.L(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(cfg.network.loops[0].plant.Rw(0, 0), 1.0);
  EXPECT_EQ(cfg.resolved["burn_in"], 1000);
  EXPECT_EQ(cfg.resolved["analysis"], "retx");
  EXPECT_EQ(cfg.resolved["loops"][0]["plant"]["L"], 1.0);
  EXPECT_EQ(cfg.hash.size(), 16u);
  // A config written out with its defaults parses to the same hash.
  EXPECT_EQ(parse_config(cfg.resolved.dump()).hash, cfg.hash);
}

TEST(config, hash_changes_with_seed) {
  auto cfg = parse_config(kTableOne);
  const auto h = cfg.hash;
  cfg.network.seed = 8;
  finalize(cfg);
  EXPECT_NE(cfg.hash, h);
}

TEST(config, syntax_error_reports_line_and_column) {
  const auto msg = error_of("{\n  \"seed\": 1,\n  \"crm\": {,}\n}");
  EXPECT_NE(msg.find("<string>:3:"), std::string::npos) << msg;
}

TEST(config, schema_errors_carry_the_field_path) {
  EXPECT_NE(error_of(R"({"crm": {"persistence": 0.5}, "loops": []})").find("/loops"), std::string::npos);
  const auto r_mismatch = error_of(
      R"({"crm": {"retransmissions": 3, "persistence": [0.5, 0.5]}, "loops": [{"plant": {"A": 1, "B": 1}, "trigger": {"threshold": 1}}]})");
  EXPECT_NE(r_mismatch.find("/crm/persistence"), std::string::npos) << r_mismatch;
  const auto short_frame = error_of(
      R"({"crm": {"retransmissions": 3, "persistence": 0.5, "slots_per_sample": 2}, "loops": [{"plant": {"A": 1, "B": 1}, "trigger": {"threshold": 1}}]})");
  EXPECT_NE(short_frame.find("T must be >= R"), std::string::npos) << short_frame;
  const auto bad_prob = error_of(
      R"({"crm": {"persistence": 1.5}, "loops": [{"plant": {"A": 1, "B": 1}, "trigger": {"threshold": 1}}]})");
  EXPECT_NE(bad_prob.find("/crm"), std::string::npos) << bad_prob;
  const auto bad_rw = error_of(
      R"({"crm": {"persistence": 0.5}, "loops": [{"plant": {"A": 1, "B": 1, "Rw": -1}, "trigger": {"threshold": 1}}]})");
  EXPECT_NE(bad_rw.find("/loops/0/plant"), std::string::npos) << bad_rw;
  const auto both = error_of(
      R"({"crm": {"persistence": 0.5}, "loops": [{"plant": {"A": 1, "B": 1}, "trigger": {"threshold": 1, "event_probs": [0.1, 0.2]}}]})");
  EXPECT_NE(both.find("/loops/0/trigger"), std::string::npos) << both;
  const auto unknown = error_of(
      R"({"crm": {"persistence": 0.5}, "loops": [{"plant": {"A": 1, "B": 1}, "trigger": {"threshold": 1}}], "sede": 3})");
  EXPECT_NE(unknown.find("sede"), std::string::npos) << unknown;
  const auto empty_sweep = error_of(
      R"({"crm": {"persistence": 0.5}, "loops": [{"plant": {"A": 1, "B": 1}, "trigger": {"threshold": 1}}], "sweep": {"parameter": "threshold", "values": []}})");
  EXPECT_NE(empty_sweep.find("/sweep"), std::string::npos) << empty_sweep;
  const auto async_mismatch = error_of(
      R"({"crm": {"persistence": 0.5}, "loops": [{"plant": {"A": 1, "B": 1}, "trigger": {"threshold": 1}}], "analysis": "async"})");
  EXPECT_NE(async_mismatch.find("/analysis"), std::string::npos) << async_mismatch;
  const auto target = error_of(
      R"({"crm": {"persistence": 0.5}, "loops": [{"plant": {"A": 1, "B": 1}, "trigger": {"threshold": 1}}], "calibration": {"targets": [1.0, 0.5]}})");
  EXPECT_NE(target.find("/calibration/targets/0"), std::string::npos) << target;
}

TEST(config, sweep_grid_and_matrix_plants) {
  const auto cfg = parse_config(R"({
    "crm": {"retransmissions": 2, "persistence": [0.4, 0.6], "slots_per_sample": 3, "mode": "asynchronous"},
    "loops": [{"count": 2, "plant": {"A": [[1, 0.1], [0, 1]], "B": [[0], [1]]}, "trigger": {"memory": 2, "thresholds": [0.5, 1, 2]}}],
    "sweep": {"parameter": "threshold", "start": 0, "stop": 8, "step": 0.5}
  })");
  ASSERT_TRUE(cfg.sweep);
  EXPECT_EQ(cfg.sweep->values.size(), 17u);
  EXPECT_DOUBLE_EQ(cfg.sweep->values.back(), 8.0);
  EXPECT_EQ(cfg.network.replications, 64);
  EXPECT_EQ(cfg.setting(), NetworkSetting::kAsynchronous);
  EXPECT_EQ(cfg.network.loops[0].plant.L.rows(), 1);
  EXPECT_EQ(cfg.network.loops[0].plant.L.cols(), 2);
  const auto swept = apply_sweep(cfg.network, SweepParameter::kThreshold, 2.5);
  EXPECT_EQ(swept.loops[1].policy.thresholds, std::vector<double>(3, 2.5));
}

TEST(config, chain_specs_need_measurements_for_thresholds) {
  const auto cfg = parse_config(R"({"crm": {"persistence": 0.5}, "loops": [{"plant": {"A": 1, "B": 1}, "trigger": {"threshold": 1}}]})");
  EXPECT_THROW(chain_specs(cfg.network), ConfigError);
  const auto specs = chain_specs(cfg.network, {{0.2, 0.4}});
  EXPECT_EQ(specs[0].event_probs, (std::vector<double>{0.2, 0.4}));
}

TEST(csv, round_trip) {
  const auto dir = scratch("csv");
  const auto cfg = parse_config(kTableOne);
  std::vector<Row> rows{{"none", 0.0, "all", "p_delta", "sim", 0.25, 0.001, 100},
                        {"threshold", 0.5, "3", "p_busy_1", "analysis", 1.0 / 3.0, std::nullopt, std::nullopt}};
  write_csv((dir / "t.csv").string(), "simulate", cfg, rows);
  const auto text = slurp(dir / "t.csv");
  EXPECT_NE(text.find("# config_hash=" + cfg.hash), std::string::npos);
  EXPECT_NE(text.find("# seed=7"), std::string::npos);
  EXPECT_NE(text.find(kCsvColumns), std::string::npos);
  const auto back = read_csv((dir / "t.csv").string());
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].sweep_param, "threshold");
  EXPECT_DOUBLE_EQ(back[1].value, 0.5);
  EXPECT_NEAR(back[1].estimate, 1.0 / 3.0, 1e-11);
  EXPECT_FALSE(back[1].stderr_);
  EXPECT_EQ(*back[0].count, 100u);
  EXPECT_THROW(read_csv((dir / "missing.csv").string()), IoError);
}

TEST(cmd_analyze, ten_loop_and_single_node) {
  const auto dir = scratch("analyze");
  const auto s = cmd_analyze(parse_config(kTableOne), {dir.string()});
  EXPECT_NEAR(s["p_delta"].get<double>(), 0.1872, 0.002);
  const auto busy = s["nodes"][0]["p_busy"];
  EXPECT_NEAR(busy[0].get<double>(), 0.5944, 0.005);
  EXPECT_NEAR(busy[4].get<double>(), 0.4542, 0.005);
  EXPECT_TRUE(fs::exists(dir / "analyze.csv"));
  EXPECT_TRUE(fs::exists(dir / "analyze_summary.json"));

  const auto one = cmd_analyze(parse_config(R"({"crm": {"persistence": 0.5}, "loops": [{"plant": {"A": 1, "B": 1}, "trigger": {"event_probs": [0.5, 0.5]}}]})"),
                               {dir.string()});
  EXPECT_EQ(one["nodes"][0]["p_busy"][0].get<double>(), 0.0);
}

TEST(cmd_simulate, ten_loop_and_determinism) {
  const auto a = scratch("sim_a"), b = scratch("sim_b");
  const auto cfg = parse_config(kTableOne);
  const auto s = cmd_simulate(cfg, {a.string()});
  EXPECT_NEAR(s["p_delta"].get<double>(), 0.1840, 0.01);
  cmd_simulate(cfg, {b.string()});
  EXPECT_EQ(slurp(a / "simulate.csv"), slurp(b / "simulate.csv"));
  EXPECT_EQ(slurp(a / "simulate_summary.json"), slurp(b / "simulate_summary.json"));
  // one row group per node per replication plus the aggregate
  const auto rows = read_csv((a / "simulate.csv").string());
  bool has_all = false, has_rep = false;
  for (const auto& r : rows) {
    has_all = has_all || (r.node == "all" && r.metric == "p_delta");
    has_rep = has_rep || (r.node == "9@0" && r.metric == "p_delta");
  }
  EXPECT_TRUE(has_all);
  EXPECT_TRUE(has_rep);

  // simulated and analytic tables agree within 0.04
  const auto c = scratch("cmp");
  cmd_analyze(cfg, {a.string()});
  CompareSpec spec;
  const auto rep = cmd_compare((a / "simulate.csv").string(), (a / "analyze.csv").string(), spec, {c.string()});
  EXPECT_TRUE(rep["pass"].get<bool>());
  EXPECT_LE(rep["max_deviation"].get<double>(), 0.04);
  const auto same = cmd_compare((a / "simulate.csv").string(), (a / "simulate.csv").string(), spec, {c.string()});
  EXPECT_EQ(same["max_deviation"].get<double>(), 0.0);
}

TEST(cmd_simulate, verbose_trace_is_json_lines) {
  const auto dir = scratch("trace");
  auto cfg = parse_config(R"({"horizon": 1100, "crm": {"retransmissions": 2, "persistence": 0.5}, "loops": [{"count": 3, "plant": {"A": 1, "B": 1}, "trigger": {"threshold": 0.5}}]})");
  RunOptions opts{dir.string(), true, 0};
  cmd_simulate(cfg, opts);
  std::ifstream in(dir / "trace.jsonl");
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("slot"));
    EXPECT_TRUE(j.contains("success"));
    ++n;
  }
  EXPECT_GT(n, 100);
}

TEST(compare_tables, mismatched_grids_are_rejected) {
  std::vector<Row> a{{"threshold", 0.0, "all", "p_delta", "sim", 0.2, std::nullopt, std::nullopt},
                     {"threshold", 0.5, "all", "p_delta", "sim", 0.1, std::nullopt, std::nullopt}};
  std::vector<Row> b{{"threshold", 0.0, "all", "p_delta", "analysis", 0.21, std::nullopt, std::nullopt}};
  EXPECT_THROW(compare_tables(a, b, 0.04, {"p_delta"}), ConfigError);
  b.push_back({"threshold", 0.5, "all", "p_delta", "analysis", 0.2, std::nullopt, std::nullopt});
  const auto r = compare_tables(a, b, 0.04, {"p_delta"});
  EXPECT_NEAR(r.max_deviation, 0.1, 1e-12);
  EXPECT_FALSE(r.pass);
  EXPECT_THROW(compare_tables(a, b, 0.04, {"p_busy"}), ConfigError);
}

TEST(sweep, threshold_sweep_emits_all_methods) {
  const auto dir = scratch("sweep");
  const auto cfg = parse_config(R"({"horizon": 11000, "crm": {"persistence": 0.5}, "analysis": "no_retx",
      "loops": [{"count": 2, "plant": {"A": 1, "B": 1}, "trigger": {"threshold": 0}}],
      "sweep": {"parameter": "threshold", "values": [0, 1, 2]}})");
  const auto s = cmd_sweep(cfg, {dir.string()});
  ASSERT_EQ(s["points"].size(), 3u);
  double prev = 2.0;
  for (const auto& p : s["points"]) {
    EXPECT_LT(p["p_delta_analysis"].get<double>(), prev);
    prev = p["p_delta_analysis"].get<double>();
    EXPECT_NEAR(p["p_delta_sim"].get<double>(), p["p_delta_analysis"].get<double>(), 0.03);
  }
  const auto rows = read_csv((dir / "sweep.csv").string());
  std::set<std::string> methods;
  for (const auto& r : rows) {
    methods.insert(r.method);
    EXPECT_EQ(r.sweep_param, "threshold");
  }
  EXPECT_EQ(methods, (std::set<std::string>{"sim", "analysis", "calibration"}));
  // sweep output compares against itself: sim rows vs analysis rows
  CompareSpec spec;
  spec.tolerance = 0.03;
  spec.metrics = {"p_delta"};
  const auto rep = cmd_compare((dir / "sweep.csv").string(), (dir / "sweep.csv").string(), spec, {dir.string()});
  EXPECT_TRUE(rep["pass"].get<bool>());
}

TEST(run_command, exit_codes) {
  const auto dir = scratch("exit");
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream(dir / name) << text;
    return (dir / name).string();
  };
  CommandLine cl;
  cl.run.out_dir = (dir / "out").string();
  cl.command = "analyze";
  cl.config_path = write("ok.json", kTableOne);
  EXPECT_EQ(run_command(cl), kExitOk);

  cl.config_path = write("empty.json", R"({"crm": {"persistence": 0.5}, "loops": []})");
  cl.command = "simulate";
  EXPECT_EQ(run_command(cl), kExitValidation);

  cl.config_path = write("syntax.json", "{\"crm\": ");
  EXPECT_EQ(run_command(cl), kExitValidation);

  cl.config_path = (dir / "nope.json").string();
  EXPECT_EQ(run_command(cl), kExitIo);

  cl.command = "analyze";
  cl.config_path = write("slow.json", R"({"solver": {"max_iterations": 2}, "crm": {"retransmissions": 5, "persistence": 0.2},
      "loops": [{"count": 10, "plant": {"A": 1, "B": 1}, "trigger": {"event_probs": [0.3171, 0.5138]}}]})");
  EXPECT_EQ(run_command(cl), kExitConvergence);

  cl.command = "sweep";
  cl.config_path = write("nosweep.json", kTableOne);
  EXPECT_EQ(run_command(cl), kExitValidation);

  cl.command = "simulate";
  cl.config_path = write("ok2.json", R"({"horizon": 1500, "crm": {"persistence": 0.5}, "loops": [{"plant": {"A": 1, "B": 1}, "trigger": {"threshold": 1}}]})");
  cl.run.out_dir = write("blocker", "x");  // a file where a directory is needed
  EXPECT_EQ(run_command(cl), kExitIo);
}

TEST(run_command, overrides_change_seed_and_hash) {
  const auto dir = scratch("override");
  std::ofstream(dir / "c.json") << R"({"horizon": 2000, "crm": {"persistence": 0.5}, "loops": [{"plant": {"A": 1, "B": 1}, "trigger": {"threshold": 1}}]})";
  CommandLine cl;
  cl.command = "simulate";
  cl.config_path = (dir / "c.json").string();
  cl.run.out_dir = (dir / "a").string();
  cl.seed = 99;
  cl.replications = 3;
  ASSERT_EQ(run_command(cl), kExitOk);
  const auto text = slurp(dir / "a" / "simulate.csv");
  EXPECT_NE(text.find("# seed=99"), std::string::npos);
  EXPECT_NE(text.find("0@2"), std::string::npos);
  EXPECT_NE(text.find("\"replications\":3"), std::string::npos);
}
