#pragma once

#include "event_net/analysis.hpp"
#include "event_net/calibration.hpp"
#include "event_net/config.hpp"
#include "event_net/simulator.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace event_net {

// One line of the long-format output.
struct Row {
  std::string sweep_param = "none";
  double value = 0.0;
  std::string node;    // loop index, "all", or "<loop>@<replication>"
  std::string metric;  // p_delta, p_busy_<r>, p_gamma_<m>, lqg_cost, ...
  std::string method;  // sim, analysis, calibration
  double estimate = 0.0;
  std::optional<double> stderr_;
  std::optional<std::uint64_t> count;
};

inline constexpr const char* kCsvColumns = "sweep_param,value,node,metric,method,estimate,stderr,count";

std::string format_number(double v);

// Writes '#'-prefixed header lines (command, config hash, seed, resolved
// config) followed by the column row and the data.
void write_csv(const std::string& path, const std::string& command, const ExperimentConfig& config,
               const std::vector<Row>& rows);
std::vector<Row> read_csv(const std::string& path);

// Rows for every loop plus an "all" aggregate pooled over loops.
std::vector<Row> simulation_rows(const SimStats& stats, int max_delay,
                                 const std::string& sweep_param = "none", double value = 0.0);
// Reliability and cost of each loop in each replication, node "<loop>@<rep>".
std::vector<Row> replication_rows(const SimResult& sim, const std::string& sweep_param = "none",
                                  double value = 0.0);
std::vector<Row> analysis_rows(const SteadyState& ss, int max_delay,
                               const std::string& sweep_param = "none", double value = 0.0);
std::vector<Row> calibration_rows(const CalibrationReport& report,
                                  const std::string& sweep_param = "none", double value = 0.0);

// Per-loop event probabilities measured in a simulation. Unvisited states
// fall back to the pooled estimate, then to zero.
std::vector<std::vector<double>> measured_event_probs(const SimStats& stats, const NetworkConfig& network);

// Steady state for a network; threshold-mode loops need `measured`.
SteadyState analyze_network(const NetworkConfig& network, NetworkSetting setting,
                            const SolverOptions& solver,
                            const std::vector<std::vector<double>>& measured = {});

struct SweepPoint {
  double value = 0.0;
  SimStats sim;
  std::optional<CalibrationReport> calibration;  // threshold sweeps only
  SteadyState analysis;
};

// For each sweep value: simulate, measure event probabilities if thresholds
// are in use, then solve the chain with those probabilities.
std::vector<SweepPoint> run_sweep(const ExperimentConfig& config);
std::vector<Row> sweep_rows(const std::vector<SweepPoint>& points, const ExperimentConfig& config);

struct Deviation {
  std::string sweep_param;
  double value = 0.0;
  std::string node;
  std::string metric;
  double first = 0.0;
  double second = 0.0;
  double deviation = 0.0;
};

struct CompareReport {
  std::vector<Deviation> entries;
  double max_deviation = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// Pairs rows of the two tables by (sweep_param, value, node, metric). From the
// first table sim rows are used, from the second analysis rows; a table with
// no rows of the preferred method is used as is. Throws ConfigError when the
// sweep grids differ or no metric is shared.
CompareReport compare_tables(const std::vector<Row>& first, const std::vector<Row>& second,
                             double tolerance, const std::vector<std::string>& metric_prefixes);

struct RunOptions {
  std::string out_dir = ".";
  bool verbose = false;  // also write the per-slot trace as JSON lines
  int jobs = 0;          // 0: OpenMP default
};

// Each command writes <command>.csv and <command>_summary.json into out_dir
// and returns the summary.
nlohmann::ordered_json cmd_simulate(const ExperimentConfig& config, const RunOptions& opts);
nlohmann::ordered_json cmd_analyze(const ExperimentConfig& config, const RunOptions& opts);
nlohmann::ordered_json cmd_sweep(const ExperimentConfig& config, const RunOptions& opts);
nlohmann::ordered_json cmd_calibrate(const ExperimentConfig& config, const RunOptions& opts);
nlohmann::ordered_json cmd_compare(const std::string& first_csv, const std::string& second_csv,
                                   const CompareSpec& spec, const RunOptions& opts);

enum ExitCode : int {
  kExitOk = 0,
  kExitFailed = 1,  // comparison outside tolerance, unexpected errors
  kExitValidation = 2,
  kExitConvergence = 3,
  kExitIo = 4,
};

struct CommandLine {
  std::string command;
  std::string config_path;
  std::vector<std::string> inputs;  // compare: CSV paths given positionally
  RunOptions run;
  std::optional<std::uint64_t> seed;
  std::optional<int> replications;
  std::optional<double> tolerance;
};

// Runs one command, mapping exceptions to exit codes. Errors are reported on
// stderr as a single JSON object.
int run_command(const CommandLine& cl);

}  // namespace event_net
