#pragma once

#include "event_net/analysis.hpp"
#include "event_net/calibration.hpp"
#include "event_net/simulator.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace event_net {

enum class SweepParameter { kThreshold, kPersistence, kEventProb };

struct SweepSpec {
  SweepParameter parameter = SweepParameter::kThreshold;
  std::vector<double> values;

  const char* name() const;
};

struct CalibrationSpec {
  std::vector<double> targets;  // empty: measure probabilities from thresholds
  BisectionOptions bisection;
};

struct CompareSpec {
  std::string simulation;  // CSV paths, relative to the config file
  std::string analysis;
  double tolerance = 0.04;
  std::vector<std::string> metrics{"p_delta", "p_busy"};  // name prefixes
};

// One group of identical loops as written in the config.
struct LoopGroup {
  int count = 1;
  LoopConfig loop;
};

struct ExperimentConfig {
  std::string name;
  std::string source;  // path the config was read from
  std::vector<LoopGroup> groups;
  NetworkConfig network;  // groups expanded
  std::optional<NetworkSetting> analysis;  // empty: derived from the CRM
  SolverOptions solver;
  int max_delay = 0;
  std::optional<SweepSpec> sweep;
  CalibrationSpec calibration;
  std::optional<CompareSpec> compare;

  // Filled by finalize().
  nlohmann::ordered_json resolved;
  std::string hash;

  NetworkSetting setting() const;
};

// Throws ConfigError with a line/column for syntax errors and the JSON path of
// the offending field for schema errors.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<string>");
ExperimentConfig load_config(const std::string& path);

// Re-expands the loop groups, validates everything and recomputes the
// resolved document and its hash. Call after changing fields by hand.
void finalize(ExperimentConfig& config);

nlohmann::ordered_json to_json(const ExperimentConfig& config);

// Chain parameters for the analysis. Loops in probability mode use their own
// table; threshold-mode loops need measured probabilities, one row per loop.
std::vector<NodeChainSpec> chain_specs(const NetworkConfig& network,
                                       const std::vector<std::vector<double>>& measured = {});

// Applies one sweep value to every loop (threshold, event_prob) or stage
// (persistence).
NetworkConfig apply_sweep(const NetworkConfig& network, SweepParameter parameter, double value);

std::string fnv1a_hex(const std::string& text);

}  // namespace event_net
