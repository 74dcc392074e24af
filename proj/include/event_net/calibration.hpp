#pragma once

#include "event_net/simulator.hpp"

#include <vector>

namespace event_net {

// One memory state m of a calibrated policy.
struct StageCalibration {
  int m = 0;
  double target = 0.0;     // requested probability (thresholds_from_probs only)
  Ratio achieved;          // measured event probability in state m
  double threshold = 0.0;  // Delta(m) used for the final measurement
  double lower = 0.0;      // final bisection bracket
  double upper = 0.0;
};

struct CalibrationReport {
  std::vector<StageCalibration> stages;  // pooled over loops
  std::vector<std::vector<Ratio>> per_node;
  bool converged = true;
  int iterations = 0;
  long horizon = 0;  // sampling periods of the last measurement

  std::vector<double> achieved_probabilities() const;
  std::vector<double> thresholds() const;
};

// Event probabilities p_{gamma,m} as visited in the stats: events in memory
// state m over visits to m.
CalibrationReport probs_from_stats(const SimStats& stats, int memory);

// Simulates the network with its configured thresholds and measures the
// event probability of every memory state.
CalibrationReport probs_from_thresholds(const NetworkConfig& network);

struct BisectionOptions {
  double tolerance = 0.005;         // on |p_hat - target|
  int max_iterations = 40;
  long pilot_horizon = 50000;       // retained periods per iterate
  double initial_upper = 1.0;       // first guess for the bracket top
};

// Finds thresholds Delta(m), applied to every loop, whose in-network event
// probabilities match `targets` (F+1 entries). Every iterate reuses the same
// seed so successive measurements share random numbers.
CalibrationReport thresholds_from_probs(const NetworkConfig& network,
                                        const std::vector<double>& targets,
                                        const BisectionOptions& opts = {});

}  // namespace event_net
