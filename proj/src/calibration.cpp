#include "event_net/calibration.hpp"

#include "event_net/errors.hpp"

#include <algorithm>
#include <cmath>

namespace event_net {

namespace {

int common_memory(const NetworkConfig& network) {
  if (network.loops.empty()) throw ConfigError("network must contain at least one loop");
  const int memory = network.loops.front().policy.memory;
  for (const auto& loop : network.loops)
    if (loop.policy.memory != memory)
      throw ConfigError("calibration requires a common memory limit F");
  return memory;
}

NetworkConfig with_thresholds(NetworkConfig cfg, const std::vector<double>& thresholds) {
  for (auto& loop : cfg.loops) {
    loop.policy.mode = TriggerMode::kThreshold;
    loop.policy.thresholds = thresholds;
  }
  return cfg;
}

}  // namespace

std::vector<double> CalibrationReport::achieved_probabilities() const {
  std::vector<double> out;
  out.reserve(stages.size());
  for (const auto& s : stages) out.push_back(s.achieved.estimate);
  return out;
}

std::vector<double> CalibrationReport::thresholds() const {
  std::vector<double> out;
  out.reserve(stages.size());
  for (const auto& s : stages) out.push_back(s.threshold);
  return out;
}

CalibrationReport probs_from_stats(const SimStats& stats, int memory) {
  CalibrationReport report;
  const NodeStats all = stats.pooled();
  for (int m = 0; m <= memory; ++m) {
    StageCalibration s;
    s.m = m;
    s.achieved = all.event_rate(m);
    report.stages.push_back(s);
  }
  for (const auto& node : stats.nodes) {
    std::vector<Ratio> rates;
    for (int m = 0; m <= memory; ++m) rates.push_back(node.event_rate(m));
    report.per_node.push_back(std::move(rates));
  }
  return report;
}

CalibrationReport probs_from_thresholds(const NetworkConfig& network) {
  const int memory = common_memory(network);
  for (const auto& loop : network.loops)
    if (loop.policy.mode != TriggerMode::kThreshold)
      throw ConfigError("probs_from_thresholds requires threshold-mode policies");
  const SimResult sim = run(network);
  CalibrationReport report = probs_from_stats(sim.total, memory);
  const auto& thresholds = network.loops.front().policy.thresholds;
  for (auto& s : report.stages) s.threshold = thresholds[static_cast<std::size_t>(s.m)];
  report.iterations = 1;
  report.horizon = network.horizon;
  return report;
}

CalibrationReport thresholds_from_probs(const NetworkConfig& network,
                                        const std::vector<double>& targets,
                                        const BisectionOptions& opts) {
  const int memory = common_memory(network);
  const auto stages = static_cast<std::size_t>(memory) + 1;
  if (targets.size() != stages) throw ConfigError("targets must have F+1 entries");
  for (double t : targets)
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("calibration targets must lie in (0,1)");
  if (!(opts.tolerance > 0.0)) throw ConfigError("calibration tolerance must be > 0");
  if (opts.pilot_horizon <= 0) throw ConfigError("pilot horizon must be > 0");

  NetworkConfig base = network;
  base.horizon = base.burn_in + opts.pilot_horizon;

  auto measure = [&](const std::vector<double>& thresholds) {
    const SimResult sim = run(with_thresholds(base, thresholds));
    return probs_from_stats(sim.total, memory);
  };
  auto rate = [](const CalibrationReport& r, std::size_t m) {
    return r.stages[m].achieved.defined ? r.stages[m].achieved.estimate : 0.0;
  };

  std::vector<double> lo(stages, 0.0);
  std::vector<double> hi(stages, opts.initial_upper);

  // Grow the bracket until every stage's event probability drops below target.
  for (int grow = 0; grow < 64; ++grow) {
    const CalibrationReport r = measure(hi);
    bool all_below = true;
    for (std::size_t m = 0; m < stages; ++m) {
      if (rate(r, m) >= targets[m]) {
        lo[m] = hi[m];
        hi[m] *= 2.0;
        all_below = false;
      }
    }
    if (all_below) break;
  }

  CalibrationReport report;
  report.converged = false;
  bool refined = false;
  std::vector<double> mid(stages);
  for (int it = 1; it <= opts.max_iterations; ++it) {
    for (std::size_t m = 0; m < stages; ++m) mid[m] = 0.5 * (lo[m] + hi[m]);
    report = measure(mid);
    report.converged = false;
    report.iterations = it;
    report.horizon = base.horizon - base.burn_in;

    bool all_within = true;
    for (std::size_t m = 0; m < stages; ++m) {
      const double p = rate(report, m);
      if (std::abs(p - targets[m]) > opts.tolerance) all_within = false;
    }
    if (all_within) {
      // Confirm on a doubled horizon before accepting.
      if (refined) {
        report.converged = true;
      } else {
        refined = true;
        base.horizon = base.burn_in + 2 * opts.pilot_horizon;
        report = measure(mid);
        report.iterations = it;
        report.horizon = base.horizon - base.burn_in;
        report.converged = true;
        for (std::size_t m = 0; m < stages; ++m)
          if (std::abs(rate(report, m) - targets[m]) > opts.tolerance) report.converged = false;
      }
      if (report.converged) break;
    }
    for (std::size_t m = 0; m < stages; ++m) {
      const double p = rate(report, m);
      if (std::abs(p - targets[m]) <= opts.tolerance) continue;
      if (p > targets[m])
        lo[m] = mid[m];
      else
        hi[m] = mid[m];
    }
  }

  for (std::size_t m = 0; m < stages; ++m) {
    report.stages[m].target = targets[m];
    report.stages[m].threshold = mid[m];
    report.stages[m].lower = lo[m];
    report.stages[m].upper = hi[m];
  }
  return report;
}

}  // namespace event_net
