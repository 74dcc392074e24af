#include "event_net/analysis.hpp"

#include "event_net/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace event_net {

namespace {

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

bool same_spec(const NodeChainSpec& a, const NodeChainSpec& b) {
  return a.memory == b.memory && a.event_probs == b.event_probs &&
         a.persistence == b.persistence;
}

// Busy probability each node sees, given every node's chain occupancies.
// Synchronized: stage r only collides with stage r of the others.
// Asynchronous: every stage sees the others' averaged per-slot transmit rate.
std::vector<std::vector<double>> couple(NetworkSetting setting,
                                        const std::vector<NodeSteadyState>& nodes,
                                        std::size_t network_size, double async_divisor) {
  const std::size_t stages = nodes.front().tx_stage.size();
  std::vector<std::vector<double>> busy(nodes.size(), std::vector<double>(stages, 0.0));

  // With one representative node standing in for a homogeneous network the
  // product over the other M-1 nodes is a power.
  const bool symmetric = nodes.size() == 1 && network_size > 1;
  const auto others = static_cast<double>(network_size) - 1.0;

  if (setting == NetworkSetting::kAsynchronous) {
    std::vector<double> avg(nodes.size(), 0.0);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      for (double t : nodes[i].tx_stage) avg[i] += t;
      avg[i] /= async_divisor;
    }
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      double clear = 1.0;
      if (symmetric) {
        clear = std::pow(1.0 - avg[0], others);
      } else {
        for (std::size_t i = 0; i < nodes.size(); ++i)
          if (i != j) clear *= 1.0 - avg[i];
      }
      std::fill(busy[j].begin(), busy[j].end(), 1.0 - clear);
    }
    return busy;
  }

  for (std::size_t j = 0; j < nodes.size(); ++j) {
    for (std::size_t r = 0; r < stages; ++r) {
      double clear = 1.0;
      if (symmetric) {
        clear = std::pow(1.0 - nodes[0].tx_stage[r], others);
      } else {
        for (std::size_t i = 0; i < nodes.size(); ++i)
          if (i != j) clear *= 1.0 - nodes[i].tx_stage[r];
      }
      busy[j][r] = 1.0 - clear;
    }
  }
  return busy;
}

SteadyState fixed_point(NetworkSetting setting, const std::vector<NodeChainSpec>& specs,
                        const SolverOptions& opts) {
  if (specs.empty()) throw ConfigError("analysis requires at least one node");
  for (const auto& s : specs) validate(s);
  const int stages = specs.front().stages();
  for (const auto& s : specs)
    if (s.stages() != stages)
      throw ConfigError("all nodes must share the retransmission budget R");
  if (setting == NetworkSetting::kNoRetransmissions && stages != 1)
    throw ConfigError("solve_no_retx requires R = 1 for every node");
  if (!(opts.damping >= 0.0 && opts.damping < 1.0))
    throw ConfigError("damping must lie in [0,1)");

  double async_divisor = stages;
  if (setting == NetworkSetting::kAsynchronous &&
      opts.async_averaging == AsyncAveraging::kSlots && opts.slots_per_sample > 0) {
    if (opts.slots_per_sample < stages) throw ConfigError("slots per sample must be >= R");
    async_divisor = opts.slots_per_sample;
  }

  const bool symmetric =
      opts.use_symmetry && std::all_of(specs.begin(), specs.end(), [&](const NodeChainSpec& s) {
        return same_spec(s, specs.front());
      });
  const std::vector<NodeChainSpec> work =
      symmetric ? std::vector<NodeChainSpec>{specs.front()} : specs;

  std::vector<std::vector<double>> busy(work.size(),
                                        std::vector<double>(static_cast<std::size_t>(stages), 0.0));
  std::vector<NodeSteadyState> nodes(work.size());

  SteadyState out;
  out.setting = setting;
  out.specs = specs;

  double residual = 0.0;
  long it = 0;
  for (;; ++it) {
    for (std::size_t j = 0; j < work.size(); ++j) nodes[j] = evaluate_node(work[j], busy[j]);
    const auto next = couple(setting, nodes, specs.size(), async_divisor);
    residual = 0.0;
    for (std::size_t j = 0; j < work.size(); ++j)
      for (std::size_t r = 0; r < busy[j].size(); ++r)
        residual = std::max(residual, std::abs(next[j][r] - busy[j][r]));
    if (residual < opts.tolerance) break;
    if (it >= opts.max_iterations)
      throw ConvergenceError("busy-probability fixed point did not converge (residual " +
                                 std::to_string(residual) + ")",
                             residual, it);
    for (std::size_t j = 0; j < work.size(); ++j)
      for (std::size_t r = 0; r < busy[j].size(); ++r)
        busy[j][r] = opts.damping * busy[j][r] + (1.0 - opts.damping) * next[j][r];
  }

  out.iterations = it;
  out.residual = residual;
  if (symmetric)
    out.nodes.assign(specs.size(), nodes.front());
  else
    out.nodes = std::move(nodes);
  return out;
}

}  // namespace

void validate(const NodeChainSpec& spec) {
  if (spec.memory < 1) throw ConfigError("memory limit F must be >= 1");
  if (spec.event_probs.size() != static_cast<std::size_t>(spec.memory) + 1)
    throw ConfigError("event_probs must have F+1 entries");
  if (spec.persistence.empty()) throw ConfigError("at least one CSMA stage is required");
  for (double p : spec.event_probs)
    if (!is_probability(p)) throw ConfigError("event probabilities must lie in [0,1]");
  for (double p : spec.persistence)
    if (!is_probability(p)) throw ConfigError("persistence probabilities must lie in [0,1]");
}

double success_probability(const std::vector<double>& persistence,
                           const std::vector<double>& busy) {
  double fail = 1.0;
  for (std::size_t r = 0; r < persistence.size(); ++r)
    fail *= persistence[r] * busy[r] + (1.0 - persistence[r]);
  return 1.0 - fail;
}

NodeSteadyState evaluate_node(const NodeChainSpec& spec, const std::vector<double>& busy) {
  const auto F = static_cast<std::size_t>(spec.memory);
  const auto R = spec.persistence.size();
  const auto& pg = spec.event_probs;
  const double s = success_probability(spec.persistence, busy);

  // Unnormalised idle weights: each sample either delivers (back to (I,0))
  // or moves one memory state deeper; (I,F) also returns to itself.
  std::vector<double> w(F + 1, 0.0);
  w[0] = 1.0;
  for (std::size_t m = 1; m < F; ++m) w[m] = (1.0 - pg[m - 1] * s) * w[m - 1];
  const double into_final = (1.0 - pg[F - 1] * s) * w[F - 1];
  const double leave_final = pg[F] * s;
  if (into_final <= 0.0) {
    w[F] = 0.0;
  } else if (leave_final <= 0.0) {
    // (I,F) is absorbing and reachable.
    std::fill(w.begin(), w.end(), 0.0);
    w[F] = 1.0;
  } else {
    w[F] = into_final / leave_final;
  }
  double total = 0.0;
  for (double v : w) total += v;

  NodeSteadyState ns;
  ns.idle.resize(F + 1);
  for (std::size_t m = 0; m <= F; ++m) ns.idle[m] = w[m] / total;

  ns.event.assign(F, 0.0);
  ns.non_event.assign(F, 0.0);
  for (std::size_t m = 1; m <= F; ++m) {
    ns.event[m - 1] = pg[m - 1] * ns.idle[m - 1];
    ns.non_event[m - 1] = (1.0 - pg[m - 1]) * ns.idle[m - 1];
  }
  ns.event[F - 1] += pg[F] * ns.idle[F];
  ns.non_event[F - 1] += (1.0 - pg[F]) * ns.idle[F];

  ns.transmit.assign(F, std::vector<double>(R, 0.0));
  ns.tx_stage.assign(R, 0.0);
  double reach = 1.0;  // probability an event is still undelivered before stage r
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t m = 0; m < F; ++m) {
      ns.transmit[m][r] = reach * spec.persistence[r] * ns.event[m];
      ns.tx_stage[r] += ns.transmit[m][r];
    }
    reach *= spec.persistence[r] * busy[r] + (1.0 - spec.persistence[r]);
  }
  ns.p_tx = 0.0;
  for (double t : ns.tx_stage) ns.p_tx += t;
  ns.busy = busy;
  ns.success_given_event = s;
  ns.reliability = ns.idle[0];
  return ns;
}

SteadyState solve_no_retx(const std::vector<NodeChainSpec>& specs, const SolverOptions& opts) {
  return fixed_point(NetworkSetting::kNoRetransmissions, specs, opts);
}

SteadyState solve_retx(const std::vector<NodeChainSpec>& specs, const SolverOptions& opts) {
  return fixed_point(NetworkSetting::kRetransmissions, specs, opts);
}

SteadyState solve_async(const std::vector<NodeChainSpec>& specs, const SolverOptions& opts) {
  return fixed_point(NetworkSetting::kAsynchronous, specs, opts);
}

SteadyState solve(NetworkSetting setting, const std::vector<NodeChainSpec>& specs,
                  const SolverOptions& opts) {
  return fixed_point(setting, specs, opts);
}

DelayDistribution delay_distribution(const SteadyState& ss, std::size_t node, int max_delay) {
  if (node >= ss.nodes.size()) throw ConfigError("node index out of range");
  const auto& spec = ss.specs[node];
  const auto& ns = ss.nodes[node];
  const int F = spec.memory;
  if (max_delay < F) throw ConfigError("max delay must be >= F");
  const auto& pg = spec.event_probs;
  const double s = ns.success_given_event;
  const double exit_final = pg[static_cast<std::size_t>(F)] * s;
  const double rho = 1.0 - exit_final;
  // Occupancy of delay exactly F; deeper delays decay geometrically.
  const double at_f = (1.0 - pg[static_cast<std::size_t>(F) - 1] * s) *
                      ns.idle[static_cast<std::size_t>(F) - 1];

  DelayDistribution dd;
  dd.decay_ratio = rho;
  dd.reception.resize(static_cast<std::size_t>(max_delay) + 1);
  dd.occupancy.resize(static_cast<std::size_t>(max_delay) + 1);
  for (int z = 0; z <= max_delay; ++z) {
    const auto zi = static_cast<std::size_t>(z);
    if (z < F) {
      dd.occupancy[zi] = ns.idle[zi];
      dd.reception[zi] = ns.idle[zi] * pg[zi] * s;
    } else {
      dd.occupancy[zi] = at_f * std::pow(rho, z - F);
      dd.reception[zi] = dd.occupancy[zi] * exit_final;
    }
  }
  const double beyond = at_f * std::pow(rho, max_delay + 1 - F);
  dd.reception_tail = beyond;  // geometric sum of beyond * exit_final * rho^i
  if (exit_final > 0.0) {
    dd.occupancy_tail = beyond / exit_final;
  } else {
    double mass = 0.0;
    for (double v : dd.occupancy) mass += v;
    dd.occupancy_tail = std::max(0.0, 1.0 - mass);
    dd.reception_tail = 0.0;
  }
  return dd;
}

double conditional_success_given_event(const SteadyState& ss, std::size_t node) {
  if (node >= ss.nodes.size()) throw ConfigError("node index out of range");
  return ss.nodes[node].success_given_event;
}

const char* to_string(NetworkSetting setting) {
  switch (setting) {
    case NetworkSetting::kNoRetransmissions: return "no_retx";
    case NetworkSetting::kRetransmissions: return "retx";
    case NetworkSetting::kAsynchronous: return "async";
  }
  return "unknown";
}

}  // namespace event_net
