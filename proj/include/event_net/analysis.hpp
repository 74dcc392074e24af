#pragma once

#include <cstddef>
#include <vector>

namespace event_net {

// Per-node Markov chain parameters: event probabilities by memory state and
// per-stage CSMA persistence.
struct NodeChainSpec {
  int memory = 1;                   // F
  std::vector<double> event_probs;  // p_{gamma,1..F}, p_{gamma,f}  (F+1 entries)
  std::vector<double> persistence;  // p_{alpha,1..R}

  int stages() const { return static_cast<int>(persistence.size()); }
};

void validate(const NodeChainSpec& spec);

enum class NetworkSetting { kNoRetransmissions, kRetransmissions, kAsynchronous };

// How per-stage transmit probabilities are averaged when contention is
// asynchronous. kStages divides by R; kSlots divides by the frame length T,
// which accounts for the T-R slots where a node is silent.
enum class AsyncAveraging { kStages, kSlots };

struct SolverOptions {
  double damping = 0.5;        // weight on the previous iterate
  double tolerance = 1e-10;    // max |G(p) - p|
  long max_iterations = 100000;
  AsyncAveraging async_averaging = AsyncAveraging::kSlots;
  int slots_per_sample = 0;    // T; 0 means T = R
  bool use_symmetry = true;    // solve one node when all specs agree
};

struct NodeSteadyState {
  std::vector<double> idle;       // p_(I,m), m = 0..F
  std::vector<double> event;      // p_(E,m), m = 1..F stored at index m-1
  std::vector<double> non_event;  // p_(N,m), same indexing
  std::vector<std::vector<double>> transmit;  // p_(T,m,r): [m-1][r-1]
  std::vector<double> busy;       // p_r, r = 1..R (equal entries when async)
  std::vector<double> tx_stage;   // p_tx,r
  double p_tx = 0.0;              // sum over stages
  double success_given_event = 0.0;
  double reliability = 0.0;       // p_delta = p_(I,0)
};

struct SteadyState {
  NetworkSetting setting = NetworkSetting::kRetransmissions;
  std::vector<NodeChainSpec> specs;
  std::vector<NodeSteadyState> nodes;
  long iterations = 0;
  double residual = 0.0;
};

// Chain occupancies of one node for a given vector of per-stage busy
// probabilities. This is the single-node map the fixed point iterates on.
NodeSteadyState evaluate_node(const NodeChainSpec& spec, const std::vector<double>& busy);

// 1 - prod_r (p_{alpha,r} p_r + q_{alpha,r}).
double success_probability(const std::vector<double>& persistence,
                           const std::vector<double>& busy);

SteadyState solve_no_retx(const std::vector<NodeChainSpec>& specs, const SolverOptions& opts = {});
SteadyState solve_retx(const std::vector<NodeChainSpec>& specs, const SolverOptions& opts = {});
SteadyState solve_async(const std::vector<NodeChainSpec>& specs, const SolverOptions& opts = {});
SteadyState solve(NetworkSetting setting, const std::vector<NodeChainSpec>& specs,
                  const SolverOptions& opts = {});

struct DelayDistribution {
  // reception[z] = Pr(d_{k-1} = z, delta_k = 1); sums with tail to p_delta.
  std::vector<double> reception;
  double reception_tail = 0.0;
  // occupancy[z] = Pr(d_k = z); sums with tail to 1.
  std::vector<double> occupancy;
  double occupancy_tail = 0.0;
  double decay_ratio = 0.0;  // reception[z+1] / reception[z] for z >= F
};

DelayDistribution delay_distribution(const SteadyState& ss, std::size_t node, int max_delay);

double conditional_success_given_event(const SteadyState& ss, std::size_t node);

const char* to_string(NetworkSetting setting);

}  // namespace event_net
