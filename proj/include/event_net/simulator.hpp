#pragma once

#include "event_net/core_model.hpp"
#include "event_net/rng.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace event_net {

enum class AccessMode { kSynchronized, kAsynchronous };

// kRandom draws offsets uniformly per replication; kExhaustive enumerates
// every offset vector with node 0 pinned to slot 0 (one per replication).
enum class OffsetMode { kRandom, kExhaustive };

// p-persistent CSMA with R stages, one slot per stage, T slots per sample.
struct CrmConfig {
  int retransmissions = 1;          // R
  std::vector<double> persistence;  // p_{alpha,1..R}
  int slots_per_sample = 1;         // T
  AccessMode mode = AccessMode::kSynchronized;
};

void validate(const CrmConfig& crm);

struct LoopConfig {
  PlantModel plant;
  TriggerPolicy policy;
  CostConfig cost;
};

struct NetworkConfig {
  std::vector<LoopConfig> loops;
  CrmConfig crm;
  long horizon = 0;   // sampling periods per replication, burn-in included
  long burn_in = 1000;
  std::uint64_t seed = 1;
  int replications = 1;
  OffsetMode offsets = OffsetMode::kRandom;
};

void validate(const NetworkConfig& config);

// Number of replications actually run (exhaustive offsets fix it).
int replication_count(const NetworkConfig& config);

// Slot offsets for one replication; all zero when synchronized.
std::vector<int> replication_offsets(const NetworkConfig& config, int replication);

struct Ratio {
  double estimate = 0.0;
  double stderr_ = 0.0;  // normal approximation
  std::uint64_t count = 0;
  bool defined = false;
};

Ratio make_ratio(std::uint64_t hits, std::uint64_t trials);

// Raw counters for one node. Ratios are derived on demand, so merging is a
// plain sum; only cost_sum is subject to rounding in the merge order.
struct NodeStats {
  std::uint64_t samples = 0;
  std::uint64_t successes = 0;
  std::vector<std::uint64_t> visits;  // per memory state m
  std::vector<std::uint64_t> events;
  std::vector<std::uint64_t> attempts;  // per stage
  std::vector<std::uint64_t> busy;
  std::vector<std::uint64_t> reception_delay;  // d_{k-1} at each delivery
  std::vector<std::uint64_t> delay_occupancy;  // d_k after each sample
  double cost_sum = 0.0;
  std::uint64_t first_half_samples = 0;
  std::uint64_t first_half_successes = 0;

  NodeStats() = default;
  NodeStats(int memory, int stages);

  void merge(const NodeStats& other);

  Ratio reliability() const { return make_ratio(successes, samples); }
  Ratio event_rate(int m) const;
  Ratio busy_rate(int stage) const;  // 1-based stage
  double lqg_cost() const { return samples ? cost_sum / static_cast<double>(samples) : 0.0; }

  // First-half vs second-half reliability differ by less than two standard
  // errors of the difference.
  bool steady_state_consistent() const;
};

struct SimStats {
  std::vector<NodeStats> nodes;
  int replications = 0;

  void merge(const SimStats& other);
  NodeStats pooled() const;
};

struct SlotEvent {
  long slot = 0;
  int replication = 0;
  int node = 0;
  long sample = 0;
  int stage = 0;  // 1-based
  int transmitters = 0;
  bool success = false;
};

struct SampleRecord {
  int node = 0;
  long k = 0;
  Vector x;
  Vector xhat_f;
  Vector xhat_c;  // after the observer update
  Vector u;
  Vector w;       // noise applied after this sample
  long d_before = 0;
  long tau_before = -1;
  bool gamma = false;
  bool delta = false;
};

struct SimOptions {
  bool record_trace = false;
  bool record_samples = false;
};

struct ReplicationResult {
  SimStats stats;
  std::vector<int> offsets;
  std::vector<SlotEvent> trace;
  std::vector<SampleRecord> samples;
};

ReplicationResult run_replication(const NetworkConfig& config, int replication,
                                  const SimOptions& opts = {});

struct SimResult {
  std::vector<ReplicationResult> replications;
  SimStats total;
};

// Runs every replication; replications execute in parallel when OpenMP is
// available. Output is identical to run_serial.
SimResult run(const NetworkConfig& config, const SimOptions& opts = {});
SimResult run_serial(const NetworkConfig& config, const SimOptions& opts = {});

// One CSMA round for a batch of intents. Contender j starts at slot
// offsets[j] and tries stage r in slot offsets[j] + r - 1. access_rngs
// holds one stream per node.
std::vector<StepOutcome> crm_round(const std::vector<bool>& intents, std::span<Rng> access_rngs,
                                   const CrmConfig& crm, const std::vector<int>& offsets);

// Busy frequency per node and stage from a slot trace; nullopt for stages
// with no attempts.
std::vector<std::vector<std::optional<double>>> measure_busy(std::span<const SlotEvent> trace,
                                                             int nodes, int stages);

// Time average of x'Q1x + u'Q2u over a state/control log.
double lqg_cost(std::span<const Vector> states, std::span<const Vector> controls,
                const CostConfig& cost);

struct EmpiricalDelay {
  std::vector<double> reception;  // per sample, sums to the reliability
  std::vector<double> occupancy;  // sums to 1
  std::uint64_t receptions = 0;
  std::uint64_t samples = 0;
  bool empty = true;  // no deliveries observed
};

EmpiricalDelay empirical_delay(const NodeStats& stats);

}  // namespace event_net
