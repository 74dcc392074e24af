#include "event_net/simulator.hpp"

#include "event_net/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace event_net {

namespace {

constexpr long kMaxExhaustiveOffsets = 100000;

void add_into(std::vector<std::uint64_t>& dst, const std::vector<std::uint64_t>& src) {
  if (dst.size() < src.size()) dst.resize(src.size(), 0);
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

void bump(std::vector<std::uint64_t>& hist, long index) {
  const auto i = static_cast<std::size_t>(index);
  if (hist.size() <= i) hist.resize(i + 1, 0);
  ++hist[i];
}

// S with S S' = cov, tolerating semi-definite covariances.
Matrix covariance_factor(const Matrix& cov) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal();
}

long checked_power(long base, long exponent) {
  long value = 1;
  for (long i = 0; i < exponent; ++i) {
    value *= base;
    if (value > kMaxExhaustiveOffsets) return kMaxExhaustiveOffsets + 1;
  }
  return value;
}

// Contention state of one node inside the CRM.
struct Contender {
  bool active = false;
  int stage = 0;  // 0-based stage to try next
};

struct SlotResolution {
  int transmitters = 0;
  int winner = -1;
};

// Draws access for every active contender in one slot and applies the
// sole-transmitter rule. `transmitted[j]` is set for nodes that sent.
SlotResolution resolve_slot(std::vector<Contender>& contenders, std::span<Rng> access_rngs,
                            const CrmConfig& crm, std::vector<char>& transmitted) {
  SlotResolution res;
  for (std::size_t j = 0; j < contenders.size(); ++j) {
    transmitted[j] = 0;
    if (!contenders[j].active) continue;
    const double p = crm.persistence[static_cast<std::size_t>(contenders[j].stage)];
    if (uniform01(access_rngs[j]) < p) {
      transmitted[j] = 1;
      ++res.transmitters;
      res.winner = static_cast<int>(j);
    }
  }
  if (res.transmitters != 1) res.winner = -1;
  return res;
}

class NodeRuntime {
 public:
  NodeRuntime(const LoopConfig& cfg, const NetworkConfig& net, int replication, int index,
              int offset)
      : cfg_(cfg),
        noise_rng_(make_stream(net.seed, static_cast<std::uint64_t>(replication),
                               static_cast<std::uint64_t>(index), StreamPurpose::kProcessNoise)),
        trigger_rng_(make_stream(net.seed, static_cast<std::uint64_t>(replication),
                                 static_cast<std::uint64_t>(index), StreamPurpose::kTrigger)),
        noise_factor_(covariance_factor(cfg.plant.Rw)),
        z_(cfg.plant.A.rows()),
        w_(cfg.plant.A.rows()),
        next_slot_(offset),
        stats_(cfg.policy.memory, net.crm.retransmissions) {
    Rng init_rng = make_stream(net.seed, static_cast<std::uint64_t>(replication),
                               static_cast<std::uint64_t>(index), StreamPurpose::kInitialState);
    std::normal_distribution<double> normal;
    Vector z0(cfg.plant.A.rows());
    for (auto& v : z0) v = normal(init_rng);
    state_ = LoopState::initial(cfg.plant, covariance_factor(cfg.plant.R0) * z0, cfg.policy.memory);
  }

  long next_slot() const { return next_slot_; }
  long sample_index() const { return state_.k; }
  const LoopState& state() const { return state_; }
  NodeStats& stats() { return stats_; }

  // Evaluates the trigger for the current sample; returns gamma.
  bool begin_sample(long burn_in) {
    const int m = state_.m;
    d_before_ = state_.d;
    tau_before_ = state_.tau;
    if (cfg_.policy.mode == TriggerMode::kThreshold) {
      xhat_f_ = predicted_estimate(state_, cfg_.plant);
      gamma_ = trigger_decide(state_.x, xhat_f_, m, cfg_.policy);
    } else {
      gamma_ = uniform01(trigger_rng_) < cfg_.policy.event_probs[static_cast<std::size_t>(m)];
    }
    if (state_.k >= burn_in) {
      ++stats_.visits[static_cast<std::size_t>(m)];
      if (gamma_) ++stats_.events[static_cast<std::size_t>(m)];
    }
    return gamma_;
  }

  void finish_sample(bool delivered, const NetworkConfig& net, std::vector<SampleRecord>* log,
                     int index) {
    const bool retained = state_.k >= net.burn_in;
    const long half = net.burn_in + (net.horizon - net.burn_in) / 2;
    if (retained && delivered) bump(stats_.reception_delay, d_before_);

    apply_observation(state_, delivered, cfg_.plant);
    const Vector u = control_law(state_.xhat_c, cfg_.plant);

    if (retained) {
      stats_.cost_sum += stage_cost(state_.x, u, cfg_.cost);
      ++stats_.samples;
      if (delivered) ++stats_.successes;
      if (state_.k < half) {
        ++stats_.first_half_samples;
        if (delivered) ++stats_.first_half_successes;
      }
      bump(stats_.delay_occupancy, state_.d);
    }

    for (auto& v : z_) v = normal_(noise_rng_);
    w_.noalias() = noise_factor_ * z_;

    if (log) {
      SampleRecord rec;
      rec.node = index;
      rec.k = state_.k;
      rec.x = state_.x;
      rec.xhat_f = cfg_.policy.mode == TriggerMode::kThreshold ? xhat_f_ : Vector();
      rec.xhat_c = state_.xhat_c;
      rec.u = u;
      rec.w = w_;
      rec.d_before = d_before_;
      rec.tau_before = tau_before_;
      rec.gamma = gamma_;
      rec.delta = delivered;
      log->push_back(std::move(rec));
    }

    advance_plant(state_, u, w_, cfg_.plant);
    next_slot_ += net.crm.slots_per_sample;
  }

 private:
  const LoopConfig& cfg_;
  Rng noise_rng_;
  Rng trigger_rng_;
  std::normal_distribution<double> normal_;
  Matrix noise_factor_;
  Vector z_;
  Vector w_;
  LoopState state_;
  Vector xhat_f_;
  long next_slot_;
  long d_before_ = 0;
  long tau_before_ = -1;
  bool gamma_ = false;
  NodeStats stats_;
};

}  // namespace

void validate(const CrmConfig& crm) {
  if (crm.retransmissions < 1) throw ConfigError("retransmissions R must be >= 1");
  if (crm.persistence.size() != static_cast<std::size_t>(crm.retransmissions))
    throw ConfigError("persistence must have exactly R entries (got " +
                      std::to_string(crm.persistence.size()) + ", R = " +
                      std::to_string(crm.retransmissions) + ")");
  for (double p : crm.persistence)
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("persistence probabilities must lie in [0,1]");
  if (crm.slots_per_sample < crm.retransmissions)
    throw ConfigError("slots per sample T must be >= R");
}

void validate(const NetworkConfig& config) {
  if (config.loops.empty()) throw ConfigError("network must contain at least one loop");
  validate(config.crm);
  for (const auto& loop : config.loops) {
    validate(loop.plant);
    validate(loop.policy);
    validate(loop.cost, loop.plant);
  }
  if (config.burn_in < 0) throw ConfigError("burn_in must be >= 0");
  if (config.horizon <= config.burn_in) throw ConfigError("horizon must exceed burn_in");
  if (config.replications < 1) throw ConfigError("replications must be >= 1");
  if (config.crm.mode == AccessMode::kAsynchronous && config.offsets == OffsetMode::kExhaustive &&
      checked_power(config.crm.slots_per_sample, static_cast<long>(config.loops.size()) - 1) >
          kMaxExhaustiveOffsets)
    throw ConfigError("too many offset combinations for exhaustive enumeration");
}

int replication_count(const NetworkConfig& config) {
  if (config.crm.mode == AccessMode::kAsynchronous && config.offsets == OffsetMode::kExhaustive)
    return static_cast<int>(
        checked_power(config.crm.slots_per_sample, static_cast<long>(config.loops.size()) - 1));
  return config.replications;
}

std::vector<int> replication_offsets(const NetworkConfig& config, int replication) {
  const auto n = config.loops.size();
  std::vector<int> offsets(n, 0);
  if (config.crm.mode == AccessMode::kSynchronized) return offsets;
  const int T = config.crm.slots_per_sample;
  if (config.offsets == OffsetMode::kExhaustive) {
    long code = replication;
    for (std::size_t j = 1; j < n; ++j) {
      offsets[j] = static_cast<int>(code % T);
      code /= T;
    }
    return offsets;
  }
  Rng rng = make_stream(config.seed, static_cast<std::uint64_t>(replication), 0,
                        StreamPurpose::kOffsets);
  for (auto& o : offsets) o = std::min(T - 1, static_cast<int>(uniform01(rng) * T));
  return offsets;
}

Ratio make_ratio(std::uint64_t hits, std::uint64_t trials) {
  Ratio r;
  r.count = trials;
  if (trials == 0) return r;
  r.defined = true;
  r.estimate = static_cast<double>(hits) / static_cast<double>(trials);
  r.stderr_ = std::sqrt(r.estimate * (1.0 - r.estimate) / static_cast<double>(trials));
  return r;
}

NodeStats::NodeStats(int memory, int stages)
    : visits(static_cast<std::size_t>(memory) + 1, 0),
      events(static_cast<std::size_t>(memory) + 1, 0),
      attempts(static_cast<std::size_t>(stages), 0),
      busy(static_cast<std::size_t>(stages), 0) {}

void NodeStats::merge(const NodeStats& other) {
  samples += other.samples;
  successes += other.successes;
  add_into(visits, other.visits);
  add_into(events, other.events);
  add_into(attempts, other.attempts);
  add_into(busy, other.busy);
  add_into(reception_delay, other.reception_delay);
  add_into(delay_occupancy, other.delay_occupancy);
  cost_sum += other.cost_sum;
  first_half_samples += other.first_half_samples;
  first_half_successes += other.first_half_successes;
}

Ratio NodeStats::event_rate(int m) const {
  const auto i = static_cast<std::size_t>(m);
  if (i >= visits.size()) return {};
  return make_ratio(events[i], visits[i]);
}

Ratio NodeStats::busy_rate(int stage) const {
  const auto i = static_cast<std::size_t>(stage - 1);
  if (stage < 1 || i >= attempts.size()) return {};
  return make_ratio(busy[i], attempts[i]);
}

bool NodeStats::steady_state_consistent() const {
  const auto n1 = first_half_samples;
  const auto n2 = samples - first_half_samples;
  if (n1 == 0 || n2 == 0) return true;
  const double p1 = static_cast<double>(first_half_successes) / static_cast<double>(n1);
  const double p2 =
      static_cast<double>(successes - first_half_successes) / static_cast<double>(n2);
  const double se = std::sqrt(p1 * (1 - p1) / static_cast<double>(n1) +
                              p2 * (1 - p2) / static_cast<double>(n2));
  if (se == 0.0) return p1 == p2;
  return std::abs(p1 - p2) < 2.0 * se;
}

void SimStats::merge(const SimStats& other) {
  if (nodes.size() < other.nodes.size()) nodes.resize(other.nodes.size());
  for (std::size_t j = 0; j < other.nodes.size(); ++j) nodes[j].merge(other.nodes[j]);
  replications += other.replications;
}

NodeStats SimStats::pooled() const {
  NodeStats all;
  for (const auto& n : nodes) all.merge(n);
  return all;
}

ReplicationResult run_replication(const NetworkConfig& config, int replication,
                                  const SimOptions& opts) {
  validate(config);
  const auto n = config.loops.size();
  const int R = config.crm.retransmissions;

  ReplicationResult out;
  out.offsets = replication_offsets(config, replication);

  std::vector<NodeRuntime> nodes;
  nodes.reserve(n);
  for (std::size_t j = 0; j < n; ++j)
    nodes.emplace_back(config.loops[j], config, replication, static_cast<int>(j), out.offsets[j]);

  std::vector<Contender> contenders(n);
  std::vector<char> transmitted(n, 0);
  std::vector<Rng> access;
  access.reserve(n);
  for (std::size_t j = 0; j < n; ++j)
    access.push_back(make_stream(config.seed, static_cast<std::uint64_t>(replication),
                                 static_cast<std::uint64_t>(j), StreamPurpose::kAccess));

  std::vector<SampleRecord>* log = opts.record_samples ? &out.samples : nullptr;

  long remaining = static_cast<long>(n);
  for (long slot = 0; remaining > 0; ++slot) {
    for (std::size_t j = 0; j < n; ++j) {
      auto& node = nodes[j];
      if (contenders[j].active || node.sample_index() >= config.horizon ||
          node.next_slot() != slot)
        continue;
      if (node.begin_sample(config.burn_in)) {
        contenders[j] = {true, 0};
      } else {
        node.finish_sample(false, config, log, static_cast<int>(j));
        if (node.sample_index() >= config.horizon) --remaining;
      }
    }

    const SlotResolution res = resolve_slot(contenders, access, config.crm, transmitted);
    for (std::size_t j = 0; j < n; ++j) {
      if (!contenders[j].active) continue;
      auto& node = nodes[j];
      const bool retained = node.sample_index() >= config.burn_in;
      const auto stage = static_cast<std::size_t>(contenders[j].stage);
      if (transmitted[j]) {
        if (retained) {
          ++node.stats().attempts[stage];
          if (res.transmitters > 1) ++node.stats().busy[stage];
        }
        if (opts.record_trace)
          out.trace.push_back({slot, replication, static_cast<int>(j), node.sample_index(),
                               contenders[j].stage + 1, res.transmitters,
                               res.winner == static_cast<int>(j)});
      }
      bool done = false;
      bool delivered = false;
      if (res.winner == static_cast<int>(j)) {
        done = delivered = true;
      } else if (++contenders[j].stage == R) {
        done = true;
      }
      if (done) {
        contenders[j].active = false;
        node.finish_sample(delivered, config, log, static_cast<int>(j));
        if (node.sample_index() >= config.horizon) --remaining;
      }
    }
  }

  out.stats.replications = 1;
  out.stats.nodes.reserve(n);
  for (auto& node : nodes) out.stats.nodes.push_back(node.stats());
  return out;
}

SimResult run_serial(const NetworkConfig& config, const SimOptions& opts) {
  validate(config);
  const int reps = replication_count(config);
  SimResult result;
  result.replications.resize(static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r)
    result.replications[static_cast<std::size_t>(r)] = run_replication(config, r, opts);
  for (const auto& rep : result.replications) result.total.merge(rep.stats);
  return result;
}

SimResult run(const NetworkConfig& config, const SimOptions& opts) {
  validate(config);
  const int reps = replication_count(config);
  SimResult result;
  result.replications.resize(static_cast<std::size_t>(reps));
  // Exceptions must not escape an OpenMP region.
  std::vector<std::string> errors(static_cast<std::size_t>(reps));
#pragma omp parallel for schedule(dynamic)
  for (int r = 0; r < reps; ++r) {
    try {
      result.replications[static_cast<std::size_t>(r)] = run_replication(config, r, opts);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(r)] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw InternalError("replication failed: " + e);
  for (const auto& rep : result.replications) result.total.merge(rep.stats);
  return result;
}

std::vector<StepOutcome> crm_round(const std::vector<bool>& intents, std::span<Rng> access_rngs,
                                   const CrmConfig& crm, const std::vector<int>& offsets) {
  validate(crm);
  const auto n = intents.size();
  if (access_rngs.size() != n || offsets.size() != n)
    throw ConfigError("crm_round: intents, streams and offsets must have equal length");

  std::vector<StepOutcome> out(n);
  std::vector<Contender> contenders(n);
  std::vector<char> transmitted(n, 0);
  std::vector<char> started(n, 0);
  long last_slot = 0;
  for (std::size_t j = 0; j < n; ++j) {
    out[j].gamma = intents[j];
    out[j].alpha.assign(static_cast<std::size_t>(crm.retransmissions), false);
    if (offsets[j] < 0) throw ConfigError("crm_round: offsets must be >= 0");
    if (intents[j]) last_slot = std::max<long>(last_slot, offsets[j] + crm.retransmissions - 1);
  }

  for (long slot = 0; slot <= last_slot; ++slot) {
    for (std::size_t j = 0; j < n; ++j)
      if (intents[j] && !started[j] && offsets[j] == slot) {
        contenders[j] = {true, 0};
        started[j] = 1;
      }
    const SlotResolution res = resolve_slot(contenders, access_rngs, crm, transmitted);
    for (std::size_t j = 0; j < n; ++j) {
      if (!contenders[j].active) continue;
      const int stage = contenders[j].stage;
      if (transmitted[j]) out[j].alpha[static_cast<std::size_t>(stage)] = true;
      if (res.winner == static_cast<int>(j)) {
        out[j].delta = true;
        out[j].success_stage = stage + 1;
        contenders[j].active = false;
      } else if (++contenders[j].stage == crm.retransmissions) {
        contenders[j].active = false;
      }
    }
  }
  return out;
}

std::vector<std::vector<std::optional<double>>> measure_busy(std::span<const SlotEvent> trace,
                                                             int nodes, int stages) {
  const auto n = static_cast<std::size_t>(nodes);
  const auto r = static_cast<std::size_t>(stages);
  std::vector<std::vector<std::uint64_t>> attempts(n, std::vector<std::uint64_t>(r, 0));
  std::vector<std::vector<std::uint64_t>> busy = attempts;
  for (const auto& ev : trace) {
    if (ev.node < 0 || ev.node >= nodes || ev.stage < 1 || ev.stage > stages) continue;
    const auto j = static_cast<std::size_t>(ev.node);
    const auto s = static_cast<std::size_t>(ev.stage - 1);
    ++attempts[j][s];
    if (ev.transmitters > 1) ++busy[j][s];
  }
  std::vector<std::vector<std::optional<double>>> out(n, std::vector<std::optional<double>>(r));
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t s = 0; s < r; ++s)
      if (attempts[j][s] > 0)
        out[j][s] = static_cast<double>(busy[j][s]) / static_cast<double>(attempts[j][s]);
  return out;
}

double lqg_cost(std::span<const Vector> states, std::span<const Vector> controls,
                const CostConfig& cost) {
  if (states.size() != controls.size())
    throw ConfigError("lqg_cost: state and control logs differ in length");
  if (states.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i) sum += stage_cost(states[i], controls[i], cost);
  return sum / static_cast<double>(states.size());
}

EmpiricalDelay empirical_delay(const NodeStats& stats) {
  EmpiricalDelay out;
  out.samples = stats.samples;
  out.receptions = stats.successes;
  out.empty = stats.successes == 0;
  if (stats.samples == 0) return out;
  const auto n = static_cast<double>(stats.samples);
  if (!out.empty) {
    out.reception.resize(stats.reception_delay.size());
    for (std::size_t z = 0; z < stats.reception_delay.size(); ++z)
      out.reception[z] = static_cast<double>(stats.reception_delay[z]) / n;
  }
  out.occupancy.resize(stats.delay_occupancy.size());
  for (std::size_t z = 0; z < stats.delay_occupancy.size(); ++z)
    out.occupancy[z] = static_cast<double>(stats.delay_occupancy[z]) / n;
  return out;
}

}  // namespace event_net
