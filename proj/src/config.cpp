#include "event_net/config.hpp"

#include "event_net/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace event_net {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// A JSON node together with its path, so schema errors can point at the field.
struct Node {
  const json& value;
  std::string path;

  [[noreturn]] void fail(const std::string& message) const {
    throw ConfigError((path.empty() ? std::string("/") : path) + ": " + message);
  }

  bool has(const char* key) const { return value.is_object() && value.contains(key); }

  Node at(const char* key) const {
    if (!has(key)) fail(std::string("missing required field '") + key + "'");
    return {value.at(key), path + "/" + key};
  }

  Node at(std::size_t i) const { return {value.at(i), path + "/" + std::to_string(i)}; }

  double number() const {
    if (!value.is_number()) fail("expected a number");
    const double v = value.get<double>();
    if (!std::isfinite(v)) fail("expected a finite number");
    return v;
  }

  long integer() const {
    if (!value.is_number_integer()) fail("expected an integer");
    return value.get<long>();
  }

  std::uint64_t unsigned_integer() const {
    if (!value.is_number_unsigned()) fail("expected a non-negative integer");
    return value.get<std::uint64_t>();
  }

  std::string string() const {
    if (!value.is_string()) fail("expected a string");
    return value.get<std::string>();
  }

  std::vector<double> numbers() const {
    if (!value.is_array()) fail("expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < value.size(); ++i) out.push_back(at(i).number());
    return out;
  }

  // A number (1x1) or an array of rows.
  Matrix matrix() const {
    if (value.is_number()) return Matrix::Constant(1, 1, number());
    if (!value.is_array() || value.empty()) fail("expected a number or an array of rows");
    const auto rows = value.size();
    std::size_t cols = 0;
    for (std::size_t i = 0; i < rows; ++i) {
      const Node row = at(i);
      if (!row.value.is_array() || row.value.empty()) row.fail("expected a non-empty row");
      if (i == 0) cols = row.value.size();
      if (row.value.size() != cols) row.fail("rows must have equal length");
    }
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = at(i).at(j).number();
    return m;
  }

  void allow_only(std::initializer_list<const char*> keys) const {
    if (!value.is_object()) fail("expected an object");
    for (const auto& [k, v] : value.items()) {
      bool known = false;
      for (const char* key : keys) known = known || k == key;
      if (!known) fail("unknown field '" + k + "'");
    }
  }
};

template <typename Fn>
void rethrow_at(const Node& node, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    node.fail(e.what());
  }
}

ordered_json matrix_json(const Matrix& m) {
  if (m.rows() == 1 && m.cols() == 1) return m(0, 0);
  ordered_json rows = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

PlantModel parse_plant(const Node& n) {
  n.allow_only({"A", "B", "Rw", "R0", "L"});
  PlantModel p;
  p.A = n.at("A").matrix();
  p.B = n.at("B").matrix();
  const auto dim = p.A.rows();
  p.Rw = n.has("Rw") ? n.at("Rw").matrix() : Matrix::Identity(dim, dim);
  p.R0 = n.has("R0") ? n.at("R0").matrix() : Matrix::Identity(dim, dim);
  if (n.has("L")) {
    p.L = n.at("L").matrix();
  } else {
    if (p.B.rows() != p.A.rows()) n.at("B").fail("B must have as many rows as A");
    p.L = deadbeat_gain(p.A, p.B);
  }
  rethrow_at(n, [&] { validate(p); });
  return p;
}

TriggerPolicy parse_trigger(const Node& n) {
  n.allow_only({"memory", "threshold", "thresholds", "event_probs"});
  TriggerPolicy t;
  t.memory = n.has("memory") ? static_cast<int>(n.at("memory").integer()) : 1;
  if (t.memory < 1) n.at("memory").fail("memory limit F must be >= 1");
  const int given = n.has("threshold") + n.has("thresholds") + n.has("event_probs");
  if (given != 1) n.fail("exactly one of 'threshold', 'thresholds' or 'event_probs' is required");
  const auto entries = static_cast<std::size_t>(t.memory) + 1;
  if (n.has("threshold")) {
    t = TriggerPolicy::uniform_threshold(t.memory, n.at("threshold").number());
  } else if (n.has("thresholds")) {
    const Node th = n.at("thresholds");
    t.mode = TriggerMode::kThreshold;
    t.thresholds = th.value.is_number() ? std::vector<double>(entries, th.number()) : th.numbers();
    if (t.thresholds.size() != entries) th.fail("expected F+1 = " + std::to_string(entries) + " entries");
  } else {
    const Node ep = n.at("event_probs");
    t.mode = TriggerMode::kProbability;
    t.event_probs = ep.numbers();
    if (t.event_probs.size() != entries) ep.fail("expected F+1 = " + std::to_string(entries) + " entries");
  }
  rethrow_at(n, [&] { validate(t); });
  return t;
}

CrmConfig parse_crm(const Node& n) {
  n.allow_only({"retransmissions", "persistence", "slots_per_sample", "mode"});
  CrmConfig c;
  c.retransmissions = n.has("retransmissions") ? static_cast<int>(n.at("retransmissions").integer()) : 1;
  if (c.retransmissions < 1) n.at("retransmissions").fail("R must be >= 1");
  const auto stages = static_cast<std::size_t>(c.retransmissions);
  const Node p = n.at("persistence");
  c.persistence = p.value.is_number() ? std::vector<double>(stages, p.number()) : p.numbers();
  if (c.persistence.size() != stages)
    p.fail("persistence has " + std::to_string(c.persistence.size()) +
           " entries but R = " + std::to_string(stages));
  c.slots_per_sample = n.has("slots_per_sample") ? static_cast<int>(n.at("slots_per_sample").integer())
                                                 : c.retransmissions;
  if (n.has("mode")) {
    const auto mode = n.at("mode").string();
    if (mode == "synchronized")
      c.mode = AccessMode::kSynchronized;
    else if (mode == "asynchronous")
      c.mode = AccessMode::kAsynchronous;
    else
      n.at("mode").fail("expected 'synchronized' or 'asynchronous'");
  }
  rethrow_at(n, [&] { validate(c); });
  return c;
}

LoopGroup parse_group(const Node& n) {
  n.allow_only({"count", "plant", "trigger", "cost"});
  LoopGroup g;
  g.count = n.has("count") ? static_cast<int>(n.at("count").integer()) : 1;
  if (g.count < 1) n.at("count").fail("count must be >= 1");
  g.loop.plant = parse_plant(n.at("plant"));
  g.loop.policy = parse_trigger(n.at("trigger"));
  g.loop.cost = CostConfig::state_only(g.loop.plant.state_dim(), g.loop.plant.input_dim());
  if (n.has("cost")) {
    const Node c = n.at("cost");
    c.allow_only({"Q1", "Q2"});
    if (c.has("Q1")) g.loop.cost.Q1 = c.at("Q1").matrix();
    if (c.has("Q2")) g.loop.cost.Q2 = c.at("Q2").matrix();
    rethrow_at(c, [&] { validate(g.loop.cost, g.loop.plant); });
  }
  return g;
}

SweepSpec parse_sweep(const Node& n) {
  n.allow_only({"parameter", "start", "stop", "step", "values"});
  SweepSpec s;
  const auto param = n.at("parameter").string();
  if (param == "threshold")
    s.parameter = SweepParameter::kThreshold;
  else if (param == "persistence")
    s.parameter = SweepParameter::kPersistence;
  else if (param == "event_prob")
    s.parameter = SweepParameter::kEventProb;
  else
    n.at("parameter").fail("expected 'threshold', 'persistence' or 'event_prob'");

  if (n.has("values")) {
    if (n.has("start") || n.has("stop") || n.has("step")) n.fail("give either 'values' or a range");
    s.values = n.at("values").numbers();
  } else {
    const double start = n.at("start").number();
    const double stop = n.at("stop").number();
    const double step = n.at("step").number();
    if (step <= 0.0) n.at("step").fail("step must be > 0");
    if (stop < start) n.at("stop").fail("stop must be >= start");
    const auto count = static_cast<long>(std::floor((stop - start) / step + 1e-9)) + 1;
    if (count > 100000) n.fail("sweep has too many points");
    for (long i = 0; i < count; ++i) s.values.push_back(start + static_cast<double>(i) * step);
  }
  if (s.values.empty()) n.fail("sweep range is empty");
  return s;
}

std::optional<NetworkSetting> parse_setting(const Node& n) {
  const auto v = n.string();
  if (v == "auto") return std::nullopt;
  if (v == "no_retx") return NetworkSetting::kNoRetransmissions;
  if (v == "retx") return NetworkSetting::kRetransmissions;
  if (v == "async") return NetworkSetting::kAsynchronous;
  n.fail("expected 'auto', 'no_retx', 'retx' or 'async'");
}

const char* offsets_name(OffsetMode m) { return m == OffsetMode::kRandom ? "random" : "exhaustive"; }

const char* sweep_name(SweepParameter p) {
  switch (p) {
    case SweepParameter::kThreshold: return "threshold";
    case SweepParameter::kPersistence: return "persistence";
    case SweepParameter::kEventProb: return "event_prob";
  }
  return "unknown";
}

}  // namespace

const char* SweepSpec::name() const { return sweep_name(parameter); }

NetworkSetting ExperimentConfig::setting() const {
  if (analysis) return *analysis;
  if (network.crm.mode == AccessMode::kAsynchronous) return NetworkSetting::kAsynchronous;
  return network.crm.retransmissions == 1 ? NetworkSetting::kNoRetransmissions
                                          : NetworkSetting::kRetransmissions;
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // Translate the byte offset into a line and column.
    std::size_t line = 1, col = 1;
    const auto end = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::string msg = e.what();
    if (const auto pos = msg.find("syntax error"); pos != std::string::npos) msg = msg.substr(pos);
    throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + msg);
  }

  const Node root{doc, ""};
  root.allow_only({"name", "seed", "horizon", "burn_in", "replications", "offsets", "crm", "loops",
                   "analysis", "async_averaging", "solver", "max_delay", "sweep", "calibration",
                   "compare"});

  ExperimentConfig cfg;
  cfg.source = source;
  cfg.name = root.has("name") ? root.at("name").string() : "";
  auto& net = cfg.network;
  net.seed = root.has("seed") ? root.at("seed").unsigned_integer() : 1;
  net.burn_in = root.has("burn_in") ? root.at("burn_in").integer() : 1000;
  if (net.burn_in < 0) root.at("burn_in").fail("burn_in must be >= 0");
  net.horizon = root.has("horizon") ? root.at("horizon").integer() : net.burn_in + 100000;
  if (net.horizon <= net.burn_in) root.at("horizon").fail("horizon must exceed burn_in");
  net.crm = parse_crm(root.at("crm"));
  const bool async = net.crm.mode == AccessMode::kAsynchronous;
  net.replications = root.has("replications") ? static_cast<int>(root.at("replications").integer())
                                              : (async ? 64 : 1);
  if (net.replications < 1) root.at("replications").fail("replications must be >= 1");
  if (root.has("offsets")) {
    const auto v = root.at("offsets").string();
    if (v == "random")
      net.offsets = OffsetMode::kRandom;
    else if (v == "exhaustive")
      net.offsets = OffsetMode::kExhaustive;
    else
      root.at("offsets").fail("expected 'random' or 'exhaustive'");
  }

  const Node loops = root.at("loops");
  if (!loops.value.is_array()) loops.fail("expected an array of loop groups");
  if (loops.value.empty()) loops.fail("at least one loop is required");
  for (std::size_t i = 0; i < loops.value.size(); ++i) cfg.groups.push_back(parse_group(loops.at(i)));

  if (root.has("analysis")) cfg.analysis = parse_setting(root.at("analysis"));
  if (cfg.analysis == NetworkSetting::kAsynchronous && !async)
    root.at("analysis").fail("'async' analysis requires crm.mode = 'asynchronous'");
  if (cfg.analysis && *cfg.analysis != NetworkSetting::kAsynchronous && async)
    root.at("analysis").fail("asynchronous CRM requires 'async' analysis");
  if (cfg.analysis == NetworkSetting::kNoRetransmissions && net.crm.retransmissions != 1)
    root.at("analysis").fail("'no_retx' analysis requires R = 1");

  cfg.solver.slots_per_sample = net.crm.slots_per_sample;
  if (root.has("async_averaging")) {
    const auto v = root.at("async_averaging").string();
    if (v == "slots")
      cfg.solver.async_averaging = AsyncAveraging::kSlots;
    else if (v == "stages")
      cfg.solver.async_averaging = AsyncAveraging::kStages;
    else
      root.at("async_averaging").fail("expected 'slots' or 'stages'");
  }
  if (root.has("solver")) {
    const Node s = root.at("solver");
    s.allow_only({"damping", "tolerance", "max_iterations"});
    if (s.has("damping")) cfg.solver.damping = s.at("damping").number();
    if (s.has("tolerance")) cfg.solver.tolerance = s.at("tolerance").number();
    if (s.has("max_iterations")) cfg.solver.max_iterations = s.at("max_iterations").integer();
    if (!(cfg.solver.damping >= 0.0 && cfg.solver.damping < 1.0)) s.fail("damping must lie in [0,1)");
    if (!(cfg.solver.tolerance > 0.0)) s.fail("tolerance must be > 0");
    if (cfg.solver.max_iterations < 1) s.fail("max_iterations must be >= 1");
  }

  int max_memory = 1;
  for (const auto& g : cfg.groups) max_memory = std::max(max_memory, g.loop.policy.memory);
  cfg.max_delay = root.has("max_delay") ? static_cast<int>(root.at("max_delay").integer()) : 10 * max_memory;
  if (cfg.max_delay < max_memory) root.at("max_delay").fail("max_delay must be >= F");

  if (root.has("sweep")) cfg.sweep = parse_sweep(root.at("sweep"));

  if (root.has("calibration")) {
    const Node c = root.at("calibration");
    c.allow_only({"targets", "tolerance", "max_iterations", "pilot_horizon", "initial_upper"});
    auto& b = cfg.calibration.bisection;
    if (c.has("targets")) {
      cfg.calibration.targets = c.at("targets").numbers();
      for (std::size_t i = 0; i < cfg.calibration.targets.size(); ++i) {
        const double t = cfg.calibration.targets[i];
        if (!(t > 0.0 && t < 1.0)) c.at("targets").at(i).fail("targets must lie strictly inside (0,1)");
      }
      if (!cfg.calibration.targets.empty() &&
          cfg.calibration.targets.size() != static_cast<std::size_t>(max_memory) + 1)
        c.at("targets").fail("expected F+1 entries");
    }
    if (c.has("tolerance")) b.tolerance = c.at("tolerance").number();
    if (c.has("max_iterations")) b.max_iterations = static_cast<int>(c.at("max_iterations").integer());
    if (c.has("pilot_horizon")) b.pilot_horizon = c.at("pilot_horizon").integer();
    if (c.has("initial_upper")) b.initial_upper = c.at("initial_upper").number();
    if (!(b.tolerance > 0.0)) c.fail("tolerance must be > 0");
    if (b.max_iterations < 1) c.fail("max_iterations must be >= 1");
    if (b.pilot_horizon < 1) c.fail("pilot_horizon must be >= 1");
    if (!(b.initial_upper > 0.0)) c.fail("initial_upper must be > 0");
  }

  if (root.has("compare")) {
    const Node c = root.at("compare");
    c.allow_only({"simulation", "analysis", "tolerance", "metrics"});
    CompareSpec cs;
    if (c.has("simulation")) cs.simulation = c.at("simulation").string();
    if (c.has("analysis")) cs.analysis = c.at("analysis").string();
    if (c.has("tolerance")) cs.tolerance = c.at("tolerance").number();
    if (!(cs.tolerance >= 0.0)) c.at("tolerance").fail("tolerance must be >= 0");
    if (c.has("metrics")) {
      const Node m = c.at("metrics");
      if (!m.value.is_array() || m.value.empty()) m.fail("expected a non-empty array of metric names");
      cs.metrics.clear();
      for (std::size_t i = 0; i < m.value.size(); ++i) cs.metrics.push_back(m.at(i).string());
    }
    cfg.compare = cs;
  }

  finalize(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError("cannot read config '" + path + "'");
  return parse_config(buffer.str(), path);
}

void finalize(ExperimentConfig& config) {
  if (config.groups.empty()) throw ConfigError("/loops: at least one loop is required");
  config.network.loops.clear();
  for (const auto& g : config.groups)
    for (int i = 0; i < g.count; ++i) config.network.loops.push_back(g.loop);
  config.solver.slots_per_sample = config.network.crm.slots_per_sample;
  validate(config.network);
  config.resolved = to_json(config);
  config.hash = fnv1a_hex(config.resolved.dump());
}

ordered_json to_json(const ExperimentConfig& c) {
  const auto& net = c.network;
  ordered_json j;
  j["name"] = c.name;
  j["seed"] = net.seed;
  j["horizon"] = net.horizon;
  j["burn_in"] = net.burn_in;
  j["replications"] = net.replications;
  j["offsets"] = offsets_name(net.offsets);
  j["crm"] = {{"retransmissions", net.crm.retransmissions},
              {"persistence", net.crm.persistence},
              {"slots_per_sample", net.crm.slots_per_sample},
              {"mode", net.crm.mode == AccessMode::kSynchronized ? "synchronized" : "asynchronous"}};
  ordered_json loops = ordered_json::array();
  for (const auto& g : c.groups) {
    const auto& p = g.loop.plant;
    ordered_json trig;
    trig["memory"] = g.loop.policy.memory;
    if (g.loop.policy.mode == TriggerMode::kThreshold)
      trig["thresholds"] = g.loop.policy.thresholds;
    else
      trig["event_probs"] = g.loop.policy.event_probs;
    loops.push_back({{"count", g.count},
                     {"plant",
                      {{"A", matrix_json(p.A)},
                       {"B", matrix_json(p.B)},
                       {"Rw", matrix_json(p.Rw)},
                       {"R0", matrix_json(p.R0)},
                       {"L", matrix_json(p.L)}}},
                     {"trigger", trig},
                     {"cost", {{"Q1", matrix_json(g.loop.cost.Q1)}, {"Q2", matrix_json(g.loop.cost.Q2)}}}});
  }
  j["loops"] = loops;
  j["analysis"] = to_string(c.setting());
  j["async_averaging"] = c.solver.async_averaging == AsyncAveraging::kSlots ? "slots" : "stages";
  j["solver"] = {{"damping", c.solver.damping},
                 {"tolerance", c.solver.tolerance},
                 {"max_iterations", c.solver.max_iterations}};
  j["max_delay"] = c.max_delay;
  if (c.sweep) j["sweep"] = {{"parameter", c.sweep->name()}, {"values", c.sweep->values}};
  const auto& b = c.calibration.bisection;
  j["calibration"] = {{"targets", c.calibration.targets},
                      {"tolerance", b.tolerance},
                      {"max_iterations", b.max_iterations},
                      {"pilot_horizon", b.pilot_horizon},
                      {"initial_upper", b.initial_upper}};
  if (c.compare)
    j["compare"] = {{"simulation", c.compare->simulation},
                    {"analysis", c.compare->analysis},
                    {"tolerance", c.compare->tolerance},
                    {"metrics", c.compare->metrics}};
  return j;
}

std::vector<NodeChainSpec> chain_specs(const NetworkConfig& network,
                                       const std::vector<std::vector<double>>& measured) {
  std::vector<NodeChainSpec> specs;
  for (std::size_t j = 0; j < network.loops.size(); ++j) {
    const auto& policy = network.loops[j].policy;
    NodeChainSpec s;
    s.memory = policy.memory;
    s.persistence = network.crm.persistence;
    if (policy.mode == TriggerMode::kProbability) {
      s.event_probs = policy.event_probs;
    } else {
      if (j >= measured.size())
        throw ConfigError("threshold-mode loop " + std::to_string(j) +
                          " has no measured event probabilities");
      s.event_probs = measured[j];
    }
    specs.push_back(std::move(s));
  }
  return specs;
}

NetworkConfig apply_sweep(const NetworkConfig& network, SweepParameter parameter, double value) {
  NetworkConfig out = network;
  switch (parameter) {
    case SweepParameter::kThreshold:
      for (auto& loop : out.loops) loop.policy = TriggerPolicy::uniform_threshold(loop.policy.memory, value);
      break;
    case SweepParameter::kEventProb:
      for (auto& loop : out.loops)
        loop.policy = TriggerPolicy::probabilities(
            std::vector<double>(static_cast<std::size_t>(loop.policy.memory) + 1, value));
      break;
    case SweepParameter::kPersistence:
      std::fill(out.crm.persistence.begin(), out.crm.persistence.end(), value);
      break;
  }
  validate(out);
  return out;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace event_net
