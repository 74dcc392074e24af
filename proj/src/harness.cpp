#include "event_net/harness.hpp"

#include "event_net/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace event_net {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

Row ratio_row(const std::string& sp, double value, const std::string& node, const std::string& metric,
              const Ratio& r) {
  Row row{sp, value, node, metric, "sim", r.estimate, r.stderr_, r.count};
  return row;
}

Row plain_row(const std::string& sp, double value, const std::string& node, const std::string& metric,
              const std::string& method, double estimate) {
  return Row{sp, value, node, metric, method, estimate, std::nullopt, std::nullopt};
}

void node_sim_rows(std::vector<Row>& out, const NodeStats& n, const std::string& node, int max_delay,
                   const std::string& sp, double value) {
  out.push_back(ratio_row(sp, value, node, "p_delta", n.reliability()));
  for (int r = 1; r <= static_cast<int>(n.attempts.size()); ++r) {
    const Ratio b = n.busy_rate(r);
    if (b.defined) out.push_back(ratio_row(sp, value, node, "p_busy_" + std::to_string(r), b));
  }
  for (int m = 0; m < static_cast<int>(n.visits.size()); ++m) {
    const Ratio g = n.event_rate(m);
    if (g.defined) out.push_back(ratio_row(sp, value, node, "p_gamma_" + std::to_string(m), g));
  }
  Row cost = plain_row(sp, value, node, "lqg_cost", "sim", n.lqg_cost());
  cost.count = n.samples;
  out.push_back(cost);

  const EmpiricalDelay d = empirical_delay(n);
  double rec_tail = 0.0, occ_tail = 0.0;
  for (std::size_t z = 0; z < d.reception.size(); ++z)
    if (static_cast<int>(z) > max_delay) rec_tail += d.reception[z];
  for (std::size_t z = 0; z < d.occupancy.size(); ++z)
    if (static_cast<int>(z) > max_delay) occ_tail += d.occupancy[z];
  for (int z = 0; z <= max_delay; ++z) {
    const auto zi = static_cast<std::size_t>(z);
    const double rec = zi < d.reception.size() ? d.reception[zi] : 0.0;
    const double occ = zi < d.occupancy.size() ? d.occupancy[zi] : 0.0;
    out.push_back(plain_row(sp, value, node, "delay_reception_" + std::to_string(z), "sim", rec));
    out.push_back(plain_row(sp, value, node, "delay_occupancy_" + std::to_string(z), "sim", occ));
  }
  out.push_back(plain_row(sp, value, node, "delay_reception_tail", "sim", rec_tail));
  out.push_back(plain_row(sp, value, node, "delay_occupancy_tail", "sim", occ_tail));
}

void node_analysis_rows(std::vector<Row>& out, const SteadyState& ss, std::size_t j, int max_delay,
                        const std::string& sp, double value) {
  const auto& n = ss.nodes[j];
  const auto& spec = ss.specs[j];
  const std::string node = std::to_string(j);
  auto add = [&](const std::string& metric, double v) {
    out.push_back(plain_row(sp, value, node, metric, "analysis", v));
  };
  add("p_delta", n.reliability);
  for (std::size_t r = 0; r < n.busy.size(); ++r) add("p_busy_" + std::to_string(r + 1), n.busy[r]);
  for (std::size_t r = 0; r < n.tx_stage.size(); ++r) add("p_tx_" + std::to_string(r + 1), n.tx_stage[r]);
  add("p_tx", n.p_tx);
  for (std::size_t m = 0; m < n.idle.size(); ++m) add("p_idle_" + std::to_string(m), n.idle[m]);
  for (std::size_t m = 0; m < spec.event_probs.size(); ++m)
    add("p_gamma_" + std::to_string(m), spec.event_probs[m]);
  add("success_given_event", n.success_given_event);
  const int delay_max = std::max(max_delay, spec.memory);
  const DelayDistribution d = delay_distribution(ss, j, delay_max);
  for (int z = 0; z <= max_delay; ++z) {
    add("delay_reception_" + std::to_string(z), d.reception[static_cast<std::size_t>(z)]);
    add("delay_occupancy_" + std::to_string(z), d.occupancy[static_cast<std::size_t>(z)]);
  }
  double rec_tail = d.reception_tail, occ_tail = d.occupancy_tail;
  for (int z = max_delay + 1; z <= delay_max; ++z) {
    rec_tail += d.reception[static_cast<std::size_t>(z)];
    occ_tail += d.occupancy[static_cast<std::size_t>(z)];
  }
  add("delay_reception_tail", rec_tail);
  add("delay_occupancy_tail", occ_tail);
}

bool uses_thresholds(const NetworkConfig& network) {
  return std::any_of(network.loops.begin(), network.loops.end(),
                     [](const LoopConfig& l) { return l.policy.mode == TriggerMode::kThreshold; });
}

std::optional<int> common_memory(const NetworkConfig& network) {
  const int f = network.loops.front().policy.memory;
  for (const auto& l : network.loops)
    if (l.policy.memory != f) return std::nullopt;
  return f;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

std::string out_path(const RunOptions& opts, const std::string& file) {
  ensure_dir(opts.out_dir);
  return (fs::path(opts.out_dir) / file).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

void write_json(const std::string& path, const ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

ordered_json header(const std::string& command, const ExperimentConfig& config) {
  ordered_json j;
  j["command"] = command;
  j["config_hash"] = config.hash;
  j["seed"] = config.network.seed;
  return j;
}

ordered_json steady_state_summary(const SteadyState& ss) {
  ordered_json j;
  j["setting"] = to_string(ss.setting);
  j["iterations"] = ss.iterations;
  j["residual"] = ss.residual;
  double p_delta = 0.0;
  for (const auto& n : ss.nodes) p_delta += n.reliability;
  j["p_delta"] = p_delta / static_cast<double>(ss.nodes.size());
  ordered_json nodes = ordered_json::array();
  for (std::size_t i = 0; i < ss.nodes.size(); ++i) {
    const auto& n = ss.nodes[i];
    nodes.push_back({{"node", i},
                     {"p_delta", n.reliability},
                     {"p_busy", n.busy},
                     {"p_tx", n.p_tx},
                     {"p_idle", n.idle},
                     {"event_probs", ss.specs[i].event_probs}});
  }
  j["nodes"] = nodes;
  return j;
}

// Key used to match rows across tables; values are compared in their
// printed form.
using RowKey = std::tuple<std::string, std::string, std::string, std::string>;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(where + ": expected a number, got '" + s + "'");
  }
}

std::vector<Row> select_method(const std::vector<Row>& rows, const std::string& method) {
  std::vector<Row> out;
  for (const auto& r : rows)
    if (r.method == method) out.push_back(r);
  return out.empty() ? rows : out;
}

}  // namespace

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void write_csv(const std::string& path, const std::string& command, const ExperimentConfig& config,
               const std::vector<Row>& rows) {
  std::ostringstream out;
  out << "# event-net " << command << "\n";
  out << "# config_hash=" << config.hash << "\n";
  out << "# seed=" << config.network.seed << "\n";
  out << "# config=" << config.resolved.dump() << "\n";
  out << kCsvColumns << "\n";
  for (const auto& r : rows) {
    out << r.sweep_param << ',' << format_number(r.value) << ',' << r.node << ',' << r.metric << ','
        << r.method << ',' << format_number(r.estimate) << ',';
    if (r.stderr_) out << format_number(*r.stderr_);
    out << ',';
    if (r.count) out << *r.count;
    out << '\n';
  }
  write_text(path, out.str());
}

std::vector<Row> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<Row> rows;
  std::string line;
  bool header_seen = false;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::string where = path + ":" + std::to_string(line_no);
    if (!header_seen) {
      if (line != kCsvColumns) throw ConfigError(where + ": not a long-format event-net table");
      header_seen = true;
      continue;
    }
    const auto cells = split_csv_line(line);
    if (cells.size() != 8) throw ConfigError(where + ": expected 8 columns");
    Row r;
    r.sweep_param = cells[0];
    r.value = parse_double(cells[1], where);
    r.node = cells[2];
    r.metric = cells[3];
    r.method = cells[4];
    r.estimate = parse_double(cells[5], where);
    if (!cells[6].empty()) r.stderr_ = parse_double(cells[6], where);
    if (!cells[7].empty()) r.count = static_cast<std::uint64_t>(parse_double(cells[7], where));
    rows.push_back(std::move(r));
  }
  if (in.bad()) throw IoError("failed reading '" + path + "'");
  if (!header_seen) throw ConfigError(path + ": missing column header");
  return rows;
}

std::vector<Row> simulation_rows(const SimStats& stats, int max_delay, const std::string& sweep_param,
                                 double value) {
  std::vector<Row> out;
  for (std::size_t j = 0; j < stats.nodes.size(); ++j)
    node_sim_rows(out, stats.nodes[j], std::to_string(j), max_delay, sweep_param, value);
  node_sim_rows(out, stats.pooled(), "all", max_delay, sweep_param, value);
  return out;
}

std::vector<Row> replication_rows(const SimResult& sim, const std::string& sweep_param, double value) {
  std::vector<Row> out;
  for (std::size_t rep = 0; rep < sim.replications.size(); ++rep) {
    const auto& nodes = sim.replications[rep].stats.nodes;
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      const std::string node = std::to_string(j) + "@" + std::to_string(rep);
      out.push_back(ratio_row(sweep_param, value, node, "p_delta", nodes[j].reliability()));
      Row cost = plain_row(sweep_param, value, node, "lqg_cost", "sim", nodes[j].lqg_cost());
      cost.count = nodes[j].samples;
      out.push_back(cost);
    }
  }
  return out;
}

std::vector<Row> analysis_rows(const SteadyState& ss, int max_delay, const std::string& sweep_param,
                               double value) {
  std::vector<Row> out;
  for (std::size_t j = 0; j < ss.nodes.size(); ++j) node_analysis_rows(out, ss, j, max_delay, sweep_param, value);

  // Network averages.
  const auto count = static_cast<double>(ss.nodes.size());
  double p_delta = 0.0, p_tx = 0.0;
  std::vector<double> busy(ss.nodes.front().busy.size(), 0.0);
  for (const auto& n : ss.nodes) {
    p_delta += n.reliability;
    p_tx += n.p_tx;
    for (std::size_t r = 0; r < busy.size(); ++r) busy[r] += n.busy[r];
  }
  out.push_back(plain_row(sweep_param, value, "all", "p_delta", "analysis", p_delta / count));
  for (std::size_t r = 0; r < busy.size(); ++r)
    out.push_back(plain_row(sweep_param, value, "all", "p_busy_" + std::to_string(r + 1), "analysis",
                            busy[r] / count));
  out.push_back(plain_row(sweep_param, value, "all", "p_tx", "analysis", p_tx / count));
  return out;
}

std::vector<Row> calibration_rows(const CalibrationReport& report, const std::string& sweep_param, double value) {
  std::vector<Row> out;
  for (const auto& s : report.stages) {
    const std::string m = std::to_string(s.m);
    Row g{sweep_param, value, "all", "p_gamma_" + m, "calibration", s.achieved.estimate,
          s.achieved.stderr_, s.achieved.count};
    out.push_back(g);
    out.push_back(plain_row(sweep_param, value, "all", "threshold_" + m, "calibration", s.threshold));
    if (s.target > 0.0) out.push_back(plain_row(sweep_param, value, "all", "target_" + m, "calibration", s.target));
  }
  for (std::size_t j = 0; j < report.per_node.size(); ++j) {
    for (std::size_t m = 0; m < report.per_node[j].size(); ++m) {
      const Ratio& r = report.per_node[j][m];
      if (!r.defined) continue;
      out.push_back(Row{sweep_param, value, std::to_string(j), "p_gamma_" + std::to_string(m), "calibration",
                        r.estimate, r.stderr_, r.count});
    }
  }
  return out;
}

std::vector<std::vector<double>> measured_event_probs(const SimStats& stats, const NetworkConfig& network) {
  const NodeStats pooled = stats.pooled();
  std::vector<std::vector<double>> out;
  for (std::size_t j = 0; j < network.loops.size(); ++j) {
    const int memory = network.loops[j].policy.memory;
    std::vector<double> probs;
    for (int m = 0; m <= memory; ++m) {
      Ratio r = j < stats.nodes.size() ? stats.nodes[j].event_rate(m) : Ratio{};
      if (!r.defined) r = pooled.event_rate(m);
      if (r.defined)
        probs.push_back(r.estimate);
      else
        probs.push_back(probs.empty() ? 0.0 : probs.back());
    }
    out.push_back(std::move(probs));
  }
  return out;
}

SteadyState analyze_network(const NetworkConfig& network, NetworkSetting setting, const SolverOptions& solver,
                            const std::vector<std::vector<double>>& measured) {
  SolverOptions opts = solver;
  opts.slots_per_sample = network.crm.slots_per_sample;
  return solve(setting, chain_specs(network, measured), opts);
}

std::vector<SweepPoint> run_sweep(const ExperimentConfig& config) {
  if (!config.sweep) throw ConfigError("/sweep: missing required field 'sweep'");
  std::vector<SweepPoint> points;
  for (double v : config.sweep->values) {
    const NetworkConfig net = apply_sweep(config.network, config.sweep->parameter, v);
    SweepPoint p;
    p.value = v;
    p.sim = run(net).total;
    std::vector<std::vector<double>> measured;
    if (uses_thresholds(net)) {
      measured = measured_event_probs(p.sim, net);
      if (const auto f = common_memory(net)) {
        p.calibration = probs_from_stats(p.sim, *f);
        for (auto& s : p.calibration->stages)
          s.threshold = net.loops.front().policy.thresholds[static_cast<std::size_t>(s.m)];
        p.calibration->horizon = net.horizon;
      }
    }
    p.analysis = analyze_network(net, config.setting(), config.solver, measured);
    points.push_back(std::move(p));
  }
  return points;
}

std::vector<Row> sweep_rows(const std::vector<SweepPoint>& points, const ExperimentConfig& config) {
  std::vector<Row> out;
  const std::string sp = config.sweep ? config.sweep->name() : "none";
  for (const auto& p : points) {
    auto sim = simulation_rows(p.sim, config.max_delay, sp, p.value);
    auto ana = analysis_rows(p.analysis, config.max_delay, sp, p.value);
    out.insert(out.end(), sim.begin(), sim.end());
    out.insert(out.end(), ana.begin(), ana.end());
    if (p.calibration) {
      auto cal = calibration_rows(*p.calibration, sp, p.value);
      out.insert(out.end(), cal.begin(), cal.end());
    }
  }
  return out;
}

CompareReport compare_tables(const std::vector<Row>& first, const std::vector<Row>& second, double tolerance,
                             const std::vector<std::string>& metric_prefixes) {
  const auto a = select_method(first, "sim");
  const auto b = select_method(second, "analysis");

  auto grid = [](const std::vector<Row>& rows) {
    std::set<std::pair<std::string, std::string>> g;
    for (const auto& r : rows) g.emplace(r.sweep_param, format_number(r.value));
    return g;
  };
  const auto ga = grid(a), gb = grid(b);
  if (ga != gb)
    throw ConfigError("sweep grids differ (" + std::to_string(ga.size()) + " vs " + std::to_string(gb.size()) +
                      " points)");

  auto wanted = [&](const std::string& metric) {
    return std::any_of(metric_prefixes.begin(), metric_prefixes.end(),
                       [&](const std::string& p) { return metric.rfind(p, 0) == 0; });
  };
  std::map<RowKey, double> rhs;
  for (const auto& r : b)
    if (wanted(r.metric)) rhs[{r.sweep_param, format_number(r.value), r.node, r.metric}] = r.estimate;

  CompareReport report;
  report.tolerance = tolerance;
  std::map<RowKey, Deviation> matched;
  for (const auto& r : a) {
    if (!wanted(r.metric)) continue;
    const RowKey key{r.sweep_param, format_number(r.value), r.node, r.metric};
    const auto it = rhs.find(key);
    if (it == rhs.end()) continue;
    matched[key] = Deviation{r.sweep_param, r.value, r.node, r.metric, r.estimate, it->second,
                             std::abs(r.estimate - it->second)};
  }
  if (matched.empty()) throw ConfigError("the two tables share no comparable metric");
  for (auto& [key, d] : matched) {
    report.max_deviation = std::max(report.max_deviation, d.deviation);
    report.entries.push_back(d);
  }
  report.pass = report.max_deviation <= tolerance;
  return report;
}

ordered_json cmd_simulate(const ExperimentConfig& config, const RunOptions& opts) {
  SimOptions so;
  so.record_trace = opts.verbose;
  const SimResult sim = run(config.network, so);

  auto rows = simulation_rows(sim.total, config.max_delay);
  const auto reps = replication_rows(sim);
  rows.insert(rows.end(), reps.begin(), reps.end());
  write_csv(out_path(opts, "simulate.csv"), "simulate", config, rows);

  if (opts.verbose) {
    std::ostringstream trace;
    for (const auto& rep : sim.replications)
      for (const auto& e : rep.trace)
        trace << ordered_json{{"replication", e.replication}, {"slot", e.slot},       {"node", e.node},
                              {"sample", e.sample},           {"stage", e.stage},     {"transmitters", e.transmitters},
                              {"success", e.success}}
                     .dump()
              << "\n";
    write_text(out_path(opts, "trace.jsonl"), trace.str());
  }

  const NodeStats all = sim.total.pooled();
  ordered_json s = header("simulate", config);
  s["network_size"] = config.network.loops.size();
  s["replications"] = sim.total.replications;
  s["retained_periods"] = config.network.horizon - config.network.burn_in;
  const Ratio rel = all.reliability();
  s["p_delta"] = rel.estimate;
  s["p_delta_stderr"] = rel.stderr_;
  ordered_json busy = ordered_json::array();
  for (int r = 1; r <= static_cast<int>(all.attempts.size()); ++r) {
    const Ratio b = all.busy_rate(r);
    busy.push_back(b.defined ? ordered_json(b.estimate) : ordered_json(nullptr));
  }
  s["p_busy"] = busy;
  ordered_json gamma = ordered_json::array();
  for (int m = 0; m < static_cast<int>(all.visits.size()); ++m) {
    const Ratio g = all.event_rate(m);
    gamma.push_back(g.defined ? ordered_json(g.estimate) : ordered_json(nullptr));
  }
  s["p_gamma"] = gamma;
  s["lqg_cost"] = all.lqg_cost();
  s["steady_state_consistent"] = all.steady_state_consistent();
  ordered_json nodes = ordered_json::array();
  for (std::size_t j = 0; j < sim.total.nodes.size(); ++j) {
    const auto& n = sim.total.nodes[j];
    nodes.push_back({{"node", j},
                     {"p_delta", n.reliability().estimate},
                     {"lqg_cost", n.lqg_cost()},
                     {"steady_state_consistent", n.steady_state_consistent()}});
  }
  s["nodes"] = nodes;
  write_json(out_path(opts, "simulate_summary.json"), s);
  return s;
}

ordered_json cmd_analyze(const ExperimentConfig& config, const RunOptions& opts) {
  std::vector<std::vector<double>> measured;
  const bool thresholds = uses_thresholds(config.network);
  if (thresholds) measured = measured_event_probs(run(config.network).total, config.network);
  const SteadyState ss = analyze_network(config.network, config.setting(), config.solver, measured);
  write_csv(out_path(opts, "analyze.csv"), "analyze", config, analysis_rows(ss, config.max_delay));

  ordered_json s = header("analyze", config);
  s["event_probs_source"] = thresholds ? "simulation" : "config";
  const ordered_json steady = steady_state_summary(ss);
  for (const auto& [k, v] : steady.items()) s[k] = v;
  write_json(out_path(opts, "analyze_summary.json"), s);
  return s;
}

ordered_json cmd_sweep(const ExperimentConfig& config, const RunOptions& opts) {
  const auto points = run_sweep(config);
  write_csv(out_path(opts, "sweep.csv"), "sweep", config, sweep_rows(points, config));

  ordered_json s = header("sweep", config);
  s["parameter"] = config.sweep->name();
  ordered_json list = ordered_json::array();
  double worst = 0.0;
  for (const auto& p : points) {
    const double sim = p.sim.pooled().reliability().estimate;
    double ana = 0.0;
    for (const auto& n : p.analysis.nodes) ana += n.reliability;
    ana /= static_cast<double>(p.analysis.nodes.size());
    worst = std::max(worst, std::abs(sim - ana));
    list.push_back({{"value", p.value},
                    {"p_delta_sim", sim},
                    {"p_delta_analysis", ana},
                    {"lqg_cost", p.sim.pooled().lqg_cost()}});
  }
  s["max_p_delta_deviation"] = worst;
  s["points"] = list;
  write_json(out_path(opts, "sweep_summary.json"), s);
  return s;
}

ordered_json cmd_calibrate(const ExperimentConfig& config, const RunOptions& opts) {
  const auto& targets = config.calibration.targets;
  CalibrationReport report = targets.empty()
                                 ? probs_from_thresholds(config.network)
                                 : thresholds_from_probs(config.network, targets, config.calibration.bisection);
  write_csv(out_path(opts, "calibrate.csv"), "calibrate", config, calibration_rows(report));

  ordered_json s = header("calibrate", config);
  s["direction"] = targets.empty() ? "probs_from_thresholds" : "thresholds_from_probs";
  s["thresholds"] = report.thresholds();
  s["event_probs"] = report.achieved_probabilities();
  if (!targets.empty()) s["targets"] = targets;
  s["converged"] = report.converged;
  s["iterations"] = report.iterations;
  s["horizon"] = report.horizon;
  write_json(out_path(opts, "calibrate_summary.json"), s);
  if (!report.converged)
    throw ConvergenceError("threshold bisection did not reach the tolerance", 0.0, report.iterations);
  return s;
}

ordered_json cmd_compare(const std::string& first_csv, const std::string& second_csv, const CompareSpec& spec,
                         const RunOptions& opts) {
  const auto first = read_csv(first_csv);
  const auto second = read_csv(second_csv);
  const CompareReport report = compare_tables(first, second, spec.tolerance, spec.metrics);

  std::ostringstream out;
  out << "# event-net compare\n";
  out << "# first=" << first_csv << "\n";
  out << "# second=" << second_csv << "\n";
  out << "# tolerance=" << format_number(spec.tolerance) << "\n";
  out << "sweep_param,value,node,metric,first,second,abs_deviation\n";
  for (const auto& d : report.entries)
    out << d.sweep_param << ',' << format_number(d.value) << ',' << d.node << ',' << d.metric << ','
        << format_number(d.first) << ',' << format_number(d.second) << ',' << format_number(d.deviation) << '\n';
  write_text(out_path(opts, "compare.csv"), out.str());

  ordered_json s;
  s["command"] = "compare";
  s["first"] = first_csv;
  s["second"] = second_csv;
  s["tolerance"] = spec.tolerance;
  s["compared"] = report.entries.size();
  s["max_deviation"] = report.max_deviation;
  const auto worst = std::max_element(report.entries.begin(), report.entries.end(),
                                      [](const Deviation& x, const Deviation& y) { return x.deviation < y.deviation; });
  s["worst"] = {{"sweep_param", worst->sweep_param},
                {"value", worst->value},
                {"node", worst->node},
                {"metric", worst->metric}};
  s["pass"] = report.pass;
  write_json(out_path(opts, "compare_summary.json"), s);
  return s;
}

int run_command(const CommandLine& cl) {
  auto report_error = [&](const char* kind, const std::string& message, int code) {
    std::cerr << ordered_json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << std::endl;
    return code;
  };
  try {
#ifdef _OPENMP
    if (cl.run.jobs > 0) omp_set_num_threads(cl.run.jobs);
#endif
    if (cl.run.jobs < 0) throw ConfigError("--jobs must be >= 0");
    ordered_json summary;
    if (cl.command == "compare") {
      CompareSpec spec;
      std::string first, second;
      if (!cl.config_path.empty()) {
        const ExperimentConfig cfg = load_config(cl.config_path);
        if (cfg.compare) spec = *cfg.compare;
        const fs::path base = fs::path(cl.config_path).parent_path();
        auto resolve = [&](const std::string& p) { return p.empty() ? p : (base / p).string(); };
        first = resolve(spec.simulation);
        second = resolve(spec.analysis);
      }
      if (!cl.inputs.empty()) {
        first = cl.inputs[0];
        second = cl.inputs.size() > 1 ? cl.inputs[1] : std::string();
      }
      if (first.empty()) throw ConfigError("compare needs a simulation CSV (compare.simulation or a path argument)");
      if (second.empty()) second = first;
      if (cl.tolerance) spec.tolerance = *cl.tolerance;
      summary = cmd_compare(first, second, spec, cl.run);
      std::cout << summary.dump(2) << std::endl;
      return summary["pass"].get<bool>() ? kExitOk : kExitFailed;
    }

    if (cl.config_path.empty()) throw ConfigError("--config is required");
    ExperimentConfig cfg = load_config(cl.config_path);
    if (cl.seed) cfg.network.seed = *cl.seed;
    if (cl.replications) {
      if (*cl.replications < 1) throw ConfigError("--replications must be >= 1");
      cfg.network.replications = *cl.replications;
    }
    finalize(cfg);

    if (cl.command == "simulate")
      summary = cmd_simulate(cfg, cl.run);
    else if (cl.command == "analyze")
      summary = cmd_analyze(cfg, cl.run);
    else if (cl.command == "sweep")
      summary = cmd_sweep(cfg, cl.run);
    else if (cl.command == "calibrate")
      summary = cmd_calibrate(cfg, cl.run);
    else
      throw ConfigError("unknown command '" + cl.command + "'");
    std::cout << summary.dump(2) << std::endl;
    return kExitOk;
  } catch (const ConfigError& e) {
    return report_error("validation", e.what(), kExitValidation);
  } catch (const ConvergenceError& e) {
    return report_error("non_convergence", e.what(), kExitConvergence);
  } catch (const IoError& e) {
    return report_error("io", e.what(), kExitIo);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), kExitFailed);
  }
}

}  // namespace event_net
