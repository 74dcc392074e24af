// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fail.
#include "event_net/analysis.hpp"
#include "event_net/calibration.hpp"
#include "event_net/config.hpp"
#include "event_net/harness.hpp"
#include "event_net/simulator.hpp"

#include "oracle.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

using namespace event_net;

namespace {

struct Check {
  bool ok = true;
  std::ostringstream detail;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << " [" << what << "]";
    }
  }
  void near(double got, double want, double tol, const std::string& what) {
    char buf[192];
    std::snprintf(buf, sizeof buf, "%s=%.5f want %.5f+-%g", what.c_str(), got, want, tol);
    expect(std::abs(got - want) <= tol, buf);
  }
};

int failures = 0;

void report(int id, const std::string& title, const Check& c, const std::string& summary) {
  std::printf("%s criterion %d: %s | %s%s\n", c.ok ? "PASS" : "FAIL", id, title.c_str(), summary.c_str(),
              c.detail.str().c_str());
  std::fflush(stdout);
  if (!c.ok) ++failures;
}

std::string config_path(const std::string& name) { return std::string(EVENT_NET_CONFIG_DIR) + "/" + name; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

std::vector<NodeChainSpec> ten_loop_specs() {
  NodeChainSpec spec;
  spec.memory = 1;
  spec.event_probs = {0.3171, 0.5138};
  spec.persistence.assign(5, 0.2);
  return std::vector<NodeChainSpec>(10, spec);
}

struct SweepOutcome {
  std::vector<double> values, sim, analysis, cost;
  double max_deviation = 0.0;
};

SweepOutcome sweep(const std::string& file) {
  const auto cfg = load_config(config_path(file));
  SweepOutcome out;
  for (const auto& p : run_sweep(cfg)) {
    const NodeStats pooled = p.sim.pooled();
    double ana = 0.0;
    for (const auto& n : p.analysis.nodes) ana += n.reliability;
    ana /= static_cast<double>(p.analysis.nodes.size());
    out.values.push_back(p.value);
    out.sim.push_back(pooled.reliability().estimate);
    out.analysis.push_back(ana);
    out.cost.push_back(pooled.lqg_cost());
    out.max_deviation = std::max(out.max_deviation, std::abs(out.sim.back() - ana));
  }
  return out;
}

std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

void criterion_1() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  const auto ss = solve_retx(ten_loop_specs());
  const double elapsed = seconds_since(t0);
  const double expected[] = {0.5944, 0.5620, 0.5277, 0.4917, 0.4542};
  c.near(ss.nodes[0].reliability, 0.1872, 0.002, "p_delta");
  for (int r = 0; r < 5; ++r) c.near(ss.nodes[0].busy[r], expected[r], 0.005, "p_" + std::to_string(r + 1));
  c.expect(elapsed < 1.0, fmt("runtime %.3fs", elapsed));
  report(1, "ten-loop chain solution", c,
         fmt("p_delta=%.5f runtime=%.4fs", ss.nodes[0].reliability, elapsed));
}

void criterion_2(SimResult& kept) {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  auto net = event_net::testing::ten_loop_network();
  net.seed = 20160601;
  kept = run(net);
  const NodeStats all = kept.total.pooled();
  const double expected[] = {0.5937, 0.5655, 0.5367, 0.5076, 0.4778};
  c.near(all.reliability().estimate, 0.1840, 0.01, "p_delta");
  std::string busy;
  for (int r = 1; r <= 5; ++r) {
    const double b = all.busy_rate(r).estimate;
    c.near(b, expected[r - 1], 0.02, "p_" + std::to_string(r));
    busy += fmt(r == 1 ? "%.4f" : ",%.4f", b);
  }
  report(2, "ten-loop simulation", c,
         fmt("p_delta=%.4f", all.reliability().estimate) + " busy=(" + busy + ")" +
             fmt(" retained=%.0f runtime=%.1fs", static_cast<double>(net.horizon - net.burn_in), seconds_since(t0)));
}

void criterion_3(SweepOutcome& ex3) {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  ex3 = sweep("example3_no_retx.json");
  const auto ex4 = sweep("example4_unsaturated.json");
  c.expect(ex3.values.size() == 17 && ex4.values.size() == 17, "17 sweep points");
  c.expect(ex3.max_deviation <= 0.03, fmt("no-retx sweep deviation %.4f", ex3.max_deviation));
  c.expect(ex4.max_deviation <= 0.03, fmt("retx sweep deviation %.4f", ex4.max_deviation));
  for (std::size_t i = 1; i < ex3.analysis.size(); ++i)
    c.expect(ex3.analysis[i] < ex3.analysis[i - 1], fmt("no-retx sweep not decreasing at %.1f", ex3.values[i]));
  const auto top = std::max_element(ex4.analysis.begin(), ex4.analysis.end()) - ex4.analysis.begin();
  c.expect(ex4.values[static_cast<std::size_t>(top)] == 0.0,
           fmt("retx sweep maximum at %.1f", ex4.values[static_cast<std::size_t>(top)]));
  report(3, "decoupling validation sweeps", c,
         fmt("ex3 max_dev=%.4f ex4 max_dev=%.4f", ex3.max_deviation, ex4.max_deviation) +
             fmt(" ex4 argmax=%.1f runtime=%.1fs", ex4.values[static_cast<std::size_t>(top)], seconds_since(t0)));
}

void criterion_4() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  const auto ex5 = sweep("example5_async.json");
  c.expect(ex5.values.size() == 17, "17 sweep points");
  c.expect(ex5.max_deviation <= 0.03, fmt("deviation %.4f", ex5.max_deviation));
  report(4, "asynchronous sweep", c,
         fmt("max_dev=%.4f runtime=%.1fs", ex5.max_deviation, seconds_since(t0)));
}

void criterion_5() {
  Check c;
  const double grid[] = {0.1, 0.3, 0.5, 0.7, 0.9};
  double worst = 0.0;
  int cases = 0;
  for (int M : {2, 3})
    for (int F : {1, 2})
      for (int R : {1, 2})
        for (double pg : grid)
          for (double pa : grid) {
            NodeChainSpec spec;
            spec.memory = F;
            spec.event_probs.assign(static_cast<std::size_t>(F + 1), pg);
            spec.persistence.assign(static_cast<std::size_t>(R), pa);
            const std::vector<NodeChainSpec> specs(static_cast<std::size_t>(M), spec);
            const auto ss = R == 1 ? solve_no_retx(specs) : solve_retx(specs);
            const auto ref = oracle::solve_homogeneous(M, F, spec.event_probs, spec.persistence);
            double dev = std::abs(ss.nodes[0].reliability - ref.reliability);
            for (int r = 0; r < R; ++r) dev = std::max(dev, std::abs(ss.nodes[0].busy[r] - ref.busy[r]));
            worst = std::max(worst, dev);
            ++cases;
          }
  c.expect(worst <= 1e-6, fmt("max deviation %.3g", worst));
  report(5, "oracle equivalence", c, fmt("cases=%.0f max_dev=%.3g", cases, worst));
}

void criterion_6(const SimResult& ten_loop) {
  Check c;
  double idle_err = 0, rel_err = 0, mass_err = 0;
  int solves = 0;
  auto check_solve = [&](const SteadyState& ss, bool homogeneous_sync) {
    for (std::size_t j = 0; j < ss.nodes.size(); ++j) {
      const auto& n = ss.nodes[j];
      idle_err = std::max(idle_err, std::abs(std::accumulate(n.idle.begin(), n.idle.end(), 0.0) - 1.0));
      rel_err = std::max(rel_err, std::abs(n.reliability - n.idle[0]));
      const auto d = delay_distribution(ss, j, 12);
      const double mass = std::accumulate(d.reception.begin(), d.reception.end(), 0.0) + d.reception_tail;
      mass_err = std::max(mass_err, std::abs(mass - n.reliability));
      if (homogeneous_sync)
        for (std::size_t r = 1; r < n.busy.size(); ++r)
          c.expect(n.busy[r] <= n.busy[r - 1] + 1e-12, "busy not non-increasing in stage");
    }
    ++solves;
  };
  check_solve(solve_retx(ten_loop_specs()), true);
  for (double pg : {0.1, 0.5, 0.9})
    for (double pa : {0.2, 0.6})
      for (int R : {1, 3}) {
        NodeChainSpec s;
        s.memory = 2;
        s.event_probs = {pg, std::min(1.0, pg + 0.05), std::min(1.0, pg + 0.1)};
        s.persistence.assign(static_cast<std::size_t>(R), pa);
        const std::vector<NodeChainSpec> specs(4, s);
        check_solve(R == 1 ? solve_no_retx(specs) : solve_retx(specs), true);
        SolverOptions async;
        async.slots_per_sample = R + 1;
        check_solve(solve_async(specs, async), false);
      }
  c.expect(idle_err <= 1e-8, fmt("idle mass error %.3g", idle_err));
  c.expect(rel_err <= 1e-10, fmt("reliability vs idle error %.3g", rel_err));
  c.expect(mass_err <= 1e-8, fmt("delay mass error %.3g", mass_err));

  // bit-identical rerun of the ten-loop simulation, serial and parallel
  auto net = event_net::testing::ten_loop_network();
  net.seed = 20160601;
  const auto again = run_serial(net);
  bool identical = again.total.nodes.size() == ten_loop.total.nodes.size();
  for (std::size_t j = 0; identical && j < again.total.nodes.size(); ++j) {
    const auto& a = again.total.nodes[j];
    const auto& b = ten_loop.total.nodes[j];
    identical = a.samples == b.samples && a.successes == b.successes && a.visits == b.visits &&
                a.events == b.events && a.attempts == b.attempts && a.busy == b.busy &&
                a.reception_delay == b.reception_delay && a.cost_sum == b.cost_sum;
  }
  c.expect(identical, "rerun differs");

  // sole success: a slot delivers iff exactly one node transmits in it
  long slots = 0, violations = 0;
  SimOptions opts;
  opts.record_trace = true;
  for (auto mode : {AccessMode::kSynchronized, AccessMode::kAsynchronous}) {
    auto t = event_net::testing::homogeneous(5, TriggerPolicy::uniform_threshold(1, 0.5), {0.4, 0.4}, 3, mode);
    t.horizon = 20000;
    t.burn_in = 0;
    t.replications = 2;
    for (const auto& rep : run(t, opts).replications) {
      std::map<long, std::pair<int, int>> per_slot;
      for (const auto& e : rep.trace) {
        auto& s = per_slot[e.slot];
        ++s.first;
        s.second += e.success ? 1 : 0;
        if (e.success != (e.transmitters == 1)) ++violations;
      }
      for (const auto& e : rep.trace)
        if (per_slot[e.slot].first != e.transmitters) ++violations;
      for (const auto& [slot, s] : per_slot) {
        ++slots;
        if (s.second != (s.first == 1 ? 1 : 0)) ++violations;
      }
    }
  }
  c.expect(violations == 0, fmt("sole-success violations %.0f", static_cast<double>(violations)));
  report(6, "invariants", c,
         fmt("solves=%.0f idle_err=%.2g mass_err=%.2g", solves, idle_err, mass_err) +
             fmt(" busy_slots=%.0f deterministic=%.0f", static_cast<double>(slots), identical ? 1.0 : 0.0));
}

void criterion_7() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfg = load_config(config_path("example2_calibration.json"));
  const auto fwd = probs_from_thresholds(cfg.network);
  const auto p = fwd.achieved_probabilities();
  c.near(p[0], 0.3171, 0.01, "p_gamma_0");
  c.near(p[1], 0.5138, 0.01, "p_gamma_f");

  const auto inv = thresholds_from_probs(cfg.network, p, cfg.calibration.bisection);
  c.expect(inv.converged, "inversion did not converge");
  const double delta_tol = 0.05;
  for (const auto& s : inv.stages) {
    c.near(s.threshold, 1.0, delta_tol, "Delta_" + std::to_string(s.m));
    c.near(s.achieved.estimate, s.target, cfg.calibration.bisection.tolerance, "p_hat_" + std::to_string(s.m));
  }
  report(7, "calibration", c,
         fmt("forward=(%.4f,%.4f)", p[0], p[1]) +
             fmt(" inverted Delta=(%.4f,%.4f)", inv.stages[0].threshold, inv.stages[1].threshold) +
             fmt(" runtime=%.1fs", seconds_since(t0)));
}

void criterion_8(const SweepOutcome& ex3) {
  Check c;
  const double rho = spearman(ex3.cost, ex3.sim);
  c.expect(rho <= 0.0, fmt("rank correlation %.3f", rho));
  report(8, "cost non-increasing in reliability", c,
         fmt("spearman(cost, reliability)=%.3f over %.0f points", rho, static_cast<double>(ex3.sim.size())));
}

}  // namespace

int main() {
  try {
    SimResult ten_loop;
    SweepOutcome ex3;
    criterion_1();
    criterion_2(ten_loop);
    criterion_3(ex3);
    criterion_4();
    criterion_5();
    criterion_6(ten_loop);
    criterion_7();
    criterion_8(ex3);
  } catch (const std::exception& e) {
    std::printf("FAIL aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
