#include "event_net/harness.hpp"

#include <CLI11.hpp>

int main(int argc, char** argv) {
  CLI::App app{"Event-triggered control loops over a shared p-persistent CSMA channel"};
  app.require_subcommand(1);

  event_net::CommandLine cl;
  std::uint64_t seed = 0;
  int replications = 0;
  double tolerance = 0.0;

  for (const char* name : {"simulate", "analyze", "sweep", "calibrate", "compare"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", cl.config_path, "JSON experiment config");
    sub->add_option("--out", cl.run.out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--replications", replications, "override the replication count");
    sub->add_option("--jobs", cl.run.jobs, "worker threads (0 = default)");
    sub->add_flag("-v,--verbose", cl.run.verbose, "write the per-slot trace (simulate)");
    if (std::string(name) == "compare") {
      sub->add_option("inputs", cl.inputs, "simulation CSV and analysis CSV");
      sub->add_option("--tolerance", tolerance, "maximum absolute deviation");
    } else {
      sub->get_option("--config")->required();
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : event_net::kExitValidation;
  }

  auto* sub = app.get_subcommands().front();
  cl.command = sub->get_name();
  if (sub->count("--seed")) cl.seed = seed;
  if (sub->count("--replications")) cl.replications = replications;
  if (cl.command == "compare" && sub->count("--tolerance")) cl.tolerance = tolerance;
  return event_net::run_command(cl);
}
