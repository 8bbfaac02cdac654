// aggsim-bench: sweep executor / team-size strategies over the advection
// mini-app and print a runtime table.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "aggsim/bench.hpp"

using namespace aggsim;

int main(int argc, char** argv) {
  CLI::App app{"Simulated strategy sweep for aggregated kernel launches"};
  argv = app.ensure_utf8(argv);

  std::vector<int> subgrids{8};
  std::vector<int> executors{1};
  std::vector<int> max_team{1};
  int cores = 32;
  std::string profile = "a100like";
  std::string costs_path;
  std::string format = "csv";
  std::string out_path;
  std::string preset;
  std::string policy = "round_robin";
  bench::BenchConfig cfg;
  bool no_baseline = false;
  bool print_profile = false;

  app.add_option("--subgrid-n", subgrids, "Sub-grid edge length(s)")->delimiter(',');
  app.add_option("--executors", executors, "GPU executor count(s), 0 = CPU only")->delimiter(',');
  app.add_option("--max-team", max_team, "Aggregation cap(s)")->delimiter(',');
  app.add_option("--cores", cores, "Simulated worker threads")->capture_default_str();
  app.add_option("--profile", profile, "a100like, mi100like or a profile file")->capture_default_str();
  app.add_option("--costs", costs_path, "Host cost file (key=value ticks)");
  app.add_option("--steps", cfg.steps, "Measured time-steps")->capture_default_str();
  app.add_option("--warmup", cfg.warmup_steps, "Warm-up time-steps")->capture_default_str();
  app.add_option("--edge", cfg.edge_cells, "Mesh cells per edge")->capture_default_str();
  app.add_option("--policy", policy, "round_robin or load_balanced")->capture_default_str();
  app.add_option("--format", format, "csv or markdown")->capture_default_str();
  app.add_option("--out", out_path, "Write the report here instead of stdout");
  app.add_option("--dump-events", cfg.dump_events, "Write every cell's device event log (CSV)");
  app.add_option("--preset", preset, "Replace the cell list: table2")->check(CLI::IsMember({"table2"}));
  app.add_flag("--no-cpu-baseline", no_baseline, "Skip the automatic executors=0 rows");
  app.add_flag("--print-profile", print_profile, "Print the resolved device profile and exit");

  CLI11_PARSE(app, argc, argv);

  try {
    if (print_profile) {
      vdev::write_profile(std::cout, bench::resolve_profile(profile));
      return 0;
    }
    if (preset == "table2") {
      auto p = bench::preset_table2();
      cfg.cells = p.cells;
      cfg.cpu_baseline = p.cpu_baseline;
    } else {
      cfg.cells = bench::product(cores, subgrids, executors, max_team);
      cfg.cpu_baseline = !no_baseline;
    }
    cfg.profile = profile;
    cfg.policy = exec::parse_policy(policy);
    if (!costs_path.empty()) cfg.host_costs = bench::load_host_costs(costs_path);
    const auto fmt = bench::parse_format(format);

    auto report = bench::run_matrix(cfg);
    auto text = bench::emit(report, fmt);
    if (out_path.empty()) {
      std::cout << text;
    } else {
      std::ofstream out(out_path);
      if (!out) throw ValidationError("cannot write '" + out_path + "'");
      out << text;
    }
  } catch (const std::exception& e) {
    std::cerr << "aggsim-bench: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
