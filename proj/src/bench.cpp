#include "aggsim/bench.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace aggsim::bench {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
bool parse_int(const std::string& s, T& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

const char* const kHeader = "cores,subgrid,executors,max_team,ms_per_step,kernels,transfers,raw_allocs,syncs";

std::string ms_text(Ticks t) {
  std::ostringstream os;
  os << t / 1000000 << '.' << std::setw(6) << std::setfill('0') << t % 1000000;
  return os.str();
}

Ticks parse_ms(const std::string& s) {
  auto dot = s.find('.');
  Ticks whole = 0, frac = 0;
  std::string a = s.substr(0, dot), b = dot == std::string::npos ? "" : s.substr(dot + 1);
  if (b.size() > 6 || !parse_int(a, whole) || (!b.empty() && !parse_int(b, frac))) {
    throw ValidationError("bad ms_per_step value '" + s + "'");
  }
  for (auto i = b.size(); i < 6; ++i) frac *= 10;
  return whole * 1000000 + frac;
}

std::uint64_t rounded_mean(std::uint64_t total, int steps) {
  const auto n = static_cast<std::uint64_t>(steps);
  return (total + n / 2) / n;
}

}  // namespace

// ---- calibration ------------------------------------------------------

Ticks solo_duration(const vdev::DeviceProfile& profile, hydro::Kernel k, int subgrid_n) {
  sched::Scheduler s;
  vdev::Device dev(s, profile);
  auto stream = dev.create_stream().stream;
  s.run();
  const auto start = s.now();
  auto shape = hydro::kernel_shape(k, subgrid_n);
  auto done = dev.enqueue_kernel(stream, vdev::KernelSpec{hydro::to_string(k), shape.blocks,
                                                          vdev::kThreadsPerBlock, shape.work_factor, 1},
                                 {});
  s.run();
  return done.ready_at() - start;
}

vdev::DeviceProfile calibrate(vdev::DeviceProfile p, const Anchors& a) {
  const auto r = hydro::kernel_shape(hydro::Kernel::reconstruct, a.subgrid_n);
  const auto f = hydro::kernel_shape(hydro::Kernel::flux, a.subgrid_n);
  const std::int64_t cap = p.block_capacity();
  if (cap < 1) throw CalibrationError("calibration needs a positive block capacity");
  const std::int64_t waves_r = (r.blocks + cap - 1) / cap;
  const std::int64_t waves_f = (f.blocks + cap - 1) / cap;
  // A = t_launch + waves * wf * t_block, solved as a 2x2 system in rationals
  const __int128 coef = static_cast<__int128>(waves_r) * r.work_factor.num * f.work_factor.den -
                        static_cast<__int128>(waves_f) * f.work_factor.num * r.work_factor.den;
  const __int128 den = static_cast<__int128>(r.work_factor.den) * f.work_factor.den;
  if (coef == 0) throw CalibrationError("anchors do not determine t_block (equal kernel weights)");
  const __int128 t_block = static_cast<__int128>(a.reconstruct - a.flux) * den / coef;
  if (t_block <= 0) {
    throw CalibrationError("anchors give a non-positive t_block (reconstruct " +
                           std::to_string(a.reconstruct) + ", flux " + std::to_string(a.flux) + ")");
  }
  p.t_block = static_cast<Ticks>(t_block);
  p.t_launch = a.reconstruct - waves_r * r.work_factor.scale(p.t_block);
  if (p.t_launch < 0) throw CalibrationError("anchors give a negative t_launch");
  return p;
}

// ---- profiles and host costs ------------------------------------------

vdev::DeviceProfile builtin_profile(const std::string& name) {
  vdev::DeviceProfile p;
  p.name = name;
  if (name == "a100like") {
    p.cu_count = 108;
    p.resident_blocks_per_cu = 1;
    p.t_copy_base = 8000;
    p.t_copy_per_byte = Ratio{1, 25};
    p.max_concurrent_kernels = 128;
    p.concurrency_penalty = Ratio{0, 1};
    p.t_device_sync = 20000;
    p.copy_engines = 1;
  } else if (name == "mi100like") {
    p.cu_count = 120;
    p.resident_blocks_per_cu = 2;
    p.t_copy_base = 10000;
    p.t_copy_per_byte = Ratio{1, 10};
    p.max_concurrent_kernels = 8;
    p.concurrency_penalty = Ratio{2, 1};
    p.t_device_sync = 30000;
    p.copy_engines = 1;
  } else {
    throw ValidationError("unknown profile '" + name + "' (built-ins: a100like, mi100like)");
  }
  return calibrate(p);
}

vdev::DeviceProfile resolve_profile(const std::string& name_or_path) {
  if (name_or_path == "a100like" || name_or_path == "mi100like") return builtin_profile(name_or_path);
  return vdev::load_profile(name_or_path);
}

std::map<std::string, Ticks, std::less<>> default_host_costs() {
  return {{"ghost_exchange_per_cell", 100},   {"stage_per_value", 10},
          {"launch_api", 4000},               {"copy_api", 2000},
          {"cpu_prep_per_item", 100},         {"cpu_reconstruct_per_item", 5000},
          {"cpu_flux_per_item", 1500},        {"cpu_reduce_per_item", 200},
          {"cpu_update_per_item", 1000}};
}

std::map<std::string, Ticks, std::less<>> parse_host_costs(std::istream& in) {
  std::map<std::string, Ticks, std::less<>> out;
  const auto& keys = hydro::HostCosts::keys();
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    auto hash = raw.find('#');
    auto text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("host costs line " + std::to_string(line) + ": expected key=value");
    }
    auto key = trim(text.substr(0, eq));
    auto val = trim(text.substr(eq + 1));
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ValidationError("host costs line " + std::to_string(line) + ": unknown key '" + key + "'");
    }
    Ticks v = 0;
    if (!parse_int(val, v) || v < 0) {
      throw ValidationError("host costs line " + std::to_string(line) + ": '" + val +
                            "' is not a non-negative integer");
    }
    out[key] = v;
  }
  return out;
}

std::map<std::string, Ticks, std::less<>> load_host_costs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open host costs file '" + path + "'");
  return parse_host_costs(in);
}

void write_host_costs(std::ostream& out, const std::map<std::string, Ticks, std::less<>>& costs) {
  for (const auto& key : hydro::HostCosts::keys()) {
    auto it = costs.find(key);
    if (it != costs.end()) out << key << '=' << it->second << '\n';
  }
}

// ---- configuration ----------------------------------------------------

Format parse_format(const std::string& text) {
  if (text == "csv") return Format::csv;
  if (text == "markdown" || text == "md") return Format::markdown;
  throw ValidationError("unknown format '" + text + "' (csv or markdown)");
}

void BenchConfig::validate() const {
  if (steps < 1) throw ValidationError("steps must be >= 1");
  if (warmup_steps < 0) throw ValidationError("warmup_steps must be >= 0");
  for (const auto& c : cells) {
    if (c.cores < 1) throw ValidationError("cores must be >= 1");
    if (c.executors < 0 || c.executors > vdev::kMaxStreams) {
      throw ValidationError("executors must be in 0.." + std::to_string(vdev::kMaxStreams));
    }
    if (c.max_team < 1) throw ValidationError("max_team must be >= 1");
    if (c.subgrid_n < 1 || edge_cells % c.subgrid_n != 0) {
      throw ValidationError("subgrid " + std::to_string(c.subgrid_n) + " does not divide the mesh edge");
    }
  }
}

std::vector<Cell> product(int cores, const std::vector<int>& subgrids, const std::vector<int>& executors,
                          const std::vector<int>& max_team) {
  std::vector<Cell> out;
  for (int n : subgrids)
    for (int e : executors)
      for (int m : max_team) out.push_back(Cell{cores, n, e, m});
  return out;
}

BenchConfig preset_table2() {
  BenchConfig cfg;
  cfg.cpu_baseline = false;
  auto add = [&](int cores, int n, int e, int m) {
    Cell c{cores, n, e, m};
    if (std::find(cfg.cells.begin(), cfg.cells.end(), c) == cfg.cells.end()) cfg.cells.push_back(c);
  };
  for (int n : {8, 16}) {
    add(1, n, 0, 1);
    add(32, n, 0, 1);
  }
  add(32, 8, 1, 1);
  add(32, 16, 1, 1);
  for (int e = 2; e <= 128; e *= 2) add(32, 8, e, 1);
  for (int m = 2; m <= 128; m *= 2) add(32, 8, 1, m);
  add(32, 8, 64, 8);
  add(32, 8, 128, 8);
  add(32, 8, 128, 16);
  add(32, 8, 128, 32);
  add(32, 16, 32, 1);
  add(32, 16, 32, 2);
  add(32, 16, 32, 4);
  return cfg;
}

// ---- running ----------------------------------------------------------

const Row* Report::find(const Cell& c) const {
  for (const auto& r : rows) {
    if (r.cell == c) return &r;
  }
  return nullptr;
}

Row run_cell(const Cell& cell, const BenchConfig& cfg, const vdev::DeviceProfile& profile,
             std::ostream* events) {
  hydro::ScenarioParams params;
  params.subgrid_n = cell.subgrid_n;
  params.edge_cells = cfg.edge_cells;
  auto scenario = hydro::build_scenario(params);

  sched::SchedulerConfig sc;
  sc.worker_count = cell.cores;
  sc.host_op_costs = cfg.host_costs;
  hydro::Simulation sim(scenario, hydro::StrategyConfig{cell.executors, cell.max_team, cfg.policy},
                        profile, sc);
  if (events) sim.device().set_event_logging(true);

  Row row;
  row.cell = cell;
  auto absorb_totals = [&](const hydro::StepStats& st) {
    row.raw_allocs += st.raw_allocs_device;
    row.syncs += st.syncs;
    row.stream_creations += st.stream_creations;
  };
  for (int i = 0; i < cfg.warmup_steps; ++i) absorb_totals(sim.step());

  Ticks total = 0;
  std::uint64_t kernels = 0, transfers = 0;
  for (int i = 0; i < cfg.steps; ++i) {
    auto st = sim.step();
    absorb_totals(st);
    total += st.duration;
    kernels += st.kernels;
    transfers += st.transfers;
    row.measured_raw_allocs += st.raw_allocs_device;
    row.measured_syncs += st.syncs;
    for (const auto& sizes : st.team_sizes)
      for (auto [size, n] : sizes) row.team_sizes[size] += n;
  }
  row.ticks_per_step = total / cfg.steps;
  row.kernels = rounded_mean(kernels, cfg.steps);
  row.transfers = rounded_mean(transfers, cfg.steps);

  if (events) {
    std::ostringstream csv;
    sim.device().write_event_csv(csv);
    std::istringstream lines(csv.str());
    std::string line;
    std::getline(lines, line);  // header, written once by run_matrix
    while (std::getline(lines, line)) {
      *events << cell.cores << ',' << cell.subgrid_n << ',' << cell.executors << ',' << cell.max_team << ','
              << line << '\n';
    }
  }
  return row;
}

Report run_matrix(const BenchConfig& cfg) {
  cfg.validate();
  const auto profile = resolve_profile(cfg.profile);

  std::vector<Cell> cells = cfg.cells;
  if (cfg.cpu_baseline) {
    std::vector<Cell> base;
    for (const auto& c : cells) {
      Cell b{c.cores, c.subgrid_n, 0, 1};
      if (std::find(cells.begin(), cells.end(), b) == cells.end() &&
          std::find(base.begin(), base.end(), b) == base.end()) {
        base.push_back(b);
      }
    }
    cells.insert(cells.begin(), base.begin(), base.end());
  }

  std::ofstream events;
  if (!cfg.dump_events.empty()) {
    events.open(cfg.dump_events);
    if (!events) throw ValidationError("cannot write event log '" + cfg.dump_events + "'");
    events << "cores,subgrid,executors,max_team,time,kind,stream,kernel_id,blocks,slice_count\n";
  }

  Report report;
  for (const auto& c : cells) {
    report.rows.push_back(run_cell(c, cfg, profile, events.is_open() ? &events : nullptr));
  }
  return report;
}

// ---- output -----------------------------------------------------------

std::vector<std::string> sections_of(const Cell& c) {
  if (c.executors == 0) return {"CPU-only runs"};
  if (c.executors == 1 && c.max_team == 1) {
    if (c.subgrid_n == 8) {
      return {"Strategy 1: larger sub-grids", "Strategy 2: more GPU executors",
              "Strategy 3: more on-the-fly aggregated kernels"};
    }
    return {"Strategy 1: larger sub-grids"};
  }
  if (c.max_team == 1 && c.subgrid_n == 8) return {"Strategy 2: more GPU executors"};
  if (c.executors == 1 && c.subgrid_n == 8) return {"Strategy 3: more on-the-fly aggregated kernels"};
  return {"Combined strategies 2 and 3, " + std::to_string(c.subgrid_n) + "^3 sub-grids"};
}

std::string emit(const Report& report, Format format) {
  std::ostringstream os;
  auto fields = [](const Row& r) {
    return std::vector<std::string>{std::to_string(r.cell.cores),     std::to_string(r.cell.subgrid_n),
                                    std::to_string(r.cell.executors), std::to_string(r.cell.max_team),
                                    ms_text(r.ticks_per_step),        std::to_string(r.kernels),
                                    std::to_string(r.transfers),      std::to_string(r.raw_allocs),
                                    std::to_string(r.syncs)};
  };
  if (format == Format::csv) {
    os << kHeader << '\n';
    for (const auto& r : report.rows) {
      auto f = fields(r);
      for (std::size_t i = 0; i < f.size(); ++i) os << (i ? "," : "") << f[i];
      os << '\n';
    }
    return os.str();
  }

  auto table_header = [&] {
    os << "| cores | subgrid | executors | max_team | ms_per_step | kernels | transfers | raw_allocs | syncs |\n"
       << "|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n";
  };
  if (report.rows.empty()) {
    table_header();
    return os.str();
  }
  std::vector<std::string> order;
  std::map<std::string, std::vector<const Row*>> grouped;
  for (const auto& r : report.rows) {
    for (const auto& s : sections_of(r.cell)) {
      if (!grouped.count(s)) order.push_back(s);
      grouped[s].push_back(&r);
    }
  }
  bool first = true;
  for (const auto& s : order) {
    if (!first) os << '\n';
    first = false;
    os << "### " << s << "\n\n";
    table_header();
    for (const Row* r : grouped[s]) {
      auto f = fields(*r);
      os << '|';
      for (const auto& v : f) os << ' ' << v << " |";
      os << '\n';
    }
  }
  return os.str();
}

Report parse_csv(std::istream& in) {
  Report report;
  std::string line;
  if (!std::getline(in, line) || trim(line) != kHeader) {
    throw ValidationError("report csv: missing or unexpected header");
  }
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(trim(cell));
    if (f.size() != 9) {
      throw ValidationError("report csv line " + std::to_string(lineno) + ": expected 9 fields");
    }
    Row r;
    bool ok = parse_int(f[0], r.cell.cores) && parse_int(f[1], r.cell.subgrid_n) &&
              parse_int(f[2], r.cell.executors) && parse_int(f[3], r.cell.max_team) &&
              parse_int(f[5], r.kernels) && parse_int(f[6], r.transfers) && parse_int(f[7], r.raw_allocs) &&
              parse_int(f[8], r.syncs);
    if (!ok) throw ValidationError("report csv line " + std::to_string(lineno) + ": bad integer");
    r.ticks_per_step = parse_ms(f[4]);
    report.rows.push_back(r);
  }
  return report;
}

}  // namespace aggsim::bench
