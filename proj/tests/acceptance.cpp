// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.
//
// Usage: acceptance [AC numbers...]   (default: all)

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "aggsim/aggregator.hpp"
#include "aggsim/bench.hpp"
#include "aggsim/hydro.hpp"

using namespace aggsim;
using sched::CompletionToken;
using sched::Scheduler;
using sched::Task;

namespace {

// pinned tolerances
constexpr double kMassDrift = 1e-12;
constexpr double kNvRatioLo = 5.0;
constexpr double kNvRatioHi = 20.0;
constexpr double kAmdFloor = 2.0;
constexpr double kStrategy1Floor = 3.0;
constexpr int kFuzzCases = 1000;
constexpr int kSteps = 15;

struct Verdict {
  bool pass = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

// ---- shared bench reports ---------------------------------------------

const bench::Report& table(const std::string& profile) {
  static std::map<std::string, bench::Report> cache;
  auto it = cache.find(profile);
  if (it != cache.end()) return it->second;
  auto cfg = bench::preset_table2();
  cfg.profile = std::string(AGGSIM_PROFILE_DIR) + "/" + profile + ".profile";
  cfg.host_costs = bench::load_host_costs(std::string(AGGSIM_PROFILE_DIR) + "/host_costs.txt");
  cfg.steps = kSteps;
  return cache.emplace(profile, bench::run_matrix(cfg)).first->second;
}

double ms(const bench::Report& r, bench::Cell c) {
  const auto* row = r.find(c);
  if (!row) throw std::logic_error("missing cell");
  return row->ms_per_step();
}

// ---- AC1 ----------------------------------------------------------------

Verdict ac1() {
  Verdict v;
  struct Expect {
    int n, grids;
    std::int64_t ghosts;
    std::uint64_t kernels, transfers;
  };
  for (auto e : {Expect{8, 512, 2232, 7680, 15360}, Expect{16, 64, 6552, 960, 1920}}) {
    auto sc = hydro::build_scenario(e.n);
    const std::string tag = "n=" + std::to_string(e.n) + " ";
    v.require(sc.subgrid_count() == e.grids, tag + "sub-grids " + std::to_string(sc.subgrid_count()));
    v.require(sc.ghost_cells_per_subgrid() == e.ghosts,
              tag + "ghost cells " + std::to_string(sc.ghost_cells_per_subgrid()));
    const auto* row = table("a100like").find({32, e.n, 1, 1});
    v.require(row && row->kernels == e.kernels, tag + "kernels/step");
    v.require(row && row->transfers == e.transfers, tag + "transfers/step");
  }
  v.require(hydro::kernel_shape(hydro::Kernel::reconstruct, 8).blocks == 8, "reconstruct blocks");
  v.require(hydro::kernel_shape(hydro::Kernel::flux, 8).blocks == 24, "flux blocks");
  if (v.pass) v.detail = "512/2232/7680/15360 and 64/6552/960/1920, blocks 8 and 24";
  return v;
}

// ---- AC2 ----------------------------------------------------------------

Verdict ac2() {
  Verdict v;
  const auto profile = bench::builtin_profile("a100like");
  sched::SchedulerConfig sc;
  sc.host_op_costs = bench::default_host_costs();
  const auto base = hydro::build_scenario(8);
  const auto reference = hydro::serial_reference(base, kSteps);
  int configs = 0;
  for (int execs : {0, 1, 4, 32, 128}) {
    for (int cap : {1, 8, 128}) {
      for (auto pol : {exec::Policy::round_robin, exec::Policy::load_balanced}) {
        auto scenario = base;
        hydro::Simulation sim(scenario, {execs, cap, pol}, profile, sc);
        for (int s = 0; s < kSteps; ++s) sim.step();
        auto u = scenario.gather();
        bool same = u.size() == reference.size() &&
                    std::memcmp(u.data(), reference.data(), u.size() * sizeof(double)) == 0;
        ++configs;
        v.require(same, "execs " + std::to_string(execs) + " cap " + std::to_string(cap) + " " +
                            exec::to_string(pol) + " differs");
      }
    }
  }
  if (v.pass) v.detail = std::to_string(configs) + " strategies bit-identical to the serial reference";
  return v;
}

// ---- AC3 ----------------------------------------------------------------

Verdict ac3() {
  Verdict v;
  sched::SchedulerConfig sc;
  sc.host_op_costs = bench::default_host_costs();
  std::string detail;
  for (int n : {8, 16}) {
    auto scenario = hydro::build_scenario(n);
    const double m0 = scenario.total_mass();
    hydro::Simulation sim(scenario, {4, 8, exec::Policy::round_robin}, bench::builtin_profile("a100like"), sc);
    double worst = 0;
    for (int s = 0; s < kSteps; ++s) {
      sim.step();
      worst = std::max(worst, std::abs(scenario.total_mass() - m0) / std::abs(m0));
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "n=%d drift %.2e", n, worst);
    v.require(worst <= kMassDrift, buf);
    detail += (detail.empty() ? "" : ", ") + std::string(buf);
  }
  if (v.pass) v.detail = detail;
  return v;
}

// ---- AC4 ----------------------------------------------------------------

Verdict ac4() {
  Verdict v;
  int cells = 0;
  for (const char* p : {"a100like", "mi100like"}) {
    for (const auto& row : table(p).rows) {
      ++cells;
      const auto& c = row.cell;
      const std::string tag = std::string(p) + " (" + std::to_string(c.subgrid_n) + "," +
                              std::to_string(c.executors) + "," + std::to_string(c.max_team) + ")";
      v.require(row.measured_raw_allocs == 0,
                tag + " " + std::to_string(row.measured_raw_allocs) + " raw allocs after warm-up");
      v.require(row.measured_syncs == 0, tag + " " + std::to_string(row.measured_syncs) + " measured syncs");
    }
  }
  if (v.pass) v.detail = std::to_string(cells) + " cells, no raw device allocations or syncs after warm-up";
  return v;
}

// ---- AC5 ----------------------------------------------------------------

struct Rig {
  explicit Rig(int executors = 1)
      : sched(), device(sched, profile()), execs(device, executors, exec::Policy::round_robin), buffers(device),
        agg(execs, buffers) {
    sched.run();
  }
  static vdev::DeviceProfile profile() {
    vdev::DeviceProfile p;
    p.cu_count = 64;
    p.t_block = 1000;
    p.t_launch = 100;
    p.t_copy_base = 10;
    return p;
  }
  Scheduler sched;
  vdev::Device device;
  exec::ExecutorPool execs;
  pool::BufferPool buffers;
  agg::Aggregator agg;
};

struct Op {
  int kind;  // 0 alloc, 1 copy, 2 launch
  std::size_t len;
  std::string kernel;
};

Task<> member(Rig* rig, agg::Region* r, std::vector<Op> ops) {
  auto slice = co_await rig->agg.enter(*r);
  std::vector<CompletionToken> toks;
  for (const auto& op : ops) {
    if (op.kind == 0) {
      co_await slice.alloc(pool::MemoryKind::device, pool::ElementKind::f64, op.len);
    } else if (op.kind == 1) {
      toks.push_back(slice.copy(vdev::CopyDirection::host_to_device, static_cast<std::int64_t>(op.len)));
    } else {
      toks.push_back(slice.launch(op.kernel, 1, Ratio{1, 1}, {}));
    }
  }
  slice.leave();
  co_await rig->sched.await_all(toks);
}

Verdict ac5() {
  Verdict v;
  std::mt19937_64 rng(5);
  auto u = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  int detected = 0;
  for (int c = 0; c < kFuzzCases; ++c) {
    // alloc, launch, then a random tail; the wrong-order fault swaps two
    // neighbouring ops that differ
    std::vector<Op> prog{{0, 64, "k0"}, {2, 0, "k0"}};
    for (int i = u(0, 6); i > 0; --i) prog.push_back({u(0, 2), static_cast<std::size_t>(u(1, 4) * 64), "k" + std::to_string(u(0, 2))});
    for (auto& op : prog) if (op.kind == 2) op.len = 0;
    auto bad = prog;
    const int fault = c % 3;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < prog.size(); ++i) {
      if (fault == 0 && prog[i].kind != 2) idx.push_back(i);
      if (fault == 1 && prog[i].kind == 2) idx.push_back(i);
      if (fault == 2 && i + 1 < prog.size()) {
        const auto &a = prog[i], &b = prog[i + 1];
        bool same = a.kind == b.kind && (a.kind == 2 ? a.kernel == b.kernel : a.len == b.len);
        if (!same) idx.push_back(i);
      }
    }
    const auto at = idx[static_cast<std::size_t>(u(0, static_cast<int>(idx.size()) - 1))];
    if (fault == 0) bad[at].len += 8;
    if (fault == 1) bad[at].kernel += "_wrong";
    if (fault == 2) std::swap(bad[at], bad[at + 1]);

    const int team = u(2, 6);
    const int culprit = u(0, team - 1);
    Rig rig;
    auto& r = rig.agg.define_region("fuzz" + std::to_string(c), 1, team);
    rig.device.enqueue_kernel(rig.execs.at(0).stream, vdev::KernelSpec{"busy", 1, 128, Ratio{1, 10}, 1}, {});
    for (int m = 0; m < team; ++m) rig.sched.spawn(member(&rig, &r, m == culprit ? bad : prog));
    try {
      rig.sched.run();
    } catch (const agg::OrderingViolation& e) {
      std::string msg = e.what();
      if (msg.find(r.name()) != std::string::npos && msg.find("sequence") != std::string::npos) ++detected;
    } catch (...) {
    }
  }
  v.require(detected == kFuzzCases, std::to_string(detected) + "/" + std::to_string(kFuzzCases) + " detected");

  int worst = 0;
  for (const char* p : {"a100like", "mi100like"}) {
    for (const auto& row : table(p).rows) {
      for (auto [size, n] : row.team_sizes) {
        worst = std::max(worst, size - row.cell.max_team);
        v.require(size <= row.cell.max_team, std::string(p) + " team of " + std::to_string(size) +
                                                 " over cap " + std::to_string(row.cell.max_team));
      }
    }
  }
  if (v.pass) v.detail = std::to_string(detected) + "/" + std::to_string(kFuzzCases) +
                         " violations named; no team above max_team";
  return v;
}

// ---- AC6-AC9 ------------------------------------------------------------

Verdict ac6() {
  Verdict v;
  const auto& r = table("a100like");
  const double base = ms(r, {32, 8, 1, 1});
  const double s2 = ms(r, {32, 8, 128, 1});
  const double s3 = ms(r, {32, 8, 1, 128});
  double best = std::min(ms(r, {32, 8, 64, 8}), ms(r, {32, 8, 128, 8}));
  const double ratio = base / best;
  v.require(base > s2, "baseline not slower than strategy 2");
  v.require(base > s3, "baseline not slower than strategy 3");
  v.require(best < s2 && best < s3, "combination not fastest");
  v.require(ratio >= kNvRatioLo && ratio <= kNvRatioHi, "ratio " + fmt(ratio) + " outside [5, 20]");
  v.detail += (v.detail.empty() ? "" : " | ") + std::string("baseline ") + fmt(base) + " ms, strat2 " + fmt(s2) +
              ", strat3 " + fmt(s3) + ", best combo " + fmt(best) + ", ratio " + fmt(ratio);
  return v;
}

Verdict ac7() {
  Verdict v;
  const auto& r = table("mi100like");
  const double s2 = ms(r, {32, 8, 128, 1});
  const double s3 = ms(r, {32, 8, 1, 128});
  const double combo = ms(r, {32, 8, 128, 16});
  v.require(s2 >= kAmdFloor * s3, "strategy 3 less than 2x faster than strategy 2");
  v.require(combo < s3, "combination not faster than strategy 3");
  v.detail += (v.detail.empty() ? "" : " | ") + std::string("strat2 ") + fmt(s2) + " ms, strat3 " + fmt(s3) +
              " (x" + fmt(s2 / s3) + "), combo 128/16 " + fmt(combo);
  return v;
}

Verdict ac8() {
  Verdict v;
  std::string detail;
  for (const char* p : {"a100like", "mi100like"}) {
    const double r = ms(table(p), {32, 8, 1, 1}) / ms(table(p), {32, 16, 1, 1});
    v.require(r >= kStrategy1Floor, std::string(p) + " only x" + fmt(r));
    detail += (detail.empty() ? "" : ", ") + std::string(p) + " x" + fmt(r);
  }
  if (v.pass) v.detail = "n=8 / n=16: " + detail;
  return v;
}

Verdict ac9() {
  Verdict v;
  for (const char* p : {"a100like", "mi100like"}) {
    const auto& r = table(p);
    for (int k = 2; k <= 128; k *= 2) {
      v.require(ms(r, {32, 8, k, 1}) <= ms(r, {32, 8, k / 2, 1}),
                std::string(p) + " executors " + std::to_string(k) + " slower than " + std::to_string(k / 2));
      v.require(ms(r, {32, 8, 1, k}) <= ms(r, {32, 8, 1, k / 2}),
                std::string(p) + " cap " + std::to_string(k) + " slower than " + std::to_string(k / 2));
    }
  }
  if (v.pass) v.detail = "executor and cap sweeps non-increasing under both profiles";
  return v;
}

// ---- AC10 ---------------------------------------------------------------

struct Step {
  bool charge;
  Ticks value;  // duration or event index
};

Task<> interpret(Scheduler* s, std::vector<Step> steps, std::vector<CompletionToken>* events,
                 Ticks* charged, int* suspensions) {
  for (const auto& st : steps) {
    if (st.charge) {
      co_await s->charge(st.value);
      *charged += st.value;
    } else {
      auto tok = (*events)[static_cast<std::size_t>(st.value)];
      if (!tok.ready()) ++*suspensions;
      co_await s->await(tok);
    }
  }
}

Verdict ac10() {
  Verdict v;
  std::mt19937_64 rng(10);
  auto u = [&](Ticks lo, Ticks hi) { return std::uniform_int_distribution<Ticks>(lo, hi)(rng); };
  const int programs = 500;
  for (int iter = 0; iter < programs; ++iter) {
    const int workers = static_cast<int>(u(1, 6));
    Scheduler s(sched::SchedulerConfig{.worker_count = workers, .record_occupancy = true});
    const int nevents = static_cast<int>(u(1, 4));
    std::vector<sched::TokenSource> sources;
    std::vector<CompletionToken> events;
    for (int e = 0; e < nevents; ++e) {
      sources.push_back(s.make_token());
      events.push_back(sources.back().token());
    }
    for (int e = 0; e < nevents; ++e) {
      s.schedule_at(VirtualTime{u(0, 400)}, [&sources, e] { sources[static_cast<std::size_t>(e)].fire(); });
    }
    const int ntasks = static_cast<int>(u(1, 12));
    std::vector<Ticks> charged(static_cast<std::size_t>(ntasks));
    std::vector<int> susp(static_cast<std::size_t>(ntasks));
    for (int t = 0; t < ntasks; ++t) {
      std::vector<Step> steps;
      for (int i = static_cast<int>(u(0, 6)); i > 0; --i) {
        steps.push_back(u(0, 1) ? Step{true, u(0, 100)} : Step{false, u(0, nevents - 1)});
      }
      s.spawn(interpret(&s, steps, &events, &charged[static_cast<std::size_t>(t)], &susp[static_cast<std::size_t>(t)]));
    }
    auto stats = s.run();
    Ticks total = 0;
    for (auto c : charged) total += c;
    if (stats.total_busy() != total) {
      v.require(false, "work conservation broken in program " + std::to_string(iter));
      break;
    }
    // each worker alternates acquire/release; a task is acquired once at
    // start and once per real suspension, so it never holds a worker while
    // suspended
    std::map<int, std::optional<sched::TaskId>> holder;
    std::map<sched::TaskId, int> acquires;
    bool ok = true;
    for (const auto& r : s.occupancy()) {
      auto& h = holder[r.worker];
      if (r.kind == sched::OccupancyRecord::Kind::acquire) {
        ok = ok && !h;
        h = r.task;
        ++acquires[r.task];
      } else {
        ok = ok && h && *h == r.task;
        h.reset();
      }
    }
    for (int t = 0; t < ntasks; ++t) ok = ok && acquires[static_cast<sched::TaskId>(t + 1)] == 1 + susp[static_cast<std::size_t>(t)];
    if (!ok) {
      v.require(false, "occupancy violated in program " + std::to_string(iter));
      break;
    }
  }

  Scheduler s;
  auto never = s.make_token();
  s.spawn([](Scheduler* sp, CompletionToken t) -> Task<> { co_await sp->await(t); }(&s, never.token()), "stuck");
  bool diagnosed = false;
  try {
    s.run();
  } catch (const sched::DeadlockError& e) {
    diagnosed = std::string(e.what()).find("stuck") != std::string::npos;
  }
  v.require(diagnosed, "deadlock not diagnosed with the task name");
  if (v.pass) v.detail = std::to_string(programs) + " random programs: work conserved, no worker held while suspended; deadlock named";
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"counting identities", ac1},       {"strategy transparency", ac2},
      {"conservation", ac3},              {"pool steady state", ac4},
      {"aggregation semantics", ac5},     {"nvidia-like orderings", ac6},
      {"amd-like orderings", ac7},        {"strategy-1 effect", ac8},
      {"monotone sweeps", ac9},           {"scheduler properties", ac10}};
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    if (!v.pass) ++failed;
    std::printf("AC%-2d %s  %s: %s\n", id, v.pass ? "PASS" : "FAIL", criteria[i].first.c_str(), v.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
