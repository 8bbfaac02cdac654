#include <fstream>
#include <sstream>

#include "aggsim/bench.hpp"
#include "doctest.h"

using namespace aggsim;
using namespace aggsim::bench;
using hydro::Kernel;

namespace {

BenchConfig small(std::vector<Cell> cells, const std::string& profile = "a100like") {
  BenchConfig cfg;
  cfg.cells = std::move(cells);
  cfg.profile = profile;
  cfg.edge_cells = 32;
  cfg.steps = 2;
  cfg.cpu_baseline = false;
  return cfg;
}

}  // namespace

TEST_CASE("calibrated profiles hit the solo anchors") {
  for (const char* name : {"a100like", "mi100like"}) {
    auto p = builtin_profile(name);
    CAPTURE(name);
    CHECK(solo_duration(p, Kernel::reconstruct, 8) == 300000);
    CHECK(solo_duration(p, Kernel::flux, 8) == 150000);
    CHECK(calibrate(p) == p);
  }
}

TEST_CASE("custom anchors") {
  auto p = calibrate(builtin_profile("a100like"), Anchors{400000, 250000, 8});
  CHECK(solo_duration(p, Kernel::reconstruct, 8) == 400000);
  CHECK(solo_duration(p, Kernel::flux, 8) == 250000);
}

TEST_CASE("inconsistent anchors are calibration errors") {
  auto base = builtin_profile("a100like");
  CHECK_THROWS_AS(calibrate(base, Anchors{150000, 300000, 8}), CalibrationError);
  CHECK_THROWS_AS(calibrate(base, Anchors{200000, 200000, 8}), CalibrationError);
  CHECK_THROWS_AS(calibrate(base, Anchors{-1, -5, 8}), CalibrationError);
  // t_launch would go negative
  CHECK_THROWS_AS(calibrate(base, Anchors{300000, 10, 8}), CalibrationError);
}

TEST_CASE("concurrency penalty does not change solo timings") {
  auto a = builtin_profile("a100like");
  auto m = builtin_profile("mi100like");
  m.cu_count = a.cu_count;
  m.resident_blocks_per_cu = a.resident_blocks_per_cu;
  m.concurrency_penalty = Ratio{0, 1};
  m = calibrate(m);
  for (auto k : hydro::kKernels) {
    for (int n : {8, 16}) CHECK(solo_duration(m, k, n) == solo_duration(a, k, n));
  }
  // differs once kernels overlap
  auto k7 = m;
  k7.concurrency_penalty = Ratio{7, 1};
  auto run = [](const vdev::DeviceProfile& p) {
    sched::Scheduler s;
    vdev::Device dev(s, p);
    auto s1 = dev.create_stream().stream;
    auto s2 = dev.create_stream().stream;
    s.run();
    vdev::KernelSpec k{"k", 8, vdev::kThreadsPerBlock, Ratio{1, 1}, 1};
    dev.enqueue_kernel(s1, k, {});
    auto last = dev.enqueue_kernel(s2, k, {});
    s.run();
    return last.ready_at();
  };
  CHECK(run(k7) > run(m));
}

TEST_CASE("shipped files match the built-ins") {
  for (const char* name : {"a100like", "mi100like"}) {
    auto file = vdev::load_profile(std::string(AGGSIM_PROFILE_DIR) + "/" + name + ".profile");
    CHECK(file == builtin_profile(name));
    CHECK(resolve_profile(name) == file);
  }
  CHECK(load_host_costs(std::string(AGGSIM_PROFILE_DIR) + "/host_costs.txt") == default_host_costs());
  CHECK_THROWS_AS(builtin_profile("h100like"), ValidationError);
}

TEST_CASE("host cost parsing") {
  std::istringstream ok("# comment\n\nlaunch_api = 7  # trailing\ncopy_api=3\n");
  auto m = parse_host_costs(ok);
  CHECK(m.at("launch_api") == 7);
  CHECK(m.at("copy_api") == 3);

  auto fails_on = [](const std::string& text, const std::string& needle) {
    std::istringstream in(text);
    try {
      parse_host_costs(in);
    } catch (const ValidationError& e) {
      return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
  };
  CHECK(fails_on("launch_api=1\nbogus=2\n", "line 2"));
  CHECK(fails_on("launch_api=1\nbogus=2\n", "bogus"));
  CHECK(fails_on("\n\ncopy_api=-4\n", "line 3"));
  CHECK(fails_on("copy_api 4\n", "line 1"));
  CHECK(fails_on("copy_api=4x\n", "line 1"));

  std::ostringstream out;
  write_host_costs(out, default_host_costs());
  std::istringstream back(out.str());
  CHECK(parse_host_costs(back) == default_host_costs());
}

TEST_CASE("empty report emits the header only") {
  CHECK(emit(Report{}, Format::csv) ==
        "cores,subgrid,executors,max_team,ms_per_step,kernels,transfers,raw_allocs,syncs\n");
  auto md = emit(Report{}, Format::markdown);
  CHECK(md.find("| cores | subgrid | executors | max_team | ms_per_step") != std::string::npos);
  CHECK(md.find("###") == std::string::npos);
}

TEST_CASE("csv round trip") {
  auto cfg = small({{32, 8, 1, 1}, {32, 8, 2, 4}, {32, 16, 4, 2}});
  cfg.cpu_baseline = true;
  auto report = run_matrix(cfg);
  auto text = emit(report, Format::csv);
  std::istringstream in(text);
  auto back = parse_csv(in);
  REQUIRE(back.rows.size() == report.rows.size());
  for (std::size_t i = 0; i < back.rows.size(); ++i) {
    const auto& a = report.rows[i];
    const auto& b = back.rows[i];
    CHECK(a.cell == b.cell);
    CHECK(a.ticks_per_step == b.ticks_per_step);
    CHECK(a.kernels == b.kernels);
    CHECK(a.transfers == b.transfers);
    CHECK(a.raw_allocs == b.raw_allocs);
    CHECK(a.syncs == b.syncs);
  }
  CHECK(emit(back, Format::csv) == text);

  std::istringstream bad("cores,subgrid\n1,2\n");
  CHECK_THROWS_AS(parse_csv(bad), ValidationError);
}

TEST_CASE("cpu baseline rows are present and strategy independent") {
  auto cfg = small({{32, 8, 1, 1}, {32, 8, 4, 8}});
  cfg.cpu_baseline = true;
  auto r1 = run_matrix(cfg);
  const Row* cpu = r1.find({32, 8, 0, 1});
  REQUIRE(cpu != nullptr);
  CHECK(cpu->raw_allocs == 0);
  CHECK(cpu->syncs == 0);
  CHECK(cpu->kernels == 0);

  cfg.policy = exec::Policy::load_balanced;
  auto r2 = run_matrix(cfg);
  CHECK(r2.find({32, 8, 0, 1})->ticks_per_step == cpu->ticks_per_step);
}

TEST_CASE("cap 2 is no slower than cap 1") {
  for (const char* name : {"a100like", "mi100like"}) {
    auto report = run_matrix(small({{32, 8, 1, 1}, {32, 8, 1, 2}}, name));
    CAPTURE(name);
    CHECK(report.find({32, 8, 1, 2})->ticks_per_step <= report.find({32, 8, 1, 1})->ticks_per_step);
  }
}

TEST_CASE("kernel and transfer columns at 64^3") {
  BenchConfig cfg;
  cfg.cells = {{32, 8, 1, 1}};
  cfg.steps = 1;
  cfg.cpu_baseline = false;
  auto report = run_matrix(cfg);
  const auto& row = report.rows.at(0);
  CHECK(row.kernels == 7680);
  CHECK(row.transfers == 15360);
  // pools are warm: no allocations or device syncs after the first step
  CHECK(row.measured_raw_allocs == 0);
  CHECK(row.measured_syncs == 0);
  // syncs = device allocations + stream creations
  CHECK(row.syncs == row.raw_allocs + row.stream_creations);
}

TEST_CASE("markdown sections") {
  std::vector<Cell> cells;
  for (int cap = 1; cap <= 128; cap *= 2) cells.push_back({32, 8, 1, cap});
  cells.push_back({32, 8, 2, 1});
  cells.push_back({32, 16, 1, 1});
  cells.push_back({32, 8, 4, 8});
  auto cfg = small(cells);
  cfg.steps = 1;
  cfg.cpu_baseline = true;
  auto md = emit(run_matrix(cfg), Format::markdown);
  auto section = [&](const std::string& title) {
    auto at = md.find("### " + title);
    REQUIRE(at != std::string::npos);
    auto end = md.find("###", at + 3);
    std::istringstream body(md.substr(at, end == std::string::npos ? std::string::npos : end - at));
    int rows = 0;
    std::string line;
    while (std::getline(body, line)) {
      if (line.starts_with("| 32 ")) ++rows;
    }
    return rows;
  };
  CHECK(section("Strategy 3: more on-the-fly aggregated kernels") == 8);
  CHECK(section("Strategy 2: more GPU executors") == 2);
  CHECK(section("Strategy 1: larger sub-grids") == 2);
  CHECK(section("CPU-only runs") == 2);
  CHECK(section("Combined strategies 2 and 3, 8^3 sub-grids") == 1);
}

TEST_CASE("preset table") {
  auto cfg = preset_table2();
  CHECK(cfg.cpu_baseline == false);
  auto has = [&](Cell c) { return std::find(cfg.cells.begin(), cfg.cells.end(), c) != cfg.cells.end(); };
  for (int k = 1; k <= 128; k *= 2) {
    CHECK(has({32, 8, k, 1}));
    CHECK(has({32, 8, 1, k}));
  }
  CHECK(has({1, 8, 0, 1}));
  CHECK(has({32, 16, 0, 1}));
  CHECK(has({32, 8, 128, 16}));
  CHECK(has({32, 16, 32, 4}));
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("validation") {
  auto cfg = small({{32, 8, 1, 1}});
  cfg.steps = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = small({{32, 7, 1, 1}});
  CHECK_THROWS_AS(run_matrix(cfg), ValidationError);
  cfg = small({{32, 8, 1, 0}});
  CHECK_THROWS_AS(run_matrix(cfg), ValidationError);
  CHECK_THROWS_AS(parse_format("xml"), ValidationError);
}

TEST_CASE("identical configs give byte-identical reports") {
  auto cfg = small({{32, 8, 2, 4}, {8, 16, 3, 2}});
  cfg.policy = exec::Policy::load_balanced;
  CHECK(emit(run_matrix(cfg), Format::csv) == emit(run_matrix(cfg), Format::csv));
  CHECK(emit(run_matrix(cfg), Format::markdown) == emit(run_matrix(cfg), Format::markdown));
}
