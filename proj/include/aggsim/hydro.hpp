#pragma once

// Scalar linear advection on a periodic cube split into equal sub-grids.
//
// Each iteration runs five kernels per sub-grid (prep, reconstruct, flux,
// reduce, update) on the virtual device, or as charged host work when the
// executor pool is empty. Three forward-Euler iterations make one step.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "aggsim/aggregator.hpp"
#include "aggsim/bufferpool.hpp"
#include "aggsim/executorpool.hpp"
#include "aggsim/sched.hpp"
#include "aggsim/vdevice.hpp"

namespace aggsim::hydro {

inline constexpr int kGhost = 3;
inline constexpr int kIterationsPerStep = 3;
inline constexpr int kKernelCount = 5;

enum class Kernel { prep, reconstruct, flux, reduce, update };
inline constexpr std::array<Kernel, kKernelCount> kKernels = {
    Kernel::prep, Kernel::reconstruct, Kernel::flux, Kernel::reduce, Kernel::update};

const char* to_string(Kernel k);

struct Pulse {
  std::array<double, 3> center{0.5, 0.5, 0.5};
  double width = 0.1;
  double amplitude = 1.0;
};

struct ScenarioParams {
  int subgrid_n = 8;
  int edge_cells = 64;
  Pulse pulse;
  /// Velocity is (a, a, a).
  double velocity = 1.0;
  double cfl = 0.15;
  /// Replaces the pulse with u = 1 everywhere.
  bool uniform = false;
};

struct SubGrid {
  std::array<int, 3> index{};
  /// Flat indices of the 26 neighbours in (dz, dy, dx) order, -1..1 each,
  /// with the centre entry pointing at the sub-grid itself.
  std::array<int, 27> neighbors{};

  std::vector<double> interior;  // n^3, x fastest
  std::vector<double> next;      // n^3, written by update
  std::vector<double> ghosted;   // (n+6)^3, filled by exchange_ghosts
  std::vector<double> work;      // prep output
  std::vector<double> faces;     // 6 (n+2)^3, reconstruct output
  std::vector<double> flux;      // 3 (n+2)^3
  double wavespeed = 0;          // reduce output
};

struct Scenario {
  ScenarioParams params;
  int subgrids_per_edge = 0;
  /// Octree depth at which the sub-grids sit (subgrids_per_edge = 2^level).
  int level = 0;
  double dx = 0;
  double dt = 0;
  std::vector<SubGrid> grids;

  int n() const { return params.subgrid_n; }
  int subgrid_count() const { return static_cast<int>(grids.size()); }
  std::int64_t total_cells() const;
  std::int64_t ghost_cells_per_subgrid() const;
  int flat(int ix, int iy, int iz) const;

  /// Interior values as one edge^3 array, x fastest.
  std::vector<double> gather() const;
  void scatter(std::span<const double> global);
  double total_mass() const;
};

/// Throws ValidationError unless edge_cells is a positive multiple of
/// subgrid_n and the resulting sub-grid count per edge is a power of two.
Scenario build_scenario(const ScenarioParams& params);
Scenario build_scenario(int subgrid_n, int edge_cells = 64, Pulse pulse = {});

/// Fills g's ghost shell from the neighbours' current interiors.
void exchange_ghosts(Scenario& scenario, SubGrid& g);

// ---- kernel shapes and math -------------------------------------------

struct KernelShape {
  std::int64_t input_len = 0;   // f64 values staged host->device
  std::int64_t output_len = 0;  // f64 values copied back
  std::int64_t work_items = 0;
  /// Cells visited on the host path (work_items except for reduce).
  std::int64_t host_items = 0;
  int blocks = 0;
  Ratio work_factor{1, 10};
};

KernelShape kernel_shape(Kernel k, int n);

struct KernelArgs {
  int n = 8;
  double velocity = 1.0;
  double dtdx = 0;
};

/// Computes work items [begin, end) of one kernel. For reduce the single
/// work item covers the whole sub-grid.
void run_items(Kernel k, const KernelArgs& args, std::span<const double> in,
               std::span<double> out, std::int64_t begin, std::int64_t end);

double minmod(double a, double b);

// ---- host cost model --------------------------------------------------

/// Simulated host costs read from SchedulerConfig::host_op_costs.
struct HostCosts {
  Ticks ghost_exchange_per_cell = 0;
  Ticks stage_per_value = 0;
  Ticks launch_api = 0;
  Ticks copy_api = 0;
  std::array<Ticks, kKernelCount> cpu_per_item{};

  static HostCosts from(const sched::SchedulerConfig& cfg);
  static const std::vector<std::string>& keys();
};

// ---- stepping ---------------------------------------------------------

struct StrategyConfig {
  int executors = 1;
  int max_team = 1;
  exec::Policy policy = exec::Policy::round_robin;
};

struct StepStats {
  Ticks duration = 0;
  std::uint64_t kernels = 0;
  std::uint64_t transfers = 0;
  std::uint64_t teams = 0;
  std::uint64_t raw_allocs_device = 0;
  std::uint64_t raw_allocs_pinned = 0;
  std::uint64_t syncs = 0;
  std::uint64_t stream_creations = 0;
  /// Per kernel: team size -> teams formed this step.
  std::array<std::map<int, std::uint64_t>, kKernelCount> team_sizes;
};

/// Owns the runtime (scheduler, device, pools, regions) driving one
/// scenario under one strategy. Construction creates the executors and
/// reserves every pool bucket the strategy can reach, so all raw
/// allocations land in the first step.
class Simulation {
 public:
  Simulation(Scenario& scenario, StrategyConfig cfg, vdev::DeviceProfile profile,
             sched::SchedulerConfig sched_cfg = {});
  ~Simulation();
  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  /// Counters cover everything since the previous step (or construction).
  StepStats step();

  const StrategyConfig& config() const { return cfg_; }
  Scenario& scenario() { return scenario_; }
  sched::Scheduler& scheduler() { return *sched_; }
  vdev::Device& device() { return *device_; }
  pool::BufferPool& buffers() { return *buffers_; }
  agg::Aggregator* aggregator() { return aggregator_.get(); }
  const HostCosts& costs() const { return costs_; }

 private:
  sched::Task<> subgrid_task(int g);
  sched::Task<> device_kernel(Kernel k, int g);
  void stage(Kernel k, const SubGrid& g, std::span<double> dst) const;
  void unstage(Kernel k, SubGrid& g, std::span<const double> src) const;
  KernelArgs args() const;
  void presize_pools();

  Scenario& scenario_;
  StrategyConfig cfg_;
  HostCosts costs_;
  std::unique_ptr<sched::Scheduler> sched_;
  std::unique_ptr<vdev::Device> device_;
  std::unique_ptr<exec::ExecutorPool> executors_;
  std::unique_ptr<pool::BufferPool> buffers_;
  std::unique_ptr<agg::Aggregator> aggregator_;
  std::array<agg::Region*, kKernelCount> regions_{};
  std::array<KernelShape, kKernelCount> shapes_{};

  VirtualTime mark_{};
  vdev::DeviceCounters counters_mark_{};
  std::array<std::map<int, std::uint64_t>, kKernelCount> teams_mark_;
};

/// Advances a copy of the scenario's field by `steps` with plain loops over
/// the global periodic mesh. Returns the final edge^3 field.
std::vector<double> serial_reference(const Scenario& scenario, int steps);

// ---- fixtures ---------------------------------------------------------

/// Binary layout (little-endian host order): "AGSM", i32 subgrid_n,
/// i32 edge_cells, i32 subgrid_count, then n^3 f64 per sub-grid in flat
/// sub-grid order, each x fastest.
void dump(const Scenario& scenario, std::ostream& out);
/// Rebuilds the scenario from a dump; velocity and cfl come from `base`.
Scenario load(std::istream& in, const ScenarioParams& base = {});

}  // namespace aggsim::hydro
