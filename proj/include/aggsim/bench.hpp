#pragma once

// Strategy-matrix runner and report writer.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "aggsim/executorpool.hpp"
#include "aggsim/hydro.hpp"
#include "aggsim/sched.hpp"
#include "aggsim/vdevice.hpp"

namespace aggsim::bench {

class CalibrationError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Solo durations of the n=8 reconstruct and flux kernels.
struct Anchors {
  Ticks reconstruct = 300000;
  Ticks flux = 150000;
  int subgrid_n = 8;
};

/// Sets t_block and t_launch so a lone reconstruct and a lone flux kernel
/// take exactly the anchor durations. Everything else is kept.
vdev::DeviceProfile calibrate(vdev::DeviceProfile profile, const Anchors& anchors = {});

/// Lone kernel duration under `profile` (no other streams active).
Ticks solo_duration(const vdev::DeviceProfile& profile, hydro::Kernel k, int subgrid_n);

/// "a100like" or "mi100like"; anything else throws ValidationError.
vdev::DeviceProfile builtin_profile(const std::string& name);
/// A built-in name, or a path to a key=value profile file.
vdev::DeviceProfile resolve_profile(const std::string& name_or_path);

/// Default host cost table (key -> ticks).
std::map<std::string, Ticks, std::less<>> default_host_costs();
/// Parses key=value lines; unknown keys or bad values raise
/// ValidationError naming the line.
std::map<std::string, Ticks, std::less<>> parse_host_costs(std::istream& in);
std::map<std::string, Ticks, std::less<>> load_host_costs(const std::string& path);
void write_host_costs(std::ostream& out, const std::map<std::string, Ticks, std::less<>>& costs);

struct Cell {
  int cores = 32;
  int subgrid_n = 8;
  int executors = 1;
  int max_team = 1;
  auto operator<=>(const Cell&) const = default;
};

enum class Format { csv, markdown };
Format parse_format(const std::string& text);

struct BenchConfig {
  std::vector<Cell> cells;
  std::string profile = "a100like";
  std::map<std::string, Ticks, std::less<>> host_costs = default_host_costs();
  exec::Policy policy = exec::Policy::round_robin;
  int steps = 15;
  int warmup_steps = 1;
  int edge_cells = 64;
  /// Adds an executors=0 row per (cores, subgrid) present in `cells`.
  bool cpu_baseline = true;
  /// When non-empty, every cell's device event log is appended here.
  std::string dump_events;

  void validate() const;
};

/// Cells of the cartesian product subgrids x executors x max_team.
std::vector<Cell> product(int cores, const std::vector<int>& subgrids, const std::vector<int>& executors,
                          const std::vector<int>& max_team);

/// Rows of the runtime table: CPU-only runs, both sub-grid sizes at one
/// executor, the executor sweep, the team-size sweep and the combinations.
BenchConfig preset_table2();

struct Row {
  Cell cell;
  Ticks ticks_per_step = 0;  // mean over measured steps, floored
  std::uint64_t kernels = 0;    // per measured step, rounded
  std::uint64_t transfers = 0;  // per measured step, rounded
  std::uint64_t raw_allocs = 0;  // device-kind, whole run
  std::uint64_t syncs = 0;       // whole run

  // not part of the emitted table
  std::uint64_t measured_raw_allocs = 0;
  std::uint64_t measured_syncs = 0;
  std::uint64_t stream_creations = 0;
  std::map<int, std::uint64_t> team_sizes;  // all kernels, measured steps

  double ms_per_step() const { return static_cast<double>(ticks_per_step) / 1e6; }
};

struct Report {
  std::vector<Row> rows;
  const Row* find(const Cell& c) const;
};

Row run_cell(const Cell& cell, const BenchConfig& cfg, const vdev::DeviceProfile& profile,
             std::ostream* events = nullptr);
Report run_matrix(const BenchConfig& cfg);

/// Columns: cores|subgrid|executors|max_team|ms_per_step|kernels|transfers|raw_allocs|syncs
std::string emit(const Report& report, Format format);
/// Reads back what emit(csv) wrote (emitted columns only).
Report parse_csv(std::istream& in);

/// Table section a row belongs to; the 1-executor/1-kernel row appears in
/// the first three GPU sections.
std::vector<std::string> sections_of(const Cell& c);

}  // namespace aggsim::bench
