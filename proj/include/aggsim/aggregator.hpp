#pragma once

// Explicit on-the-fly work aggregation.
//
// Tasks enter a named region. A task whose parent executor is idle proceeds
// alone; otherwise it joins the parent's forming team, which closes when the
// executor drains or the team reaches max_team. Inside a team every member
// issues the same sequence of alloc/copy/launch calls. The first arrival at
// an allocation acquires one buffer for the whole team and each member gets
// its own contiguous chunk; the last arrival at a copy or launch enqueues a
// single operation covering all members.

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "aggsim/bufferpool.hpp"
#include "aggsim/executorpool.hpp"
#include "aggsim/sched.hpp"
#include "aggsim/vdevice.hpp"

namespace aggsim::agg {

/// Team members diverged from one another's operation sequence.
class OrderingViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Aggregator;
class Region;
struct Team;
struct Member;
struct Record;

/// One member's chunk of a team buffer.
struct SliceView {
  pool::PooledBuffer buffer;
  std::size_t offset = 0;  // elements
  std::size_t length = 0;  // elements
  std::uint64_t team_id = 0;
  int sequence = -1;

  std::span<std::byte> bytes() const {
    auto es = pool::element_size(buffer.element());
    return buffer.bytes().subspan(offset * es, length * es);
  }
  template <typename T>
  std::span<T> as() const {
    return buffer.as<T>().subspan(offset, length);
  }
};

/// Runs one block of the member's share of an aggregated kernel. Invoked
/// only with ctx.slice equal to the member's slice id. Must capture by value:
/// it may run after the member has moved on.
using SliceBody = std::function<void(const vdev::BlockContext&)>;

class Slice {
 public:
  Slice() = default;

  int slice_id() const;
  int team_size() const;
  std::uint64_t team_id() const;
  const std::string& region_name() const;

  sched::Task<SliceView> alloc(pool::MemoryKind kind, pool::ElementKind element, std::size_t len);
  /// Transfers src into dst for every member in one operation.
  sched::CompletionToken copy(vdev::CopyDirection dir, const SliceView& src, const SliceView& dst);
  /// Timing-only transfer of bytes_per_slice per member.
  sched::CompletionToken copy(vdev::CopyDirection dir, std::int64_t bytes_per_slice);
  sched::CompletionToken launch(const std::string& kernel_id, int blocks_per_slice,
                                Ratio work_factor, SliceBody body);
  void leave();
  /// True if this member's most recent copy/launch call was the last
  /// arrival and therefore issued the device operation.
  bool issued_last() const;

 private:
  friend class Aggregator;
  Record& arrive(int kind, const std::string& signature);
  sched::CompletionToken finish(
      Record& rec, const std::function<sched::CompletionToken(vdev::Device&, vdev::StreamId)>& enqueue);
  std::shared_ptr<Member> member_;
};

struct RegionStats {
  std::string name;
  std::map<int, std::uint64_t> team_sizes;  // size -> teams
  std::uint64_t teams_formed = 0;
  std::uint64_t violations = 0;
  std::uint64_t members() const;
};

class Region {
 public:
  const std::string& name() const { return name_; }
  int max_team() const { return max_team_; }
  int parent_count() const { return static_cast<int>(parents_.size()); }
  /// Executor index backing each parent.
  int parent_executor(int parent) const { return parents_.at(static_cast<std::size_t>(parent)).executor; }
  const RegionStats& stats() const { return stats_; }
  /// Further enter() calls fail with UsageError.
  void teardown() { torn_down_ = true; }

 private:
  friend class Aggregator;
  friend class Slice;
  friend struct Team;

  struct Parent {
    int executor = 0;
    std::shared_ptr<Team> forming;
    int reservations = 0;
  };

  Region(Aggregator& owner, std::string name, int max_team) : owner_(owner), name_(std::move(name)), max_team_(max_team) {}

  Aggregator& owner_;
  std::string name_;
  int max_team_;
  std::vector<Parent> parents_;
  std::uint64_t arrivals_ = 0;
  int cursor_ = 0;  // round-robin: parent taking arrivals until its team closes
  bool torn_down_ = false;
  RegionStats stats_;
};

class Aggregator {
 public:
  Aggregator(exec::ExecutorPool& executors, pool::BufferPool& buffers);
  ~Aggregator();
  Aggregator(const Aggregator&) = delete;
  Aggregator& operator=(const Aggregator&) = delete;

  /// Parents are spread round-robin over the pool's executors.
  Region& define_region(const std::string& name, int parent_count, int max_team);
  Region& region(const std::string& name);

  /// Suspends (without holding a worker) until the caller's team closes.
  sched::Task<Slice> enter(Region& region);

  std::vector<RegionStats> stats() const;
  /// Columns: region,team_size,teams,teams_formed,violations
  void write_csv(std::ostream& out) const;

  exec::ExecutorPool& executors() { return executors_; }
  pool::BufferPool& buffers() { return buffers_; }
  sched::Scheduler& scheduler() { return executors_.device().scheduler(); }

 private:
  friend class Slice;
  friend struct Team;

  int choose_parent(Region& region);
  bool parent_busy(Region& region, int parent);
  void maybe_close(Region& region, int parent);
  void close(Team& team);
  void release_reservation(Team& team);
  void maybe_finish(Team& team);
  [[noreturn]] static void violation(Team& team, int seq, const std::string& expected,
                                     const std::string& got);

  exec::ExecutorPool& executors_;
  pool::BufferPool& buffers_;
  std::map<std::string, std::unique_ptr<Region>> regions_;
  std::vector<Region*> order_;
  std::set<sched::TaskId> inside_;
  std::uint64_t team_seq_ = 0;
};

}  // namespace aggsim::agg
