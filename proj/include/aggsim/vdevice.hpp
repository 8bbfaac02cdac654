#pragma once

// Deterministic discrete-event model of an accelerator.
//
// Streams are in-order queues. A kernel starts when it reaches the head of
// its stream, fewer than max_concurrent_kernels kernels are running and a
// block slot is free. It then spends its launch overhead, after which its
// blocks are dispatched greedily into free slots (cu_count x
// resident_blocks_per_cu). A kernel ends when its last block retires.
// Raw device allocations and stream creation insert a device-wide barrier.
//
// Kernel and copy bodies execute eagerly at enqueue time; only timestamps
// come from the model. Because every consumer waits on the producer's token
// and streams are FIFO, eager execution observes the same data as in-order
// execution would.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "aggsim/common.hpp"
#include "aggsim/sched.hpp"

namespace aggsim::vdev {

inline constexpr int kThreadsPerBlock = 128;
inline constexpr int kMaxStreams = 128;

/// Number of 128-wide blocks needed for `work_items`.
constexpr int blocks_for(std::int64_t work_items) {
  return static_cast<int>((work_items + kThreadsPerBlock - 1) / kThreadsPerBlock);
}

struct DeviceProfile {
  std::string name = "device";
  int cu_count = 1;
  int resident_blocks_per_cu = 1;
  /// Ticks per block for work_factor 1.
  Ticks t_block = 0;
  /// Launch overhead of an uncontended kernel.
  Ticks t_launch = 0;
  Ticks t_copy_base = 0;
  Ratio t_copy_per_byte{0, 1};
  int max_concurrent_kernels = 128;
  /// Extra launch overhead per other stream with a running kernel, as a
  /// fraction of t_launch.
  Ratio concurrency_penalty{0, 1};
  Ticks t_device_sync = 0;
  /// DMA engines per direction; 0 means copies never queue on each other.
  int copy_engines = 0;
  /// Rejects raw allocations beyond this many bytes in total; 0 = unbounded.
  std::int64_t alloc_cap_bytes = 0;

  int block_capacity() const { return cu_count * resident_blocks_per_cu; }
  bool operator==(const DeviceProfile&) const = default;
  void validate() const;
};

/// Parses a key=value profile (one entry per line, '#' comments). Unknown
/// keys and malformed lines raise ValidationError naming the line number.
/// Keys not present keep the values of `base`.
DeviceProfile parse_profile(std::istream& in, DeviceProfile base = {});
DeviceProfile load_profile(const std::string& path, DeviceProfile base = {});
void write_profile(std::ostream& out, const DeviceProfile& p);

struct KernelSpec {
  std::string kernel_id;
  int blocks = 1;
  int threads_per_block = kThreadsPerBlock;
  Ratio work_factor{1, 1};
  int slice_count = 1;

  int blocks_per_slice() const { return blocks / slice_count; }
  void validate() const;
};

struct StreamId {
  int index = -1;
  constexpr auto operator<=>(const StreamId&) const = default;
};

struct BufferId {
  std::uint64_t value = 0;
  constexpr auto operator<=>(const BufferId&) const = default;
};

enum class MemoryKind { device, pinned_host };
enum class CopyDirection { host_to_device, device_to_host };

enum class EventKind {
  kernel_start,
  block_retire,
  kernel_end,
  copy_start,
  copy_end,
  sync_begin,
  sync_end
};

const char* to_string(EventKind k);
const char* to_string(MemoryKind k);
const char* to_string(CopyDirection d);

struct DeviceEvent {
  EventKind kind{};
  VirtualTime time;
  std::uint64_t seq = 0;
  int stream = -1;
  std::string kernel_id;
  int blocks = 0;
  int slice_count = 0;
};

/// Identifies one block of a (possibly aggregated) kernel.
struct BlockContext {
  int slice = 0;
  int block = 0;
  int blocks_per_slice = 1;
};

using KernelBody = std::function<void(const BlockContext&)>;
using CopyBody = std::function<void()>;

struct DeviceCounters {
  std::uint64_t kernels = 0;
  std::uint64_t copies = 0;
  std::uint64_t copy_bytes = 0;
  std::uint64_t raw_allocs_device = 0;
  std::uint64_t raw_allocs_pinned = 0;
  std::uint64_t stream_creations = 0;
  std::uint64_t sync_events = 0;
  int max_running_kernels = 0;
  int max_occupied_slots = 0;
};

class Device {
 public:
  /// Validates the profile; the device starts idle with no streams.
  Device(sched::Scheduler& sched, DeviceProfile profile);
  ~Device();
  Device(const Device&) = delete;
  Device& operator=(const Device&) = delete;

  struct StreamCreation {
    StreamId stream;
    sched::CompletionToken usable;
  };
  /// Adds a FIFO stream. Always pays a device-wide barrier; work enqueued
  /// anywhere after this call starts only after the barrier.
  StreamCreation create_stream();

  sched::CompletionToken enqueue_kernel(StreamId stream, KernelSpec spec, const KernelBody& body);
  sched::CompletionToken enqueue_copy(StreamId stream, CopyDirection dir, std::int64_t bytes,
                                      const CopyBody& body = {});

  struct Allocation {
    BufferId id;
    sched::CompletionToken done;
  };
  /// Allocates storage. Device memory pays a device-wide barrier (drain of
  /// all earlier work, then t_device_sync); pinned host memory completes
  /// immediately. Fresh storage is filled with 0xFF bytes (NaN for f64).
  Allocation raw_alloc(MemoryKind kind, std::size_t bytes);
  void raw_free(BufferId id);
  std::span<std::byte> memory(BufferId id);

  /// True iff the stream has an enqueued-but-unfinished operation now.
  /// Busy intervals are end-exclusive: an operation whose end time equals
  /// now() no longer counts, even before its completion event is processed.
  bool stream_busy(StreamId stream) const;
  int unfinished_ops(StreamId stream) const;
  /// One-shot callback for the next time the stream drains. Runs
  /// immediately if the stream is idle.
  void on_stream_idle(StreamId stream, std::function<void()> fn);

  int stream_count() const { return static_cast<int>(streams_.size()); }
  int cu_count() const { return profile_.cu_count; }
  const DeviceProfile& profile() const { return profile_; }
  const DeviceCounters& counters() const { return counters_; }
  sched::Scheduler& scheduler() { return sched_; }

  void set_event_logging(bool on) { logging_ = on; }
  const std::vector<DeviceEvent>& event_log() const { return log_; }
  /// Columns: time,kind,stream,kernel_id,blocks,slice_count
  void write_event_csv(std::ostream& out) const;

 private:
  enum class OpKind { kernel, copy };

  struct Op {
    OpKind kind{};
    std::uint64_t seq = 0;
    int stream = -1;
    std::size_t barrier_epoch = 0;
    KernelSpec spec;
    CopyDirection dir{};
    std::int64_t bytes = 0;
    sched::TokenSource done;
    bool started = false;
    int blocks_pending = 0;
    int blocks_retired = 0;
    // Completion time, once every block (or the copy) has been scheduled.
    std::optional<VirtualTime> end_at;
  };

  struct Stream {
    std::deque<std::unique_ptr<Op>> ops;
    std::vector<std::function<void()>> idle_watchers;
  };

  struct Barrier {
    std::uint64_t drain_remaining = 0;
    bool begun = false;
    bool ended = false;
    sched::TokenSource done;
  };

  Op& push_op(StreamId stream, std::unique_ptr<Op> op);
  void check_stream(StreamId stream) const;
  std::size_t request_barrier(sched::TokenSource done);
  void advance_barriers();
  bool barrier_clear(const Op& op) const { return barriers_ended_ >= op.barrier_epoch; }
  void pump();
  void start_kernel(Op& op);
  void start_copy(Op& op);
  void dispatch_blocks();
  void finish_op(Op& op);
  void log(EventKind kind, int stream, const std::string& kernel_id, int blocks, int slices);

  sched::Scheduler& sched_;
  DeviceProfile profile_;
  std::deque<Stream> streams_;
  std::uint64_t op_seq_ = 0;
  std::uint64_t unfinished_total_ = 0;

  // Heads of streams that have not started yet, ordered by enqueue seq.
  std::set<std::pair<std::uint64_t, Op*>> waiting_kernels_;
  std::set<std::pair<std::uint64_t, Op*>> waiting_copies_;
  std::deque<Op*> block_queue_;
  int running_kernels_ = 0;
  int free_slots_ = 0;
  int busy_engines_[2] = {0, 0};

  std::vector<Barrier> barriers_;
  std::size_t barriers_ended_ = 0;

  std::map<BufferId, std::unique_ptr<std::byte[]>> memory_;
  std::map<BufferId, std::size_t> memory_size_;
  std::uint64_t buffer_seq_ = 0;
  std::int64_t allocated_bytes_ = 0;

  DeviceCounters counters_;
  bool logging_ = false;
  std::vector<DeviceEvent> log_;
  std::uint64_t log_seq_ = 0;
};

}  // namespace aggsim::vdev
