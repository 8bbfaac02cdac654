#include "aggsim/vdevice.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace aggsim::vdev {

const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::kernel_start: return "kernel_start";
    case EventKind::block_retire: return "block_retire";
    case EventKind::kernel_end: return "kernel_end";
    case EventKind::copy_start: return "copy_start";
    case EventKind::copy_end: return "copy_end";
    case EventKind::sync_begin: return "sync_begin";
    case EventKind::sync_end: return "sync_end";
  }
  return "?";
}

const char* to_string(MemoryKind k) {
  return k == MemoryKind::device ? "device" : "pinned_host";
}

const char* to_string(CopyDirection d) {
  return d == CopyDirection::host_to_device ? "h2d" : "d2h";
}

void DeviceProfile::validate() const {
  auto fail = [this](const std::string& what) {
    throw ValidationError("device profile '" + name + "': " + what);
  };
  if (cu_count < 1) fail("cu_count must be >= 1");
  if (resident_blocks_per_cu < 1) fail("resident_blocks_per_cu must be >= 1");
  if (t_block < 0 || t_launch < 0 || t_copy_base < 0 || t_device_sync < 0) {
    fail("costs must be >= 0");
  }
  if (!t_copy_per_byte.valid()) fail("t_copy_per_byte must be a non-negative ratio");
  if (!concurrency_penalty.valid()) fail("concurrency_penalty must be a non-negative ratio");
  if (max_concurrent_kernels < 1) fail("max_concurrent_kernels must be >= 1");
  if (copy_engines < 0) fail("copy_engines must be >= 0");
  if (alloc_cap_bytes < 0) fail("alloc_cap_bytes must be >= 0");
}

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename Int>
Int to_int(const std::string& v, int line) {
  Int out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ValidationError("profile line " + std::to_string(line) + ": '" + v +
                          "' is not an integer");
  }
  return out;
}

}  // namespace

DeviceProfile parse_profile(std::istream& in, DeviceProfile p) {
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    auto hash = raw.find('#');
    std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("profile line " + std::to_string(line) + ": expected key=value");
    }
    std::string key = trim(text.substr(0, eq));
    std::string val = trim(text.substr(eq + 1));
    auto ratio = [&] {
      try {
        return Ratio::parse(val);
      } catch (const ValidationError& e) {
        throw ValidationError("profile line " + std::to_string(line) + ": " + e.what());
      }
    };
    if (key == "name") p.name = val;
    else if (key == "cu_count") p.cu_count = to_int<int>(val, line);
    else if (key == "resident_blocks_per_cu") p.resident_blocks_per_cu = to_int<int>(val, line);
    else if (key == "t_block") p.t_block = to_int<Ticks>(val, line);
    else if (key == "t_launch") p.t_launch = to_int<Ticks>(val, line);
    else if (key == "t_copy_base") p.t_copy_base = to_int<Ticks>(val, line);
    else if (key == "t_copy_per_byte") p.t_copy_per_byte = ratio();
    else if (key == "max_concurrent_kernels") p.max_concurrent_kernels = to_int<int>(val, line);
    else if (key == "concurrency_penalty") p.concurrency_penalty = ratio();
    else if (key == "t_device_sync") p.t_device_sync = to_int<Ticks>(val, line);
    else if (key == "copy_engines") p.copy_engines = to_int<int>(val, line);
    else if (key == "alloc_cap_bytes") p.alloc_cap_bytes = to_int<std::int64_t>(val, line);
    else {
      throw ValidationError("profile line " + std::to_string(line) + ": unknown key '" + key + "'");
    }
  }
  p.validate();
  return p;
}

DeviceProfile load_profile(const std::string& path, DeviceProfile base) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open profile file '" + path + "'");
  return parse_profile(in, std::move(base));
}

void write_profile(std::ostream& out, const DeviceProfile& p) {
  out << "name=" << p.name << "\n"
      << "cu_count=" << p.cu_count << "\n"
      << "resident_blocks_per_cu=" << p.resident_blocks_per_cu << "\n"
      << "t_block=" << p.t_block << "\n"
      << "t_launch=" << p.t_launch << "\n"
      << "t_copy_base=" << p.t_copy_base << "\n"
      << "t_copy_per_byte=" << p.t_copy_per_byte.str() << "\n"
      << "max_concurrent_kernels=" << p.max_concurrent_kernels << "\n"
      << "concurrency_penalty=" << p.concurrency_penalty.str() << "\n"
      << "t_device_sync=" << p.t_device_sync << "\n"
      << "copy_engines=" << p.copy_engines << "\n"
      << "alloc_cap_bytes=" << p.alloc_cap_bytes << "\n";
}

void KernelSpec::validate() const {
  if (threads_per_block != kThreadsPerBlock) {
    throw ValidationError("kernel '" + kernel_id + "': threads_per_block must be 128");
  }
  if (blocks < 1) throw ValidationError("kernel '" + kernel_id + "': blocks must be >= 1");
  if (slice_count < 1) throw ValidationError("kernel '" + kernel_id + "': slice_count must be >= 1");
  if (blocks % slice_count != 0) {
    throw ValidationError("kernel '" + kernel_id + "': blocks not divisible by slice_count");
  }
  if (!work_factor.valid()) throw ValidationError("kernel '" + kernel_id + "': bad work_factor");
}

Device::Device(sched::Scheduler& sched, DeviceProfile profile)
    : sched_(sched), profile_(std::move(profile)) {
  profile_.validate();
  free_slots_ = profile_.block_capacity();
}

Device::~Device() = default;

void Device::check_stream(StreamId stream) const {
  if (stream.index < 0 || stream.index >= stream_count()) {
    throw UsageError("invalid stream id " + std::to_string(stream.index));
  }
}

void Device::log(EventKind kind, int stream, const std::string& kernel_id, int blocks, int slices) {
  if (!logging_) return;
  log_.push_back(DeviceEvent{kind, sched_.now(), log_seq_++, stream, kernel_id, blocks, slices});
}

Device::StreamCreation Device::create_stream() {
  if (stream_count() >= kMaxStreams) {
    throw CapacityError("stream table full (" + std::to_string(kMaxStreams) + " streams)");
  }
  streams_.emplace_back();
  ++counters_.stream_creations;
  auto done = sched_.make_token();
  auto token = done.token();
  request_barrier(std::move(done));
  return {StreamId{stream_count() - 1}, token};
}

Device::Allocation Device::raw_alloc(MemoryKind kind, std::size_t bytes) {
  if (profile_.alloc_cap_bytes > 0 &&
      allocated_bytes_ + static_cast<std::int64_t>(bytes) > profile_.alloc_cap_bytes) {
    throw CapacityError("raw allocation of " + std::to_string(bytes) + " bytes exceeds cap");
  }
  BufferId id{++buffer_seq_};
  memory_.emplace(id, nullptr);  // backed on first access
  memory_size_.emplace(id, bytes);
  allocated_bytes_ += static_cast<std::int64_t>(bytes);

  if (kind == MemoryKind::pinned_host) {
    ++counters_.raw_allocs_pinned;
    return {id, sched_.ready_token()};
  }
  ++counters_.raw_allocs_device;
  auto done = sched_.make_token();
  auto token = done.token();
  request_barrier(std::move(done));
  return {id, token};
}

void Device::raw_free(BufferId id) {
  auto it = memory_size_.find(id);
  if (it == memory_size_.end()) throw UsageError("raw_free of unknown buffer");
  allocated_bytes_ -= static_cast<std::int64_t>(it->second);
  memory_size_.erase(it);
  memory_.erase(id);
}

std::span<std::byte> Device::memory(BufferId id) {
  auto it = memory_.find(id);
  if (it == memory_.end()) throw UsageError("access to unknown buffer");
  const auto bytes = memory_size_.at(id);
  if (!it->second) {
    it->second = std::make_unique_for_overwrite<std::byte[]>(std::max<std::size_t>(bytes, 1));
    std::memset(it->second.get(), 0xFF, bytes);
  }
  return {it->second.get(), bytes};
}

bool Device::stream_busy(StreamId stream) const {
  check_stream(stream);
  const auto& ops = streams_[static_cast<std::size_t>(stream.index)].ops;
  if (ops.size() != 1) return !ops.empty();
  const auto& end = ops.front()->end_at;
  return !(end && *end <= sched_.now());
}

int Device::unfinished_ops(StreamId stream) const {
  check_stream(stream);
  return static_cast<int>(streams_[static_cast<std::size_t>(stream.index)].ops.size());
}

void Device::on_stream_idle(StreamId stream, std::function<void()> fn) {
  check_stream(stream);
  auto& s = streams_[static_cast<std::size_t>(stream.index)];
  if (s.ops.empty()) {
    fn();
    return;
  }
  s.idle_watchers.push_back(std::move(fn));
}

std::size_t Device::request_barrier(sched::TokenSource done) {
  ++counters_.sync_events;
  barriers_.push_back(Barrier{unfinished_total_, false, false, std::move(done)});
  advance_barriers();
  return barriers_.size() - 1;
}

void Device::advance_barriers() {
  if (barriers_ended_ >= barriers_.size()) return;
  auto& b = barriers_[barriers_ended_];
  if (b.begun || b.drain_remaining > 0) return;
  b.begun = true;
  log(EventKind::sync_begin, -1, {}, 0, 0);
  sched_.schedule_at(sched_.now() + profile_.t_device_sync, [this] {
    auto& cur = barriers_[barriers_ended_];
    cur.ended = true;
    ++barriers_ended_;
    log(EventKind::sync_end, -1, {}, 0, 0);
    auto done = std::move(cur.done);
    done.fire();
    advance_barriers();
    pump();
  });
}

Device::Op& Device::push_op(StreamId stream, std::unique_ptr<Op> op) {
  auto& s = streams_[static_cast<std::size_t>(stream.index)];
  op->seq = op_seq_++;
  op->stream = stream.index;
  op->barrier_epoch = barriers_.size();
  ++unfinished_total_;
  Op& ref = *op;
  s.ops.push_back(std::move(op));
  if (s.ops.size() == 1) {
    auto& set = ref.kind == OpKind::kernel ? waiting_kernels_ : waiting_copies_;
    set.emplace(ref.seq, &ref);
  }
  pump();
  return ref;
}

sched::CompletionToken Device::enqueue_kernel(StreamId stream, KernelSpec spec,
                                              const KernelBody& body) {
  check_stream(stream);
  spec.validate();
  const int per_slice = spec.blocks_per_slice();
  if (body) {
    for (int s = 0; s < spec.slice_count; ++s) {
      for (int b = 0; b < per_slice; ++b) body(BlockContext{s, b, per_slice});
    }
  }
  ++counters_.kernels;
  auto op = std::make_unique<Op>();
  op->kind = OpKind::kernel;
  op->blocks_pending = spec.blocks;
  op->spec = std::move(spec);
  op->done = sched_.make_token();
  auto token = op->done.token();
  push_op(stream, std::move(op));
  return token;
}

sched::CompletionToken Device::enqueue_copy(StreamId stream, CopyDirection dir,
                                            std::int64_t bytes, const CopyBody& body) {
  check_stream(stream);
  if (bytes < 0) throw UsageError("negative copy size");
  if (body) body();
  ++counters_.copies;
  counters_.copy_bytes += static_cast<std::uint64_t>(bytes);
  auto op = std::make_unique<Op>();
  op->kind = OpKind::copy;
  op->dir = dir;
  op->bytes = bytes;
  op->done = sched_.make_token();
  auto token = op->done.token();
  push_op(stream, std::move(op));
  return token;
}

void Device::pump() {
  for (auto it = waiting_kernels_.begin(); it != waiting_kernels_.end();) {
    Op* op = it->second;
    // Epochs are monotone in seq: once one head is fenced, all later ones are.
    if (!barrier_clear(*op)) break;
    if (running_kernels_ >= profile_.max_concurrent_kernels || free_slots_ <= 0) break;
    it = waiting_kernels_.erase(it);
    start_kernel(*op);
  }
  for (auto it = waiting_copies_.begin(); it != waiting_copies_.end();) {
    Op* op = it->second;
    if (!barrier_clear(*op)) break;
    int dir = static_cast<int>(op->dir);
    if (profile_.copy_engines > 0 && busy_engines_[dir] >= profile_.copy_engines) {
      ++it;
      continue;
    }
    it = waiting_copies_.erase(it);
    start_copy(*op);
  }
}

void Device::start_kernel(Op& op) {
  op.started = true;
  const int others = running_kernels_;
  ++running_kernels_;
  counters_.max_running_kernels = std::max(counters_.max_running_kernels, running_kernels_);
  const Ticks overhead =
      profile_.t_launch + profile_.concurrency_penalty.scale(profile_.t_launch * others);
  log(EventKind::kernel_start, op.stream, op.spec.kernel_id, op.spec.blocks, op.spec.slice_count);
  Op* p = &op;
  sched_.schedule_at(sched_.now() + overhead, [this, p] {
    block_queue_.push_back(p);
    dispatch_blocks();
  });
}

void Device::dispatch_blocks() {
  while (free_slots_ > 0 && !block_queue_.empty()) {
    Op* op = block_queue_.front();
    const int n = std::min(free_slots_, op->blocks_pending);
    op->blocks_pending -= n;
    free_slots_ -= n;
    counters_.max_occupied_slots =
        std::max(counters_.max_occupied_slots, profile_.block_capacity() - free_slots_);
    if (op->blocks_pending == 0) block_queue_.pop_front();
    const Ticks duration = op->spec.work_factor.scale(profile_.t_block);
    if (op->blocks_pending == 0) op->end_at = sched_.now() + duration;
    sched_.schedule_at(sched_.now() + duration, [this, op, n] {
      free_slots_ += n;
      op->blocks_retired += n;
      log(EventKind::block_retire, op->stream, op->spec.kernel_id, n, op->spec.slice_count);
      if (op->blocks_retired == op->spec.blocks) finish_op(*op);
      dispatch_blocks();
      pump();
    });
  }
}

void Device::start_copy(Op& op) {
  op.started = true;
  const int dir = static_cast<int>(op.dir);
  if (profile_.copy_engines > 0) ++busy_engines_[dir];
  log(EventKind::copy_start, op.stream, to_string(op.dir), 0, 0);
  const Ticks duration = profile_.t_copy_base + profile_.t_copy_per_byte.scale(op.bytes);
  op.end_at = sched_.now() + duration;
  Op* p = &op;
  sched_.schedule_at(sched_.now() + duration, [this, p, dir] {
    if (profile_.copy_engines > 0) --busy_engines_[dir];
    log(EventKind::copy_end, p->stream, to_string(p->dir), 0, 0);
    finish_op(*p);
    pump();
  });
}

void Device::finish_op(Op& op) {
  auto& s = streams_[static_cast<std::size_t>(op.stream)];
  if (s.ops.empty() || s.ops.front().get() != &op) {
    throw std::logic_error("device stream completed out of order");
  }
  if (op.kind == OpKind::kernel) {
    --running_kernels_;
    log(EventKind::kernel_end, op.stream, op.spec.kernel_id, op.spec.blocks, op.spec.slice_count);
  }
  for (std::size_t j = std::max(op.barrier_epoch, barriers_ended_); j < barriers_.size(); ++j) {
    if (!barriers_[j].begun) --barriers_[j].drain_remaining;
  }
  --unfinished_total_;
  auto done = std::move(op.done);
  s.ops.pop_front();  // destroys op

  if (!s.ops.empty()) {
    Op& head = *s.ops.front();
    auto& set = head.kind == OpKind::kernel ? waiting_kernels_ : waiting_copies_;
    set.emplace(head.seq, &head);
  }
  done.fire();
  if (s.ops.empty() && !s.idle_watchers.empty()) {
    auto watchers = std::move(s.idle_watchers);
    s.idle_watchers.clear();
    for (auto& w : watchers) w();
  }
  advance_barriers();
}

void Device::write_event_csv(std::ostream& out) const {
  out << "time,kind,stream,kernel_id,blocks,slice_count\n";
  for (const auto& e : log_) {
    out << e.time.ticks << ',' << to_string(e.kind) << ',' << e.stream << ',' << e.kernel_id << ','
        << e.blocks << ',' << e.slice_count << '\n';
  }
}

}  // namespace aggsim::vdev
