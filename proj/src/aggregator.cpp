#include "aggsim/aggregator.hpp"

#include <climits>
#include <cstring>
#include <ostream>
#include <sstream>

namespace aggsim::agg {

struct Record {
  enum class Kind { alloc, copy, launch };
  Kind kind{};
  std::string signature;
  int arrivals = 0;
  sched::TokenSource ready;
  pool::PooledBuffer buffer;
  std::vector<SliceBody> bodies;
};

struct Team {
  Team(Region& r, int p, std::uint64_t i) : region(r), parent(p), id(i) {}

  Region& region;
  int parent;
  std::uint64_t id;
  int size = 0;
  bool closed = false;
  bool reserved = false;
  bool watching = false;
  bool finished = false;
  sched::TokenSource closed_token;
  std::deque<Record> records;
  int left = 0;
  int pending_ops = 0;
  int min_departed = INT_MAX;
  std::vector<pool::PooledBuffer> buffers;
};

struct Member {
  std::shared_ptr<Team> team;
  int slice_id = 0;
  int seq = 0;
  bool left = false;
  bool issued = false;
  sched::TaskId task = 0;
};

std::uint64_t RegionStats::members() const {
  std::uint64_t n = 0;
  for (const auto& [size, count] : team_sizes) n += static_cast<std::uint64_t>(size) * count;
  return n;
}

void Aggregator::violation(Team& team, int seq, const std::string& expected, const std::string& got) {
  ++team.region.stats_.violations;
  std::ostringstream os;
  os << "ordering violation in region '" << team.region.name() << "' at sequence " << seq
     << ": team expects " << expected << ", slice issued " << got;
  throw OrderingViolation(os.str());
}

Record& Slice::arrive(int kind_index, const std::string& signature) {
  Member& m = *member_;
  if (m.left) throw UsageError("slice used after leave()");
  Team& team = *m.team;
  const auto kind = static_cast<Record::Kind>(kind_index);
  const int seq = m.seq;
  if (seq >= team.min_departed) {
    Aggregator::violation(team, seq,
                          "no operation (a member left after " + std::to_string(team.min_departed) + ")",
                          signature);
  }
  Record* rec;
  if (seq < static_cast<int>(team.records.size())) {
    rec = &team.records[static_cast<std::size_t>(seq)];
    if (rec->signature != signature) Aggregator::violation(team, seq, rec->signature, signature);
  } else {
    rec = &team.records.emplace_back();
    rec->kind = kind;
    rec->signature = signature;
    rec->ready = team.region.owner_.scheduler().make_token();
    if (kind != Record::Kind::alloc) ++team.pending_ops;
    if (kind == Record::Kind::launch) rec->bodies.resize(static_cast<std::size_t>(team.size));
  }
  ++rec->arrivals;
  ++m.seq;
  return *rec;
}

sched::CompletionToken Slice::finish(
    Record& rec, const std::function<sched::CompletionToken(vdev::Device&, vdev::StreamId)>& enqueue) {
  auto team = member_->team;
  auto token = rec.ready.token();
  member_->issued = rec.arrivals == team->size;
  if (!member_->issued) return token;
  Aggregator& agg = team->region.owner_;
  auto& executors = agg.executors();
  const int exec = team->region.parent_executor(team->parent);
  auto device_token = enqueue(executors.device(), executors.at(exec).stream);
  agg.release_reservation(*team);
  Record* r = &rec;
  device_token.on_ready([&agg, team, r](VirtualTime) {
    r->ready.fire();
    --team->pending_ops;
    agg.maybe_finish(*team);
  });
  return token;
}

bool Slice::issued_last() const { return member_->issued; }
int Slice::slice_id() const { return member_->slice_id; }
int Slice::team_size() const { return member_->team->size; }
std::uint64_t Slice::team_id() const { return member_->team->id; }
const std::string& Slice::region_name() const { return member_->team->region.name(); }

sched::Task<SliceView> Slice::alloc(pool::MemoryKind kind, pool::ElementKind element,
                                    std::size_t len) {
  auto member = member_;
  Team& team = *member->team;
  Aggregator& agg = team.region.owner_;
  std::ostringstream sig;
  sig << "alloc(" << vdev::to_string(kind) << ',' << pool::to_string(element) << ',' << len << ')';
  const int seq = member->seq;
  Record& rec = arrive(static_cast<int>(Record::Kind::alloc), sig.str());
  if (rec.arrivals == 1) {
    rec.buffer = co_await agg.buffers().acquire(kind, element, len * static_cast<std::size_t>(team.size));
    team.buffers.push_back(rec.buffer);
    rec.ready.fire();
  } else if (!rec.ready.fired()) {
    co_await agg.scheduler().await(rec.ready.token());
  }
  SliceView view;
  view.buffer = rec.buffer;
  view.offset = len * static_cast<std::size_t>(member->slice_id);
  view.length = len;
  view.team_id = team.id;
  view.sequence = seq;
  co_return view;
}

sched::CompletionToken Slice::copy(vdev::CopyDirection dir, const SliceView& src,
                                   const SliceView& dst) {
  Team& team = *member_->team;
  if (src.team_id != team.id || dst.team_id != team.id) {
    throw UsageError("copy between views of a different team");
  }
  if (src.bytes().size() != dst.bytes().size()) throw UsageError("copy between views of different size");
  const auto per_slice = static_cast<std::int64_t>(src.bytes().size());
  std::ostringstream sig;
  sig << "copy(" << vdev::to_string(dir) << ',' << per_slice << " bytes/slice,seq " << src.sequence
      << "->seq " << dst.sequence << ')';
  Record& rec = arrive(static_cast<int>(Record::Kind::copy), sig.str());
  const auto total = static_cast<std::size_t>(per_slice) * static_cast<std::size_t>(team.size);
  auto from = src.buffer.bytes().data();
  auto to = dst.buffer.bytes().data();
  return finish(rec, [&](vdev::Device& dev, vdev::StreamId st) {
    return dev.enqueue_copy(st, dir, static_cast<std::int64_t>(total),
                            [from, to, total] { std::memcpy(to, from, total); });
  });
}

sched::CompletionToken Slice::copy(vdev::CopyDirection dir, std::int64_t bytes_per_slice) {
  Team& team = *member_->team;
  std::ostringstream sig;
  sig << "copy(" << vdev::to_string(dir) << ',' << bytes_per_slice << " bytes/slice)";
  Record& rec = arrive(static_cast<int>(Record::Kind::copy), sig.str());
  const std::int64_t total = bytes_per_slice * team.size;
  return finish(rec, [&](vdev::Device& dev, vdev::StreamId st) {
    return dev.enqueue_copy(st, dir, total);
  });
}

sched::CompletionToken Slice::launch(const std::string& kernel_id, int blocks_per_slice,
                                     Ratio work_factor, SliceBody body) {
  Team& team = *member_->team;
  std::ostringstream sig;
  sig << "launch(" << kernel_id << ',' << blocks_per_slice << " blocks/slice,wf " << work_factor.str()
      << ')';
  Record& rec = arrive(static_cast<int>(Record::Kind::launch), sig.str());
  rec.bodies[static_cast<std::size_t>(member_->slice_id)] = std::move(body);
  return finish(rec, [&](vdev::Device& dev, vdev::StreamId st) {
    vdev::KernelSpec spec{kernel_id, blocks_per_slice * team.size, vdev::kThreadsPerBlock, work_factor,
                          team.size};
    auto& bodies = rec.bodies;
    auto tok = dev.enqueue_kernel(st, spec, [&bodies](const vdev::BlockContext& ctx) {
      auto& fn = bodies[static_cast<std::size_t>(ctx.slice)];
      if (fn) fn(ctx);
    });
    bodies.clear();
    return tok;
  });
}

void Slice::leave() {
  Member& m = *member_;
  if (m.left) throw UsageError("slice left twice");
  Team& team = *m.team;
  Aggregator& agg = team.region.owner_;
  m.left = true;
  ++team.left;
  agg.inside_.erase(m.task);
  const int done = m.seq;
  team.min_departed = std::min(team.min_departed, done);
  if (done < static_cast<int>(team.records.size())) {
    Aggregator::violation(team, done, team.records[static_cast<std::size_t>(done)].signature, "leave()");
  }
  agg.maybe_finish(team);
}

Aggregator::Aggregator(exec::ExecutorPool& executors, pool::BufferPool& buffers)
    : executors_(executors), buffers_(buffers) {}

Aggregator::~Aggregator() = default;

Region& Aggregator::define_region(const std::string& name, int parent_count, int max_team) {
  if (max_team < 1) throw ValidationError("max_team must be >= 1");
  if (parent_count < 1) throw ValidationError("parent_count must be >= 1");
  if (executors_.cpu_only()) throw UsageError("aggregation regions need at least one executor");
  if (regions_.count(name)) throw UsageError("region '" + name + "' already defined");
  std::unique_ptr<Region> r(new Region(*this, name, max_team));
  for (int p = 0; p < parent_count; ++p) {
    Region::Parent parent;
    parent.executor = p % executors_.size();
    r->parents_.push_back(std::move(parent));
  }
  r->stats_.name = name;
  order_.push_back(r.get());
  return *regions_.emplace(name, std::move(r)).first->second;
}

Region& Aggregator::region(const std::string& name) {
  auto it = regions_.find(name);
  if (it == regions_.end()) throw UsageError("unknown region '" + name + "'");
  return *it->second;
}

bool Aggregator::parent_busy(Region& region, int parent) {
  const auto& p = region.parents_[static_cast<std::size_t>(parent)];
  return p.reservations > 0 || executors_.device().stream_busy(executors_.at(p.executor).stream);
}

int Aggregator::choose_parent(Region& region) {
  const auto n = region.parents_.size();
  if (executors_.policy() == exec::Policy::round_robin) {
    ++region.arrivals_;
    return region.cursor_;
  }
  ++region.arrivals_;
  int best = 0;
  // idle parents first; once every parent is busy, join a forming team
  // before opening a new one
  auto score = [&](int p) {
    const auto& parent = region.parents_[static_cast<std::size_t>(p)];
    const bool busy = parent_busy(region, p);
    return std::tuple{busy ? 1 : 0, busy && parent.forming ? 0 : 1, executors_.outstanding(parent.executor)};
  };
  for (int p = 1; p < static_cast<int>(n); ++p) {
    if (score(p) < score(best)) best = p;
  }
  return best;
}

void Aggregator::close(Team& team) {
  auto& parent = team.region.parents_[static_cast<std::size_t>(team.parent)];
  team.closed = true;
  if (parent.forming.get() == &team) parent.forming.reset();
  if (team.parent == team.region.cursor_) {
    team.region.cursor_ = (team.region.cursor_ + 1) % static_cast<int>(team.region.parents_.size());
  }
  ++team.region.stats_.teams_formed;
  ++team.region.stats_.team_sizes[team.size];
  team.reserved = true;
  ++parent.reservations;
  team.closed_token.fire();
}

void Aggregator::maybe_close(Region& region, int parent) {
  auto& p = region.parents_[static_cast<std::size_t>(parent)];
  auto team = p.forming;
  if (!team || team->closed || p.reservations > 0) return;
  auto stream = executors_.at(p.executor).stream;
  if (!executors_.device().stream_busy(stream)) {
    close(*team);
    return;
  }
  if (team->watching) return;
  team->watching = true;
  std::weak_ptr<Team> weak = team;
  executors_.device().on_stream_idle(stream, [this, weak, &region, parent] {
    auto t = weak.lock();
    if (!t) return;
    t->watching = false;
    maybe_close(region, parent);
  });
}

void Aggregator::release_reservation(Team& team) {
  if (!team.reserved) return;
  team.reserved = false;
  --team.region.parents_[static_cast<std::size_t>(team.parent)].reservations;
  maybe_close(team.region, team.parent);
}

void Aggregator::maybe_finish(Team& team) {
  if (team.finished || team.left < team.size || team.pending_ops > 0) return;
  team.finished = true;
  for (const auto& b : team.buffers) buffers_.release(b);
  team.buffers.clear();
  release_reservation(team);
}

sched::Task<Slice> Aggregator::enter(Region& region) {
  auto& s = scheduler();
  if (!s.in_task()) throw UsageError("enter() called outside a task");
  if (region.torn_down_) throw UsageError("region '" + region.name() + "' has been torn down");
  const auto task = s.current_task();
  if (inside_.count(task)) {
    throw UsageError("nested aggregation regions are not supported (entering '" + region.name() + "')");
  }
  inside_.insert(task);

  const int p = choose_parent(region);
  auto& parent = region.parents_[static_cast<std::size_t>(p)];
  std::shared_ptr<Team> team;
  const bool alone = !parent.forming && !parent_busy(region, p);
  if (alone || !parent.forming) {
    team = std::make_shared<Team>(region, p, ++team_seq_);
    team->closed_token = s.make_token();
    if (!alone) parent.forming = team;
  } else {
    team = parent.forming;
  }
  auto member = std::make_shared<Member>();
  member->team = team;
  member->slice_id = team->size++;
  member->task = task;

  if (alone || team->size >= region.max_team_) {
    close(*team);
  } else {
    maybe_close(region, p);
  }
  Slice slice;
  slice.member_ = member;
  if (!team->closed) co_await s.await(team->closed_token.token());
  co_return slice;
}

std::vector<RegionStats> Aggregator::stats() const {
  std::vector<RegionStats> out;
  for (const auto* r : order_) out.push_back(r->stats_);
  return out;
}

void Aggregator::write_csv(std::ostream& out) const {
  out << "region,team_size,teams,teams_formed,violations\n";
  for (const auto* r : order_) {
    const auto& st = r->stats_;
    if (st.team_sizes.empty()) {
      out << st.name << ",0,0," << st.teams_formed << ',' << st.violations << '\n';
    }
    for (const auto& [size, count] : st.team_sizes) {
      out << st.name << ',' << size << ',' << count << ',' << st.teams_formed << ',' << st.violations
          << '\n';
    }
  }
}

}  // namespace aggsim::agg
