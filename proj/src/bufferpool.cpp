#include "aggsim/bufferpool.hpp"

#include <ostream>
#include <sstream>

namespace aggsim::pool {

std::size_t element_size(ElementKind e) {
  switch (e) {
    case ElementKind::f64: return 8;
    case ElementKind::i32: return 4;
    case ElementKind::byte: return 1;
  }
  return 1;
}

const char* to_string(ElementKind e) {
  switch (e) {
    case ElementKind::f64: return "f64";
    case ElementKind::i32: return "i32";
    case ElementKind::byte: return "byte";
  }
  return "?";
}

std::uint64_t PoolStats::raw_allocations() const {
  std::uint64_t n = 0;
  for (const auto& b : buckets) n += b.raw_allocations;
  return n;
}

std::uint64_t PoolStats::raw_allocations(MemoryKind kind) const {
  std::uint64_t n = 0;
  for (const auto& b : buckets) {
    if (b.key.kind == kind) n += b.raw_allocations;
  }
  return n;
}

std::uint64_t PoolStats::reuses() const {
  std::uint64_t n = 0;
  for (const auto& b : buckets) n += b.reuses;
  return n;
}

std::uint64_t PoolStats::outstanding_leases() const {
  std::uint64_t n = 0;
  for (const auto& b : buckets) n += b.outstanding_leases;
  return n;
}

PooledBuffer BufferPool::make_lease(const BucketKey& key, Idle storage, Origin origin) {
  auto& st = buckets_[key].stats;
  ++st.outstanding_leases;
  st.high_water = std::max(st.high_water, st.outstanding_leases);
  PooledBuffer b;
  b.key_ = key;
  b.lease_id_ = ++next_lease_;
  b.origin_ = origin;
  b.storage_ = storage.storage;
  b.data_ = device_.memory(storage.storage).data();
  leases_.emplace(b.lease_id_, Lease{key, storage});
  return b;
}

sched::Task<PooledBuffer> BufferPool::acquire(MemoryKind kind, ElementKind element,
                                              std::size_t length) {
  BucketKey key{kind, element, length};
  auto& bucket = buckets_[key];
  bucket.stats.key = key;
  if (!bucket.idle.empty()) {
    Idle storage = bucket.idle.back();
    bucket.idle.pop_back();
    ++bucket.stats.reuses;
    co_return make_lease(key, storage, Origin::recycled);
  }
  ++bucket.stats.raw_allocations;
  auto alloc = device_.raw_alloc(kind, length * element_size(element));
  Idle storage{alloc.id};
  auto lease = make_lease(key, storage, Origin::fresh);
  co_await device_.scheduler().await(alloc.done);
  co_return lease;
}

void BufferPool::release(const PooledBuffer& buffer) {
  auto it = leases_.find(buffer.lease_id());
  if (it == leases_.end()) {
    throw UsageError("release of lease " + std::to_string(buffer.lease_id()) +
                     " which is not outstanding");
  }
  auto& bucket = buckets_[it->second.key];
  --bucket.stats.outstanding_leases;
  bucket.idle.push_back(it->second.storage);
  leases_.erase(it);
}

sched::CompletionToken BufferPool::reserve(MemoryKind kind, ElementKind element, std::size_t length,
                                           std::size_t count) {
  BucketKey key{kind, element, length};
  auto& bucket = buckets_[key];
  bucket.stats.key = key;
  std::vector<sched::CompletionToken> done;
  for (std::size_t i = 0; i < count; ++i) {
    ++bucket.stats.raw_allocations;
    auto alloc = device_.raw_alloc(kind, length * element_size(element));
    bucket.idle.push_back(Idle{alloc.id});
    done.push_back(alloc.done);
  }
  return done.empty() ? device_.scheduler().ready_token() : done.back();
}

PoolStats BufferPool::stats() const {
  PoolStats s;
  for (const auto& [key, b] : buckets_) s.buckets.push_back(b.stats);
  return s;
}

void BufferPool::purge() {
  if (!leases_.empty()) {
    std::ostringstream os;
    os << "purge with outstanding leases:";
    for (const auto& [id, lease] : leases_) os << ' ' << id;
    throw UsageError(os.str());
  }
  for (auto& [key, b] : buckets_) {
    for (const auto& idle : b.idle) device_.raw_free(idle.storage);
  }
  buckets_.clear();
}

void BufferPool::write_csv(std::ostream& out) const {
  out << "kind,element,length,raw_allocations,reuses,outstanding_leases,high_water\n";
  for (const auto& [key, b] : buckets_) {
    out << vdev::to_string(key.kind) << ',' << to_string(key.element) << ',' << key.length << ','
        << b.stats.raw_allocations << ',' << b.stats.reuses << ',' << b.stats.outstanding_leases
        << ',' << b.stats.high_water << '\n';
  }
}

}  // namespace aggsim::pool
