#pragma once

// Size-keyed recycling pools of device and pinned-host buffers. A buffer
// released to the pool is handed out again on the next acquire with the
// same (kind, element, length); only a miss pays a raw allocation.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include "aggsim/sched.hpp"
#include "aggsim/vdevice.hpp"

namespace aggsim::pool {

using vdev::MemoryKind;

enum class ElementKind { f64, i32, byte };
enum class Origin { fresh, recycled };

std::size_t element_size(ElementKind e);
const char* to_string(ElementKind e);

struct BucketKey {
  MemoryKind kind{};
  ElementKind element{};
  std::size_t length = 0;

  auto operator<=>(const BucketKey&) const = default;
};

/// A lease on pooled storage. Copyable handle; the pool tracks ownership by
/// lease_id.
class PooledBuffer {
 public:
  PooledBuffer() = default;

  bool valid() const { return lease_id_ != 0; }
  MemoryKind kind() const { return key_.kind; }
  ElementKind element() const { return key_.element; }
  std::size_t length() const { return key_.length; }
  const BucketKey& key() const { return key_; }
  std::uint64_t lease_id() const { return lease_id_; }
  Origin origin() const { return origin_; }
  vdev::BufferId storage() const { return storage_; }

  std::span<std::byte> bytes() const { return {data_, key_.length * element_size(key_.element)}; }
  template <typename T>
  std::span<T> as() const {
    return {reinterpret_cast<T*>(data_), bytes().size() / sizeof(T)};
  }

 private:
  friend class BufferPool;
  BucketKey key_;
  std::uint64_t lease_id_ = 0;
  Origin origin_ = Origin::fresh;
  vdev::BufferId storage_;
  std::byte* data_ = nullptr;
};

struct BucketStats {
  BucketKey key;
  std::uint64_t raw_allocations = 0;
  std::uint64_t reuses = 0;
  std::uint64_t outstanding_leases = 0;
  std::uint64_t high_water = 0;
};

struct PoolStats {
  std::vector<BucketStats> buckets;  // ordered by key

  std::uint64_t raw_allocations() const;
  std::uint64_t raw_allocations(MemoryKind kind) const;
  std::uint64_t reuses() const;
  std::uint64_t outstanding_leases() const;
};

class BufferPool {
 public:
  explicit BufferPool(vdev::Device& device) : device_(device) {}
  BufferPool(const BufferPool&) = delete;
  BufferPool& operator=(const BufferPool&) = delete;

  /// Returns an idle buffer of exactly this key (most recently released
  /// first) or allocates a fresh one, suspending through the device barrier
  /// a raw device allocation incurs.
  sched::Task<PooledBuffer> acquire(MemoryKind kind, ElementKind element, std::size_t length);
  void release(const PooledBuffer& buffer);
  /// Raw-allocates `count` idle buffers of this key up front. The returned
  /// token fires once the device barriers of the allocations have passed.
  sched::CompletionToken reserve(MemoryKind kind, ElementKind element, std::size_t length,
                                 std::size_t count);

  PoolStats stats() const;
  /// Frees every idle buffer and clears all buckets and counters. Throws
  /// UsageError naming the outstanding lease ids if any lease is live.
  void purge();

  /// Columns: kind,element,length,raw_allocations,reuses,outstanding_leases,high_water
  void write_csv(std::ostream& out) const;

  vdev::Device& device() { return device_; }

 private:
  struct Idle {
    vdev::BufferId storage;
  };
  struct Bucket {
    BucketStats stats;
    std::vector<Idle> idle;
  };
  struct Lease {
    BucketKey key;
    Idle storage;
  };

  PooledBuffer make_lease(const BucketKey& key, Idle storage, Origin origin);

  vdev::Device& device_;
  std::map<BucketKey, Bucket> buckets_;
  std::map<std::uint64_t, Lease> leases_;
  std::uint64_t next_lease_ = 0;
};

}  // namespace aggsim::pool
