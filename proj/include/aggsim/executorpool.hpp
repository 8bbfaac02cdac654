#pragma once

// A fixed set of device executors, one stream each, created up front.

#include <string>
#include <vector>

#include "aggsim/sched.hpp"
#include "aggsim/vdevice.hpp"

namespace aggsim::exec {

enum class Policy { round_robin, load_balanced };

const char* to_string(Policy p);
Policy parse_policy(const std::string& text);

struct ExecutorRef {
  int index = -1;
  vdev::StreamId stream;
};

class ExecutorPool {
 public:
  /// Creates `n` streams immediately. n = 0 is CPU-only mode.
  ExecutorPool(vdev::Device& device, int n, Policy policy = Policy::round_robin);
  ExecutorPool(const ExecutorPool&) = delete;
  ExecutorPool& operator=(const ExecutorPool&) = delete;

  bool cpu_only() const { return streams_.empty(); }
  int size() const { return static_cast<int>(streams_.size()); }
  Policy policy() const { return policy_; }

  /// round_robin: cyclic by a pool-wide counter. load_balanced: fewest
  /// unfinished operations, lowest index on ties.
  ExecutorRef select();
  ExecutorRef at(int index) const;
  int outstanding(int index) const;

  /// Ready once every stream created by the constructor is usable.
  sched::CompletionToken ready() const { return ready_; }
  vdev::Device& device() { return device_; }

 private:
  vdev::Device& device_;
  Policy policy_;
  std::vector<vdev::StreamId> streams_;
  std::uint64_t selections_ = 0;
  sched::CompletionToken ready_;
};

}  // namespace aggsim::exec
