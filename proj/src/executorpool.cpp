#include "aggsim/executorpool.hpp"

namespace aggsim::exec {

const char* to_string(Policy p) {
  return p == Policy::round_robin ? "round_robin" : "load_balanced";
}

Policy parse_policy(const std::string& text) {
  if (text == "round_robin" || text == "rr") return Policy::round_robin;
  if (text == "load_balanced" || text == "lb") return Policy::load_balanced;
  throw ValidationError("unknown executor policy '" + text + "'");
}

ExecutorPool::ExecutorPool(vdev::Device& device, int n, Policy policy)
    : device_(device), policy_(policy) {
  if (n < 0) throw ValidationError("executor count must be >= 0");
  if (n > vdev::kMaxStreams) {
    throw CapacityError("executor count " + std::to_string(n) + " exceeds " +
                        std::to_string(vdev::kMaxStreams) + " streams");
  }
  if (device_.stream_count() + n > vdev::kMaxStreams) {
    throw CapacityError("device has no room for " + std::to_string(n) + " more streams");
  }
  ready_ = device_.scheduler().ready_token();
  for (int i = 0; i < n; ++i) {
    auto created = device_.create_stream();
    streams_.push_back(created.stream);
    // Barriers complete in request order, so the last one covers all.
    ready_ = created.usable;
  }
}

ExecutorRef ExecutorPool::at(int index) const {
  if (index < 0 || index >= size()) throw UsageError("executor index out of range");
  return ExecutorRef{index, streams_[static_cast<std::size_t>(index)]};
}

int ExecutorPool::outstanding(int index) const {
  return device_.unfinished_ops(at(index).stream);
}

ExecutorRef ExecutorPool::select() {
  if (cpu_only()) throw UsageError("select() on a CPU-only executor pool");
  if (policy_ == Policy::round_robin) {
    return at(static_cast<int>(selections_++ % streams_.size()));
  }
  ++selections_;
  int best = 0;
  for (int i = 1; i < size(); ++i) {
    if (outstanding(i) < outstanding(best)) best = i;
  }
  return at(best);
}

}  // namespace aggsim::exec
