#pragma once

// Cooperative task scheduler co-simulated with a virtual clock.
//
// Tasks are C++20 coroutines (sched::Task<>). They run on a bounded set of
// virtual workers, occupy a worker only while charging simulated host work,
// and release it whenever they suspend on completion tokens. The event loop
// is single-threaded; every ordering decision is a function of
// (time, sequence number), so repeated runs are bit-for-bit identical.

#include <coroutine>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "aggsim/common.hpp"

namespace aggsim::sched {

class Scheduler;

using TaskId = std::uint64_t;

/// spawn() after shutdown().
class RejectedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// run() ended with unfinished tasks and nothing left that could wake them.
class DeadlockError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct TokenState {
  std::uint64_t id = 0;
  std::uint64_t owner = 0;
  bool ready = false;
  VirtualTime at{};
  std::vector<std::function<void(VirtualTime)>> continuations;
};

struct TaskState;

struct PromiseBase {
  std::coroutine_handle<> continuation;
  std::exception_ptr error;

  std::suspend_always initial_suspend() noexcept { return {}; }

  struct FinalAwaiter {
    bool await_ready() noexcept { return false; }
    template <typename P>
    std::coroutine_handle<> await_suspend(std::coroutine_handle<P> h) noexcept {
      auto next = h.promise().continuation;
      return next ? next : std::noop_coroutine();
    }
    void await_resume() noexcept {}
  };
  FinalAwaiter final_suspend() noexcept { return {}; }

  void unhandled_exception() { error = std::current_exception(); }
};

}  // namespace detail

/// Read side of a one-shot completion signal. Transitions pending -> ready
/// exactly once; continuations attached after that run immediately.
class CompletionToken {
 public:
  CompletionToken() = default;

  bool valid() const { return state_ != nullptr; }
  bool ready() const { return state_ && state_->ready; }
  std::uint64_t id() const { return state_ ? state_->id : 0; }
  /// Throws UsageError while pending.
  VirtualTime ready_at() const;
  void on_ready(std::function<void(VirtualTime)> fn) const;

 private:
  friend class Scheduler;
  friend class TokenSource;
  explicit CompletionToken(std::shared_ptr<detail::TokenState> s) : state_(std::move(s)) {}
  std::shared_ptr<detail::TokenState> state_;
};

/// Write side of a completion token. fire() stamps the scheduler's current
/// virtual time, so a token can never become ready before it was created.
class TokenSource {
 public:
  TokenSource() = default;

  CompletionToken token() const { return CompletionToken(state_); }
  bool fired() const { return state_ && state_->ready; }
  void fire();

 private:
  friend class Scheduler;
  TokenSource(std::shared_ptr<detail::TokenState> s, Scheduler* owner)
      : state_(std::move(s)), owner_(owner) {}
  std::shared_ptr<detail::TokenState> state_;
  Scheduler* owner_ = nullptr;
};

/// Lazily started coroutine. Awaiting a Task runs it to completion (in
/// virtual time) and yields its value; exceptions propagate to the awaiter.
template <typename T = void>
class [[nodiscard]] Task {
 public:
  struct promise_type : detail::PromiseBase {
    std::optional<T> value;
    Task get_return_object() {
      return Task(std::coroutine_handle<promise_type>::from_promise(*this));
    }
    template <typename U>
    void return_value(U&& v) {
      value.emplace(std::forward<U>(v));
    }
  };
  using handle_type = std::coroutine_handle<promise_type>;

  Task(Task&& other) noexcept : h_(std::exchange(other.h_, {})) {}
  Task& operator=(Task&& other) noexcept {
    if (this != &other) {
      if (h_) h_.destroy();
      h_ = std::exchange(other.h_, {});
    }
    return *this;
  }
  Task(const Task&) = delete;
  Task& operator=(const Task&) = delete;
  ~Task() {
    if (h_) h_.destroy();
  }

  bool await_ready() const noexcept { return false; }
  std::coroutine_handle<> await_suspend(std::coroutine_handle<> awaiting) noexcept {
    h_.promise().continuation = awaiting;
    return h_;
  }
  T await_resume() {
    auto& p = h_.promise();
    if (p.error) std::rethrow_exception(p.error);
    return std::move(*p.value);
  }

 private:
  explicit Task(handle_type h) : h_(h) {}
  handle_type h_;
};

template <>
class [[nodiscard]] Task<void> {
 public:
  struct promise_type : detail::PromiseBase {
    Task get_return_object() {
      return Task(std::coroutine_handle<promise_type>::from_promise(*this));
    }
    void return_void() {}
  };
  using handle_type = std::coroutine_handle<promise_type>;

  Task(Task&& other) noexcept : h_(std::exchange(other.h_, {})) {}
  Task& operator=(Task&& other) noexcept {
    if (this != &other) {
      if (h_) h_.destroy();
      h_ = std::exchange(other.h_, {});
    }
    return *this;
  }
  Task(const Task&) = delete;
  Task& operator=(const Task&) = delete;
  ~Task() {
    if (h_) h_.destroy();
  }

  bool await_ready() const noexcept { return false; }
  std::coroutine_handle<> await_suspend(std::coroutine_handle<> awaiting) noexcept {
    h_.promise().continuation = awaiting;
    return h_;
  }
  void await_resume() {
    if (h_.promise().error) std::rethrow_exception(h_.promise().error);
  }

  /// Transfers ownership of the coroutine frame (used by the scheduler).
  handle_type release() { return std::exchange(h_, {}); }

 private:
  explicit Task(handle_type h) : h_(h) {}
  handle_type h_;
};

struct SchedulerConfig {
  int worker_count = 32;
  /// Simulated host-side costs, op-name -> ticks. Interpretation of each
  /// entry belongs to the caller (see hydro::HostCosts).
  std::map<std::string, Ticks, std::less<>> host_op_costs;
  /// Keep a per-worker acquire/release log (tests, diagnostics).
  bool record_occupancy = false;

  void validate() const;
  /// Configured cost, or `fallback` when the key is absent.
  Ticks cost(std::string_view op, Ticks fallback = 0) const;
};

struct OccupancyRecord {
  enum class Kind { acquire, release };
  VirtualTime time;
  int worker = -1;
  TaskId task = 0;
  Kind kind = Kind::acquire;
};

struct RunStats {
  VirtualTime final_time;
  std::vector<Ticks> worker_busy;
  std::uint64_t events_processed = 0;
  std::uint64_t tasks_finished = 0;

  Ticks total_busy() const;
};

class Scheduler {
 public:
  explicit Scheduler(SchedulerConfig cfg = {});
  ~Scheduler();
  Scheduler(const Scheduler&) = delete;
  Scheduler& operator=(const Scheduler&) = delete;

  struct Spawned {
    TaskId id = 0;
    CompletionToken done;
  };

  /// Makes `body` runnable at the current time. The returned token fires
  /// when the body finishes.
  Spawned spawn(Task<> body, std::string name = {});

  class ChargeAwaiter {
   public:
    bool await_ready();
    void await_suspend(std::coroutine_handle<> h);
    void await_resume() const noexcept {}

   private:
    friend class Scheduler;
    ChargeAwaiter(Scheduler& s, Ticks d) : sched_(s), duration_(d) {}
    Scheduler& sched_;
    Ticks duration_;
  };

  class AllAwaiter {
   public:
    bool await_ready();
    bool await_suspend(std::coroutine_handle<> h);
    void await_resume() const noexcept {}

   private:
    friend class Scheduler;
    AllAwaiter(Scheduler& s, std::vector<CompletionToken> t) : sched_(s), tokens_(std::move(t)) {}
    Scheduler& sched_;
    std::vector<CompletionToken> tokens_;
  };

  /// Occupies the calling task's worker for `duration` ticks.
  ChargeAwaiter charge(Ticks duration) { return ChargeAwaiter(*this, duration); }
  /// Suspends the calling task (releasing its worker) until every token is
  /// ready; resumes no earlier than the latest ready time.
  AllAwaiter await_all(std::vector<CompletionToken> tokens) {
    return AllAwaiter(*this, std::move(tokens));
  }
  AllAwaiter await(CompletionToken token) {
    std::vector<CompletionToken> v;
    v.push_back(std::move(token));
    return AllAwaiter(*this, std::move(v));
  }

  /// Runs until every task has finished and the event queue is drained.
  /// The clock jumps to the next event whenever nothing is runnable.
  RunStats run();
  RunStats run(std::vector<std::function<Task<>()>> roots);
  void shutdown() { shut_down_ = true; }

  VirtualTime now() const { return now_; }
  TokenSource make_token();
  /// A token that is already ready at the current time.
  CompletionToken ready_token();
  /// Registers a callback at virtual time `t` (>= now). Callbacks at equal
  /// times run in registration order.
  void schedule_at(VirtualTime t, std::function<void()> fn);

  bool in_task() const { return current_ != nullptr; }
  /// Identity of the running root task, 0 outside tasks.
  TaskId current_task() const;
  std::uint64_t id() const { return id_; }
  const SchedulerConfig& config() const { return cfg_; }
  Ticks charged_total() const { return charged_total_; }
  const std::vector<OccupancyRecord>& occupancy() const { return occupancy_; }
  std::size_t unfinished_tasks() const;

 private:
  friend class TokenSource;

  struct Event {
    VirtualTime time;
    std::uint64_t seq;
    std::function<void()> fn;
  };
  struct ReadyEntry {
    VirtualTime time;
    std::uint64_t seq;
    detail::TaskState* task;
  };

  void fire(detail::TokenState& state);
  void make_runnable(detail::TaskState* task);
  void dispatch();
  void run_task(detail::TaskState* task);
  void release_worker(detail::TaskState* task);
  void log_occupancy(int worker, TaskId task, OccupancyRecord::Kind kind);
  detail::TaskState& current_checked(const char* op) const;
  [[noreturn]] void throw_deadlock() const;

  SchedulerConfig cfg_;
  std::uint64_t id_;
  VirtualTime now_{};
  bool shut_down_ = false;
  bool running_ = false;
  std::uint64_t event_seq_ = 0;
  std::uint64_t token_seq_ = 0;
  TaskId task_seq_ = 0;
  std::uint64_t events_processed_ = 0;
  std::uint64_t tasks_finished_ = 0;
  Ticks charged_total_ = 0;

  std::vector<Event> events_;     // min-heap on (time, seq)
  std::vector<ReadyEntry> ready_;  // min-heap on (time, seq)
  std::vector<int> free_workers_;  // min-heap on index
  std::vector<Ticks> worker_busy_;
  std::map<TaskId, std::unique_ptr<detail::TaskState>> tasks_;
  std::vector<OccupancyRecord> occupancy_;
  detail::TaskState* current_ = nullptr;
  std::exception_ptr failure_;
};

}  // namespace aggsim::sched
