#include "aggsim/sched.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>

namespace aggsim::sched {

namespace detail {

struct TaskState {
  enum class State { runnable, running, charging, suspended, finished };

  TaskId id = 0;
  std::string name;
  std::coroutine_handle<Task<>::promise_type> root;
  std::coroutine_handle<> resume_point;
  State state = State::runnable;
  int worker = -1;
  int pending = 0;
  std::vector<std::uint64_t> awaited;
  TokenSource done;

  ~TaskState() {
    if (root) root.destroy();
  }
};

}  // namespace detail

namespace {

std::atomic<std::uint64_t> next_scheduler_id{1};

template <typename T>
struct LaterFirst {
  bool operator()(const T& a, const T& b) const {
    if (a.time != b.time) return a.time > b.time;
    return a.seq > b.seq;
  }
};

}  // namespace

VirtualTime CompletionToken::ready_at() const {
  if (!ready()) throw UsageError("completion token is still pending");
  return state_->at;
}

void CompletionToken::on_ready(std::function<void(VirtualTime)> fn) const {
  if (!state_) throw UsageError("on_ready on an empty completion token");
  if (state_->ready) {
    fn(state_->at);
    return;
  }
  state_->continuations.push_back(std::move(fn));
}

void TokenSource::fire() {
  if (!state_) throw UsageError("fire on an empty token source");
  if (state_->ready) throw UsageError("completion token fired twice");
  owner_->fire(*state_);
}

void SchedulerConfig::validate() const {
  if (worker_count < 1) throw ValidationError("worker_count must be >= 1");
  for (const auto& [name, cost] : host_op_costs) {
    if (cost < 0) throw ValidationError("host op cost '" + name + "' is negative");
  }
}

Ticks SchedulerConfig::cost(std::string_view op, Ticks fallback) const {
  auto it = host_op_costs.find(op);
  return it == host_op_costs.end() ? fallback : it->second;
}

Ticks RunStats::total_busy() const {
  Ticks sum = 0;
  for (auto b : worker_busy) sum += b;
  return sum;
}

Scheduler::Scheduler(SchedulerConfig cfg) : cfg_(std::move(cfg)), id_(next_scheduler_id++) {
  cfg_.validate();
  worker_busy_.assign(static_cast<std::size_t>(cfg_.worker_count), 0);
  for (int w = 0; w < cfg_.worker_count; ++w) free_workers_.push_back(w);
  std::make_heap(free_workers_.begin(), free_workers_.end(), std::greater<>{});
}

Scheduler::~Scheduler() = default;

TaskId Scheduler::current_task() const { return current_ ? current_->id : 0; }

std::size_t Scheduler::unfinished_tasks() const { return tasks_.size(); }

TokenSource Scheduler::make_token() {
  auto s = std::make_shared<detail::TokenState>();
  s->id = ++token_seq_;
  s->owner = id_;
  return TokenSource(std::move(s), this);
}

CompletionToken Scheduler::ready_token() {
  auto src = make_token();
  src.fire();
  return src.token();
}

void Scheduler::fire(detail::TokenState& state) {
  state.ready = true;
  state.at = now_;
  auto conts = std::move(state.continuations);
  state.continuations.clear();
  for (auto& fn : conts) fn(now_);
}

void Scheduler::schedule_at(VirtualTime t, std::function<void()> fn) {
  if (t < now_) throw UsageError("cannot schedule an event in the past");
  events_.push_back(Event{t, event_seq_++, std::move(fn)});
  std::push_heap(events_.begin(), events_.end(), LaterFirst<Event>{});
}

Scheduler::Spawned Scheduler::spawn(Task<> body, std::string name) {
  if (shut_down_) throw RejectedError("scheduler is shut down");
  auto state = std::make_unique<detail::TaskState>();
  state->id = ++task_seq_;
  state->name = name.empty() ? "task" : std::move(name);
  state->root = body.release();
  state->resume_point = state->root;
  state->done = make_token();
  Spawned out{state->id, state->done.token()};
  auto* raw = state.get();
  tasks_.emplace(raw->id, std::move(state));
  make_runnable(raw);
  return out;
}

void Scheduler::make_runnable(detail::TaskState* task) {
  task->state = detail::TaskState::State::runnable;
  task->awaited.clear();
  ready_.push_back(ReadyEntry{now_, task->id, task});
  std::push_heap(ready_.begin(), ready_.end(), LaterFirst<ReadyEntry>{});
}

detail::TaskState& Scheduler::current_checked(const char* op) const {
  if (!current_) throw UsageError(std::string(op) + " called outside a task");
  return *current_;
}

void Scheduler::log_occupancy(int worker, TaskId task, OccupancyRecord::Kind kind) {
  if (cfg_.record_occupancy) occupancy_.push_back(OccupancyRecord{now_, worker, task, kind});
}

void Scheduler::release_worker(detail::TaskState* task) {
  if (task->worker < 0) return;
  log_occupancy(task->worker, task->id, OccupancyRecord::Kind::release);
  free_workers_.push_back(task->worker);
  std::push_heap(free_workers_.begin(), free_workers_.end(), std::greater<>{});
  task->worker = -1;
}

void Scheduler::dispatch() {
  while (!ready_.empty() && !free_workers_.empty() && !failure_) {
    std::pop_heap(ready_.begin(), ready_.end(), LaterFirst<ReadyEntry>{});
    auto* task = ready_.back().task;
    ready_.pop_back();

    std::pop_heap(free_workers_.begin(), free_workers_.end(), std::greater<>{});
    task->worker = free_workers_.back();
    free_workers_.pop_back();
    log_occupancy(task->worker, task->id, OccupancyRecord::Kind::acquire);
    run_task(task);
  }
}

void Scheduler::run_task(detail::TaskState* task) {
  using State = detail::TaskState::State;
  task->state = State::running;
  current_ = task;
  task->resume_point.resume();
  current_ = nullptr;

  if (task->root.done()) {
    task->state = State::finished;
    release_worker(task);
    ++tasks_finished_;
    auto error = task->root.promise().error;
    auto done = task->done;
    tasks_.erase(task->id);
    if (error && !failure_) failure_ = error;
    done.fire();
    return;
  }
  if (task->state == State::suspended) release_worker(task);
}

bool Scheduler::ChargeAwaiter::await_ready() {
  sched_.current_checked("charge");
  if (duration_ < 0) throw UsageError("charge with a negative duration");
  return duration_ == 0;
}

void Scheduler::ChargeAwaiter::await_suspend(std::coroutine_handle<> h) {
  auto* task = sched_.current_;
  task->resume_point = h;
  task->state = detail::TaskState::State::charging;
  sched_.worker_busy_[static_cast<std::size_t>(task->worker)] += duration_;
  sched_.charged_total_ += duration_;
  auto& s = sched_;
  sched_.schedule_at(sched_.now_ + duration_, [&s, task] { s.run_task(task); });
}

bool Scheduler::AllAwaiter::await_ready() {
  sched_.current_checked("await_all");
  bool all = true;
  for (const auto& t : tokens_) {
    if (!t.valid()) throw UsageError("await_all on an empty completion token");
    if (t.state_->owner != sched_.id_) {
      throw UsageError("await_all on a token created by a different scheduler");
    }
    all = all && t.ready();
  }
  return all;
}

bool Scheduler::AllAwaiter::await_suspend(std::coroutine_handle<> h) {
  auto* task = sched_.current_;
  task->awaited.clear();
  int pending = 0;
  for (const auto& t : tokens_) {
    if (!t.ready()) {
      ++pending;
      task->awaited.push_back(t.id());
    }
  }
  if (pending == 0) return false;
  task->resume_point = h;
  task->state = detail::TaskState::State::suspended;
  task->pending = pending;
  auto& s = sched_;
  for (const auto& t : tokens_) {
    if (t.ready()) continue;
    t.state_->continuations.push_back([&s, task](VirtualTime) {
      if (--task->pending == 0) s.make_runnable(task);
    });
  }
  return true;
}

RunStats Scheduler::run(std::vector<std::function<Task<>()>> roots) {
  for (std::size_t i = 0; i < roots.size(); ++i) {
    spawn(roots[i](), "root" + std::to_string(i));
  }
  return run();
}

RunStats Scheduler::run() {
  if (running_) throw UsageError("run() while a run is in progress");
  running_ = true;
  struct Guard {
    bool& flag;
    ~Guard() { flag = false; }
  } guard{running_};

  for (;;) {
    while (!events_.empty() && events_.front().time == now_ && !failure_) {
      std::pop_heap(events_.begin(), events_.end(), LaterFirst<Event>{});
      auto ev = std::move(events_.back());
      events_.pop_back();
      ++events_processed_;
      ev.fn();
    }
    if (!failure_) dispatch();
    if (failure_) {
      auto err = std::exchange(failure_, nullptr);
      std::rethrow_exception(err);
    }
    if (!events_.empty() && events_.front().time == now_) continue;
    if (events_.empty()) break;
    now_ = events_.front().time;
  }

  if (!tasks_.empty()) throw_deadlock();

  return RunStats{now_, worker_busy_, events_processed_, tasks_finished_};
}

void Scheduler::throw_deadlock() const {
  std::ostringstream os;
  os << "deadlock at t=" << now_.ticks << ": " << tasks_.size()
     << " task(s) suspended with no pending event:";
  for (const auto& [id, t] : tasks_) {
    os << "\n  " << t->name << "#" << id << " awaiting tokens [";
    for (std::size_t i = 0; i < t->awaited.size(); ++i) {
      os << (i ? "," : "") << t->awaited[i];
    }
    os << "]";
  }
  throw DeadlockError(os.str());
}

}  // namespace aggsim::sched
