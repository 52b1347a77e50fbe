#include "microfuzz/measure.hpp"

#include <pthread.h>
#include <sched.h>

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <csetjmp>
#include <csignal>
#include <mutex>

#include "microfuzz/errors.hpp"

namespace microfuzz {

// Instrumented invocation path shared by measurement, tracing, and nested
// CallContext::call calls.
class Harness {
 public:
  Harness(MeasureContext& ctx, Tracer* tracer) : ctx_(ctx), tracer_(tracer) {}

  ValuePtr invoke(const std::string& id, const std::vector<ValuePtr>& args) {
    const TargetEntry& entry = ctx_.reg_->get(id);
    if (args.size() != entry.sig.params.size())
      throw HarnessError("arity mismatch for " + id + ": got " +
                         std::to_string(args.size()) + ", want " +
                         std::to_string(entry.sig.params.size()));
    for (size_t i = 0; i < args.size(); ++i)
      if (!conforms(*args[i], *entry.sig.params[i], ctx_.reg_->types()))
        throw HarnessError("argument " + std::to_string(i) +
                           " does not conform to the signature of " + id);
    if (tracer_) {
      std::vector<nlohmann::json> params;
      params.reserve(args.size());
      for (const auto& a : args) params.push_back(tracer_->param_for(*a));
      tracer_->invoke(id, std::move(params));
    }

    bool gated = !ctx_.mut_.empty() && id == ctx_.mut_;
    if (gated && ctx_.t_depth_++ == 0) ctx_.t_start_ = ctx_.cycles_->read();
    ValuePtr result;
    try {
      CallContext cc(this);
      result = entry.fn(cc, args);
    } catch (...) {
      if (gated) --ctx_.t_depth_;
      throw;
    }
    if (gated && --ctx_.t_depth_ == 0)
      ctx_.last_runtime_ = ctx_.cycles_->read() - ctx_.t_start_;
    if (!result) throw HarnessError("target returned no value: " + id);
    if (tracer_) tracer_->ret(id, {tracer_->param_for(*result)});
    return result;
  }

  Tracer* tracer() { return tracer_; }

 private:
  MeasureContext& ctx_;
  Tracer* tracer_;
};

ValuePtr CallContext::call(const std::string& target,
                           const std::vector<ValuePtr>& args) {
  return h_->invoke(target, args);
}

void CallContext::enter(std::string_view fn,
                        std::vector<nlohmann::json> params) {
  if (h_->tracer()) h_->tracer()->invoke(std::string(fn), std::move(params));
}

void CallContext::leave(std::string_view fn) {
  if (h_->tracer()) h_->tracer()->ret(std::string(fn));
}

bool CallContext::tracing() const { return h_->tracer() != nullptr; }

nlohmann::json CallContext::param(const Value& v) {
  if (!h_->tracer()) return nullptr;
  return h_->tracer()->param_for(v);
}

namespace {

std::string summarize(const Value& v) {
  switch (v.kind) {
    case Value::Kind::Number:
      return std::string("num:") + std::string(numeric_name(v.num));
    case Value::Kind::Bool:
      return v.b ? "bool:true" : "bool:false";
    case Value::Kind::Char:
      return "char:" + std::to_string(static_cast<uint32_t>(v.cp));
    case Value::Kind::Str:
      return "str(" + std::to_string(v.str.size()) + ")";
    case Value::Kind::Arr:
      return "arr(" + std::to_string(v.items.size()) + ")";
    case Value::Kind::Obj:
      return "obj:" + v.composite;
    case Value::Kind::Null:
      return "null";
  }
  return "?";
}

// Everything the supervised thread touches lives in one heap bundle so a
// wedged thread can be abandoned by leaking the bundle instead of leaving
// dangling stack references behind.
struct Invocation {
  Invocation(MeasureContext& ctx, Tracer* tracer, std::string id_,
             std::vector<ValuePtr> args_, std::optional<int> pin_)
      : harness(ctx, tracer),
        id(std::move(id_)),
        args(std::move(args_)),
        pin(pin_) {}

  Harness harness;
  std::string id;
  std::vector<ValuePtr> args;
  std::optional<int> pin;

  std::mutex m;
  std::condition_variable cv;
  enum class State { Running, Done, Threw, HarnessFailed, Truncated, Interrupted };
  State state = State::Running;
  ValuePtr result;
  std::string error;
  int cpu = -1;
};

// Watchdog teardown. Thread cancellation cannot interrupt arbitrary compute
// loops safely (a forced unwind started at an instruction outside any call
// site terminates the process), so expiry is delivered as a signal whose
// handler jumps back to a recovery point in the thread's entry function. No
// destructors run for the abandoned frames; the bundle keeps the arguments
// alive and the context is tainted afterwards, so nothing dangles. The
// jump is only safe because corpus code never holds a lock or allocates
// inside loops that can outlive the watchdog.
struct EscapeSlot {
  sigjmp_buf jump;
  volatile sig_atomic_t armed = 0;
};

thread_local EscapeSlot t_escape;

extern "C" void escape_handler(int) {
  if (t_escape.armed) {
    t_escape.armed = 0;
    siglongjmp(t_escape.jump, 1);
  }
}

void install_escape_handler() {
  static const bool done = [] {
    struct sigaction sa = {};
    sa.sa_handler = escape_handler;
    sigemptyset(&sa.sa_mask);
    sa.sa_flags = 0;
    sigaction(SIGURG, &sa, nullptr);
    return true;
  }();
  (void)done;
}

extern "C" void* invocation_main(void* raw) {
  auto* inv = static_cast<Invocation*>(raw);
  if (inv->pin) {
    cpu_set_t set;
    CPU_ZERO(&set);
    CPU_SET(*inv->pin, &set);
    pthread_setaffinity_np(pthread_self(), sizeof(set), &set);
  }
  inv->cpu = sched_getcpu();

  Invocation::State next;
  ValuePtr result;
  std::string error;
  if (sigsetjmp(t_escape.jump, 1) == 0) {
    t_escape.armed = 1;
    try {
      result = inv->harness.invoke(inv->id, inv->args);
      next = Invocation::State::Done;
    } catch (const TraceTruncated&) {
      next = Invocation::State::Truncated;
    } catch (const HarnessError& e) {
      error = e.what();
      next = Invocation::State::HarnessFailed;
    } catch (const std::exception& e) {
      error = e.what();
      next = Invocation::State::Threw;
    } catch (...) {
      error = "non-standard exception";
      next = Invocation::State::Threw;
    }
    t_escape.armed = 0;
  } else {
    // Arrived here via the watchdog signal; the target's frames are gone.
    next = Invocation::State::Interrupted;
    result = nullptr;
    error.clear();
  }
  {
    std::lock_guard<std::mutex> lk(inv->m);
    inv->state = next;
    if (next == Invocation::State::Done) inv->result = std::move(result);
    if (!error.empty()) inv->error = std::move(error);
  }
  inv->cv.notify_all();
  return nullptr;
}

// Runs the invocation under the watchdog. Returns false on lambda expiry;
// *out then holds the joined bundle (state Interrupted, or a final state if
// the target finished in the race window) or nullptr when the thread had to
// be abandoned. The real-time clock governs the deadline regardless of any
// injected cycle source.
bool run_supervised(std::unique_ptr<Invocation> inv, double lambda_seconds,
                    std::unique_ptr<Invocation>* out) {
  install_escape_handler();
  pthread_t th;
  if (pthread_create(&th, nullptr, invocation_main, inv.get()) != 0)
    throw StartupError("cannot spawn measurement thread");
  bool finished;
  {
    std::unique_lock<std::mutex> lk(inv->m);
    finished = inv->cv.wait_for(
        lk, std::chrono::duration<double>(lambda_seconds),
        [&] { return inv->state != Invocation::State::Running; });
    if (!finished) pthread_kill(th, SIGURG);
  }
  if (finished) {
    pthread_join(th, nullptr);
    *out = std::move(inv);
    return true;
  }
  timespec deadline;
  clock_gettime(CLOCK_REALTIME, &deadline);
  deadline.tv_sec += 2;
  if (pthread_timedjoin_np(th, nullptr, &deadline) == 0) {
    *out = std::move(inv);
  } else {
    // The thread ignored the interrupt within the grace period; abandon it
    // and leak its bundle. The process is considered poisoned.
    pthread_detach(th);
    inv.release();
    *out = nullptr;
  }
  return false;
}

}  // namespace

Outcome Outcome::completed(uint64_t cycles, std::string summary) {
  Outcome o;
  o.kind = Kind::Completed;
  o.cycles = cycles == 0 ? 1 : cycles;
  o.summary = std::move(summary);
  return o;
}

Outcome Outcome::threw(std::string summary) {
  Outcome o;
  o.kind = Kind::Threw;
  o.summary = std::move(summary);
  return o;
}

Outcome Outcome::timed_out(double lambda_seconds) {
  Outcome o;
  o.kind = Kind::TimedOut;
  o.lambda_seconds = lambda_seconds;
  o.summary = "lambda expired";
  return o;
}

nlohmann::json Outcome::to_json() const {
  switch (kind) {
    case Kind::Completed:
      return {{"kind", "completed"}, {"cycles", cycles}, {"summary", summary}};
    case Kind::Threw:
      return {{"kind", "threw"}, {"summary", summary}};
    case Kind::TimedOut:
      return {{"kind", "timed_out"}, {"lambda_seconds", lambda_seconds}};
  }
  throw std::logic_error("outcome kind");
}

Outcome Outcome::from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "completed")
    return completed(j.at("cycles").get<uint64_t>(),
                     j.value("summary", std::string()));
  if (kind == "threw") return threw(j.value("summary", std::string()));
  if (kind == "timed_out")
    return timed_out(j.at("lambda_seconds").get<double>());
  throw DecodeError("unknown outcome kind: " + kind);
}

int choose_pinned_cpu(const std::vector<int>& affinity_mask) {
  if (affinity_mask.size() < 2)
    throw ConfigError(
        "measurement requires an affinity mask with at least two CPUs "
        "(one for the target, one for the watchdog); mask has " +
        std::to_string(affinity_mask.size()));
  return *std::min_element(affinity_mask.begin(), affinity_mask.end());
}

MeasureContext::MeasureContext(const TargetRegistry& reg, CycleSource* cycles)
    : reg_(&reg) {
  if (cycles) {
    cycles_ = cycles;
  } else {
    owned_cycles_ = default_cycle_source();
    cycles_ = owned_cycles_.get();
  }
}

MeasureContext::~MeasureContext() = default;

void MeasureContext::set_method_under_test(const std::string& id) {
  mut_ = id;
  last_runtime_.reset();
  t_depth_ = 0;
}

void MeasureContext::clear_analysis() {
  mut_.clear();
  last_runtime_.reset();
  t_depth_ = 0;
}

Outcome MeasureContext::measure_call(const std::string& id,
                                     const std::vector<ValuePtr>& args,
                                     double lambda_seconds) {
  if (tainted_)
    throw HarnessError("measure context is tainted; recycle the worker");
  if (lambda_seconds <= 0) throw ConfigError("lambda must be positive");

  auto inv = std::make_unique<Invocation>(*this, nullptr, id, args, pinned_);
  uint64_t outer0 = cycles_->read();
  std::unique_ptr<Invocation> done;
  bool finished = run_supervised(std::move(inv), lambda_seconds, &done);
  uint64_t outer1 = cycles_->read();
  if (!done || done->state == Invocation::State::Interrupted) {
    tainted_ = true;
    t_depth_ = 0;
    last_runtime_.reset();
    return Outcome::timed_out(lambda_seconds);
  }
  // A bundle in another final state after the deadline means the target
  // finished during the teardown race; its result is valid, so use it.
  (void)finished;
  last_cpu_ = done->cpu;
  switch (done->state) {
    case Invocation::State::HarnessFailed:
      throw HarnessError(done->error);
    case Invocation::State::Threw:
      return Outcome::threw(done->error);
    case Invocation::State::Done: {
      uint64_t c;
      if (!mut_.empty() && mut_ == id && last_runtime_.has_value())
        c = *last_runtime_;
      else
        c = outer1 - outer0;
      return Outcome::completed(c, summarize(*done->result));
    }
    default:
      throw std::logic_error("unexpected invocation state");
  }
}

Trace MeasureContext::trace_call(const std::string& id,
                                 const std::vector<ValuePtr>& args,
                                 double lambda_seconds, size_t max_events) {
  if (tainted_)
    throw HarnessError("measure context is tainted; recycle the worker");
  if (lambda_seconds <= 0) throw ConfigError("lambda must be positive");

  auto tracer = std::make_unique<Tracer>(max_events);
  auto inv = std::make_unique<Invocation>(*this, tracer.get(), id, args,
                                          pinned_);
  std::unique_ptr<Invocation> done;
  bool finished = run_supervised(std::move(inv), lambda_seconds, &done);
  if (!done) {
    tainted_ = true;
    t_depth_ = 0;
    last_runtime_.reset();
    // Wedged thread: the tracer may still be written to; leak it with the
    // bundle rather than risk a use after free.
    tracer.release();
    Trace t;
    t.error = "interrupted: lambda expired (thread abandoned)";
    t.truncated = true;
    return t;
  }
  if (done->state == Invocation::State::Interrupted) {
    tainted_ = true;
    t_depth_ = 0;
    last_runtime_.reset();
    Trace t = tracer->take();
    t.error = "interrupted: lambda expired";
    t.truncated = true;
    return t;
  }
  // Any other final state after the deadline means the target finished
  // during the teardown race and the trace is complete.
  (void)finished;
  last_cpu_ = done->cpu;
  Trace t = tracer->take();
  if (done->state == Invocation::State::Threw ||
      done->state == Invocation::State::HarnessFailed)
    t.error = done->error;
  return t;
}

ValuePtr call_target(const TargetRegistry& reg, const std::string& id,
                     const std::vector<ValuePtr>& args) {
  MeasureContext ctx(reg);
  Harness h(ctx, nullptr);
  return h.invoke(id, args);
}

int MeasureContext::pin_cpu() {
  cpu_set_t set;
  if (sched_getaffinity(0, sizeof(set), &set) != 0)
    throw StartupError("cannot read CPU affinity mask");
  std::vector<int> mask;
  for (int c = 0; c < CPU_SETSIZE; ++c)
    if (CPU_ISSET(c, &set)) mask.push_back(c);
  int cpu = choose_pinned_cpu(mask);
  pinned_ = cpu;
  return cpu;
}

}  // namespace microfuzz
