#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "microfuzz/clocks.hpp"
#include "microfuzz/targets.hpp"

namespace microfuzz {

struct Outcome {
  enum class Kind { Completed, Threw, TimedOut };
  Kind kind = Kind::Completed;
  uint64_t cycles = 0;        // Completed only; always positive
  std::string summary;        // return summary or error text
  double lambda_seconds = 0;  // TimedOut only

  static Outcome completed(uint64_t cycles, std::string summary);
  static Outcome threw(std::string summary);
  static Outcome timed_out(double lambda_seconds);

  nlohmann::json to_json() const;
  static Outcome from_json(const nlohmann::json& j);
};

// Direct, unsupervised invocation for functional checks: full signature
// validation, no watchdog, no tracing, no timing. The caller is trusted to
// pass arguments that terminate.
ValuePtr call_target(const TargetRegistry& reg, const std::string& id,
                     const std::vector<ValuePtr>& args);

// Lowest CPU of an affinity mask; masks with fewer than two CPUs are a
// configuration error because the watchdog needs a CPU of its own.
int choose_pinned_cpu(const std::vector<int>& affinity_mask);

class Harness;

// Gated measurement of one method under test. The measured call runs on a
// supervised thread; when the lambda deadline passes, the thread is
// interrupted by a signal that jumps it out of the target (skipping any
// destructors in the abandoned frames), the context becomes tainted, and
// the caller must recycle it.
// Timing is gated: only calls to the configured method under test touch
// the runtime attribute, and nested self-calls only adjust the depth
// counter, so one runtime is stored per outermost call tree.
class MeasureContext {
 public:
  // cycles may be null, in which case the default source for this machine
  // is created and owned by the context.
  explicit MeasureContext(const TargetRegistry& reg,
                          CycleSource* cycles = nullptr);
  ~MeasureContext();
  MeasureContext(const MeasureContext&) = delete;
  MeasureContext& operator=(const MeasureContext&) = delete;

  void set_method_under_test(const std::string& id);
  const std::string& method_under_test() const { return mut_; }
  void clear_analysis();
  std::optional<uint64_t> get_runtime() const { return last_runtime_; }

  Outcome measure_call(const std::string& id,
                       const std::vector<ValuePtr>& args,
                       double lambda_seconds);
  Trace trace_call(const std::string& id, const std::vector<ValuePtr>& args,
                   double lambda_seconds, size_t max_events = 1 << 16);

  // Resolves the pinning target from the current affinity mask. The
  // measured thread is pinned there on every subsequent call.
  int pin_cpu();
  std::optional<int> pinned_cpu() const { return pinned_; }
  // CPU the last measured call started on, from an OS query inside the call.
  int last_cpu() const { return last_cpu_; }
  // True once a call was cancelled; the context must not be reused.
  bool tainted() const { return tainted_; }

  CycleSource& cycle_source() { return *cycles_; }

 private:
  friend class Harness;

  const TargetRegistry* reg_;
  std::unique_ptr<CycleSource> owned_cycles_;
  CycleSource* cycles_;
  std::string mut_;
  uint64_t t_start_ = 0;
  long t_depth_ = 0;
  std::optional<uint64_t> last_runtime_;
  std::optional<int> pinned_;
  int last_cpu_ = -1;
  bool tainted_ = false;
};

}  // namespace microfuzz
