#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>

namespace microfuzz {

// Source of cycle readings used for fitness measurement. The default source
// is the serialized hardware timestamp counter on x86-64 and a monotonic
// clock elsewhere; a fake source exists for deterministic tests.
class CycleSource {
 public:
  virtual ~CycleSource() = default;
  virtual uint64_t read() = 0;
  virtual std::string name() const = 0;
};

std::unique_ptr<CycleSource> make_tsc_source();
std::unique_ptr<CycleSource> make_monotonic_source();
// Picks the best source for this machine.
std::unique_ptr<CycleSource> default_cycle_source();

class FakeCycleSource : public CycleSource {
 public:
  FakeCycleSource(uint64_t start, uint64_t step) : next_(start), step_(step) {}
  uint64_t read() override {
    reads_.fetch_add(1);
    return next_.fetch_add(step_);
  }
  std::string name() const override { return "fake"; }
  uint64_t reads() const { return reads_.load(); }

 private:
  std::atomic<uint64_t> next_;
  uint64_t step_;
  std::atomic<uint64_t> reads_{0};
};

// Wall-clock time used for budgets, timestamps, and reports. The watchdog
// that interrupts stuck measurements always runs on real time regardless of
// the injected source.
class TimeSource {
 public:
  virtual ~TimeSource() = default;
  virtual uint64_t now_ns() = 0;
  virtual void sleep_ns(uint64_t ns) = 0;
};

std::unique_ptr<TimeSource> make_real_time_source();

class FakeTimeSource : public TimeSource {
 public:
  explicit FakeTimeSource(uint64_t start_ns = 0) : now_(start_ns) {}
  uint64_t now_ns() override { return now_.load(); }
  void sleep_ns(uint64_t ns) override { now_.fetch_add(ns); }
  void advance_ns(uint64_t ns) { now_.fetch_add(ns); }

 private:
  std::atomic<uint64_t> now_;
};

struct Calibration {
  double cycles_per_second = 0.0;
  std::string source;
};

// Measures cycles across nine 100 ms monotonic sleeps and returns the median
// rate. Throws StartupError when the spread across trials exceeds 5%, which
// indicates an unstable counter frequency.
Calibration calibrate(CycleSource& cycles);

double cycles_to_seconds(uint64_t cycles, double clock_hz);
uint64_t seconds_to_cycles(double seconds, double clock_hz);

}  // namespace microfuzz
