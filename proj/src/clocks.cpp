#include "microfuzz/clocks.hpp"

#include <algorithm>
#include <chrono>
#include <thread>
#include <vector>

#include "microfuzz/errors.hpp"

namespace microfuzz {

namespace {

class MonotonicSource : public CycleSource {
 public:
  uint64_t read() override {
    auto now = std::chrono::steady_clock::now().time_since_epoch();
    return std::chrono::duration_cast<std::chrono::nanoseconds>(now).count();
  }
  std::string name() const override { return "monotonic"; }
};

#if defined(__x86_64__)
class TscSource : public CycleSource {
 public:
  uint64_t read() override {
    unsigned lo, hi;
    // lfence serializes instruction issue ahead of the counter read so the
    // sample is not hoisted past in-flight work.
    asm volatile("lfence\n\trdtsc" : "=a"(lo), "=d"(hi)::"memory");
    return (static_cast<uint64_t>(hi) << 32) | lo;
  }
  std::string name() const override { return "rdtsc"; }
};
#endif

class RealTimeSource : public TimeSource {
 public:
  uint64_t now_ns() override {
    auto now = std::chrono::steady_clock::now().time_since_epoch();
    return std::chrono::duration_cast<std::chrono::nanoseconds>(now).count();
  }
  void sleep_ns(uint64_t ns) override {
    std::this_thread::sleep_for(std::chrono::nanoseconds(ns));
  }
};

}  // namespace

std::unique_ptr<CycleSource> make_tsc_source() {
#if defined(__x86_64__)
  return std::make_unique<TscSource>();
#else
  throw ConfigError("timestamp counter unavailable on this architecture");
#endif
}

std::unique_ptr<CycleSource> make_monotonic_source() {
  return std::make_unique<MonotonicSource>();
}

std::unique_ptr<CycleSource> default_cycle_source() {
#if defined(__x86_64__)
  return make_tsc_source();
#else
  return make_monotonic_source();
#endif
}

std::unique_ptr<TimeSource> make_real_time_source() {
  return std::make_unique<RealTimeSource>();
}

Calibration calibrate(CycleSource& cycles) {
  constexpr int kTrials = 9;
  constexpr auto kInterval = std::chrono::milliseconds(100);
  std::vector<double> rates;
  rates.reserve(kTrials);
  for (int i = 0; i < kTrials; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    uint64_t c0 = cycles.read();
    std::this_thread::sleep_for(kInterval);
    uint64_t c1 = cycles.read();
    auto t1 = std::chrono::steady_clock::now();
    double ns =
        std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count();
    if (ns <= 0 || c1 <= c0)
      throw StartupError("cycle counter did not advance during calibration");
    rates.push_back(static_cast<double>(c1 - c0) * 1e9 / ns);
  }
  std::sort(rates.begin(), rates.end());
  double median = rates[kTrials / 2];
  double spread = (rates.back() - rates.front()) / median;
  if (spread > 0.05)
    throw StartupError(
        "cycle counter calibration unstable (spread " +
        std::to_string(spread * 100) +
        "%); pin the CPU frequency or use a fixed clock_hz setting");
  return Calibration{median, cycles.name()};
}

double cycles_to_seconds(uint64_t cycles, double clock_hz) {
  if (clock_hz <= 0) throw ConfigError("clock_hz must be positive");
  return static_cast<double>(cycles) / clock_hz;
}

uint64_t seconds_to_cycles(double seconds, double clock_hz) {
  if (clock_hz <= 0) throw ConfigError("clock_hz must be positive");
  if (seconds <= 0) return 0;
  return static_cast<uint64_t>(seconds * clock_hz);
}

}  // namespace microfuzz
