#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "microfuzz/clocks.hpp"
#include "microfuzz/genetic.hpp"
#include "microfuzz/measure.hpp"
#include "microfuzz/seedgen.hpp"
#include "microfuzz/targets.hpp"

namespace microfuzz {

// Full parameter set for fuzzing one method. Times are in seconds.
struct CampaignConfig {
  SeedStrategy strategy;

  double psi = 5.0;     // seed-population build budget
  double lambda = 5.0;  // per-measurement timeout
  double omega = 10.0;  // witness threshold: runtime at or above it flags
  double gamma = 60.0;  // per-method wall-clock budget
  GAParams ga;
  double sigma = 5.0;  // validation wall threshold, half of omega by default

  // Cycle rate for converting fitness to seconds. Zero means calibrate at
  // startup; tests with a fake cycle source must set it explicitly.
  double clock_hz = 0.0;

  // Auto pins when the affinity mask allows it and runs unpinned otherwise;
  // Required turns an unpinnable mask into an error; Off never pins.
  enum class Pinning : uint8_t { Auto, Required, Off };
  Pinning pinning = Pinning::Auto;

  // "full": the production profile above. "desk": everything scaled down
  // for interactive runs (psi=1s, lambda=1s, omega=100ms, gamma=10s,
  // sigma=50ms). ConfigError on any other name.
  static CampaignConfig profile(const std::string& name);

  // ConfigError: any budget not positive, sigma > omega, bad GA or strategy
  // fields, negative clock_hz.
  void validate() const;

  nlohmann::json to_json() const;
  // Starts from j["profile"] ("full", "desk", or "custom", which equals
  // "full") and applies any explicitly present fields on top.
  static CampaignConfig from_json(const nlohmann::json& j);
};

// One logged invocation of the method under test.
struct TestCaseRecord {
  std::string target;
  std::vector<nlohmann::json> args;
  Outcome outcome;
  int generation = 0;
  uint64_t timestamp_ns = 0;

  nlohmann::json to_json() const;
  static TestCaseRecord from_json(const nlohmann::json& j);
};

// An invocation whose runtime reached omega. TimedOut outcomes qualify only
// when lambda >= omega; then the runtime is the full lambda.
struct WitnessCandidate {
  std::string target;
  std::vector<nlohmann::json> args;
  Outcome outcome;
  double runtime_seconds = 0.0;
  int generation = 0;

  nlohmann::json to_json() const;
  static WitnessCandidate from_json(const nlohmann::json& j);
};

struct FuzzReport {
  std::string target;
  SeedStrategy strategy;
  // False only when not a single argument tuple could be built within psi.
  bool covered = false;
  int seed_population = 0;  // individuals built within psi
  int generations = 0;      // highest generation index reached
  std::vector<TestCaseRecord> test_cases;
  std::optional<WitnessCandidate> witness;
  double wall_seconds = 0.0;
  double clock_hz = 0.0;
  std::string note;

  nlohmann::json to_json() const;
};

// Injectable clocks. Null fields fall back to the real monotonic clock and
// the default cycle source. The per-measurement watchdog always runs on
// real time regardless.
struct EngineEnv {
  TimeSource* time = nullptr;
  CycleSource* cycles = nullptr;
};

// Runs one full campaign against one registered target: builds the seed
// population within psi, evolves it under gamma, measures every invocation
// with the lambda watchdog, and stops early when a runtime reaches omega.
// Exceptions thrown by the target are logged and discarded from the
// breeding pool. Nullary targets get a single measured invocation.
FuzzReport fuzz_method(const TargetRegistry& reg, const std::string& target_id,
                       const CampaignConfig& config, const EngineEnv& env = {});

enum class Health : uint8_t { Healthy, Poisoned };
std::string_view health_name(Health h);

// Canary checks run before each job: allocate and touch a buffer, run a
// scratch thread, read the clock, write and read back a temp file. Any
// failure folds into Poisoned, which tells the orchestrator to recycle the
// worker process.
Health probe_environment();

}  // namespace microfuzz
