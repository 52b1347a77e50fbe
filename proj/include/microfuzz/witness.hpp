#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "microfuzz/engine.hpp"
#include "microfuzz/targets.hpp"

namespace microfuzz {

inline constexpr int kWitnessManifestVersion = 1;

// Self-contained replay recipe: the replay binary plus the target registry
// plus this manifest reproduce the flagged invocation.
struct WitnessManifest {
  int version = kWitnessManifestVersion;
  std::string target;
  std::vector<nlohmann::json> args;
  uint64_t phase1_cycles = 0;  // zero when phase 1 ended in a timeout
  nlohmann::json phase1_config;

  nlohmann::json to_json() const;
  // DecodeError on missing fields or a version other than the current one.
  static WitnessManifest from_json(const nlohmann::json& j);
};

// Packages a flagged invocation for replay. The args are decoded and checked
// against the target's signature; failures raise DecodeError or
// ConformanceError so the caller can keep the candidate with an error note.
WitnessManifest synthesize(const WitnessCandidate& candidate,
                           const CampaignConfig& config,
                           const TargetRegistry& reg);

struct Verdict {
  enum class Kind : uint8_t { Confirmed, NotCpuBound, TooFast, ReplayError };
  Kind kind = Kind::ReplayError;
  double wall_seconds = 0.0;           // raw replay wall time
  double adjusted_wall_seconds = 0.0;  // wall minus the startup baseline
  double cpu_seconds = 0.0;            // user + system from the OS
  double cpu_bound_ratio = 0.0;        // cpu / wall
  double startup_baseline_seconds = 0.0;
  bool killed_at_cap = false;          // replay ran into the 10 sigma kill cap
  std::string error;                   // ReplayError detail

  bool confirmed() const { return kind == Kind::Confirmed; }
  nlohmann::json to_json() const;
  static Verdict from_json(const nlohmann::json& j);
};

std::string_view verdict_name(Verdict::Kind k);

struct ValidationOptions {
  double sigma = 0.05;
  double cpu_bound_threshold = 0.9;
  // Path to the optimized replay binary; empty means $MICROFUZZ_REPLAY_BIN.
  std::string replay_bin;
  // Startup cost subtracted from the wall time before the sigma comparison.
  // Negative means measure it here as the median of three no-op replays.
  double startup_baseline_seconds = -1.0;
};

// Median wall time of three --startup-probe runs of the replay binary.
// StartupError when the binary cannot be spawned.
double replay_startup_baseline(const std::string& replay_bin);

// Replays the manifest in a fresh isolated process and applies the
// CPU-bound wall-clock rule: Confirmed iff the baseline-adjusted wall time
// reaches sigma and cpu/wall reaches the threshold. The replay is hard
// killed at exactly 10 sigma; a replay that is CPU-bound at the kill is
// still Confirmed (runaway loops are the strongest witnesses).
Verdict validate_witness(const WitnessManifest& manifest,
                         const ValidationOptions& opts);

// Bounded trace of the manifest's invocation for human triage.
Trace triage_trace(const TargetRegistry& reg, const WitnessManifest& manifest,
                   double lambda_seconds, size_t max_events = 4096);

// Standalone C++ source file that replays the manifest's invocation with
// the literal arguments embedded, for analysis outside this repo.
std::string export_program(const WitnessManifest& manifest);

}  // namespace microfuzz
