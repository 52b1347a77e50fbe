#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "microfuzz/engine.hpp"
#include "microfuzz/targets.hpp"
#include "microfuzz/witness.hpp"

namespace microfuzz {

// Target ids in lexicographic order, filtered by shell-style globs. An id
// is listed when it matches at least one include pattern (or include is
// empty) and no exclude pattern. An empty registry is a ConfigError.
std::vector<std::string> enumerate_targets(
    const TargetRegistry& reg, const std::vector<std::string>& include = {},
    const std::vector<std::string>& exclude = {});

// Calibration and stress targets are excluded from campaigns unless asked
// for explicitly.
inline const std::vector<std::string> kDefaultExcludes = {"bench/*"};

// Append-only JSONL record streams, one file per kind, all appends
// serialized through the owning coordinator. Indices are per-stream line
// numbers; a witness must reference an existing test case and a verdict an
// existing witness, which append() enforces.
class ResultsStore {
 public:
  explicit ResultsStore(std::filesystem::path dir);

  int64_t append_test_case(const std::string& strategy,
                           const TestCaseRecord& tc);
  int64_t append_witness(const std::string& strategy,
                         const WitnessCandidate& w, int64_t test_case_index);
  int64_t append_verdict(const std::string& strategy,
                         const std::string& target, const Verdict& v,
                         int64_t witness_index);
  int64_t append_coverage(const nlohmann::json& record);

  const std::filesystem::path& dir() const { return dir_; }
  int64_t test_cases() const { return test_cases_; }
  int64_t witnesses() const { return witnesses_; }

  static std::vector<nlohmann::json> read_stream(
      const std::filesystem::path& file);

 private:
  int64_t append(const std::filesystem::path& file, nlohmann::json line,
                 int64_t& counter);

  std::filesystem::path dir_;
  int64_t test_cases_ = 0;
  int64_t witnesses_ = 0;
  int64_t verdicts_ = 0;
  int64_t coverage_ = 0;
};

struct CampaignOptions {
  CampaignConfig config;  // shared job parameters; per-job seeds are derived
  std::vector<std::string> include;
  std::vector<std::string> exclude = kDefaultExcludes;

  // Which seed strategies to enqueue. Each entry produces one job per
  // target with identical parameters apart from the instantiation strategy.
  std::vector<SeedStrategy::Kind> strategies = {SeedStrategy::Kind::Ivi,
                                                SeedStrategy::Kind::Sri};

  std::filesystem::path store_dir;
  uint64_t seed = 0;  // campaign seed; job seeds derive from it

  // Worker processes. -1 picks floor(cpus/2); 0 runs jobs inline in this
  // process, which is the deterministic mode and the only one that honors
  // injected fake clocks.
  int workers = -1;

  // Phase 2: replay-validate witnesses after the job queue drains.
  bool validate = true;
  std::string replay_bin;  // empty means $MICROFUZZ_REPLAY_BIN

  EngineEnv env;  // inline mode only; ConfigError with forked workers
};

struct StrategyStats {
  std::string strategy;
  int witnesses_detected = 0;
  int witnesses_confirmed = 0;
  int methods_covered = 0;
  int64_t test_cases = 0;
  double fuzzing_hours = 0.0;
  double tests_per_hour = 0.0;

  nlohmann::json to_json() const;
};

struct CampaignSummary {
  std::vector<StrategyStats> per_strategy;
  int jobs_total = 0;
  int jobs_failed = 0;
  int worker_respawns = 0;
  std::string store_dir;

  nlohmann::json to_json() const;
};

// Drains one job per (target, strategy) through the worker pool, then
// validates any witnesses sequentially. Workers are forked processes fed
// over pipes; a worker that reports a poisoned environment or suffers a
// watchdog kill is recycled, and its job is requeued without consuming the
// crash budget. A job that crashes its worker is requeued once; a second
// crash marks it failed and the campaign continues.
CampaignSummary run_campaign(const TargetRegistry& reg,
                             const CampaignOptions& options);

enum class ReportFormat : uint8_t { Csv, Text };

// Renders the store into files under out_dir and returns their paths:
// csv emits the campaign summary table (columns: strategy,
// witnesses_detected, witnesses_confirmed, methods_covered, fuzzing_hours,
// tests_per_hour) plus one fitness-over-testcase CSV per fuzzed method
// (columns: test_index, cycles, flagged); text emits a human-readable
// witness digest.
std::vector<std::filesystem::path> write_report(
    const std::filesystem::path& store_dir, ReportFormat format,
    const std::filesystem::path& out_dir);

// Loads a campaign config file, honoring a MICROFUZZ_PROFILE environment
// override of the file's "profile" field.
CampaignConfig load_campaign_config(const nlohmann::json& file_json);

}  // namespace microfuzz
