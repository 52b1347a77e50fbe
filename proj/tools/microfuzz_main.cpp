// Command-line front end for the micro-fuzzing pipeline.
//
// Subcommands:
//   enumerate       list fuzzable target ids (calibration targets excluded
//                   unless asked for)
//   fuzz            run a campaign over the bundled targets and record the
//                   JSONL result streams
//   validate        replay-validate witness manifest files
//   report          render a result store as CSV tables or a text digest
//   trace           print the bounded call trace of a witness manifest
//   export-program  emit a standalone C++ reproduction of a manifest
//
// Exit codes:
//   0  success
//   1  usage error
//   2  configuration or startup error
//   3  campaign finished but some jobs failed
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "microfuzz/corpus.hpp"
#include "microfuzz/errors.hpp"
#include "microfuzz/orchestrator.hpp"
#include "microfuzz/witness.hpp"

namespace {

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw microfuzz::ConfigError("cannot read " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw microfuzz::ConfigError(path + ": " + e.what());
  }
}

microfuzz::WitnessManifest read_manifest(const std::string& path) {
  return microfuzz::WitnessManifest::from_json(read_json_file(path));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"micro-fuzzing pipeline"};
  app.require_subcommand(1);

  std::vector<std::string> include;
  std::vector<std::string> exclude;
  auto add_filters = [&](CLI::App* cmd) {
    cmd->add_option("--include", include,
                    "glob of target ids to include (repeatable)");
    cmd->add_option("--exclude", exclude,
                    "glob of target ids to exclude (repeatable; default "
                    "excludes bench/*)");
  };

  auto* enumerate = app.add_subcommand("enumerate", "list fuzzable targets");
  bool manifest = false;
  enumerate->add_flag("--manifest", manifest,
                      "print the full registry manifest (types and target "
                      "signatures) as JSON instead of ids");
  add_filters(enumerate);

  auto* fuzz = app.add_subcommand("fuzz", "run a fuzzing campaign");
  std::string config_path;
  std::string profile;
  std::string strategy = "both";
  std::string store_dir;
  int workers = -1;
  uint64_t seed = 0;
  bool no_validate = false;
  std::string replay_bin;
  fuzz->add_option("--config", config_path, "campaign config JSON file");
  fuzz->add_option("--profile", profile,
                   "built-in campaign profile (full or desk)");
  fuzz->add_option("--strategy", strategy, "ivi, sri, or both")
      ->check(CLI::IsMember({"ivi", "sri", "both"}));
  fuzz->add_option("--store", store_dir, "results store directory")
      ->required();
  fuzz->add_option("--workers", workers,
                   "worker processes; 0 runs jobs inline, -1 picks cpus/2");
  fuzz->add_option("--seed", seed, "campaign seed; job seeds derive from it");
  fuzz->add_flag("--no-validate", no_validate,
                 "skip the replay validation phase");
  fuzz->add_option("--replay-bin", replay_bin,
                   "replay binary (default $MICROFUZZ_REPLAY_BIN)");
  add_filters(fuzz);

  auto* validate = app.add_subcommand("validate", "replay-validate witnesses");
  std::string witness_dir;
  double sigma_override = -1.0;
  std::string validate_replay_bin;
  validate
      ->add_option("--witness-dir", witness_dir,
                   "directory of witness manifest *.json files")
      ->required();
  validate->add_option(
      "--sigma", sigma_override,
      "override the flagging threshold instead of reading it from each "
      "manifest");
  validate->add_option("--replay-bin", validate_replay_bin,
                       "replay binary (default $MICROFUZZ_REPLAY_BIN)");

  auto* report = app.add_subcommand("report", "render a results store");
  std::string report_store;
  std::string format = "csv";
  std::string out_dir = ".";
  report->add_option("--store", report_store, "results store directory")
      ->required();
  report->add_option("--format", format, "csv or text")
      ->check(CLI::IsMember({"csv", "text"}));
  report->add_option("--out", out_dir, "output directory (default .)");

  auto* trace = app.add_subcommand("trace", "trace a witness manifest");
  std::string trace_manifest;
  double trace_lambda = -1.0;
  size_t max_events = 4096;
  trace->add_option("--manifest", trace_manifest, "witness manifest file")
      ->required();
  trace->add_option("--lambda", trace_lambda,
                    "per-invocation timeout in seconds (default: the "
                    "manifest's campaign value)");
  trace->add_option("--max-events", max_events, "trace event cap");

  auto* export_cmd =
      app.add_subcommand("export-program", "emit a standalone reproduction");
  std::string export_manifest;
  std::string export_out;
  export_cmd
      ->add_option("--manifest", export_manifest, "witness manifest file")
      ->required();
  export_cmd->add_option("-o,--out", export_out,
                         "output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  microfuzz::TargetRegistry reg;
  microfuzz::register_corpus(reg);

  try {
    if (enumerate->parsed()) {
      if (manifest) {
        std::cout << reg.manifest().dump(2) << '\n';
        return 0;
      }
      const auto excl =
          exclude.empty() ? microfuzz::kDefaultExcludes : exclude;
      for (const auto& id : microfuzz::enumerate_targets(reg, include, excl))
        std::cout << id << '\n';
      return 0;
    }

    if (fuzz->parsed()) {
      if (config_path.empty() == profile.empty())
        throw microfuzz::ConfigError(
            "pass exactly one of --config or --profile");
      microfuzz::CampaignOptions options;
      options.config =
          config_path.empty()
              ? microfuzz::CampaignConfig::profile(profile)
              : microfuzz::load_campaign_config(read_json_file(config_path));
      options.include = include;
      if (!exclude.empty()) options.exclude = exclude;
      options.strategies.clear();
      if (strategy == "ivi" || strategy == "both")
        options.strategies.push_back(microfuzz::SeedStrategy::Kind::Ivi);
      if (strategy == "sri" || strategy == "both")
        options.strategies.push_back(microfuzz::SeedStrategy::Kind::Sri);
      options.store_dir = store_dir;
      options.seed = seed;
      options.workers = workers;
      options.validate = !no_validate;
      options.replay_bin = replay_bin;
      const microfuzz::CampaignSummary summary =
          microfuzz::run_campaign(reg, options);
      std::cout << summary.to_json().dump(2) << '\n';
      return summary.jobs_failed > 0 ? 3 : 0;
    }

    if (validate->parsed()) {
      std::vector<std::filesystem::path> files;
      for (const auto& entry :
           std::filesystem::directory_iterator(witness_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
          files.push_back(entry.path());
      std::sort(files.begin(), files.end());
      if (files.empty())
        throw microfuzz::ConfigError("no *.json manifests in " + witness_dir);
      const double baseline =
          microfuzz::replay_startup_baseline(validate_replay_bin);
      for (const auto& file : files) {
        const auto manifest = read_manifest(file.string());
        microfuzz::ValidationOptions vopts;
        vopts.sigma = sigma_override > 0.0
                          ? sigma_override
                          : manifest.phase1_config.value("sigma", 0.05);
        vopts.replay_bin = validate_replay_bin;
        vopts.startup_baseline_seconds = baseline;
        const microfuzz::Verdict v =
            microfuzz::validate_witness(manifest, vopts);
        nlohmann::json line = v.to_json();
        line["manifest"] = file.string();
        line["target"] = manifest.target;
        std::cout << line.dump() << '\n';
      }
      return 0;
    }

    if (report->parsed()) {
      const auto fmt = format == "csv" ? microfuzz::ReportFormat::Csv
                                       : microfuzz::ReportFormat::Text;
      for (const auto& path :
           microfuzz::write_report(report_store, fmt, out_dir))
        std::cout << path.string() << '\n';
      return 0;
    }

    if (trace->parsed()) {
      const auto manifest = read_manifest(trace_manifest);
      const double lambda =
          trace_lambda > 0.0 ? trace_lambda
                             : manifest.phase1_config.value("lambda", 5.0);
      const microfuzz::Trace t =
          microfuzz::triage_trace(reg, manifest, lambda, max_events);
      std::cout << t.to_jsonl();
      return 0;
    }

    if (export_cmd->parsed()) {
      const std::string source =
          microfuzz::export_program(read_manifest(export_manifest));
      if (export_out.empty()) {
        std::cout << source;
      } else {
        std::ofstream out(export_out, std::ios::binary | std::ios::trunc);
        if (!out)
          throw microfuzz::ConfigError("cannot write " + export_out);
        out << source;
        out.flush();
        if (!out)
          throw microfuzz::ConfigError("write failed on " + export_out);
      }
      return 0;
    }
  } catch (const microfuzz::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
