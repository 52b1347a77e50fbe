// Optimized, isolated replay of one witness manifest. Runs the manifest's
// invocation directly on the main thread with no watchdog; the validator
// that spawned this process owns the kill cap and the clock.
//
// Exit codes:
//   0  replay completed (the target returned or the validator killed us)
//   2  usage error
//   3  manifest unreadable, malformed, or wrong version
//   4  target not registered
//   5  arguments do not decode or conform
//   6  target threw
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "microfuzz/corpus.hpp"
#include "microfuzz/errors.hpp"
#include "microfuzz/measure.hpp"
#include "microfuzz/witness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"witness replay"};
  std::string manifest_path;
  bool startup_probe = false;
  bool print_args = false;
  app.add_option("--manifest", manifest_path, "manifest file to replay");
  app.add_flag("--startup-probe", startup_probe,
               "start up fully, then exit without replaying");
  app.add_flag("--print-args", print_args,
               "print each decoded argument before invoking");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  microfuzz::TargetRegistry reg;
  microfuzz::register_corpus(reg);
  if (startup_probe) return 0;
  if (manifest_path.empty()) {
    std::cerr << "replay: --manifest is required\n";
    return 2;
  }

  microfuzz::WitnessManifest manifest;
  try {
    std::ifstream in(manifest_path);
    if (!in) {
      std::cerr << "replay: cannot open " << manifest_path << "\n";
      return 3;
    }
    manifest = microfuzz::WitnessManifest::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    std::cerr << "replay: manifest is not valid JSON: " << e.what() << "\n";
    return 3;
  } catch (const microfuzz::DecodeError& e) {
    std::cerr << "replay: " << e.what() << "\n";
    return 3;
  }

  if (!reg.has(manifest.target)) {
    std::cerr << "replay: unregistered target: " << manifest.target << "\n";
    return 4;
  }

  std::vector<microfuzz::ValuePtr> args;
  try {
    args.reserve(manifest.args.size());
    for (const auto& a : manifest.args)
      args.push_back(microfuzz::value_from_json(a));
  } catch (const microfuzz::DecodeError& e) {
    std::cerr << "replay: " << e.what() << "\n";
    return 5;
  }
  if (print_args)
    for (const auto& a : args)
      std::cout << microfuzz::serialize(*a) << "\n";

  try {
    microfuzz::call_target(reg, manifest.target, args);
  } catch (const microfuzz::HarnessError& e) {
    std::cerr << "replay: " << e.what() << "\n";
    return 5;
  } catch (const microfuzz::TargetError& e) {
    std::cerr << "replay: target threw: " << e.what() << "\n";
    return 6;
  }
  return 0;
}
