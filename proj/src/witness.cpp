#include "microfuzz/witness.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <thread>

#include "microfuzz/errors.hpp"
#include "microfuzz/measure.hpp"

namespace microfuzz {

nlohmann::json WitnessManifest::to_json() const {
  return {{"version", version},
          {"target", target},
          {"args", args},
          {"phase1", {{"cycles", phase1_cycles}, {"config", phase1_config}}}};
}

WitnessManifest WitnessManifest::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("version") || !j.contains("target") ||
      !j.contains("args") || !j.contains("phase1"))
    throw DecodeError("witness manifest: missing fields");
  if (!j.at("version").is_number_integer())
    throw DecodeError("witness manifest: version must be an integer");
  int v = j.at("version").get<int>();
  if (v != kWitnessManifestVersion)
    throw DecodeError("witness manifest: version mismatch: got " +
                      std::to_string(v) + ", want " +
                      std::to_string(kWitnessManifestVersion));
  WitnessManifest m;
  m.version = v;
  m.target = j.at("target").get<std::string>();
  if (!j.at("args").is_array())
    throw DecodeError("witness manifest: args must be an array");
  m.args = j.at("args").get<std::vector<nlohmann::json>>();
  const auto& p1 = j.at("phase1");
  if (!p1.is_object() || !p1.contains("cycles") || !p1.contains("config"))
    throw DecodeError("witness manifest: phase1 must carry cycles and config");
  m.phase1_cycles = p1.at("cycles").get<uint64_t>();
  m.phase1_config = p1.at("config");
  return m;
}

WitnessManifest synthesize(const WitnessCandidate& candidate,
                           const CampaignConfig& config,
                           const TargetRegistry& reg) {
  const TargetEntry& entry = reg.get(candidate.target);
  if (candidate.args.size() != entry.sig.params.size())
    throw ConformanceError("witness synthesis: argument count mismatch for " +
                           candidate.target);
  for (size_t i = 0; i < candidate.args.size(); ++i) {
    ValuePtr v = value_from_json(candidate.args[i]);  // DecodeError on bad shape
    if (!conforms(*v, *entry.sig.params[i], reg.types()))
      throw ConformanceError("witness synthesis: argument " +
                             std::to_string(i) +
                             " does not conform to the signature of " +
                             candidate.target);
  }
  WitnessManifest m;
  m.target = candidate.target;
  m.args = candidate.args;
  m.phase1_cycles = candidate.outcome.kind == Outcome::Kind::Completed
                        ? candidate.outcome.cycles
                        : 0;
  m.phase1_config = config.to_json();
  return m;
}

std::string_view verdict_name(Verdict::Kind k) {
  switch (k) {
    case Verdict::Kind::Confirmed:
      return "confirmed";
    case Verdict::Kind::NotCpuBound:
      return "not_cpu_bound";
    case Verdict::Kind::TooFast:
      return "too_fast";
    case Verdict::Kind::ReplayError:
      return "replay_error";
  }
  return "?";
}

namespace {

Verdict::Kind verdict_from_name(const std::string& s) {
  if (s == "confirmed") return Verdict::Kind::Confirmed;
  if (s == "not_cpu_bound") return Verdict::Kind::NotCpuBound;
  if (s == "too_fast") return Verdict::Kind::TooFast;
  if (s == "replay_error") return Verdict::Kind::ReplayError;
  throw DecodeError("verdict: unknown kind: " + s);
}

double tv_seconds(const timeval& tv) {
  return static_cast<double>(tv.tv_sec) + static_cast<double>(tv.tv_usec) * 1e-6;
}

struct ReplayRun {
  bool ran = false;          // fork and exec both succeeded
  bool exited = false;       // normal exit (code in exit_code)
  int exit_code = -1;
  int term_signal = 0;       // nonzero when terminated by a signal
  bool killed_at_cap = false;
  double wall_seconds = 0.0;
  double cpu_seconds = 0.0;
  std::string error;
};

// Runs the replay binary with the given arguments, reaps it, and reports
// wall time plus OS-accounted CPU time. kill_after_seconds > 0 hard-kills
// the child at exactly that deadline and keeps measuring until it is
// reaped.
ReplayRun run_replay(const std::string& bin,
                     const std::vector<std::string>& extra_args,
                     double kill_after_seconds) {
  ReplayRun r;
  pid_t pid = fork();
  if (pid < 0) {
    r.error = std::string("fork failed: ") + std::strerror(errno);
    return r;
  }
  if (pid == 0) {
    int devnull = open("/dev/null", O_WRONLY);
    if (devnull >= 0) {
      dup2(devnull, STDOUT_FILENO);
      close(devnull);
    }
    std::vector<char*> argv;
    argv.push_back(const_cast<char*>(bin.c_str()));
    for (const auto& a : extra_args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    execv(bin.c_str(), argv.data());
    _exit(127);
  }

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  };
  int status = 0;
  rusage ru{};
  bool killed = false;
  for (;;) {
    pid_t got = wait4(pid, &status, WNOHANG, &ru);
    if (got == pid) break;
    if (got < 0) {
      r.error = std::string("wait failed: ") + std::strerror(errno);
      return r;
    }
    if (!killed && kill_after_seconds > 0 && elapsed() >= kill_after_seconds) {
      kill(pid, SIGKILL);
      killed = true;
    }
    std::this_thread::sleep_for(std::chrono::microseconds(500));
  }
  r.wall_seconds = elapsed();
  r.cpu_seconds = tv_seconds(ru.ru_utime) + tv_seconds(ru.ru_stime);
  r.killed_at_cap = killed;
  if (WIFEXITED(status)) {
    r.exited = true;
    r.exit_code = WEXITSTATUS(status);
    if (r.exit_code == 127) {
      r.error = "could not execute replay binary: " + bin;
      return r;
    }
  } else if (WIFSIGNALED(status)) {
    r.term_signal = WTERMSIG(status);
  }
  r.ran = true;
  return r;
}

std::string write_temp_manifest(const nlohmann::json& j) {
  const char* tmpdir = std::getenv("TMPDIR");
  std::string templ = std::string(tmpdir && *tmpdir ? tmpdir : "/tmp") +
                      "/microfuzz-manifest-XXXXXX";
  std::vector<char> path(templ.begin(), templ.end());
  path.push_back('\0');
  int fd = mkstemp(path.data());
  if (fd < 0)
    throw StartupError(std::string("cannot create manifest temp file: ") +
                       std::strerror(errno));
  std::string body = j.dump();
  ssize_t wrote = write(fd, body.data(), body.size());
  close(fd);
  if (wrote != static_cast<ssize_t>(body.size())) {
    unlink(path.data());
    throw StartupError("short write to manifest temp file");
  }
  return std::string(path.data());
}

std::string resolve_replay_bin(const std::string& configured) {
  if (!configured.empty()) return configured;
  const char* env = std::getenv("MICROFUZZ_REPLAY_BIN");
  return env ? env : "";
}

// Only printable ASCII goes in (json dump with ensure_ascii), so escaping
// quote and backslash is enough.
std::string cpp_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

nlohmann::json Verdict::to_json() const {
  return {{"verdict", std::string(verdict_name(kind))},
          {"wall_seconds", wall_seconds},
          {"adjusted_wall_seconds", adjusted_wall_seconds},
          {"cpu_seconds", cpu_seconds},
          {"cpu_bound_ratio", cpu_bound_ratio},
          {"startup_baseline_seconds", startup_baseline_seconds},
          {"killed_at_cap", killed_at_cap},
          {"error", error}};
}

Verdict Verdict::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("verdict"))
    throw DecodeError("verdict: missing fields");
  Verdict v;
  v.kind = verdict_from_name(j.at("verdict").get<std::string>());
  v.wall_seconds = j.value("wall_seconds", 0.0);
  v.adjusted_wall_seconds = j.value("adjusted_wall_seconds", 0.0);
  v.cpu_seconds = j.value("cpu_seconds", 0.0);
  v.cpu_bound_ratio = j.value("cpu_bound_ratio", 0.0);
  v.startup_baseline_seconds = j.value("startup_baseline_seconds", 0.0);
  v.killed_at_cap = j.value("killed_at_cap", false);
  v.error = j.value("error", std::string());
  return v;
}

double replay_startup_baseline(const std::string& replay_bin) {
  std::string bin = resolve_replay_bin(replay_bin);
  if (bin.empty())
    throw StartupError(
        "no replay binary configured (set MICROFUZZ_REPLAY_BIN)");
  std::vector<double> walls;
  for (int i = 0; i < 3; ++i) {
    ReplayRun r = run_replay(bin, {"--startup-probe"}, 0.0);
    if (!r.ran || !r.exited || r.exit_code != 0)
      throw StartupError("startup probe failed: " +
                         (r.error.empty()
                              ? "replay exited with code " +
                                    std::to_string(r.exit_code)
                              : r.error));
    walls.push_back(r.wall_seconds);
  }
  std::sort(walls.begin(), walls.end());
  return walls[1];
}

Verdict validate_witness(const WitnessManifest& manifest,
                         const ValidationOptions& opts) {
  Verdict v;
  std::string bin = resolve_replay_bin(opts.replay_bin);
  if (bin.empty()) {
    v.kind = Verdict::Kind::ReplayError;
    v.error = "no replay binary configured (set MICROFUZZ_REPLAY_BIN)";
    return v;
  }

  double baseline = opts.startup_baseline_seconds;
  if (baseline < 0) {
    try {
      baseline = replay_startup_baseline(bin);
    } catch (const StartupError& e) {
      v.kind = Verdict::Kind::ReplayError;
      v.error = e.what();
      return v;
    }
  }
  v.startup_baseline_seconds = baseline;

  std::string path;
  try {
    path = write_temp_manifest(manifest.to_json());
  } catch (const StartupError& e) {
    v.kind = Verdict::Kind::ReplayError;
    v.error = e.what();
    return v;
  }
  ReplayRun r = run_replay(bin, {"--manifest", path}, 10.0 * opts.sigma);
  unlink(path.c_str());

  v.wall_seconds = r.wall_seconds;
  v.cpu_seconds = r.cpu_seconds;
  v.cpu_bound_ratio =
      r.wall_seconds > 0 ? r.cpu_seconds / r.wall_seconds : 0.0;
  v.adjusted_wall_seconds = std::max(0.0, r.wall_seconds - baseline);
  v.killed_at_cap = r.killed_at_cap;

  if (!r.ran || (r.exited && r.exit_code == 127)) {
    v.kind = Verdict::Kind::ReplayError;
    v.error = r.error.empty() ? "replay did not run" : r.error;
    return v;
  }
  if (r.term_signal != 0 && !r.killed_at_cap) {
    v.kind = Verdict::Kind::ReplayError;
    v.error = "replay terminated by signal " + std::to_string(r.term_signal);
    return v;
  }
  if (r.exited && r.exit_code != 0) {
    v.kind = Verdict::Kind::ReplayError;
    v.error = "replay exited with code " + std::to_string(r.exit_code);
    return v;
  }
  if (v.adjusted_wall_seconds < opts.sigma) {
    v.kind = Verdict::Kind::TooFast;
    return v;
  }
  if (v.cpu_bound_ratio < opts.cpu_bound_threshold) {
    v.kind = Verdict::Kind::NotCpuBound;
    return v;
  }
  v.kind = Verdict::Kind::Confirmed;
  return v;
}

Trace triage_trace(const TargetRegistry& reg, const WitnessManifest& manifest,
                   double lambda_seconds, size_t max_events) {
  std::vector<ValuePtr> args;
  args.reserve(manifest.args.size());
  for (const auto& a : manifest.args) args.push_back(value_from_json(a));
  MeasureContext ctx(reg);
  return ctx.trace_call(manifest.target, args, lambda_seconds, max_events);
}

std::string export_program(const WitnessManifest& manifest) {
  nlohmann::json args = manifest.args;
  std::string args_text = args.dump(-1, ' ', true);
  std::string out;
  out += "// Standalone replay of " + manifest.target + ".\n";
  out += "// Build from the repository root:\n";
  out +=
      "//   g++ -std=c++20 -O3 -Iinclude -Ivendor program.cpp "
      "build/libcorpus_replay.a build/libmicrofuzz_core.a -lpthread\n";
  out += "#include <iostream>\n";
  out += "#include <vector>\n\n";
  out += "#include <json.hpp>\n\n";
  out += "#include \"microfuzz/corpus.hpp\"\n";
  out += "#include \"microfuzz/measure.hpp\"\n";
  out += "#include \"microfuzz/value.hpp\"\n\n";
  out += "int main() {\n";
  out += "  microfuzz::TargetRegistry reg;\n";
  out += "  microfuzz::register_corpus(reg);\n";
  out += "  const nlohmann::json args_json =\n      nlohmann::json::parse(" +
         cpp_quote(args_text) + ");\n";
  out += "  std::vector<microfuzz::ValuePtr> args;\n";
  out += "  for (const auto& a : args_json)\n";
  out += "    args.push_back(microfuzz::value_from_json(a));\n";
  out += "  microfuzz::ValuePtr result =\n      microfuzz::call_target(reg, " +
         cpp_quote(manifest.target) + ", args);\n";
  out += "  std::cout << microfuzz::serialize(*result) << \"\\n\";\n";
  out += "  return 0;\n";
  out += "}\n";
  return out;
}

}  // namespace microfuzz
