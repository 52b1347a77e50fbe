#include "microfuzz/orchestrator.hpp"

#include <fnmatch.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <deque>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "microfuzz/errors.hpp"
#include "microfuzz/rng.hpp"

namespace microfuzz {

namespace {

bool matches_any(const std::vector<std::string>& patterns,
                 const std::string& id) {
  for (const auto& p : patterns)
    if (fnmatch(p.c_str(), id.c_str(), 0) == 0) return true;
  return false;
}

int64_t count_lines(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) return 0;
  int64_t n = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++n;
  return n;
}

std::string errno_text(const char* what) {
  return std::string(what) + ": " + std::strerror(errno);
}

}  // namespace

std::vector<std::string> enumerate_targets(
    const TargetRegistry& reg, const std::vector<std::string>& include,
    const std::vector<std::string>& exclude) {
  std::vector<std::string> ids = reg.ids();
  if (ids.empty()) throw ConfigError("target registry is empty");
  std::vector<std::string> out;
  for (const auto& id : ids) {
    if (!include.empty() && !matches_any(include, id)) continue;
    if (matches_any(exclude, id)) continue;
    out.push_back(id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

ResultsStore::ResultsStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (dir_.empty()) throw ConfigError("results store needs a directory");
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec)
    throw StartupError("cannot create results store at " + dir_.string() +
                       ": " + ec.message());
  // Streams are append-only across runs, so resume the line counters.
  test_cases_ = count_lines(dir_ / "test_cases.jsonl");
  witnesses_ = count_lines(dir_ / "witnesses.jsonl");
  verdicts_ = count_lines(dir_ / "verdicts.jsonl");
  coverage_ = count_lines(dir_ / "coverage.jsonl");
}

int64_t ResultsStore::append(const std::filesystem::path& file,
                             nlohmann::json line, int64_t& counter) {
  line["index"] = counter;
  std::ofstream out(file, std::ios::app | std::ios::binary);
  if (!out) throw StartupError("cannot open " + file.string());
  out << line.dump() << '\n';
  out.flush();
  if (!out) throw StartupError("write failed on " + file.string());
  return counter++;
}

int64_t ResultsStore::append_test_case(const std::string& strategy,
                                       const TestCaseRecord& tc) {
  nlohmann::json j = tc.to_json();
  j["strategy"] = strategy;
  return append(dir_ / "test_cases.jsonl", std::move(j), test_cases_);
}

int64_t ResultsStore::append_witness(const std::string& strategy,
                                     const WitnessCandidate& w,
                                     int64_t test_case_index) {
  if (test_case_index < 0 || test_case_index >= test_cases_)
    throw std::logic_error("witness references test case " +
                           std::to_string(test_case_index) + " but only " +
                           std::to_string(test_cases_) + " are stored");
  nlohmann::json j = w.to_json();
  j["strategy"] = strategy;
  j["test_case_index"] = test_case_index;
  return append(dir_ / "witnesses.jsonl", std::move(j), witnesses_);
}

int64_t ResultsStore::append_verdict(const std::string& strategy,
                                     const std::string& target,
                                     const Verdict& v, int64_t witness_index) {
  if (witness_index < 0 || witness_index >= witnesses_)
    throw std::logic_error("verdict references witness " +
                           std::to_string(witness_index) + " but only " +
                           std::to_string(witnesses_) + " are stored");
  nlohmann::json j = v.to_json();
  j["strategy"] = strategy;
  j["target"] = target;
  j["witness_index"] = witness_index;
  return append(dir_ / "verdicts.jsonl", std::move(j), verdicts_);
}

int64_t ResultsStore::append_coverage(const nlohmann::json& record) {
  if (!record.is_object())
    throw std::logic_error("coverage record must be a JSON object");
  return append(dir_ / "coverage.jsonl", record, coverage_);
}

std::vector<nlohmann::json> ResultsStore::read_stream(
    const std::filesystem::path& file) {
  std::vector<nlohmann::json> out;
  std::ifstream in(file, std::ios::binary);
  if (!in) return out;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw DecodeError("corrupt record at " + file.string() + ":" +
                        std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

nlohmann::json StrategyStats::to_json() const {
  return {{"strategy", strategy},
          {"witnesses_detected", witnesses_detected},
          {"witnesses_confirmed", witnesses_confirmed},
          {"methods_covered", methods_covered},
          {"test_cases", test_cases},
          {"fuzzing_hours", fuzzing_hours},
          {"tests_per_hour", tests_per_hour}};
}

nlohmann::json CampaignSummary::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& s : per_strategy) per.push_back(s.to_json());
  return {{"per_strategy", std::move(per)},
          {"jobs_total", jobs_total},
          {"jobs_failed", jobs_failed},
          {"worker_respawns", worker_respawns},
          {"store_dir", store_dir}};
}

namespace {

struct Job {
  int id = -1;
  std::string target;
  SeedStrategy::Kind kind = SeedStrategy::Kind::Ivi;
  CampaignConfig config;
  int attempts = 0;         // times the job was dispatched
  int crashes = 0;          // worker deaths while running it
  int poison_requeues = 0;  // requeues that did not consume the crash budget
};

// A witness parked until the job queue drains; phase 2 never runs
// concurrently with fuzzing so replay timings stay clean.
struct PendingValidation {
  int64_t witness_index = -1;
  std::string strategy;
  WitnessCandidate candidate;
  CampaignConfig config;
};

CampaignConfig job_config(const CampaignOptions& options,
                          SeedStrategy::Kind kind, const std::string& target) {
  CampaignConfig c = options.config;
  const uint64_t seed = derive_seed(
      options.seed, std::string(strategy_name(kind)) + ":" + target);
  if (kind == SeedStrategy::Kind::Ivi) {
    c.strategy = SeedStrategy::ivi(options.config.strategy.depth_cap, seed);
  } else {
    c.strategy = options.config.strategy;
    c.strategy.kind = kind;
    c.strategy.seed = seed;
  }
  return c;
}

bool write_line(int fd, const nlohmann::json& msg) {
  std::string data = msg.dump();
  data.push_back('\n');
  size_t off = 0;
  while (off < data.size()) {
    ssize_t n = write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    off += static_cast<size_t>(n);
  }
  return true;
}

[[noreturn]] void worker_loop(const TargetRegistry& reg, int in_fd,
                              int out_fd) {
  // The coordinator may carry crash handlers (test harnesses install them);
  // a worker must die with the plain signal so its exit reads as a crash.
  for (int sig : {SIGABRT, SIGSEGV, SIGBUS, SIGFPE, SIGILL, SIGTERM, SIGINT})
    signal(sig, SIG_DFL);
  FILE* in = fdopen(in_fd, "r");
  if (!in) _exit(10);
  char* line = nullptr;
  size_t cap = 0;
  ssize_t len;
  while ((len = getline(&line, &cap, in)) > 0) {
    nlohmann::json msg =
        nlohmann::json::parse(line, line + len, nullptr, false);
    if (msg.is_discarded() || !msg.is_object()) _exit(11);
    if (msg.value("quit", false)) _exit(0);
    const nlohmann::json& jd = msg.at("job");
    const int job_id = jd.at("id").get<int>();
    // A fresh health probe before every job: a worker whose process got
    // damaged by an earlier target must not produce measurements.
    if (probe_environment() == Health::Poisoned) {
      write_line(out_fd, {{"event", "poisoned"}, {"job", job_id}});
      _exit(0);
    }
    nlohmann::json reply;
    try {
      CampaignConfig cfg = CampaignConfig::from_json(jd.at("config"));
      FuzzReport rep =
          fuzz_method(reg, jd.at("target").get<std::string>(), cfg, {});
      reply = {{"event", "done"}, {"job", job_id}, {"report", rep.to_json()}};
    } catch (const Error& e) {
      reply = {{"event", "error"}, {"job", job_id}, {"what", e.what()}};
    }
    if (!write_line(out_fd, reply)) _exit(12);
  }
  _exit(0);
}

struct WorkerProc {
  pid_t pid = -1;
  int in = -1;   // coordinator writes job lines
  int out = -1;  // coordinator reads event lines
  std::string buf;
  int job = -1;           // dispatched job id, -1 when idle
  bool expect_exit = false;  // quit sent or poisoned reported
  bool ever_used = false;    // a later spawn into this slot is a respawn
};

WorkerProc spawn_worker(const TargetRegistry& reg) {
  int to_child[2];
  int from_child[2];
  if (pipe(to_child) != 0) throw StartupError(errno_text("pipe"));
  if (pipe(from_child) != 0) {
    close(to_child[0]);
    close(to_child[1]);
    throw StartupError(errno_text("pipe"));
  }
  pid_t pid = fork();
  if (pid < 0) throw StartupError(errno_text("fork"));
  if (pid == 0) {
    close(to_child[1]);
    close(from_child[0]);
    worker_loop(reg, to_child[0], from_child[1]);
  }
  close(to_child[0]);
  close(from_child[1]);
  WorkerProc w;
  w.pid = pid;
  w.in = to_child[1];
  w.out = from_child[0];
  return w;
}

void reap_worker(WorkerProc& w) {
  if (w.in >= 0) close(w.in);
  if (w.out >= 0) close(w.out);
  if (w.pid > 0) waitpid(w.pid, nullptr, 0);
  const bool used = true;
  w = WorkerProc{};
  w.ever_used = used;
}

bool report_has_timed_out(const nlohmann::json& report) {
  for (const auto& tc : report.at("test_cases"))
    if (tc.at("outcome").at("kind").get<std::string>() == "timed_out")
      return true;
  return false;
}

// Restores the previous SIGPIPE disposition when the campaign leaves scope;
// a worker dying mid-write must surface as EPIPE, not kill the coordinator.
class SigpipeGuard {
 public:
  SigpipeGuard() {
    struct sigaction ign {};
    ign.sa_handler = SIG_IGN;
    sigaction(SIGPIPE, &ign, &old_);
  }
  ~SigpipeGuard() { sigaction(SIGPIPE, &old_, nullptr); }
  SigpipeGuard(const SigpipeGuard&) = delete;
  SigpipeGuard& operator=(const SigpipeGuard&) = delete;

 private:
  struct sigaction old_ {};
};

}  // namespace

CampaignSummary run_campaign(const TargetRegistry& reg,
                             const CampaignOptions& options) {
  options.config.validate();
  if (options.strategies.empty())
    throw ConfigError("campaign needs at least one seed strategy");
  if (options.store_dir.empty())
    throw ConfigError("campaign needs a results store directory");

  int workers = options.workers;
  if (workers < 0) {
    const unsigned cpus = std::thread::hardware_concurrency();
    workers = static_cast<int>(cpus / 2);
  }
  if (workers != 0 && (options.env.time || options.env.cycles))
    throw ConfigError(
        "injected clocks only reach jobs run inline; set workers to 0");

  const std::vector<std::string> targets =
      enumerate_targets(reg, options.include, options.exclude);
  if (targets.empty())
    throw ConfigError("no targets match the include/exclude patterns");

  ResultsStore store(options.store_dir);

  std::vector<Job> jobs;
  for (SeedStrategy::Kind kind : options.strategies)
    for (const auto& target : targets) {
      Job j;
      j.id = static_cast<int>(jobs.size());
      j.target = target;
      j.kind = kind;
      j.config = job_config(options, kind, target);
      jobs.push_back(std::move(j));
    }

  CampaignSummary summary;
  summary.jobs_total = static_cast<int>(jobs.size());
  summary.store_dir = store.dir().string();

  std::map<std::string, StrategyStats> stats;
  for (SeedStrategy::Kind kind : options.strategies)
    stats[std::string(strategy_name(kind))] = StrategyStats{};

  std::vector<PendingValidation> to_validate;

  auto mark_failed = [&](Job& job, const std::string& why) {
    ++summary.jobs_failed;
    store.append_coverage({{"strategy", std::string(strategy_name(job.kind))},
                           {"target", job.target},
                           {"covered", false},
                           {"seed_population", 0},
                           {"generations", 0},
                           {"test_count", 0},
                           {"witness", false},
                           {"wall_seconds", 0.0},
                           {"clock_hz", 0.0},
                           {"note", "job failed: " + why},
                           {"attempts", job.attempts}});
  };

  auto handle_report = [&](Job& job, const nlohmann::json& rep) {
    const std::string strat(strategy_name(job.kind));
    StrategyStats& s = stats[strat];
    int64_t last_tc = -1;
    for (const auto& tcj : rep.at("test_cases"))
      last_tc = store.append_test_case(strat, TestCaseRecord::from_json(tcj));
    s.test_cases += static_cast<int64_t>(rep.at("test_cases").size());
    const bool covered = rep.at("covered").get<bool>();
    if (covered) ++s.methods_covered;
    s.fuzzing_hours += rep.at("wall_seconds").get<double>() / 3600.0;
    const bool has_witness =
        rep.contains("witness") && !rep.at("witness").is_null();
    if (has_witness) {
      WitnessCandidate w = WitnessCandidate::from_json(rep.at("witness"));
      // The invocation that crossed the threshold ends its campaign, so the
      // witness always corresponds to the job's last logged test case.
      const int64_t wi = store.append_witness(strat, w, last_tc);
      ++s.witnesses_detected;
      to_validate.push_back({wi, strat, std::move(w), job.config});
    }
    store.append_coverage({{"strategy", strat},
                           {"target", job.target},
                           {"covered", covered},
                           {"seed_population", rep.at("seed_population")},
                           {"generations", rep.at("generations")},
                           {"test_count", rep.at("test_cases").size()},
                           {"witness", has_witness},
                           {"wall_seconds", rep.at("wall_seconds")},
                           {"clock_hz", rep.at("clock_hz")},
                           {"note", rep.at("note")},
                           {"attempts", job.attempts}});
  };

  std::deque<int> queue;
  for (const auto& j : jobs) queue.push_back(j.id);

  if (workers == 0) {
    // Inline mode: every job runs in this process, in strict queue order,
    // honoring injected clocks. This is the reproducible configuration.
    while (!queue.empty()) {
      Job& job = jobs[queue.front()];
      queue.pop_front();
      ++job.attempts;
      if (probe_environment() == Health::Poisoned) {
        if (++job.poison_requeues <= 1) {
          queue.push_back(job.id);
          continue;
        }
        mark_failed(job, "environment probe reported poisoned");
        continue;
      }
      try {
        FuzzReport rep = fuzz_method(reg, job.target, job.config, options.env);
        handle_report(job, rep.to_json());
      } catch (const Error& e) {
        // Engine errors are deterministic, so a requeue would just repeat
        // them. Record and move on.
        mark_failed(job, e.what());
      }
    }
  } else {
    SigpipeGuard sigpipe;
    std::vector<WorkerProc> pool(static_cast<size_t>(workers));
    auto busy = [&] {
      size_t n = 0;
      for (const auto& w : pool)
        if (w.pid > 0 && w.job >= 0) ++n;
      return n;
    };

    auto handle_worker_exit = [&](WorkerProc& w) {
      if (w.job >= 0 && !w.expect_exit) {
        Job& job = jobs[w.job];
        ++job.crashes;
        if (job.crashes <= 1)
          queue.push_back(job.id);
        else
          mark_failed(job, "worker crashed twice running this job");
      }
      reap_worker(w);
    };

    auto process_lines = [&](WorkerProc& w) {
      size_t nl;
      while ((nl = w.buf.find('\n')) != std::string::npos) {
        std::string line = w.buf.substr(0, nl);
        w.buf.erase(0, nl + 1);
        if (line.empty()) continue;
        nlohmann::json msg = nlohmann::json::parse(line, nullptr, false);
        if (msg.is_discarded() || !msg.is_object() || w.job < 0) {
          // Garbage from a worker is treated like a crash of its job.
          kill(w.pid, SIGKILL);
          handle_worker_exit(w);
          return;
        }
        Job& job = jobs[w.job];
        const std::string event = msg.value("event", "");
        if (event == "done") {
          handle_report(job, msg.at("report"));
          w.job = -1;
          if (report_has_timed_out(msg.at("report"))) {
            // A watchdog kill leaves an abandoned thread in the worker, so
            // the process is recycled before it takes another job.
            kill(w.pid, SIGKILL);
            w.expect_exit = true;
            reap_worker(w);
            return;
          }
        } else if (event == "poisoned") {
          // The probe failed before the job started: requeue without
          // touching the crash budget and let the worker exit.
          if (++job.poison_requeues <= 3)
            queue.push_back(job.id);
          else
            mark_failed(job, "environment probe reported poisoned repeatedly");
          w.job = -1;
          w.expect_exit = true;
        } else if (event == "error") {
          mark_failed(job, msg.value("what", "unknown engine error"));
          w.job = -1;
        } else {
          kill(w.pid, SIGKILL);
          handle_worker_exit(w);
          return;
        }
      }
    };

    while (!queue.empty() || busy() > 0) {
      // Keep enough workers alive for the remaining work.
      const size_t want =
          std::min(pool.size(), busy() + queue.size());
      for (auto& w : pool) {
        size_t alive = 0;
        for (const auto& v : pool)
          if (v.pid > 0) ++alive;
        if (alive >= want) break;
        if (w.pid <= 0) {
          const bool respawn = w.ever_used;
          w = spawn_worker(reg);
          w.ever_used = true;
          if (respawn) ++summary.worker_respawns;
        }
      }

      // Dispatch queued jobs to idle workers.
      for (auto& w : pool) {
        if (queue.empty()) break;
        if (w.pid <= 0 || w.expect_exit || w.job >= 0) continue;
        Job& job = jobs[queue.front()];
        ++job.attempts;
        nlohmann::json msg = {{"job",
                               {{"id", job.id},
                                {"target", job.target},
                                {"config", job.config.to_json()}}}};
        if (!write_line(w.in, msg)) {
          // The worker died before accepting the job; this dispatch never
          // happened, so it costs neither crash budget nor attempt count.
          --job.attempts;
          reap_worker(w);
          continue;
        }
        queue.pop_front();
        w.job = job.id;
      }

      std::vector<pollfd> fds;
      std::vector<WorkerProc*> owners;
      for (auto& w : pool)
        if (w.pid > 0) {
          fds.push_back({w.out, POLLIN, 0});
          owners.push_back(&w);
        }
      if (fds.empty()) continue;
      const int rc = poll(fds.data(), static_cast<nfds_t>(fds.size()), 200);
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw StartupError(errno_text("poll"));
      }
      for (size_t i = 0; i < fds.size(); ++i) {
        if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
        WorkerProc& w = *owners[i];
        if (w.pid <= 0) continue;  // already reaped this round
        char chunk[65536];
        const ssize_t n = read(w.out, chunk, sizeof chunk);
        if (n > 0) {
          w.buf.append(chunk, static_cast<size_t>(n));
          process_lines(w);
        } else if (n == 0) {
          handle_worker_exit(w);
        } else if (errno != EINTR && errno != EAGAIN) {
          handle_worker_exit(w);
        }
      }
    }

    for (auto& w : pool) {
      if (w.pid <= 0) continue;
      write_line(w.in, {{"quit", true}});
      reap_worker(w);
    }
  }

  // Phase 2: replay-validate witnesses one at a time, never concurrently
  // with fuzzing, so the rusage numbers are not polluted by sibling load.
  if (options.validate && !to_validate.empty()) {
    double baseline = -1.0;
    std::string baseline_error;
    try {
      baseline = replay_startup_baseline(options.replay_bin);
    } catch (const Error& e) {
      baseline_error = e.what();
    }
    for (const auto& pv : to_validate) {
      Verdict v;
      if (!baseline_error.empty()) {
        v.kind = Verdict::Kind::ReplayError;
        v.error = "startup baseline: " + baseline_error;
      } else {
        try {
          const WitnessManifest manifest =
              synthesize(pv.candidate, pv.config, reg);
          ValidationOptions vopts;
          vopts.sigma = pv.config.sigma;
          vopts.replay_bin = options.replay_bin;
          vopts.startup_baseline_seconds = baseline;
          v = validate_witness(manifest, vopts);
        } catch (const Error& e) {
          v.kind = Verdict::Kind::ReplayError;
          v.error = std::string("synthesis: ") + e.what();
        }
      }
      store.append_verdict(pv.strategy, pv.candidate.target, v,
                           pv.witness_index);
      if (v.confirmed()) ++stats[pv.strategy].witnesses_confirmed;
    }
  }

  for (SeedStrategy::Kind kind : options.strategies) {
    const std::string name(strategy_name(kind));
    StrategyStats s = stats[name];
    s.strategy = name;
    s.tests_per_hour = s.fuzzing_hours > 0.0
                           ? static_cast<double>(s.test_cases) / s.fuzzing_hours
                           : 0.0;
    summary.per_strategy.push_back(std::move(s));
  }
  return summary;
}

namespace {

std::string sanitize_id(const std::string& id) {
  std::string out = id;
  std::replace(out.begin(), out.end(), '/', '_');
  return out;
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::vector<std::filesystem::path> write_report(
    const std::filesystem::path& store_dir, ReportFormat format,
    const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec)
    throw StartupError("cannot create report directory " + out_dir.string() +
                       ": " + ec.message());

  const auto tcs = ResultsStore::read_stream(store_dir / "test_cases.jsonl");
  const auto wits = ResultsStore::read_stream(store_dir / "witnesses.jsonl");
  const auto verds = ResultsStore::read_stream(store_dir / "verdicts.jsonl");
  const auto cov = ResultsStore::read_stream(store_dir / "coverage.jsonl");

  std::vector<std::filesystem::path> paths;

  if (format == ReportFormat::Csv) {
    // Per-strategy aggregates, strategies in first-seen stream order.
    std::vector<std::string> order;
    std::map<std::string, StrategyStats> agg;
    auto touch = [&](const std::string& s) -> StrategyStats& {
      if (!agg.count(s)) {
        order.push_back(s);
        agg[s].strategy = s;
      }
      return agg[s];
    };
    for (const auto& c : cov) {
      StrategyStats& s = touch(c.at("strategy").get<std::string>());
      if (c.at("covered").get<bool>()) ++s.methods_covered;
      s.fuzzing_hours += c.at("wall_seconds").get<double>() / 3600.0;
    }
    for (const auto& t : tcs) ++touch(t.at("strategy").get<std::string>()).test_cases;
    for (const auto& w : wits)
      ++touch(w.at("strategy").get<std::string>()).witnesses_detected;
    for (const auto& v : verds)
      if (v.at("verdict").get<std::string>() == "confirmed")
        ++touch(v.at("strategy").get<std::string>()).witnesses_confirmed;

    const auto summary_path = out_dir / "summary.csv";
    std::ofstream out(summary_path, std::ios::binary | std::ios::trunc);
    if (!out) throw StartupError("cannot write " + summary_path.string());
    out << "strategy,witnesses_detected,witnesses_confirmed,methods_covered,"
           "fuzzing_hours,tests_per_hour\n";
    for (const auto& name : order) {
      StrategyStats& s = agg[name];
      const double per_hour =
          s.fuzzing_hours > 0.0
              ? static_cast<double>(s.test_cases) / s.fuzzing_hours
              : 0.0;
      out << name << ',' << s.witnesses_detected << ','
          << s.witnesses_confirmed << ',' << s.methods_covered << ','
          << fixed6(s.fuzzing_hours) << ',' << fixed6(per_hour) << '\n';
    }
    out.flush();
    if (!out) throw StartupError("write failed on " + summary_path.string());
    paths.push_back(summary_path);

    // Fitness over test-case sequence, one file per (strategy, method).
    std::set<int64_t> flagged;
    for (const auto& w : wits)
      flagged.insert(w.at("test_case_index").get<int64_t>());
    std::map<std::pair<std::string, std::string>,
             std::vector<const nlohmann::json*>>
        groups;
    for (const auto& t : tcs)
      groups[{t.at("strategy").get<std::string>(),
              t.at("target").get<std::string>()}]
          .push_back(&t);
    for (const auto& [key, rows] : groups) {
      const auto path = out_dir / ("fitness_" + key.first + "_" +
                                   sanitize_id(key.second) + ".csv");
      std::ofstream fit(path, std::ios::binary | std::ios::trunc);
      if (!fit) throw StartupError("cannot write " + path.string());
      fit << "test_index,cycles,flagged\n";
      int64_t seq = 0;
      for (const nlohmann::json* row : rows) {
        const nlohmann::json& outcome = row->at("outcome");
        fit << seq++ << ',';
        if (outcome.at("kind").get<std::string>() == "completed")
          fit << outcome.at("cycles").get<uint64_t>();
        fit << ','
            << (flagged.count(row->at("index").get<int64_t>()) ? 1 : 0)
            << '\n';
      }
      fit.flush();
      if (!fit) throw StartupError("write failed on " + path.string());
      paths.push_back(path);
    }
    return paths;
  }

  // Text digest: one block per witness with its validation verdict.
  std::map<int64_t, const nlohmann::json*> verdict_by_witness;
  for (const auto& v : verds)
    verdict_by_witness[v.at("witness_index").get<int64_t>()] = &v;

  const auto digest_path = out_dir / "witness_digest.txt";
  std::ofstream out(digest_path, std::ios::binary | std::ios::trunc);
  if (!out) throw StartupError("cannot write " + digest_path.string());
  if (wits.empty()) {
    out << "no witnesses recorded\n";
  }
  for (const auto& w : wits) {
    std::string args = w.at("args").dump();
    if (args.size() > 120) args = args.substr(0, 117) + "...";
    out << "witness " << w.at("index").get<int64_t>() << ": "
        << w.at("target").get<std::string>() << " ["
        << w.at("strategy").get<std::string>() << "] generation "
        << w.at("generation").get<int>() << " runtime "
        << fixed6(w.at("runtime_seconds").get<double>()) << "s\n";
    out << "  args: " << args << '\n';
    auto it = verdict_by_witness.find(w.at("index").get<int64_t>());
    if (it == verdict_by_witness.end()) {
      out << "  verdict: not validated\n";
    } else {
      const nlohmann::json& v = *it->second;
      out << "  verdict: " << v.at("verdict").get<std::string>() << " (wall "
          << fixed6(v.at("wall_seconds").get<double>()) << "s, cpu ratio "
          << fixed6(v.at("cpu_bound_ratio").get<double>());
      const std::string err = v.value("error", std::string());
      if (!err.empty()) out << ", " << err;
      out << ")\n";
    }
  }
  out.flush();
  if (!out) throw StartupError("write failed on " + digest_path.string());
  paths.push_back(digest_path);
  return paths;
}

CampaignConfig load_campaign_config(const nlohmann::json& file_json) {
  nlohmann::json j = file_json;
  if (const char* prof = std::getenv("MICROFUZZ_PROFILE");
      prof && *prof != '\0') {
    if (!j.is_object())
      throw ConfigError("campaign config must be a JSON object");
    j["profile"] = prof;
  }
  return CampaignConfig::from_json(j);
}

}  // namespace microfuzz
