#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "microfuzz/orchestrator.hpp"

#include <sys/resource.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "microfuzz/corpus.hpp"
#include "microfuzz/errors.hpp"

using namespace microfuzz;

namespace {

const TargetRegistry& corpus() {
  static TargetRegistry reg = [] {
    TargetRegistry r;
    register_corpus(r);
    return r;
  }();
  return reg;
}

std::filesystem::path fresh_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() /
             ("microfuzz_orch_" + tag + "_" + std::to_string(getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

// Campaign shape small enough that a benign job finishes in milliseconds.
CampaignConfig tiny_config() {
  CampaignConfig c = CampaignConfig::profile("desk");
  c.ga.pi = 4;
  c.ga.nu = 2;
  c.gamma = 5.0;
  c.clock_hz = 2.5e9;  // skip calibration; cycles stay relative
  return c;
}

TestCaseRecord record(const std::string& target, uint64_t cycles) {
  TestCaseRecord tc;
  tc.target = target;
  tc.args = {nlohmann::json{{"t", "str"}, {"v", "x"}}};
  tc.outcome = Outcome::completed(cycles, "str(1)");
  tc.generation = 0;
  tc.timestamp_ns = 42;
  return tc;
}

struct CmdResult {
  std::string out;
  int exit_code = -1;
};

CmdResult run_cmd(const std::string& cmd) {
  CmdResult r;
  FILE* pipe = popen((cmd + " 2>/dev/null").c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string cli_bin() {
  const char* bin = std::getenv("MICROFUZZ_BIN");
  REQUIRE(bin != nullptr);
  return bin;
}

}  // namespace

TEST_CASE("enumeration lists ids sorted and honors glob filters") {
  const auto all = enumerate_targets(corpus());
  CHECK(std::is_sorted(all.begin(), all.end()));
  CHECK(all.size() == corpus().ids().size());

  const auto fuzzable = enumerate_targets(corpus(), {}, kDefaultExcludes);
  CHECK(fuzzable == std::vector<std::string>{
                        "corpus/colliding_table_insert", "corpus/comment_scan",
                        "corpus/decimal_add", "corpus/list_build",
                        "corpus/regex_split", "corpus/sleep_trap",
                        "corpus/string_reverse", "corpus/vector_sum"});

  CHECK(enumerate_targets(corpus(), {"corpus/d*"}) ==
        std::vector<std::string>{"corpus/decimal_add"});
  CHECK(enumerate_targets(corpus(), {"*scan*", "*regex*"}) ==
        std::vector<std::string>{"corpus/comment_scan", "corpus/regex_split"});
  CHECK(enumerate_targets(corpus(), {}, {"*"}).empty());

  TargetRegistry empty;
  CHECK_THROWS_AS(enumerate_targets(empty), ConfigError);
}

TEST_CASE("results store appends indexed lines and reads them back") {
  const auto dir = fresh_dir("store");
  ResultsStore store(dir);
  CHECK(store.append_test_case("ivi", record("corpus/string_reverse", 10)) ==
        0);
  CHECK(store.append_test_case("sri", record("corpus/string_reverse", 20)) ==
        1);

  WitnessCandidate w;
  w.target = "corpus/string_reverse";
  w.args = {nlohmann::json{{"t", "str"}, {"v", "x"}}};
  w.outcome = Outcome::completed(20, "str(1)");
  w.runtime_seconds = 12.5;
  w.generation = 3;
  CHECK(store.append_witness("sri", w, 1) == 0);

  Verdict v;
  v.kind = Verdict::Kind::Confirmed;
  v.wall_seconds = 1.0;
  CHECK(store.append_verdict("sri", w.target, v, 0) == 0);
  CHECK(store.append_coverage({{"strategy", "sri"}, {"covered", true}}) == 0);

  const auto tcs = ResultsStore::read_stream(dir / "test_cases.jsonl");
  REQUIRE(tcs.size() == 2);
  CHECK(tcs[0].at("index") == 0);
  CHECK(tcs[0].at("strategy") == "ivi");
  CHECK(tcs[1].at("index") == 1);
  CHECK(TestCaseRecord::from_json(tcs[1]).outcome.cycles == 20);

  const auto wits = ResultsStore::read_stream(dir / "witnesses.jsonl");
  REQUIRE(wits.size() == 1);
  CHECK(wits[0].at("test_case_index") == 1);
  CHECK(wits[0].at("strategy") == "sri");

  const auto verds = ResultsStore::read_stream(dir / "verdicts.jsonl");
  REQUIRE(verds.size() == 1);
  CHECK(verds[0].at("witness_index") == 0);
  CHECK(verds[0].at("verdict") == "confirmed");

  // Referential integrity: records may only point at stored lines.
  CHECK_THROWS_AS(store.append_witness("sri", w, 7), std::logic_error);
  CHECK_THROWS_AS(store.append_verdict("sri", w.target, v, 3),
                  std::logic_error);

  // Reopening resumes the line counters instead of restarting them.
  ResultsStore again(dir);
  CHECK(again.test_cases() == 2);
  CHECK(again.witnesses() == 1);
  CHECK(again.append_test_case("ivi", record("corpus/vector_sum", 30)) == 2);

  CHECK(ResultsStore::read_stream(dir / "absent.jsonl").empty());
  std::filesystem::remove_all(dir);
}

TEST_CASE("inline campaign covers benign methods under both strategies") {
  CampaignOptions options;
  options.config = tiny_config();
  options.include = {"corpus/string_reverse", "corpus/vector_sum"};
  options.store_dir = fresh_dir("benign");
  options.seed = 11;
  options.workers = 0;
  options.validate = false;

  const CampaignSummary summary = run_campaign(corpus(), options);
  CHECK(summary.jobs_total == 4);
  CHECK(summary.jobs_failed == 0);
  CHECK(summary.worker_respawns == 0);
  REQUIRE(summary.per_strategy.size() == 2);
  CHECK(summary.per_strategy[0].strategy == "ivi");
  CHECK(summary.per_strategy[1].strategy == "sri");
  for (const auto& s : summary.per_strategy) {
    CHECK(s.methods_covered == 2);
    CHECK(s.witnesses_detected == 0);
    CHECK(s.witnesses_confirmed == 0);
    CHECK(s.test_cases > 0);
    CHECK(s.fuzzing_hours > 0.0);
    CHECK(s.tests_per_hour > 0.0);
  }

  const auto cov =
      ResultsStore::read_stream(options.store_dir / "coverage.jsonl");
  REQUIRE(cov.size() == 4);
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& c : cov) {
    CHECK(c.at("covered") == true);
    CHECK(c.at("witness") == false);
    CHECK(c.at("attempts") == 1);
    seen.emplace(c.at("strategy").get<std::string>(),
                 c.at("target").get<std::string>());
  }
  CHECK(seen.size() == 4);
  CHECK(ResultsStore::read_stream(options.store_dir / "witnesses.jsonl")
            .empty());
  std::filesystem::remove_all(options.store_dir);
}

TEST_CASE("inline campaigns with fake clocks replay byte for byte") {
  auto run_into = [&](const std::filesystem::path& dir) {
    FakeCycleSource cycles(0, 17);
    FakeTimeSource time(5000);
    CampaignOptions options;
    options.config = tiny_config();
    options.include = {"corpus/string_reverse", "corpus/vector_sum"};
    options.store_dir = dir;
    options.seed = 99;
    options.workers = 0;
    options.validate = false;
    options.env.cycles = &cycles;
    options.env.time = &time;
    return run_campaign(corpus(), options);
  };

  const auto dir1 = fresh_dir("det1");
  const auto dir2 = fresh_dir("det2");
  const CampaignSummary s1 = run_into(dir1);
  const CampaignSummary s2 = run_into(dir2);
  nlohmann::json j1 = s1.to_json();
  nlohmann::json j2 = s2.to_json();
  j1.erase("store_dir");  // the only field expected to differ
  j2.erase("store_dir");
  CHECK(j1 == j2);
  for (const char* stream : {"test_cases.jsonl", "coverage.jsonl"}) {
    CAPTURE(stream);
    CHECK(slurp(dir1 / stream) == slurp(dir2 / stream));
  }
  // The fake clock stamps records, proving it reached the jobs.
  const auto tcs = ResultsStore::read_stream(dir1 / "test_cases.jsonl");
  REQUIRE(!tcs.empty());
  CHECK(tcs[0].at("timestamp_ns").get<uint64_t>() == 5000);
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("forked campaign flags a hang, recycles the worker, and confirms") {
  CampaignConfig cfg = tiny_config();
  cfg.lambda = 0.3;
  cfg.omega = 0.1;
  cfg.sigma = 0.05;
  cfg.gamma = 5.0;

  CampaignOptions options;
  options.config = cfg;
  options.include = {"bench/hang", "corpus/string_reverse"};
  options.exclude = {};
  options.strategies = {SeedStrategy::Kind::Ivi};
  options.store_dir = fresh_dir("hang");
  options.workers = 1;
  options.validate = true;

  const CampaignSummary summary = run_campaign(corpus(), options);
  CHECK(summary.jobs_total == 2);
  CHECK(summary.jobs_failed == 0);
  // The hang job ends with a watchdog kill, so its worker is recycled and a
  // fresh one picks up the remaining benign job.
  CHECK(summary.worker_respawns >= 1);
  REQUIRE(summary.per_strategy.size() == 1);
  CHECK(summary.per_strategy[0].witnesses_detected == 1);
  CHECK(summary.per_strategy[0].witnesses_confirmed == 1);
  CHECK(summary.per_strategy[0].methods_covered == 2);

  const auto wits =
      ResultsStore::read_stream(options.store_dir / "witnesses.jsonl");
  REQUIRE(wits.size() == 1);
  CHECK(wits[0].at("target") == "bench/hang");
  CHECK(wits[0].at("outcome").at("kind") == "timed_out");
  CHECK(wits[0].at("runtime_seconds").get<double>() == 0.3);

  const auto verds =
      ResultsStore::read_stream(options.store_dir / "verdicts.jsonl");
  REQUIRE(verds.size() == 1);
  CHECK(verds[0].at("verdict") == "confirmed");
  CHECK(verds[0].at("killed_at_cap") == true);
  CHECK(verds[0].at("witness_index") == 0);
  // Hard kill lands at ten times sigma.
  CHECK(verds[0].at("wall_seconds").get<double>() >= 0.5);
  CHECK(verds[0].at("wall_seconds").get<double>() < 1.5);
  CHECK(verds[0].at("cpu_bound_ratio").get<double>() >= 0.9);

  // Render both report formats from the same store.
  const auto report_dir = fresh_dir("hangreport");
  const auto csv_paths =
      write_report(options.store_dir, ReportFormat::Csv, report_dir);
  REQUIRE(!csv_paths.empty());
  const std::string summary_csv = slurp(report_dir / "summary.csv");
  CHECK(summary_csv.find("strategy,witnesses_detected,witnesses_confirmed,"
                         "methods_covered,fuzzing_hours,tests_per_hour") == 0);
  CHECK(summary_csv.find("\nivi,1,1,2,") != std::string::npos);
  const std::string fitness = slurp(report_dir / "fitness_ivi_bench_hang.csv");
  CHECK(fitness == "test_index,cycles,flagged\n0,,1\n");

  write_report(options.store_dir, ReportFormat::Text, report_dir);
  const std::string digest = slurp(report_dir / "witness_digest.txt");
  CHECK(digest.find("bench/hang") != std::string::npos);
  CHECK(digest.find("confirmed") != std::string::npos);

  std::filesystem::remove_all(options.store_dir);
  std::filesystem::remove_all(report_dir);
}

TEST_CASE("a job that crashes its worker twice fails without ending the run") {
  TargetRegistry reg;
  register_corpus(reg);
  reg.add({"trap/abort",
           {"trap/abort", {}},
           [](CallContext&, const std::vector<ValuePtr>&) -> ValuePtr {
             std::abort();
           },
           "dies instantly"});

  CampaignOptions options;
  options.config = tiny_config();
  options.include = {"corpus/string_reverse", "trap/abort"};
  options.exclude = {};
  options.strategies = {SeedStrategy::Kind::Ivi};
  options.store_dir = fresh_dir("crash");
  options.workers = 1;
  options.validate = false;

  const CampaignSummary summary = run_campaign(reg, options);
  CHECK(summary.jobs_total == 2);
  CHECK(summary.jobs_failed == 1);
  CHECK(summary.worker_respawns >= 1);

  const auto cov =
      ResultsStore::read_stream(options.store_dir / "coverage.jsonl");
  REQUIRE(cov.size() == 2);
  bool benign_ok = false;
  bool crash_reported = false;
  for (const auto& c : cov) {
    if (c.at("target") == "corpus/string_reverse") {
      benign_ok = c.at("covered").get<bool>();
    } else {
      CHECK(c.at("target") == "trap/abort");
      CHECK(c.at("covered") == false);
      const std::string note = c.at("note").get<std::string>();
      crash_reported = note.find("crashed twice") != std::string::npos;
      CHECK(c.at("attempts") == 2);
    }
  }
  CHECK(benign_ok);
  CHECK(crash_reported);
  std::filesystem::remove_all(options.store_dir);
}

TEST_CASE("a poisoned worker is retired and its job requeued at no cost") {
  TargetRegistry reg;
  register_corpus(reg);
  // Sorts before corpus/*, so it runs first and sabotages the probe that
  // guards the next job on the same worker.
  reg.add({"a_trap/starve_fds",
           {"a_trap/starve_fds", {}},
           [](CallContext&, const std::vector<ValuePtr>&) -> ValuePtr {
             rlimit lim{};
             getrlimit(RLIMIT_NOFILE, &lim);
             lim.rlim_cur = 0;
             setrlimit(RLIMIT_NOFILE, &lim);
             return Value::null();
           },
           "drops the open-file limit to zero"});

  CampaignOptions options;
  options.config = tiny_config();
  options.include = {"a_trap/starve_fds", "corpus/string_reverse"};
  options.exclude = {};
  options.strategies = {SeedStrategy::Kind::Ivi};
  options.store_dir = fresh_dir("poison");
  options.workers = 1;
  options.validate = false;

  const CampaignSummary summary = run_campaign(reg, options);
  CHECK(summary.jobs_total == 2);
  CHECK(summary.jobs_failed == 0);
  CHECK(summary.worker_respawns >= 1);

  const auto cov =
      ResultsStore::read_stream(options.store_dir / "coverage.jsonl");
  REQUIRE(cov.size() == 2);
  for (const auto& c : cov) {
    CHECK(c.at("covered") == true);
    if (c.at("target") == "corpus/string_reverse")
      CHECK(c.at("attempts") == 2);  // first dispatch hit the poisoned probe
  }
  std::filesystem::remove_all(options.store_dir);
}

TEST_CASE("campaign options are validated before any work starts") {
  CampaignOptions options;
  options.config = tiny_config();
  options.store_dir = fresh_dir("opts");

  SUBCASE("fake clocks only reach inline jobs") {
    FakeCycleSource cycles(0, 1);
    options.env.cycles = &cycles;
    options.workers = 1;
    CHECK_THROWS_AS(run_campaign(corpus(), options), ConfigError);
  }
  SUBCASE("no matching targets") {
    options.workers = 0;
    options.include = {"no/such/target"};
    CHECK_THROWS_AS(run_campaign(corpus(), options), ConfigError);
  }
  SUBCASE("no strategies") {
    options.workers = 0;
    options.strategies.clear();
    CHECK_THROWS_AS(run_campaign(corpus(), options), ConfigError);
  }
  SUBCASE("no store directory") {
    options.workers = 0;
    options.store_dir.clear();
    CHECK_THROWS_AS(run_campaign(corpus(), options), ConfigError);
  }
  std::filesystem::remove_all(fresh_dir("opts"));
}

TEST_CASE("profile environment override rewrites the config file profile") {
  nlohmann::json file = {{"profile", "desk"}, {"gamma", 42.0}};
  unsetenv("MICROFUZZ_PROFILE");
  CampaignConfig base = load_campaign_config(file);
  CHECK(base.omega == 0.1);
  CHECK(base.gamma == 42.0);

  setenv("MICROFUZZ_PROFILE", "full", 1);
  CampaignConfig overridden = load_campaign_config(file);
  CHECK(overridden.omega == 10.0);   // profile swapped by the environment
  CHECK(overridden.gamma == 42.0);   // explicit fields still win
  unsetenv("MICROFUZZ_PROFILE");

  setenv("MICROFUZZ_PROFILE", "bogus", 1);
  CHECK_THROWS_AS(load_campaign_config(file), ConfigError);
  unsetenv("MICROFUZZ_PROFILE");
}

TEST_CASE("reports render from an empty store") {
  const auto store = fresh_dir("emptystore");
  const auto out = fresh_dir("emptyreport");
  write_report(store, ReportFormat::Csv, out);
  CHECK(slurp(out / "summary.csv") ==
        "strategy,witnesses_detected,witnesses_confirmed,methods_covered,"
        "fuzzing_hours,tests_per_hour\n");
  write_report(store, ReportFormat::Text, out);
  CHECK(slurp(out / "witness_digest.txt") == "no witnesses recorded\n");
  std::filesystem::remove_all(store);
  std::filesystem::remove_all(out);
}

TEST_CASE("checked-in registry manifest matches the built registry") {
  const auto repo_root =
      std::filesystem::path(__FILE__).parent_path().parent_path();
  const nlohmann::json checked_in =
      nlohmann::json::parse(slurp(repo_root / "data" / "corpus_registry.json"));
  CHECK(checked_in == corpus().manifest());
}

TEST_CASE("command line exposes the pipeline with documented exit codes") {
  const std::string bin = cli_bin();

  CmdResult enumerate = run_cmd(bin + " enumerate");
  CHECK(enumerate.exit_code == 0);
  std::vector<std::string> ids;
  std::istringstream lines(enumerate.out);
  for (std::string line; std::getline(lines, line);) ids.push_back(line);
  CHECK(ids == enumerate_targets(corpus(), {}, kDefaultExcludes));

  CHECK(run_cmd(bin + " report --store /tmp --format yaml").exit_code == 1);
  CHECK(run_cmd(bin + " fuzz").exit_code == 1);  // --store is required

  const auto dir = fresh_dir("cli");
  const auto bad_cfg = dir / "bad.json";
  std::ofstream(bad_cfg) << R"({"profile":"desk","sigma":5.0})";  // > omega
  CmdResult bad = run_cmd(bin + " fuzz --config " + bad_cfg.string() +
                          " --store " + (dir / "s").string());
  CHECK(bad.exit_code == 2);

  const auto good_cfg = dir / "good.json";
  std::ofstream(good_cfg)
      << R"({"profile":"desk","gamma":5,"clock_hz":2.5e9,)"
      << R"("ga":{"pi":4,"nu":2}})";
  CmdResult both = run_cmd(bin + " fuzz --config " + good_cfg.string() +
                           " --profile desk --store " + (dir / "s").string());
  CHECK(both.exit_code == 2);  // --config and --profile are exclusive

  CmdResult fuzz = run_cmd(bin + " fuzz --config " + good_cfg.string() +
                           " --strategy ivi --workers 0 --no-validate" +
                           " --include corpus/vector_sum --store " +
                           (dir / "store").string());
  CHECK(fuzz.exit_code == 0);
  const nlohmann::json summary = nlohmann::json::parse(fuzz.out);
  CHECK(summary.at("jobs_total") == 1);
  CHECK(summary.at("jobs_failed") == 0);

  CmdResult report = run_cmd(bin + " report --store " +
                             (dir / "store").string() + " --format csv" +
                             " --out " + (dir / "report").string());
  CHECK(report.exit_code == 0);
  CHECK(report.out.find("summary.csv") != std::string::npos);
  CHECK(slurp(dir / "report" / "summary.csv").find("ivi,0,0,1,") !=
        std::string::npos);

  std::filesystem::remove_all(dir);
}
