#include "microfuzz/engine.hpp"

#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <thread>

#include "microfuzz/errors.hpp"

namespace microfuzz {

namespace {

constexpr double kFullPsi = 5.0, kFullLambda = 5.0, kFullOmega = 10.0,
                 kFullGamma = 60.0, kFullSigma = 5.0;

std::string_view pinning_name(CampaignConfig::Pinning p) {
  switch (p) {
    case CampaignConfig::Pinning::Auto:
      return "auto";
    case CampaignConfig::Pinning::Required:
      return "required";
    case CampaignConfig::Pinning::Off:
      return "off";
  }
  return "?";
}

CampaignConfig::Pinning pinning_from_name(const std::string& s) {
  if (s == "auto") return CampaignConfig::Pinning::Auto;
  if (s == "required") return CampaignConfig::Pinning::Required;
  if (s == "off") return CampaignConfig::Pinning::Off;
  throw ConfigError("campaign config: unknown pinning mode: " + s);
}

uint64_t seconds_to_ns(double s) {
  if (s <= 0) return 0;
  return static_cast<uint64_t>(s * 1e9);
}

}  // namespace

CampaignConfig CampaignConfig::profile(const std::string& name) {
  CampaignConfig c;
  if (name == "full") return c;
  if (name == "desk") {
    c.psi = 1.0;
    c.lambda = 1.0;
    c.omega = 0.1;
    c.gamma = 10.0;
    c.sigma = 0.05;
    return c;
  }
  throw ConfigError("campaign config: unknown profile: " + name);
}

void CampaignConfig::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0))
      throw ConfigError(std::string("campaign config: ") + what +
                        " must be positive");
  };
  positive(psi, "psi");
  positive(lambda, "lambda");
  positive(omega, "omega");
  positive(gamma, "gamma");
  positive(sigma, "sigma");
  if (sigma > omega)
    throw ConfigError("campaign config: sigma must not exceed omega");
  if (clock_hz < 0.0)
    throw ConfigError("campaign config: clock_hz must not be negative");
  if (strategy.alpha < 0.0)
    throw ConfigError("campaign config: alpha must not be negative");
  ga.validate();
}

nlohmann::json CampaignConfig::to_json() const {
  return {{"strategy", strategy.to_json()},
          {"psi", psi},
          {"lambda", lambda},
          {"omega", omega},
          {"gamma", gamma},
          {"ga", ga.to_json()},
          {"sigma", sigma},
          {"clock_hz", clock_hz},
          {"pinning", std::string(pinning_name(pinning))}};
}

CampaignConfig CampaignConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object())
    throw ConfigError("campaign config must be a JSON object");
  std::string prof = "full";
  if (j.contains("profile")) {
    if (!j.at("profile").is_string())
      throw ConfigError("campaign config: profile must be a string");
    prof = j.at("profile").get<std::string>();
  }
  CampaignConfig c = prof == "custom" ? CampaignConfig{} : profile(prof);
  auto num = [&](const char* key, double& out) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_number())
      throw ConfigError(std::string("campaign config: ") + key +
                        " must be a number");
    out = j.at(key).get<double>();
  };
  num("psi", c.psi);
  num("lambda", c.lambda);
  num("omega", c.omega);
  num("gamma", c.gamma);
  num("sigma", c.sigma);
  num("clock_hz", c.clock_hz);
  if (j.contains("strategy")) c.strategy = SeedStrategy::from_json(j.at("strategy"));
  if (j.contains("ga")) c.ga = GAParams::from_json(j.at("ga"));
  if (j.contains("pinning")) {
    if (!j.at("pinning").is_string())
      throw ConfigError("campaign config: pinning must be a string");
    c.pinning = pinning_from_name(j.at("pinning").get<std::string>());
  }
  c.validate();
  return c;
}

nlohmann::json TestCaseRecord::to_json() const {
  return {{"target", target},
          {"args", args},
          {"outcome", outcome.to_json()},
          {"generation", generation},
          {"timestamp_ns", timestamp_ns}};
}

TestCaseRecord TestCaseRecord::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("target") || !j.contains("args") ||
      !j.contains("outcome") || !j.contains("generation") ||
      !j.contains("timestamp_ns"))
    throw DecodeError("test case record: missing fields");
  TestCaseRecord tc;
  tc.target = j.at("target").get<std::string>();
  if (!j.at("args").is_array())
    throw DecodeError("test case record: args must be an array");
  tc.args = j.at("args").get<std::vector<nlohmann::json>>();
  tc.outcome = Outcome::from_json(j.at("outcome"));
  tc.generation = j.at("generation").get<int>();
  tc.timestamp_ns = j.at("timestamp_ns").get<uint64_t>();
  return tc;
}

nlohmann::json WitnessCandidate::to_json() const {
  return {{"target", target},
          {"args", args},
          {"outcome", outcome.to_json()},
          {"runtime_seconds", runtime_seconds},
          {"generation", generation}};
}

WitnessCandidate WitnessCandidate::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("target") || !j.contains("args") ||
      !j.contains("outcome") || !j.contains("runtime_seconds") ||
      !j.contains("generation"))
    throw DecodeError("witness candidate: missing fields");
  WitnessCandidate w;
  w.target = j.at("target").get<std::string>();
  if (!j.at("args").is_array())
    throw DecodeError("witness candidate: args must be an array");
  w.args = j.at("args").get<std::vector<nlohmann::json>>();
  w.outcome = Outcome::from_json(j.at("outcome"));
  w.runtime_seconds = j.at("runtime_seconds").get<double>();
  w.generation = j.at("generation").get<int>();
  return w;
}

nlohmann::json FuzzReport::to_json() const {
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& tc : test_cases) cases.push_back(tc.to_json());
  nlohmann::json j{{"target", target},
                   {"strategy", strategy.to_json()},
                   {"covered", covered},
                   {"seed_population", seed_population},
                   {"generations", generations},
                   {"test_cases", std::move(cases)},
                   {"wall_seconds", wall_seconds},
                   {"clock_hz", clock_hz},
                   {"note", note}};
  j["witness"] = witness ? witness->to_json() : nlohmann::json();
  return j;
}

FuzzReport fuzz_method(const TargetRegistry& reg, const std::string& target_id,
                       const CampaignConfig& config, const EngineEnv& env) {
  config.validate();
  const TargetEntry& entry = reg.get(target_id);

  std::unique_ptr<TimeSource> owned_time;
  TimeSource* time = env.time;
  if (!time) {
    owned_time = make_real_time_source();
    time = owned_time.get();
  }

  FuzzReport rep;
  rep.target = target_id;
  rep.strategy = config.strategy;

  double clock_hz = config.clock_hz;
  if (clock_hz <= 0.0) {
    std::unique_ptr<CycleSource> owned_cycles;
    CycleSource* cs = env.cycles;
    if (!cs) {
      owned_cycles = default_cycle_source();
      cs = owned_cycles.get();
    }
    clock_hz = calibrate(*cs).cycles_per_second;
  }
  rep.clock_hz = clock_hz;

  const uint64_t start_ns = time->now_ns();
  const uint64_t psi_deadline = start_ns + seconds_to_ns(config.psi);
  const uint64_t gamma_deadline = start_ns + seconds_to_ns(config.gamma);
  auto finish = [&](std::string note) {
    rep.note = std::move(note);
    rep.covered = !rep.test_cases.empty();
    rep.wall_seconds =
        static_cast<double>(time->now_ns() - start_ns) * 1e-9;
    return rep;
  };

  bool unpinned_noted = false;
  auto make_ctx = [&] {
    auto ctx = std::make_unique<MeasureContext>(reg, env.cycles);
    ctx->set_method_under_test(target_id);
    if (config.pinning != CampaignConfig::Pinning::Off) {
      try {
        ctx->pin_cpu();
      } catch (const ConfigError&) {
        if (config.pinning == CampaignConfig::Pinning::Required) throw;
        unpinned_noted = true;
      }
    }
    return ctx;
  };
  auto ctx = make_ctx();

  int generation = 0;
  std::optional<WitnessCandidate>& witness = rep.witness;

  auto evaluate = [&](Individual& ind) -> std::optional<uint64_t> {
    Outcome o = ctx->measure_call(target_id, ind.args, config.lambda);
    TestCaseRecord tc;
    tc.target = target_id;
    tc.args.reserve(ind.args.size());
    for (const auto& a : ind.args) tc.args.push_back(value_to_json(*a));
    tc.outcome = o;
    tc.generation = generation;
    tc.timestamp_ns = time->now_ns();
    if (ctx->tainted()) ctx = make_ctx();

    std::optional<uint64_t> fitness;
    switch (o.kind) {
      case Outcome::Kind::Completed: {
        double seconds = cycles_to_seconds(o.cycles, clock_hz);
        if (seconds >= config.omega)
          witness = WitnessCandidate{target_id, tc.args, o, seconds, generation};
        fitness = o.cycles;
        break;
      }
      case Outcome::Kind::Threw:
        break;
      case Outcome::Kind::TimedOut:
        // Only a timeout at least as long as omega proves the threshold was
        // reached; a shorter one is unmeasurable and discarded.
        if (config.lambda >= config.omega)
          witness = WitnessCandidate{target_id, tc.args, o, o.lambda_seconds,
                                     generation};
        break;
    }
    rep.test_cases.push_back(std::move(tc));
    return fitness;
  };
  auto stop = [&] {
    return witness.has_value() || time->now_ns() >= gamma_deadline;
  };

  if (entry.sig.params.empty()) {
    Individual ind;
    if (auto f = evaluate(ind)) ind.fitness = *f;
    rep.seed_population = 1;
    return finish("nullary target, single invocation");
  }

  SeedGenerator gen(reg.types(), config.strategy);
  size_t attempts = 0;
  const size_t max_attempts =
      std::max<size_t>(static_cast<size_t>(config.ga.pi) * 10, 1000);
  auto seed_budget_expired = [&] {
    return time->now_ns() >= psi_deadline || ++attempts > max_attempts;
  };
  std::vector<Individual> pop = gen.population(
      entry.sig, static_cast<size_t>(config.ga.pi), seed_budget_expired);
  rep.seed_population = static_cast<int>(pop.size());
  if (pop.empty())
    return finish("no instantiable argument tuple within the seed budget");

  std::string note;
  if (pop.size() < static_cast<size_t>(config.ga.pi))
    note = "partial seed population; breeding population reduced to match";

  // The seed generation is measured here rather than inside the loop so the
  // breeding population size can be set to the surviving seed count.
  for (auto& ind : pop) {
    if (stop()) break;
    if (auto f = evaluate(ind)) ind.fitness = *f;
  }
  std::erase_if(pop,
                [](const Individual& i) { return !i.fitness.has_value(); });

  if (!stop() && pop.size() >= 2) {
    GAParams effective = config.ga;
    effective.pi = static_cast<int>(pop.size());
    RngStream ga_rng(derive_seed(config.strategy.seed, "ga"));
    ElementSynth synth;
    if (config.strategy.kind == SeedStrategy::Kind::Sri) {
      const SeedStrategy st = config.strategy;
      const DescriptorRegistry& types = reg.types();
      synth = [st, &types](const TypeDescriptor& t, RngStream& rng) {
        return sri(t, st, types, rng, rng);
      };
    }
    EvolveCallbacks cb;
    cb.evaluate = evaluate;
    cb.stop = stop;
    cb.generation_start = [&generation](int g) { generation = g; };
    pop = run_generations(std::move(pop), effective, ga_rng, reg.types(),
                          synth, cb);
  }
  rep.generations = generation;
  if (unpinned_noted) {
    if (!note.empty()) note += "; ";
    note += "measured unpinned (affinity mask too small to reserve a CPU)";
  }
  return finish(std::move(note));
}

std::string_view health_name(Health h) {
  return h == Health::Healthy ? "healthy" : "poisoned";
}

Health probe_environment() {
  try {
    std::vector<unsigned char> buf(1 << 20);
    for (size_t i = 0; i < buf.size(); i += 4096)
      buf[i] = static_cast<unsigned char>(i);
    if (buf[1 << 19] != static_cast<unsigned char>(1 << 19))
      return Health::Poisoned;

    std::atomic<bool> ran{false};
    std::thread scratch([&] { ran.store(true); });
    scratch.join();
    if (!ran.load()) return Health::Poisoned;

    auto real = make_real_time_source();
    uint64_t t0 = real->now_ns();
    uint64_t t1 = real->now_ns();
    if (t1 < t0) return Health::Poisoned;

    const char* tmpdir = std::getenv("TMPDIR");
    std::string templ = std::string(tmpdir && *tmpdir ? tmpdir : "/tmp") +
                        "/microfuzz-probe-XXXXXX";
    std::vector<char> path(templ.begin(), templ.end());
    path.push_back('\0');
    int fd = mkstemp(path.data());
    if (fd < 0) return Health::Poisoned;
    const char msg[] = "canary";
    bool ok = write(fd, msg, sizeof msg) == static_cast<ssize_t>(sizeof msg);
    ok = ok && lseek(fd, 0, SEEK_SET) == 0;
    char back[sizeof msg] = {};
    ok = ok && read(fd, back, sizeof back) == static_cast<ssize_t>(sizeof back);
    ok = ok && std::memcmp(msg, back, sizeof msg) == 0;
    close(fd);
    unlink(path.data());
    return ok ? Health::Healthy : Health::Poisoned;
  } catch (...) {
    return Health::Poisoned;
  }
}

}  // namespace microfuzz
