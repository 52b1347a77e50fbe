#include "microfuzz/seedgen.hpp"

#include <cmath>
#include <cstring>
#include <map>
#include <set>

namespace microfuzz {

using nlohmann::json;

std::string_view distribution_name(Distribution d) {
  switch (d) {
    case Distribution::Uniform: return "uniform";
    case Distribution::Normal: return "normal";
    default: return "uniform_nonneg";
  }
}

std::optional<Distribution> distribution_from_name(std::string_view name) {
  if (name == "uniform") return Distribution::Uniform;
  if (name == "normal") return Distribution::Normal;
  if (name == "uniform_nonneg") return Distribution::UniformNonNeg;
  return std::nullopt;
}

std::string_view strategy_name(SeedStrategy::Kind k) {
  return k == SeedStrategy::Kind::Ivi ? "ivi" : "sri";
}

SeedStrategy SeedStrategy::ivi(int depth_cap, uint64_t seed) {
  SeedStrategy s;
  s.kind = Kind::Ivi;
  s.alpha = 0.0;
  s.depth_cap = depth_cap;
  s.seed = seed;
  return s;
}

SeedStrategy SeedStrategy::sri(double alpha, Distribution dist, int depth_cap,
                               uint64_t seed) {
  SeedStrategy s;
  s.kind = Kind::Sri;
  s.alpha = alpha;
  s.dist = dist;
  s.depth_cap = depth_cap;
  s.seed = seed;
  return s;
}

json SeedStrategy::to_json() const {
  json j;
  j["strategy"] = std::string(strategy_name(kind));
  j["alpha"] = alpha;
  j["distribution"] = std::string(distribution_name(dist));
  j["depth_cap"] = depth_cap;
  j["seed"] = seed;
  j["unicode"] = unicode;
  return j;
}

SeedStrategy SeedStrategy::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("seed strategy must be a JSON object");
  SeedStrategy s;
  if (j.contains("strategy")) {
    std::string name = j["strategy"].get<std::string>();
    if (name == "ivi")
      s.kind = Kind::Ivi;
    else if (name == "sri")
      s.kind = Kind::Sri;
    else
      throw ConfigError("unknown seed strategy '" + name + "'");
  }
  if (j.contains("alpha")) {
    if (!j["alpha"].is_number()) throw ConfigError("alpha must be a number");
    s.alpha = j["alpha"].get<double>();
    if (!(s.alpha >= 0.0)) throw ConfigError("alpha must be non-negative");
  }
  if (j.contains("distribution")) {
    auto d = distribution_from_name(j["distribution"].get<std::string>());
    if (!d) throw ConfigError("unknown distribution");
    s.dist = *d;
  }
  if (j.contains("depth_cap")) {
    if (!j["depth_cap"].is_number_integer()) throw ConfigError("depth_cap must be an integer");
    s.depth_cap = j["depth_cap"].get<int>();
    if (s.depth_cap < 1) throw ConfigError("depth_cap must be at least 1");
  }
  if (j.contains("seed")) s.seed = j["seed"].get<uint64_t>();
  if (j.contains("unicode")) s.unicode = j["unicode"].get<bool>();
  if (s.kind == Kind::Ivi) s.alpha = 0.0;
  return s;
}

namespace {

int min_depth_rec(const TypeDescriptor& t, const DescriptorRegistry& reg,
                  std::set<const TypeDescriptor*>& in_progress) {
  switch (t.kind) {
    case TypeDescriptor::Kind::Numeric:
    case TypeDescriptor::Kind::Boolean:
    case TypeDescriptor::Kind::Char:
    case TypeDescriptor::Kind::String:
    case TypeDescriptor::Kind::Array:
      return 0;
    case TypeDescriptor::Kind::Ref: {
      if (t.nullable) return 0;
      const TypeDescriptor& r = reg.resolve(t);
      return min_depth_rec(r, reg, in_progress);
    }
    case TypeDescriptor::Kind::Composite: {
      if (!in_progress.insert(&t).second) return kUnboundedDepth;
      int best = kUnboundedDepth;
      for (const auto& c : t.ctors) {
        int worst_param = 0;
        for (const auto& p : c) {
          // A nullable reference can always be Null, but taking the non-Null
          // branch is optional, so it does not constrain this constructor.
          int d = min_depth_rec(*p, reg, in_progress);
          worst_param = std::max(worst_param, d);
          if (worst_param >= kUnboundedDepth) break;
        }
        if (worst_param < kUnboundedDepth) best = std::min(best, 1 + worst_param);
      }
      in_progress.erase(&t);
      return best;
    }
  }
  return kUnboundedDepth;
}

// What a value sampler must provide; identity and alpha-scaled versions
// below. Constructor choices never go through the policy.
struct SamplePolicy {
  virtual ~SamplePolicy() = default;
  virtual uint64_t number_bits(NumericKind k) = 0;
  virtual bool boolean() = 0;
  virtual char32_t character() = 0;
  virtual size_t length() = 0;
};

struct IdentityPolicy final : SamplePolicy {
  uint64_t number_bits(NumericKind) override { return 0; }
  bool boolean() override { return false; }
  char32_t character() override { return U' '; }
  size_t length() override { return 0; }
};

uint64_t bits_from_double(NumericKind k, double x) {
  if (k == NumericKind::F64) {
    uint64_t b;
    std::memcpy(&b, &x, sizeof b);
    return b;
  }
  if (k == NumericKind::F32) {
    float f = static_cast<float>(x);
    uint32_t b;
    std::memcpy(&b, &f, sizeof b);
    return b;
  }
  if (std::isnan(x)) x = 0.0;
  int bits = numeric_bits(k);
  if (numeric_is_signed(k)) {
    // Clamp (not resample) into the kind's value range.
    double hi_d = std::ldexp(1.0, bits - 1);  // 2^(bits-1)
    int64_t hi = bits == 64 ? INT64_MAX : (int64_t{1} << (bits - 1)) - 1;
    int64_t lo = bits == 64 ? INT64_MIN : -(int64_t{1} << (bits - 1));
    int64_t v;
    if (x >= hi_d)
      v = hi;
    else if (x <= -hi_d)
      v = lo;
    else
      v = std::llround(x);
    if (v > hi) v = hi;
    if (v < lo) v = lo;
    return static_cast<uint64_t>(v) & numeric_mask(k);
  }
  double hi_d = std::ldexp(1.0, bits);  // 2^bits
  if (x <= 0.0) return 0;
  if (x >= hi_d) return numeric_mask(k);
  if (x >= std::ldexp(1.0, 63)) {
    // llround saturates below 2^63; shift into range manually.
    return static_cast<uint64_t>(std::llround(std::ldexp(x, -1))) << 1;
  }
  uint64_t v = static_cast<uint64_t>(std::llround(x));
  return v > numeric_mask(k) ? numeric_mask(k) : v;
}

struct AlphaPolicy final : SamplePolicy {
  AlphaPolicy(const SeedStrategy& s, RngStream& value_rng)
      : strategy(s), rng(value_rng) {}

  double sample() {
    switch (strategy.dist) {
      case Distribution::Uniform:
        return rng.uniform(-strategy.alpha, strategy.alpha);
      case Distribution::Normal:
        return rng.normal() * (strategy.alpha / 3.0);
      default:
        return rng.uniform(0.0, strategy.alpha);
    }
  }

  uint64_t number_bits(NumericKind k) override {
    if (strategy.alpha == 0.0) return bits_from_double(k, 0.0);
    return bits_from_double(k, sample());
  }

  bool boolean() override {
    // The distribution's sign (or midpoint for the non-negative range)
    // provides a fair coin for alpha > 0 and the identity at alpha == 0.
    if (strategy.alpha == 0.0) return false;
    double x = sample();
    if (strategy.dist == Distribution::UniformNonNeg) return x >= strategy.alpha / 2.0;
    return x > 0.0;
  }

  char32_t character() override {
    if (strategy.alpha == 0.0) return U' ';
    if (strategy.unicode) {
      // All Unicode scalars; skip the surrogate gap.
      uint64_t cp = rng.below(0x110000 - 0x800);
      if (cp >= 0xD800) cp += 0x800;
      return static_cast<char32_t>(cp);
    }
    return static_cast<char32_t>(0x20 + rng.below(0x7F - 0x20));
  }

  size_t length() override {
    double a = std::floor(strategy.alpha);
    if (a <= 0.0) return 0;
    if (a > 1e9) a = 1e9;
    return static_cast<size_t>(rng.below(static_cast<uint64_t>(a)));
  }

  const SeedStrategy& strategy;
  RngStream& rng;
};

ValuePtr instantiate_rec(const TypeDescriptor& t, int depth, int depth_cap,
                         const DescriptorRegistry& reg, RngStream& ctor_rng,
                         SamplePolicy& policy) {
  switch (t.kind) {
    case TypeDescriptor::Kind::Numeric:
      return Value::number(t.num, policy.number_bits(t.num));
    case TypeDescriptor::Kind::Boolean:
      return Value::boolean(policy.boolean());
    case TypeDescriptor::Kind::Char:
      return Value::character(policy.character());
    case TypeDescriptor::Kind::String: {
      size_t n = policy.length();
      std::u32string s;
      s.reserve(n);
      for (size_t i = 0; i < n; ++i) s.push_back(policy.character());
      return Value::str_(std::move(s));
    }
    case TypeDescriptor::Kind::Array: {
      std::vector<ValuePtr> items;
      if (min_depth(*t.element, reg) <= depth_cap - depth) {
        size_t n = policy.length();
        items.reserve(n);
        for (size_t i = 0; i < n; ++i)
          items.push_back(instantiate_rec(*t.element, depth, depth_cap, reg, ctor_rng, policy));
      }
      return Value::arr(t.element, std::move(items));
    }
    case TypeDescriptor::Kind::Ref: {
      const TypeDescriptor& r = reg.resolve(t);
      if (min_depth(r, reg) > depth_cap - depth) {
        if (t.nullable) return Value::null();
        throw InstantiationError("no terminating branch for '" + t.name +
                                 "' within the depth budget");
      }
      return instantiate_rec(r, depth, depth_cap, reg, ctor_rng, policy);
    }
    case TypeDescriptor::Kind::Composite: {
      int remaining = depth_cap - depth;
      // Constructors that can finish inside the remaining budget.
      std::vector<uint32_t> eligible;
      for (uint32_t i = 0; i < t.ctors.size(); ++i) {
        int worst = 0;
        for (const auto& p : t.ctors[i])
          worst = std::max(worst, min_depth(*p, reg));
        if (1 + worst <= remaining) eligible.push_back(i);
      }
      if (eligible.empty())
        throw InstantiationError("no terminating constructor for '" + t.name +
                                 "' within the depth budget");
      uint32_t pick = eligible[ctor_rng.below(eligible.size())];
      std::vector<ValuePtr> args;
      args.reserve(t.ctors[pick].size());
      for (const auto& p : t.ctors[pick])
        args.push_back(instantiate_rec(*p, depth + 1, depth_cap, reg, ctor_rng, policy));
      return Value::obj(t.name, pick, std::move(args));
    }
  }
  throw InstantiationError("unknown descriptor kind");
}

}  // namespace

int min_depth(const TypeDescriptor& t, const DescriptorRegistry& reg) {
  std::set<const TypeDescriptor*> in_progress;
  return min_depth_rec(t, reg, in_progress);
}

ValuePtr ivi(const TypeDescriptor& t, int depth_cap, const DescriptorRegistry& reg,
             RngStream& ctor_rng) {
  if (depth_cap < 1) throw ConfigError("depth_cap must be at least 1");
  IdentityPolicy policy;
  return instantiate_rec(t, 0, depth_cap, reg, ctor_rng, policy);
}

ValuePtr sri(const TypeDescriptor& t, const SeedStrategy& strategy,
             const DescriptorRegistry& reg, RngStream& ctor_rng, RngStream& value_rng) {
  if (strategy.depth_cap < 1) throw ConfigError("depth_cap must be at least 1");
  if (!(strategy.alpha >= 0.0)) throw ConfigError("alpha must be non-negative");
  AlphaPolicy policy(strategy, value_rng);
  return instantiate_rec(t, 0, strategy.depth_cap, reg, ctor_rng, policy);
}

SeedGenerator::SeedGenerator(const DescriptorRegistry& reg, SeedStrategy strategy)
    : reg_(reg),
      strategy_(strategy),
      ctor_rng_(derive_seed(strategy.seed, "ctor")),
      value_rng_(derive_seed(strategy.seed, "value")) {}

ValuePtr SeedGenerator::instantiate(const TypeDescriptor& t) {
  if (strategy_.kind == SeedStrategy::Kind::Ivi)
    return ivi(t, strategy_.depth_cap, reg_, ctor_rng_);
  return sri(t, strategy_, reg_, ctor_rng_, value_rng_);
}

Individual SeedGenerator::individual(const SignatureDescriptor& sig) {
  Individual ind;
  ind.args.reserve(sig.params.size());
  for (const auto& p : sig.params) ind.args.push_back(instantiate(*p));
  return ind;
}

std::vector<Individual> SeedGenerator::population(const SignatureDescriptor& sig,
                                                  size_t count,
                                                  const std::function<bool()>& expired) {
  std::vector<Individual> out;
  // Without a budget callback, retries are capped so impossible signatures
  // terminate; with one, the budget is authoritative.
  size_t attempts_left = expired ? SIZE_MAX : std::max<size_t>(count * 10, 1000);
  while (out.size() < count && attempts_left-- > 0) {
    if (expired && expired()) break;
    try {
      out.push_back(individual(sig));
    } catch (const InstantiationError&) {
      // Skipped; the budget bounds how long we keep trying.
    }
  }
  return out;
}

}  // namespace microfuzz
