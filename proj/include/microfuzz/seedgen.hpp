#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>

#include "microfuzz/rng.hpp"
#include "microfuzz/value.hpp"

namespace microfuzz {

// Numeric sampling distribution for small-recursive instantiation.
// Uniform draws from [-alpha, alpha), Normal from N(0, alpha/3),
// UniformNonNeg from [0, alpha).
enum class Distribution : uint8_t { Uniform, Normal, UniformNonNeg };

std::string_view distribution_name(Distribution d);
std::optional<Distribution> distribution_from_name(std::string_view name);

struct SeedStrategy {
  enum class Kind : uint8_t { Ivi, Sri };

  Kind kind = Kind::Sri;
  double alpha = 256.0;
  Distribution dist = Distribution::Normal;
  int depth_cap = 4;
  uint64_t seed = 0;
  bool unicode = false;  // sample chars from all scalars instead of printable ASCII

  static SeedStrategy ivi(int depth_cap = 4, uint64_t seed = 0);
  static SeedStrategy sri(double alpha, Distribution dist = Distribution::Normal,
                          int depth_cap = 4, uint64_t seed = 0);

  nlohmann::json to_json() const;
  static SeedStrategy from_json(const nlohmann::json& j);  // ConfigError on bad fields
};

std::string_view strategy_name(SeedStrategy::Kind k);

struct Individual {
  std::vector<ValuePtr> args;
  std::optional<uint64_t> fitness;
};

// Minimum number of composite nesting levels needed to instantiate t.
// Primitives and arrays need 0 (arrays may be empty, nullable references may
// be Null); a composite needs 1 + the cheapest constructor. Composites with
// no terminating derivation report a value larger than any usable depth cap.
int min_depth(const TypeDescriptor& t, const DescriptorRegistry& reg);

constexpr int kUnboundedDepth = 1 << 20;

// Identity instantiation: zero for numerics, false, space, empty string and
// array; composites recurse with uniformly drawn constructors until the
// depth cap forces the Null or terminating branch.
ValuePtr ivi(const TypeDescriptor& t, int depth_cap, const DescriptorRegistry& reg,
             RngStream& ctor_rng);

// Small-recursive instantiation at strategy.alpha. Constructor choices come
// from ctor_rng, all value sampling from value_rng, so sri with alpha == 0
// reproduces ivi bit for bit under the same ctor_rng sequence.
ValuePtr sri(const TypeDescriptor& t, const SeedStrategy& strategy,
             const DescriptorRegistry& reg, RngStream& ctor_rng, RngStream& value_rng);

// Stateful wrapper holding the two derived streams for a campaign.
class SeedGenerator {
 public:
  SeedGenerator(const DescriptorRegistry& reg, SeedStrategy strategy);

  ValuePtr instantiate(const TypeDescriptor& t);
  Individual individual(const SignatureDescriptor& sig);

  // Builds up to `count` individuals, skipping instantiation failures.
  // `expired` (when provided) is consulted between attempts so a seed-phase
  // budget can cut construction short; without it attempts are capped.
  std::vector<Individual> population(const SignatureDescriptor& sig, size_t count,
                                     const std::function<bool()>& expired = {});

  const SeedStrategy& strategy() const { return strategy_; }

 private:
  const DescriptorRegistry& reg_;
  SeedStrategy strategy_;
  RngStream ctor_rng_;
  RngStream value_rng_;
};

}  // namespace microfuzz
