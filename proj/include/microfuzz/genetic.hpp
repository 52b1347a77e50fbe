#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "microfuzz/seedgen.hpp"
#include "microfuzz/value.hpp"

namespace microfuzz {

// Genetic parameters. pi: population size, chi: crossover probability,
// tau: mutation probability, epsilon: elite fraction, nu: generation count.
struct GAParams {
  int pi = 100;
  double chi = 0.5;
  double tau = 0.01;
  double epsilon = 0.5;
  int nu = 100;

  nlohmann::json to_json() const;
  static GAParams from_json(const nlohmann::json& j);
  void validate() const;
};

// Synthesizes a fresh element value for array insert/replace mutations.
// May throw InstantiationError, in which case the operator is skipped.
using ElementSynth =
    std::function<ValuePtr(const TypeDescriptor&, RngStream&)>;

// One-point crossover. Numbers, bools, and chars exchange a bit suffix of
// the fixed-width pattern at an offset drawn from [0, width]; strings and
// arrays exchange suffixes at an index drawn from [0, min(len0, len1)];
// objects with the same constructor recurse per attribute (left offspring
// takes left results). Null paired with anything, and objects built by
// different constructors, pass through unchanged.
std::pair<ValuePtr, ValuePtr> crossover_value(const Value& x0,
                                              const Value& x1,
                                              RngStream& rng);

// Single mutation step. Numbers, bools, and chars flip one random bit of
// their pattern; strings and arrays apply one of insert/delete/replace/swap
// drawn uniformly among the applicable operators; objects pick one non-Null
// attribute uniformly and recurse. If no operator applies, returns x
// unchanged. Code points are folded back into the valid range after a flip.
ValuePtr mutate_value(const Value& x, RngStream& rng,
                      const DescriptorRegistry& reg,
                      const ElementSynth& synth = {});

// Argument-tuple variants. The tuple is treated as an object whose
// attributes are the arguments.
std::pair<Individual, Individual> crossover_individual(const Individual& a,
                                                       const Individual& b,
                                                       RngStream& rng);
Individual mutate_individual(const Individual& ind, RngStream& rng,
                             const DescriptorRegistry& reg,
                             const ElementSynth& synth = {});

// Draws a parent index with probability proportional to fitness; falls back
// to a uniform draw when every fitness is zero. All individuals must be
// measured.
size_t draw_parent_index(const std::vector<Individual>& pop, RngStream& rng);

// Produces the next generation: the top ceil(epsilon*pi) individuals by
// fitness are carried over with their cached fitness, and the remaining
// slots are filled from fitness-proportional parent pairs, crossed with
// probability chi and mutated with probability tau. Output size is exactly
// pi; non-elite offspring have unset fitness. Requires a fully measured
// population of at least two individuals.
std::vector<Individual> next_generation(const std::vector<Individual>& pop,
                                        const GAParams& params,
                                        RngStream& rng,
                                        const DescriptorRegistry& reg,
                                        const ElementSynth& synth = {});

struct EvolveCallbacks {
  // Measures one individual and returns its fitness, or nullopt to discard
  // it from the breeding pool (e.g. the call threw).
  std::function<std::optional<uint64_t>(Individual&)> evaluate;
  // Polled between measurements; true stops the loop (budget exhausted or a
  // witness fired).
  std::function<bool()> stop;
  // Called with the generation index (0 for the seed population) before
  // that generation is measured.
  std::function<void(int)> generation_start;
};

// Runs the generational loop: measures the seed population, then applies
// next_generation and measures the offspring, for at most params.nu
// rounds or until stop() reports true or the measured pool collapses below
// two individuals. Returns the last measured pool.
std::vector<Individual> run_generations(std::vector<Individual> pop,
                                        const GAParams& params,
                                        RngStream& rng,
                                        const DescriptorRegistry& reg,
                                        const ElementSynth& synth,
                                        const EvolveCallbacks& cb);

}  // namespace microfuzz
