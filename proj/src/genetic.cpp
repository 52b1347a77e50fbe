#include "microfuzz/genetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "microfuzz/errors.hpp"

namespace microfuzz {

namespace {

constexpr int kCharBits = 21;

int pattern_width(const Value& v) {
  switch (v.kind) {
    case Value::Kind::Number:
      return numeric_bits(v.num);
    case Value::Kind::Bool:
      return 1;
    case Value::Kind::Char:
      return kCharBits;
    default:
      throw std::logic_error("pattern_width: not a primitive value");
  }
}

uint64_t pattern_bits(const Value& v) {
  switch (v.kind) {
    case Value::Kind::Number:
      return v.bits;
    case Value::Kind::Bool:
      return v.b ? 1 : 0;
    case Value::Kind::Char:
      return v.cp;
    default:
      throw std::logic_error("pattern_bits: not a primitive value");
  }
}

char32_t fold_code_point(uint64_t bits) {
  uint64_t cp = bits % 0x110000;
  if (cp >= 0xD800 && cp < 0xE000) cp %= 0xD800;
  return static_cast<char32_t>(cp);
}

ValuePtr rebuild_primitive(const Value& like, uint64_t bits) {
  switch (like.kind) {
    case Value::Kind::Number:
      return Value::number(like.num, bits);
    case Value::Kind::Bool:
      return Value::boolean(bits & 1);
    case Value::Kind::Char:
      return Value::character(fold_code_point(bits));
    default:
      throw std::logic_error("rebuild_primitive: not a primitive value");
  }
}

uint64_t low_mask(int k) {
  if (k <= 0) return 0;
  if (k >= 64) return ~0ull;
  return (1ull << k) - 1;
}

ValuePtr share(const Value& v) { return std::make_shared<Value>(v); }

bool is_primitive(const Value& v) {
  return v.kind == Value::Kind::Number || v.kind == Value::Kind::Bool ||
         v.kind == Value::Kind::Char;
}

ValuePtr flip_bit(const Value& v, RngStream& rng) {
  int w = pattern_width(v);
  uint64_t bit = 1ull << rng.below(static_cast<uint64_t>(w));
  return rebuild_primitive(v, pattern_bits(v) ^ bit);
}

char32_t random_pool_char(RngStream& rng) {
  return static_cast<char32_t>(0x20 + rng.below(0x5F));
}

enum class SeqOp { Insert, Delete, Replace, Swap };

std::vector<SeqOp> applicable_ops(size_t len, bool can_insert) {
  std::vector<SeqOp> ops;
  if (can_insert) ops.push_back(SeqOp::Insert);
  if (len >= 1) ops.push_back(SeqOp::Delete);
  if (len >= 1 && can_insert) ops.push_back(SeqOp::Replace);
  if (len >= 2) ops.push_back(SeqOp::Swap);
  return ops;
}

ValuePtr mutate_string(const Value& v, RngStream& rng) {
  std::u32string s = v.str;
  auto ops = applicable_ops(s.size(), true);
  SeqOp op = ops[rng.below(ops.size())];
  switch (op) {
    case SeqOp::Insert: {
      size_t pos = rng.below(s.size() + 1);
      s.insert(s.begin() + pos, random_pool_char(rng));
      break;
    }
    case SeqOp::Delete: {
      size_t pos = rng.below(s.size());
      s.erase(s.begin() + pos);
      break;
    }
    case SeqOp::Replace: {
      size_t pos = rng.below(s.size());
      s[pos] = random_pool_char(rng);
      break;
    }
    case SeqOp::Swap: {
      size_t i = rng.below(s.size());
      size_t j = rng.below(s.size() - 1);
      if (j >= i) ++j;
      std::swap(s[i], s[j]);
      break;
    }
  }
  return Value::str_(std::move(s));
}

ValuePtr mutate_array(const Value& v, RngStream& rng,
                      const ElementSynth& synth) {
  std::vector<ValuePtr> items = v.items;
  bool can_insert = true;
  while (true) {
    auto ops = applicable_ops(items.size(), can_insert);
    if (ops.empty()) return share(v);
    SeqOp op = ops[rng.below(ops.size())];
    if (op == SeqOp::Insert || op == SeqOp::Replace) {
      ValuePtr fresh;
      try {
        fresh = synth(*v.elem, rng);
      } catch (const InstantiationError&) {
        can_insert = false;
        continue;
      }
      if (op == SeqOp::Insert) {
        size_t pos = rng.below(items.size() + 1);
        items.insert(items.begin() + pos, std::move(fresh));
      } else {
        size_t pos = rng.below(items.size());
        items[pos] = std::move(fresh);
      }
    } else if (op == SeqOp::Delete) {
      size_t pos = rng.below(items.size());
      items.erase(items.begin() + pos);
    } else {
      size_t i = rng.below(items.size());
      size_t j = rng.below(items.size() - 1);
      if (j >= i) ++j;
      std::swap(items[i], items[j]);
    }
    return Value::arr(v.elem, std::move(items));
  }
}

ElementSynth resolve_synth(const ElementSynth& synth,
                           const DescriptorRegistry& reg) {
  if (synth) return synth;
  return [&reg](const TypeDescriptor& t, RngStream& rng) {
    return ivi(t, 4, reg, rng);
  };
}

void require_measured(const std::vector<Individual>& pop) {
  for (const auto& ind : pop)
    if (!ind.fitness.has_value())
      throw std::logic_error("next_generation: unmeasured individual");
}

}  // namespace

nlohmann::json GAParams::to_json() const {
  return {{"pi", pi}, {"chi", chi}, {"tau", tau},
          {"epsilon", epsilon}, {"nu", nu}};
}

GAParams GAParams::from_json(const nlohmann::json& j) {
  GAParams p;
  if (j.contains("pi")) p.pi = j.at("pi").get<int>();
  if (j.contains("chi")) p.chi = j.at("chi").get<double>();
  if (j.contains("tau")) p.tau = j.at("tau").get<double>();
  if (j.contains("epsilon")) p.epsilon = j.at("epsilon").get<double>();
  if (j.contains("nu")) p.nu = j.at("nu").get<int>();
  p.validate();
  return p;
}

void GAParams::validate() const {
  if (pi < 2) throw ConfigError("ga: pi must be at least 2");
  if (nu < 1) throw ConfigError("ga: nu must be at least 1");
  auto rate = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!rate(chi)) throw ConfigError("ga: chi must lie in [0, 1]");
  if (!rate(tau)) throw ConfigError("ga: tau must lie in [0, 1]");
  if (!rate(epsilon)) throw ConfigError("ga: epsilon must lie in [0, 1]");
}

std::pair<ValuePtr, ValuePtr> crossover_value(const Value& x0, const Value& x1,
                                              RngStream& rng) {
  if (x0.kind == Value::Kind::Null || x1.kind == Value::Kind::Null)
    return {share(x0), share(x1)};
  if (x0.kind != x1.kind)
    throw std::logic_error("crossover_value: mismatched value kinds");

  if (is_primitive(x0)) {
    if (x0.kind == Value::Kind::Number && x0.num != x1.num)
      throw std::logic_error("crossover_value: mismatched numeric kinds");
    int w = pattern_width(x0);
    uint64_t mask = low_mask(static_cast<int>(rng.below(w + 1)));
    uint64_t a = pattern_bits(x0), b = pattern_bits(x1);
    return {rebuild_primitive(x0, (a & ~mask) | (b & mask)),
            rebuild_primitive(x1, (b & ~mask) | (a & mask))};
  }

  switch (x0.kind) {
    case Value::Kind::Str: {
      const auto &a = x0.str, &b = x1.str;
      size_t k = rng.below(std::min(a.size(), b.size()) + 1);
      return {Value::str_(a.substr(0, k) + b.substr(k)),
              Value::str_(b.substr(0, k) + a.substr(k))};
    }
    case Value::Kind::Arr: {
      const auto &a = x0.items, &b = x1.items;
      size_t k = rng.below(std::min(a.size(), b.size()) + 1);
      std::vector<ValuePtr> c0(a.begin(), a.begin() + k);
      c0.insert(c0.end(), b.begin() + k, b.end());
      std::vector<ValuePtr> c1(b.begin(), b.begin() + k);
      c1.insert(c1.end(), a.begin() + k, a.end());
      return {Value::arr(x0.elem, std::move(c0)),
              Value::arr(x1.elem, std::move(c1))};
    }
    case Value::Kind::Obj: {
      if (x0.composite != x1.composite || x0.ctor != x1.ctor)
        return {share(x0), share(x1)};
      std::vector<ValuePtr> a0, a1;
      a0.reserve(x0.args.size());
      a1.reserve(x0.args.size());
      for (size_t i = 0; i < x0.args.size(); ++i) {
        auto [l, r] = crossover_value(*x0.args[i], *x1.args[i], rng);
        a0.push_back(std::move(l));
        a1.push_back(std::move(r));
      }
      return {Value::obj(x0.composite, x0.ctor, std::move(a0)),
              Value::obj(x1.composite, x1.ctor, std::move(a1))};
    }
    default:
      throw std::logic_error("crossover_value: unsupported value kind");
  }
}

ValuePtr mutate_value(const Value& x, RngStream& rng,
                      const DescriptorRegistry& reg,
                      const ElementSynth& synth) {
  switch (x.kind) {
    case Value::Kind::Null:
      return share(x);
    case Value::Kind::Number:
    case Value::Kind::Bool:
    case Value::Kind::Char:
      return flip_bit(x, rng);
    case Value::Kind::Str:
      return mutate_string(x, rng);
    case Value::Kind::Arr:
      return mutate_array(x, rng, resolve_synth(synth, reg));
    case Value::Kind::Obj: {
      std::vector<size_t> candidates;
      for (size_t i = 0; i < x.args.size(); ++i)
        if (x.args[i]->kind != Value::Kind::Null) candidates.push_back(i);
      if (candidates.empty()) return share(x);
      size_t pick = candidates[rng.below(candidates.size())];
      std::vector<ValuePtr> args = x.args;
      args[pick] = mutate_value(*args[pick], rng, reg, synth);
      return Value::obj(x.composite, x.ctor, std::move(args));
    }
  }
  throw std::logic_error("mutate_value: unsupported value kind");
}

std::pair<Individual, Individual> crossover_individual(const Individual& a,
                                                       const Individual& b,
                                                       RngStream& rng) {
  if (a.args.size() != b.args.size())
    throw std::logic_error("crossover_individual: arity mismatch");
  Individual c0, c1;
  c0.args.reserve(a.args.size());
  c1.args.reserve(a.args.size());
  for (size_t i = 0; i < a.args.size(); ++i) {
    auto [l, r] = crossover_value(*a.args[i], *b.args[i], rng);
    c0.args.push_back(std::move(l));
    c1.args.push_back(std::move(r));
  }
  return {std::move(c0), std::move(c1)};
}

Individual mutate_individual(const Individual& ind, RngStream& rng,
                             const DescriptorRegistry& reg,
                             const ElementSynth& synth) {
  Individual out;
  out.args = ind.args;
  std::vector<size_t> candidates;
  for (size_t i = 0; i < out.args.size(); ++i)
    if (out.args[i]->kind != Value::Kind::Null) candidates.push_back(i);
  if (candidates.empty()) return out;
  size_t pick = candidates[rng.below(candidates.size())];
  out.args[pick] = mutate_value(*out.args[pick], rng, reg, synth);
  return out;
}

size_t draw_parent_index(const std::vector<Individual>& pop, RngStream& rng) {
  require_measured(pop);
  double sum = 0.0;
  for (const auto& ind : pop) sum += static_cast<double>(*ind.fitness);
  if (sum <= 0.0) return rng.below(pop.size());
  double r = rng.unit() * sum;
  double acc = 0.0;
  size_t last_positive = 0;
  for (size_t i = 0; i < pop.size(); ++i) {
    uint64_t f = *pop[i].fitness;
    if (f > 0) last_positive = i;
    acc += static_cast<double>(f);
    if (r < acc) return i;
  }
  return last_positive;
}

std::vector<Individual> next_generation(const std::vector<Individual>& pop,
                                        const GAParams& params, RngStream& rng,
                                        const DescriptorRegistry& reg,
                                        const ElementSynth& synth) {
  params.validate();
  if (pop.size() < 2)
    throw std::logic_error("next_generation: population below two");
  require_measured(pop);

  std::vector<size_t> order(pop.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return *pop[a].fitness > *pop[b].fitness;
  });

  size_t target = static_cast<size_t>(params.pi);
  size_t elite_n = static_cast<size_t>(
      std::llround(std::ceil(params.epsilon * params.pi)));
  elite_n = std::min({elite_n, pop.size(), target});

  std::vector<Individual> out;
  out.reserve(target);
  for (size_t i = 0; i < elite_n; ++i) out.push_back(pop[order[i]]);

  while (out.size() < target) {
    const Individual& p0 = pop[draw_parent_index(pop, rng)];
    const Individual& p1 = pop[draw_parent_index(pop, rng)];
    Individual c0, c1;
    if (rng.unit() < params.chi) {
      std::tie(c0, c1) = crossover_individual(p0, p1, rng);
    } else {
      c0.args = p0.args;
      c1.args = p1.args;
    }
    for (Individual* child : {&c0, &c1}) {
      if (out.size() >= target) break;
      if (rng.unit() < params.tau)
        *child = mutate_individual(*child, rng, reg, synth);
      out.push_back(std::move(*child));
    }
  }
  return out;
}

std::vector<Individual> run_generations(std::vector<Individual> pop,
                                        const GAParams& params, RngStream& rng,
                                        const DescriptorRegistry& reg,
                                        const ElementSynth& synth,
                                        const EvolveCallbacks& cb) {
  params.validate();
  auto measure_all = [&](std::vector<Individual>& v) {
    for (auto& ind : v) {
      if (ind.fitness.has_value()) continue;
      if (cb.stop && cb.stop()) return true;
      if (auto f = cb.evaluate(ind)) ind.fitness = *f;
    }
    return false;
  };
  auto drop_unmeasured = [](std::vector<Individual>& v) {
    std::erase_if(v, [](const Individual& i) { return !i.fitness.has_value(); });
  };

  if (cb.generation_start) cb.generation_start(0);
  bool stopped = measure_all(pop);
  drop_unmeasured(pop);
  if (stopped) return pop;

  for (int round = 0; round < params.nu; ++round) {
    if (cb.stop && cb.stop()) break;
    if (pop.size() < 2) break;
    pop = next_generation(pop, params, rng, reg, synth);
    if (cb.generation_start) cb.generation_start(round + 1);
    stopped = measure_all(pop);
    drop_unmeasured(pop);
    if (stopped) break;
  }
  return pop;
}

}  // namespace microfuzz
