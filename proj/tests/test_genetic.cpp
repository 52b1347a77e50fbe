#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "microfuzz/genetic.hpp"

#include <algorithm>
#include <set>

#include "support.hpp"

using namespace microfuzz;

namespace {

DescriptorRegistry list_registry() {
  DescriptorRegistry reg;
  reg.define("List", TypeDescriptor::composite(
                         "List", {{TypeDescriptor::numeric(NumericKind::I64),
                                   TypeDescriptor::ref("List", true)}}));
  reg.define("Endless", TypeDescriptor::composite(
                            "Endless", {{TypeDescriptor::ref("Endless", false)}}));
  return reg;
}

ValuePtr u8(uint64_t bits) { return Value::number(NumericKind::U8, bits); }

// Independent model of the bit-suffix exchange used as the oracle.
std::pair<uint64_t, uint64_t> splice8(uint64_t a, uint64_t b, int k) {
  uint64_t mask = k == 0 ? 0 : ((1ull << k) - 1);
  return {(a & ~mask) | (b & mask), (b & ~mask) | (a & mask)};
}

Individual measured(std::vector<ValuePtr> args, uint64_t fitness) {
  Individual ind;
  ind.args = std::move(args);
  ind.fitness = fitness;
  return ind;
}

std::string dump_args(const Individual& ind) {
  std::string out;
  for (const auto& a : ind.args) out += serialize(*a) + "|";
  return out;
}

}  // namespace

TEST_CASE("u8 crossover matches the suffix exchange oracle at every offset") {
  const uint64_t a = 0xB4, b = 0x4B;
  std::set<std::pair<uint64_t, uint64_t>> expected;
  for (int k = 0; k <= 8; ++k) expected.insert(splice8(a, b, k));
  REQUIRE(expected.size() == 9);

  RngStream rng(1);
  std::set<std::pair<uint64_t, uint64_t>> seen;
  for (int i = 0; i < 2000; ++i) {
    auto [c0, c1] = crossover_value(*u8(a), *u8(b), rng);
    REQUIRE(c0->num == NumericKind::U8);
    std::pair<uint64_t, uint64_t> got{c0->bits, c1->bits};
    REQUIRE(expected.count(got) == 1);
    CHECK((c0->bits ^ c1->bits) == (a ^ b));
    CHECK((c0->bits & c1->bits) == (a & b));
    seen.insert(got);
  }
  CHECK(seen == expected);
}

TEST_CASE("crossover of complementary nibbles stays in the splice family") {
  RngStream rng(2);
  for (int i = 0; i < 500; ++i) {
    auto [c0, c1] = crossover_value(*u8(0x0F), *u8(0x00), rng);
    CHECK((c0->bits | c1->bits) == 0x0F);
    CHECK((c0->bits & c1->bits) == 0x00);
  }
}

TEST_CASE("string crossover exchanges suffixes at a shared index") {
  auto sa = Value::str_utf8("abcdef");
  auto sb = Value::str_utf8("XY");
  std::set<std::pair<std::string, std::string>> expected = {
      {"XY", "abcdef"}, {"aY", "Xbcdef"}, {"ab", "XYcdef"}};
  RngStream rng(3);
  std::set<std::pair<std::string, std::string>> seen;
  for (int i = 0; i < 600; ++i) {
    auto [c0, c1] = crossover_value(*sa, *sb, rng);
    std::pair<std::string, std::string> got{utf8_encode(c0->str),
                                            utf8_encode(c1->str)};
    REQUIRE(expected.count(got) == 1);
    seen.insert(got);
  }
  CHECK(seen == expected);
}

TEST_CASE("array crossover exchanges element suffixes") {
  auto et = TypeDescriptor::numeric(NumericKind::U8);
  auto va = Value::arr(et, {u8(1), u8(2), u8(3), u8(4)});
  auto vb = Value::arr(et, {u8(9), u8(8)});
  auto key = [](const Value& v) { return serialize(v); };
  std::set<std::pair<std::string, std::string>> expected = {
      {key(*Value::arr(et, {u8(9), u8(8)})),
       key(*Value::arr(et, {u8(1), u8(2), u8(3), u8(4)}))},
      {key(*Value::arr(et, {u8(1), u8(8)})),
       key(*Value::arr(et, {u8(9), u8(2), u8(3), u8(4)}))},
      {key(*Value::arr(et, {u8(1), u8(2)})),
       key(*Value::arr(et, {u8(9), u8(8), u8(3), u8(4)}))}};
  RngStream rng(4);
  std::set<std::pair<std::string, std::string>> seen;
  for (int i = 0; i < 600; ++i) {
    auto [c0, c1] = crossover_value(*va, *vb, rng);
    std::pair<std::string, std::string> got{key(*c0), key(*c1)};
    REQUIRE(expected.count(got) == 1);
    seen.insert(got);
  }
  CHECK(seen == expected);
}

TEST_CASE("object crossover recurses per attribute and mirrors offspring") {
  auto reg = list_registry();
  auto xa = Value::obj("List", 0, {Value::number_int(NumericKind::I64, 0x0F),
                                   Value::null()});
  auto xb = Value::obj("List", 0, {Value::number_int(NumericKind::I64, 0x00),
                                   Value::null()});
  RngStream rng(5);
  for (int i = 0; i < 300; ++i) {
    auto [c0, c1] = crossover_value(*xa, *xb, rng);
    REQUIRE(c0->kind == Value::Kind::Obj);
    CHECK(c0->ctor == 0);
    CHECK((c0->args[0]->bits | c1->args[0]->bits) == 0x0F);
    CHECK((c0->args[0]->bits & c1->args[0]->bits) == 0x00);
    CHECK(c0->args[1]->kind == Value::Kind::Null);
    CHECK(c1->args[1]->kind == Value::Kind::Null);
    CHECK(conforms(*c0, *reg.find("List"), reg));
  }
}

TEST_CASE("null and mixed-constructor pairs pass through unchanged") {
  auto reg = list_registry();
  DescriptorRegistry reg2;
  reg2.define("Pair", TypeDescriptor::composite(
                          "Pair", {{TypeDescriptor::numeric(NumericKind::I32)},
                                   {TypeDescriptor::string_()}}));
  auto list = Value::obj("List", 0, {Value::number_int(NumericKind::I64, 7),
                                     Value::null()});
  RngStream rng(6);
  auto [n0, n1] = crossover_value(*Value::null(), *list, rng);
  CHECK(n0->kind == Value::Kind::Null);
  CHECK(*n1 == *list);

  auto pa = Value::obj("Pair", 0, {Value::number_int(NumericKind::I32, 3)});
  auto pb = Value::obj("Pair", 1, {Value::str_utf8("hi")});
  auto [c0, c1] = crossover_value(*pa, *pb, rng);
  CHECK(*c0 == *pa);
  CHECK(*c1 == *pb);
}

TEST_CASE("crossover of identical parents is the identity pair") {
  DescriptorRegistry reg;
  testsupport::RandomDescriptorGen dgen(reg, 17);
  testsupport::RandomValueGen vgen(reg, 18);
  RngStream rng(19);
  for (int i = 0; i < 300; ++i) {
    auto t = dgen.generate();
    auto v = vgen.generate(*t);
    auto [c0, c1] = crossover_value(*v, *v, rng);
    CHECK(*c0 == *v);
    CHECK(*c1 == *v);
  }
}

TEST_CASE("u8 zero has exactly the eight single-bit mutants") {
  DescriptorRegistry reg;
  std::set<uint64_t> expected;
  for (int b = 0; b < 8; ++b) expected.insert(1ull << b);
  RngStream rng(7);
  std::set<uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    auto m = mutate_value(*u8(0), rng, reg);
    REQUIRE(expected.count(m->bits) == 1);
    seen.insert(m->bits);
  }
  CHECK(seen == expected);
}

TEST_CASE("list mutants flip exactly one head bit") {
  auto reg = list_registry();
  auto x = Value::obj("List", 0, {Value::number_int(NumericKind::I64, 3),
                                  Value::null()});
  std::set<uint64_t> expected;
  for (int b = 0; b < 64; ++b) expected.insert(3ull ^ (1ull << b));
  RngStream rng(8);
  std::set<uint64_t> seen;
  for (int i = 0; i < 5000; ++i) {
    auto m = mutate_value(*x, rng, reg);
    REQUIRE(m->kind == Value::Kind::Obj);
    REQUIRE(m->args[1]->kind == Value::Kind::Null);
    REQUIRE(expected.count(m->args[0]->bits) == 1);
    seen.insert(m->args[0]->bits);
  }
  CHECK(seen.size() > 50);
}

TEST_CASE("string mutants stay within the single-edit set") {
  DescriptorRegistry reg;
  std::set<std::u32string> expected;
  const std::u32string base = U"ab";
  for (size_t pos = 0; pos <= 2; ++pos)
    for (char32_t c = 0x20; c < 0x7F; ++c) {
      std::u32string s = base;
      s.insert(s.begin() + pos, c);
      expected.insert(s);
    }
  expected.insert(U"a");
  expected.insert(U"b");
  for (size_t pos = 0; pos < 2; ++pos)
    for (char32_t c = 0x20; c < 0x7F; ++c) {
      std::u32string s = base;
      s[pos] = c;
      expected.insert(s);
    }
  expected.insert(U"ba");

  RngStream rng(9);
  bool saw_swap = false;
  for (int i = 0; i < 3000; ++i) {
    auto m = mutate_value(*Value::str_(base), rng, reg);
    REQUIRE(expected.count(m->str) == 1);
    if (m->str == U"ba") saw_swap = true;
  }
  CHECK(saw_swap);
}

TEST_CASE("empty strings can only grow by one pool character") {
  DescriptorRegistry reg;
  RngStream rng(10);
  for (int i = 0; i < 500; ++i) {
    auto m = mutate_value(*Value::str_utf8(""), rng, reg);
    REQUIRE(m->str.size() == 1);
    CHECK(m->str[0] >= 0x20);
    CHECK(m->str[0] < 0x7F);
  }
}

TEST_CASE("arrays without a synthesizable element fall back to no-op") {
  auto reg = list_registry();
  auto empty = Value::arr(reg.find("Endless"), {});
  RngStream rng(11);
  auto m = mutate_value(*empty, rng, reg);
  CHECK(*m == *empty);
}

TEST_CASE("mutation and crossover preserve conformance") {
  DescriptorRegistry reg;
  testsupport::RandomDescriptorGen dgen(reg, 21);
  testsupport::RandomValueGen vgen(reg, 22);
  RngStream rng(23);
  int trials = 0;
  for (int d = 0; d < 60; ++d) {
    auto t = dgen.generate();
    for (int i = 0; i < 40; ++i) {
      auto v0 = vgen.generate(*t);
      auto v1 = vgen.generate(*t);
      auto m = mutate_value(*v0, rng, reg);
      CHECK(conforms(*m, *t, reg));
      auto [c0, c1] = crossover_value(*v0, *v1, rng);
      CHECK(conforms(*c0, *t, reg));
      CHECK(conforms(*c1, *t, reg));
      ++trials;
    }
  }
  CHECK(trials == 2400);
}

TEST_CASE("code points remain valid under flips and splices") {
  DescriptorRegistry reg;
  auto ct = TypeDescriptor::character();
  RngStream rng(24);
  std::vector<char32_t> edges = {0x0,    0x20,   0xD7FF,  0xE000,
                                 0xFFFD, 0x10000, 0x10FFFF};
  for (char32_t a : edges)
    for (char32_t b : edges) {
      for (int i = 0; i < 50; ++i) {
        auto [c0, c1] =
            crossover_value(*Value::character(a), *Value::character(b), rng);
        CHECK(conforms(*c0, *ct, reg));
        CHECK(conforms(*c1, *ct, reg));
        auto m = mutate_value(*Value::character(a), rng, reg);
        CHECK(conforms(*m, *ct, reg));
      }
    }
}

TEST_CASE("parent draws are fitness proportional") {
  auto reg = list_registry();
  std::vector<Individual> pop;
  pop.push_back(measured({Value::number_int(NumericKind::I32, 1)}, 100));
  pop.push_back(measured({Value::number_int(NumericKind::I32, 2)}, 0));
  RngStream rng(25);
  for (int i = 0; i < 10000; ++i) CHECK(draw_parent_index(pop, rng) == 0);

  std::vector<Individual> flat;
  flat.push_back(measured({Value::number_int(NumericKind::I32, 1)}, 0));
  flat.push_back(measured({Value::number_int(NumericKind::I32, 2)}, 0));
  int first = 0;
  for (int i = 0; i < 10000; ++i)
    if (draw_parent_index(flat, rng) == 0) ++first;
  CHECK(first > 4000);
  CHECK(first < 6000);
}

TEST_CASE("two-individual elitism keeps exactly the best verbatim") {
  auto reg = list_registry();
  GAParams p;
  p.pi = 2;
  p.epsilon = 0.5;
  p.chi = 0.5;
  p.tau = 0.01;
  std::vector<Individual> pop;
  pop.push_back(measured({u8(7)}, 5));
  pop.push_back(measured({u8(9)}, 10));
  RngStream rng(26);
  auto next = next_generation(pop, p, rng, reg);
  REQUIRE(next.size() == 2);
  CHECK(*next[0].args[0] == *u8(9));
  REQUIRE(next[0].fitness.has_value());
  CHECK(*next[0].fitness == 10);
  CHECK(!next[1].fitness.has_value());
}

TEST_CASE("zero rates produce elites plus parent clones") {
  auto reg = list_registry();
  GAParams p;
  p.pi = 5;
  p.epsilon = 0.5;
  p.chi = 0.0;
  p.tau = 0.0;
  std::vector<Individual> pop;
  pop.push_back(measured({u8(1)}, 10));
  pop.push_back(measured({u8(2)}, 20));
  pop.push_back(measured({u8(3)}, 30));
  std::set<std::string> parents;
  for (const auto& ind : pop) parents.insert(dump_args(ind));
  RngStream rng(27);
  auto next = next_generation(pop, p, rng, reg);
  REQUIRE(next.size() == 5);
  CHECK(*next[0].fitness == 30);
  CHECK(*next[1].fitness == 20);
  CHECK(*next[2].fitness == 10);
  for (size_t i = 3; i < 5; ++i) {
    CHECK(!next[i].fitness.has_value());
    CHECK(parents.count(dump_args(next[i])) == 1);
  }
}

TEST_CASE("generation size is exactly pi") {
  auto reg = list_registry();
  std::vector<Individual> pop;
  for (int i = 0; i < 4; ++i) pop.push_back(measured({u8(i)}, 10 + i));
  for (int pi : {2, 5, 100}) {
    GAParams p;
    p.pi = pi;
    RngStream rng(28 + pi);
    CHECK(next_generation(pop, p, rng, reg).size() == static_cast<size_t>(pi));
  }
}

TEST_CASE("max fitness never decreases while elites carry over") {
  auto reg = list_registry();
  GAParams p;
  p.pi = 20;
  p.epsilon = 0.25;
  p.chi = 0.7;
  p.tau = 0.3;
  // Deterministic synthetic fitness: popcount rewards set bits, so the GA
  // has an actual gradient to climb.
  auto score = [](const Individual& ind) {
    return static_cast<uint64_t>(std::popcount(ind.args[0]->bits));
  };
  RngStream seed_rng(29), ga_rng(30);
  std::vector<Individual> pop;
  for (int i = 0; i < 20; ++i)
    pop.push_back(measured({u8(seed_rng.next_u64())}, 0));
  for (auto& ind : pop) ind.fitness = score(ind);

  uint64_t best = 0;
  for (const auto& ind : pop) best = std::max(best, *ind.fitness);
  for (int round = 0; round < 15; ++round) {
    pop = next_generation(pop, p, ga_rng, reg);
    for (auto& ind : pop)
      if (!ind.fitness.has_value()) ind.fitness = score(ind);
    uint64_t now = 0;
    for (const auto& ind : pop) now = std::max(now, *ind.fitness);
    CHECK(now >= best);
    best = std::max(best, now);
  }
  CHECK(best == 8);
}

TEST_CASE("generational runs are reproducible from the rng seed") {
  auto reg = list_registry();
  GAParams p;
  p.pi = 10;
  p.nu = 6;
  p.tau = 0.2;
  auto transcript = [&](uint64_t seed) {
    RngStream rng(seed);
    std::vector<Individual> pop;
    for (int i = 0; i < 10; ++i) {
      Individual ind;
      ind.args = {u8(i * 7), Value::str_utf8("seed")};
      pop.push_back(std::move(ind));
    }
    std::string log;
    EvolveCallbacks cb;
    cb.evaluate = [&](Individual& ind) -> std::optional<uint64_t> {
      log += dump_args(ind) + "\n";
      uint64_t f = 0;
      for (const auto& a : ind.args) f += value_size(*a);
      f += ind.args[0]->bits;
      return f;
    };
    cb.stop = [] { return false; };
    run_generations(pop, p, rng, reg, {}, cb);
    return log;
  };
  auto a = transcript(31);
  CHECK(a == transcript(31));
  CHECK(a != transcript(32));
  // 10 seed evaluations plus 6 rounds of 5 non-elite offspring.
  CHECK(std::count(a.begin(), a.end(), '\n') == 40);
}

TEST_CASE("stop signal and pool collapse end the loop cleanly") {
  auto reg = list_registry();
  GAParams p;
  p.pi = 4;
  p.nu = 100;
  RngStream rng(33);
  std::vector<Individual> pop;
  for (int i = 0; i < 4; ++i) {
    Individual ind;
    ind.args = {u8(i)};
    pop.push_back(std::move(ind));
  }

  EvolveCallbacks stop_now;
  stop_now.evaluate = [](Individual&) { return std::optional<uint64_t>(1); };
  stop_now.stop = [] { return true; };
  CHECK(run_generations(pop, p, rng, reg, {}, stop_now).empty());

  int calls = 0;
  EvolveCallbacks discard_all;
  discard_all.evaluate = [&](Individual&) {
    ++calls;
    return std::optional<uint64_t>();
  };
  discard_all.stop = [] { return false; };
  CHECK(run_generations(pop, p, rng, reg, {}, discard_all).empty());
  CHECK(calls == 4);

  int budget = 25;
  EvolveCallbacks bounded;
  bounded.evaluate = [](Individual&) { return std::optional<uint64_t>(1); };
  bounded.stop = [&] { return --budget < 0; };
  auto out = run_generations(pop, p, rng, reg, {}, bounded);
  CHECK(out.size() <= 4);
}

TEST_CASE("ga parameters round trip and validate") {
  GAParams p;
  p.pi = 50;
  p.chi = 0.25;
  p.tau = 0.05;
  p.epsilon = 0.1;
  p.nu = 7;
  auto back = GAParams::from_json(p.to_json());
  CHECK(back.pi == 50);
  CHECK(back.chi == 0.25);
  CHECK(back.tau == 0.05);
  CHECK(back.epsilon == 0.1);
  CHECK(back.nu == 7);

  auto defaults = GAParams::from_json(nlohmann::json::object());
  CHECK(defaults.pi == 100);
  CHECK(defaults.chi == 0.5);
  CHECK(defaults.tau == 0.01);
  CHECK(defaults.epsilon == 0.5);
  CHECK(defaults.nu == 100);

  CHECK_THROWS_AS(GAParams::from_json({{"pi", 1}}), ConfigError);
  CHECK_THROWS_AS(GAParams::from_json({{"chi", 1.5}}), ConfigError);
  CHECK_THROWS_AS(GAParams::from_json({{"tau", -0.1}}), ConfigError);
  CHECK_THROWS_AS(GAParams::from_json({{"nu", 0}}), ConfigError);
}
