#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "microfuzz/value.hpp"

#include "support.hpp"

using namespace microfuzz;

namespace {

DescriptorRegistry list_registry() {
  DescriptorRegistry reg;
  reg.define("List", TypeDescriptor::composite(
                         "List", {{TypeDescriptor::numeric(NumericKind::I64),
                                   TypeDescriptor::ref("List", true)}}));
  return reg;
}

}  // namespace

TEST_CASE("numeric kind helpers") {
  CHECK(numeric_bits(NumericKind::I8) == 8);
  CHECK(numeric_bits(NumericKind::U16) == 16);
  CHECK(numeric_bits(NumericKind::F32) == 32);
  CHECK(numeric_bits(NumericKind::F64) == 64);
  CHECK(numeric_mask(NumericKind::U8) == 0xFFu);
  CHECK(numeric_mask(NumericKind::U64) == ~uint64_t{0});
  CHECK(numeric_is_float(NumericKind::F32));
  CHECK(!numeric_is_float(NumericKind::I64));
  CHECK(numeric_from_name("i32") == NumericKind::I32);
  CHECK(!numeric_from_name("i33").has_value());
  for (auto k : {NumericKind::I8, NumericKind::I16, NumericKind::I32,
                 NumericKind::I64, NumericKind::U8, NumericKind::U16,
                 NumericKind::U32, NumericKind::U64, NumericKind::F32,
                 NumericKind::F64})
    CHECK(numeric_from_name(numeric_name(k)) == k);
}

TEST_CASE("number bit pattern accessors") {
  CHECK(Value::number_int(NumericKind::I8, -1)->bits == 0xFFu);
  CHECK(Value::number_int(NumericKind::I8, -1)->as_int() == -1);
  CHECK(Value::number_int(NumericKind::I32, -5)->as_int() == -5);
  CHECK(Value::number(NumericKind::U8, 0xFF)->as_uint() == 255);
  CHECK(Value::number_f64(1.5)->as_double() == 1.5);
  CHECK(Value::number_f32(-2.0f)->as_double() == -2.0);
  // NaN payload survives as a bit pattern.
  auto nan = Value::number(NumericKind::F64, 0x7FF8000000000123ULL);
  CHECK(nan->bits == 0x7FF8000000000123ULL);
}

TEST_CASE("conforms on primitives") {
  DescriptorRegistry reg;
  auto i32 = TypeDescriptor::numeric(NumericKind::I32);
  CHECK(conforms(*Value::number_int(NumericKind::I32, 7), *i32, reg));
  CHECK(!conforms(*Value::boolean(true), *TypeDescriptor::numeric(NumericKind::U8), reg));
  CHECK(!conforms(*Value::number_int(NumericKind::I64, 7), *i32, reg));
  CHECK(conforms(*Value::boolean(false), *TypeDescriptor::boolean(), reg));
  CHECK(conforms(*Value::character(U'x'), *TypeDescriptor::character(), reg));
  CHECK(conforms(*Value::str_utf8("hi"), *TypeDescriptor::string_(), reg));
  CHECK(!conforms(*Value::str_utf8(""), *TypeDescriptor::character(), reg));
}

TEST_CASE("conforms rejects out-of-range scalars") {
  DescriptorRegistry reg;
  auto bad = Value::character(static_cast<char32_t>(0xD800));
  CHECK(!conforms(*bad, *TypeDescriptor::character(), reg));
  auto too_big = Value::character(static_cast<char32_t>(0x110000));
  CHECK(!conforms(*too_big, *TypeDescriptor::character(), reg));
}

TEST_CASE("conforms on arrays and composites") {
  auto reg = list_registry();
  auto i64 = TypeDescriptor::numeric(NumericKind::I64);
  auto arr_t = TypeDescriptor::array(i64);
  auto good = Value::arr(i64, {Value::number_int(NumericKind::I64, 1),
                               Value::number_int(NumericKind::I64, 2)});
  CHECK(conforms(*good, *arr_t, reg));
  auto mixed = Value::arr(i64, {Value::number_int(NumericKind::I64, 1), Value::boolean(true)});
  CHECK(!conforms(*mixed, *arr_t, reg));

  auto list_t = reg.find("List");
  auto leaf = Value::obj("List", 0, {Value::number_int(NumericKind::I64, 0), Value::null()});
  CHECK(conforms(*leaf, *list_t, reg));
  auto chain = Value::obj("List", 0, {Value::number_int(NumericKind::I64, 1), leaf});
  CHECK(conforms(*chain, *list_t, reg));
  // Wrong arity.
  auto bad = Value::obj("List", 0, {Value::number_int(NumericKind::I64, 1)});
  CHECK(!conforms(*bad, *list_t, reg));
  // Null is only allowed where a nullable reference permits it.
  CHECK(!conforms(*Value::null(), *list_t, reg));
  CHECK(conforms(*Value::null(), *TypeDescriptor::ref("List", true), reg));
  CHECK(!conforms(*Value::null(), *TypeDescriptor::ref("List", false), reg));
}

TEST_CASE("unresolved reference raises instead of returning false") {
  DescriptorRegistry reg;
  auto dangling = TypeDescriptor::ref("Missing", false);
  CHECK_THROWS_AS(conforms(*Value::number_int(NumericKind::I32, 0), *dangling, reg),
                  DescriptorError);
}

TEST_CASE("reference cycles are reported") {
  DescriptorRegistry reg;
  reg.define("A", TypeDescriptor::ref("B", false));
  reg.define("B", TypeDescriptor::ref("A", false));
  CHECK_THROWS_AS(reg.resolve(*TypeDescriptor::ref("A", false)), DescriptorError);
}

TEST_CASE("registry rejects duplicates and validates references") {
  DescriptorRegistry reg;
  reg.define("X", TypeDescriptor::string_());
  CHECK_THROWS_AS(reg.define("X", TypeDescriptor::boolean()), ConfigError);
  reg.define("Broken", TypeDescriptor::array(TypeDescriptor::ref("Nowhere", false)));
  CHECK_THROWS_AS(reg.validate(), DescriptorError);
}

TEST_CASE("canonical serialization matches the documented encoding") {
  // Keys are emitted in lexicographic order; these strings are the frozen
  // canonical bytes computed by hand from the encoding rules.
  CHECK(serialize(*Value::str_utf8("")) == R"({"t":"str","v":""})");
  CHECK(value_size(*Value::str_utf8("")) == 18);
  CHECK(serialize(*Value::number_int(NumericKind::I32, 7)) ==
        R"({"bits":"7","kind":"i32","t":"num"})");
  CHECK(serialize(*Value::boolean(true)) == R"({"t":"bool","v":true})");
  CHECK(serialize(*Value::character(U' ')) == R"({"cp":32,"t":"char"})");
  CHECK(serialize(*Value::null()) == R"({"t":"null"})");
}

TEST_CASE("array size decomposes into header plus equal element sizes") {
  auto i32 = TypeDescriptor::numeric(NumericKind::I32);
  std::string elem_bytes = serialize(*Value::number_int(NumericKind::I32, 9));
  for (size_t n : {size_t{0}, size_t{1}, size_t{2}, size_t{5}, size_t{17}}) {
    std::vector<ValuePtr> items(n, Value::number_int(NumericKind::I32, 9));
    auto v = Value::arr(i32, items);
    // Expected bytes assembled independently from the encoding rules.
    std::string expected = R"({"elem":{"kind":"i32","t":"num"},"t":"arr","v":[)";
    for (size_t i = 0; i < n; ++i) {
      if (i) expected += ",";
      expected += elem_bytes;
    }
    expected += "]}";
    CHECK(serialize(*v) == expected);
    CHECK(value_size(*v) == expected.size());
  }
}

TEST_CASE("value_size is monotone under append") {
  auto i32 = TypeDescriptor::numeric(NumericKind::I32);
  std::mt19937_64 eng(42);
  for (int trial = 0; trial < 200; ++trial) {
    size_t n = eng() % 6;
    std::vector<ValuePtr> items;
    for (size_t i = 0; i < n; ++i)
      items.push_back(Value::number(NumericKind::I32, eng()));
    auto base = Value::arr(i32, items);
    items.push_back(Value::number(NumericKind::I32, eng()));
    auto grown = Value::arr(i32, items);
    CHECK(value_size(*grown) > value_size(*base));

    std::u32string s;
    for (size_t i = 0; i < eng() % 6; ++i)
      s.push_back(static_cast<char32_t>(U'a' + eng() % 26));
    auto sv = Value::str_(s);
    s.push_back(U'!');
    auto sv2 = Value::str_(s);
    CHECK(value_size(*sv2) > value_size(*sv));
  }
}

TEST_CASE("round trips are identity on randomized values") {
  DescriptorRegistry reg = list_registry();
  reg.define("Pair", TypeDescriptor::composite(
                         "Pair", {{TypeDescriptor::string_(),
                                   TypeDescriptor::numeric(NumericKind::I32)},
                                  {TypeDescriptor::boolean()}}));
  std::vector<TypePtr> descriptors = {
      TypeDescriptor::numeric(NumericKind::U64),
      TypeDescriptor::numeric(NumericKind::F64),
      TypeDescriptor::numeric(NumericKind::I8),
      TypeDescriptor::boolean(),
      TypeDescriptor::character(),
      TypeDescriptor::string_(),
      TypeDescriptor::array(TypeDescriptor::string_()),
      TypeDescriptor::array(TypeDescriptor::array(TypeDescriptor::numeric(NumericKind::F32))),
      reg.find("List"),
      reg.find("Pair"),
  };
  testsupport::RandomValueGen gen(reg, 7);
  for (const auto& t : descriptors) {
    for (int i = 0; i < 500; ++i) {
      auto v = gen.generate(*t);
      REQUIRE(conforms(*v, *t, reg));
      auto bytes = serialize(*v);
      auto back = deserialize(bytes, *t, reg);
      CHECK(*back == *v);
      CHECK(serialize(*back) == bytes);
    }
  }
}

TEST_CASE("deserialize distinguishes decode and conformance failures") {
  DescriptorRegistry reg;
  auto i32 = TypeDescriptor::numeric(NumericKind::I32);
  CHECK_THROWS_AS(deserialize("{not json", *i32, reg), DecodeError);
  CHECK_THROWS_AS(deserialize(R"({"t":"wat"})", *i32, reg), DecodeError);
  CHECK_THROWS_AS(deserialize(R"({"t":"num","kind":"i32"})", *i32, reg), DecodeError);
  CHECK_THROWS_AS(deserialize(R"({"t":"num","kind":"i32","bits":"99999999999999999999999"})",
                              *i32, reg),
                  DecodeError);
  CHECK_THROWS_AS(deserialize(R"({"t":"num","kind":"i32","bits":"4294967296"})", *i32, reg),
                  DecodeError);
  // Well-formed value of the wrong shape.
  CHECK_THROWS_AS(deserialize(R"({"t":"bool","v":true})", *i32, reg), ConformanceError);
}

TEST_CASE("descriptor json round trips") {
  auto reg = list_registry();
  auto j = reg.to_json();
  auto back = DescriptorRegistry::from_json(j);
  CHECK(*back.find("List") == *reg.find("List"));
  CHECK(back.to_json() == j);
  CHECK_THROWS_AS(DescriptorRegistry::from_json(nlohmann::json::array()), DecodeError);
}

TEST_CASE("utf8 helpers reject malformed input") {
  CHECK(utf8_encode(U"hé\U0001F600") == "h\xC3\xA9\xF0\x9F\x98\x80");
  CHECK(utf8_decode("h\xC3\xA9") == U"hé");
  CHECK_THROWS_AS(utf8_decode("\xC3"), DecodeError);
  CHECK_THROWS_AS(utf8_decode("\xFF"), DecodeError);
  CHECK_THROWS_AS(utf8_decode("\xC0\xA0"), DecodeError);  // overlong
  CHECK_THROWS_AS(utf8_decode("\xED\xA0\x80"), DecodeError);  // surrogate
}

TEST_CASE("structural equality is bit-exact for numbers") {
  auto a = Value::number(NumericKind::F64, 0x4000000000000000ULL);
  auto b = Value::number(NumericKind::F64, 0x4000000000000001ULL);
  CHECK(*a == *a);
  CHECK(*a != *b);
  CHECK(*Value::number(NumericKind::I32, 5) != *Value::number(NumericKind::I64, 5));
}
