#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "microfuzz/errors.hpp"

namespace microfuzz {

enum class NumericKind : uint8_t { I8, I16, I32, I64, U8, U16, U32, U64, F32, F64 };

int numeric_bits(NumericKind k);
bool numeric_is_float(NumericKind k);
bool numeric_is_signed(NumericKind k);
std::string_view numeric_name(NumericKind k);
std::optional<NumericKind> numeric_from_name(std::string_view name);

// Mask of the valid bit pattern width for a numeric kind.
uint64_t numeric_mask(NumericKind k);

struct TypeDescriptor;
using TypePtr = std::shared_ptr<const TypeDescriptor>;

// Immutable structural type descriptor. Composite descriptors list one or
// more constructors, each an ordered parameter list; parameters may point at
// other descriptors directly or reference a named descriptor in a registry,
// which is how recursive shapes are expressed.
struct TypeDescriptor {
  enum class Kind : uint8_t { Numeric, Boolean, Char, String, Array, Composite, Ref };

  Kind kind = Kind::Numeric;
  NumericKind num = NumericKind::I64;           // Kind::Numeric
  TypePtr element;                              // Kind::Array
  std::string name;                             // Kind::Composite, Kind::Ref
  std::vector<std::vector<TypePtr>> ctors;      // Kind::Composite
  bool nullable = false;                        // Kind::Ref

  static TypePtr numeric(NumericKind k);
  static TypePtr boolean();
  static TypePtr character();
  static TypePtr string_();
  static TypePtr array(TypePtr element);
  static TypePtr composite(std::string name, std::vector<std::vector<TypePtr>> ctors);
  static TypePtr ref(std::string name, bool nullable);
};

bool operator==(const TypeDescriptor& a, const TypeDescriptor& b);
inline bool operator!=(const TypeDescriptor& a, const TypeDescriptor& b) { return !(a == b); }

struct Value;
using ValuePtr = std::shared_ptr<const Value>;

// Immutable runtime value. Numbers carry their exact bit pattern so that
// serialization round-trips are identity even for NaN payloads; strings are
// code point sequences and only become UTF-8 at the serialization boundary.
struct Value {
  enum class Kind : uint8_t { Number, Bool, Char, Str, Arr, Obj, Null };

  Kind kind = Kind::Null;
  NumericKind num = NumericKind::I64;           // Kind::Number
  uint64_t bits = 0;                            // Kind::Number
  bool b = false;                               // Kind::Bool
  char32_t cp = U' ';                           // Kind::Char
  std::u32string str;                           // Kind::Str
  TypePtr elem;                                 // Kind::Arr
  std::vector<ValuePtr> items;                  // Kind::Arr
  std::string composite;                        // Kind::Obj
  uint32_t ctor = 0;                            // Kind::Obj
  std::vector<ValuePtr> args;                   // Kind::Obj

  static ValuePtr number(NumericKind k, uint64_t bit_pattern);
  static ValuePtr number_f64(double v);
  static ValuePtr number_f32(float v);
  static ValuePtr number_int(NumericKind k, int64_t v);
  static ValuePtr boolean(bool v);
  static ValuePtr character(char32_t cp);
  static ValuePtr str_(std::u32string s);
  static ValuePtr str_utf8(std::string_view utf8);
  static ValuePtr arr(TypePtr element, std::vector<ValuePtr> items);
  static ValuePtr obj(std::string composite, uint32_t ctor, std::vector<ValuePtr> args);
  static ValuePtr null();

  // Interpret the bit pattern of a Number by kind.
  int64_t as_int() const;
  uint64_t as_uint() const;
  double as_double() const;
};

bool operator==(const Value& a, const Value& b);
inline bool operator!=(const Value& a, const Value& b) { return !(a == b); }

// True for code points that are valid Unicode scalars (no surrogates).
bool valid_scalar(char32_t cp);

std::string utf8_encode(const std::u32string& s);
std::u32string utf8_decode(std::string_view s);  // DecodeError on bad input

// Named descriptor registry. Registries are immutable once populated and
// shared by const reference; all lookups are thread-safe.
class DescriptorRegistry {
 public:
  void define(const std::string& name, TypePtr t);  // duplicate -> ConfigError
  TypePtr find(const std::string& name) const;      // nullptr when absent

  // Chase Ref nodes to the underlying descriptor. Dangling names and pure
  // reference cycles raise DescriptorError.
  const TypeDescriptor& resolve(const TypeDescriptor& t) const;

  // Checks that every reference reachable from every definition resolves.
  void validate() const;

  std::vector<std::string> names() const;  // sorted

  nlohmann::json to_json() const;
  static DescriptorRegistry from_json(const nlohmann::json& j);

 private:
  std::map<std::string, TypePtr> defs_;
};

struct SignatureDescriptor {
  std::string target;
  std::vector<TypePtr> params;  // empty for nullary targets
};

// Grammar membership check. Pure; unresolved references raise
// DescriptorError rather than returning false.
bool conforms(const Value& v, const TypeDescriptor& t, const DescriptorRegistry& reg);

nlohmann::json descriptor_to_json(const TypeDescriptor& t);
TypePtr descriptor_from_json(const nlohmann::json& j);  // DecodeError on bad shape

nlohmann::json value_to_json(const Value& v);
ValuePtr value_from_json(const nlohmann::json& j);  // DecodeError on bad shape

// Canonical byte representation: compact JSON with lexicographic keys.
std::string serialize(const Value& v);

// Parse + conformance check. Malformed bytes raise DecodeError; a
// well-formed value of the wrong shape raises ConformanceError.
ValuePtr deserialize(std::string_view bytes, const TypeDescriptor& t,
                     const DescriptorRegistry& reg);

// Size in bytes of the canonical serialization.
size_t value_size(const Value& v);

}  // namespace microfuzz
