#include "microfuzz/value.hpp"

#include <cstring>
#include <set>

namespace microfuzz {

using nlohmann::json;

int numeric_bits(NumericKind k) {
  switch (k) {
    case NumericKind::I8:
    case NumericKind::U8:
      return 8;
    case NumericKind::I16:
    case NumericKind::U16:
      return 16;
    case NumericKind::I32:
    case NumericKind::U32:
    case NumericKind::F32:
      return 32;
    default:
      return 64;
  }
}

bool numeric_is_float(NumericKind k) {
  return k == NumericKind::F32 || k == NumericKind::F64;
}

bool numeric_is_signed(NumericKind k) {
  switch (k) {
    case NumericKind::I8:
    case NumericKind::I16:
    case NumericKind::I32:
    case NumericKind::I64:
      return true;
    default:
      return numeric_is_float(k);
  }
}

std::string_view numeric_name(NumericKind k) {
  switch (k) {
    case NumericKind::I8: return "i8";
    case NumericKind::I16: return "i16";
    case NumericKind::I32: return "i32";
    case NumericKind::I64: return "i64";
    case NumericKind::U8: return "u8";
    case NumericKind::U16: return "u16";
    case NumericKind::U32: return "u32";
    case NumericKind::U64: return "u64";
    case NumericKind::F32: return "f32";
    default: return "f64";
  }
}

std::optional<NumericKind> numeric_from_name(std::string_view name) {
  static const std::pair<std::string_view, NumericKind> table[] = {
      {"i8", NumericKind::I8},   {"i16", NumericKind::I16},
      {"i32", NumericKind::I32}, {"i64", NumericKind::I64},
      {"u8", NumericKind::U8},   {"u16", NumericKind::U16},
      {"u32", NumericKind::U32}, {"u64", NumericKind::U64},
      {"f32", NumericKind::F32}, {"f64", NumericKind::F64},
  };
  for (const auto& [n, k] : table)
    if (n == name) return k;
  return std::nullopt;
}

uint64_t numeric_mask(NumericKind k) {
  int bits = numeric_bits(k);
  return bits == 64 ? ~uint64_t{0} : ((uint64_t{1} << bits) - 1);
}

TypePtr TypeDescriptor::numeric(NumericKind k) {
  auto t = std::make_shared<TypeDescriptor>();
  t->kind = Kind::Numeric;
  t->num = k;
  return t;
}

TypePtr TypeDescriptor::boolean() {
  auto t = std::make_shared<TypeDescriptor>();
  t->kind = Kind::Boolean;
  return t;
}

TypePtr TypeDescriptor::character() {
  auto t = std::make_shared<TypeDescriptor>();
  t->kind = Kind::Char;
  return t;
}

TypePtr TypeDescriptor::string_() {
  auto t = std::make_shared<TypeDescriptor>();
  t->kind = Kind::String;
  return t;
}

TypePtr TypeDescriptor::array(TypePtr element) {
  if (!element) throw DescriptorError("array descriptor requires an element descriptor");
  auto t = std::make_shared<TypeDescriptor>();
  t->kind = Kind::Array;
  t->element = std::move(element);
  return t;
}

TypePtr TypeDescriptor::composite(std::string name,
                                  std::vector<std::vector<TypePtr>> ctors) {
  if (name.empty()) throw DescriptorError("composite descriptor requires a name");
  if (ctors.empty())
    throw DescriptorError("composite '" + name + "' requires at least one constructor");
  for (const auto& c : ctors)
    for (const auto& p : c)
      if (!p) throw DescriptorError("composite '" + name + "' has a null parameter");
  auto t = std::make_shared<TypeDescriptor>();
  t->kind = Kind::Composite;
  t->name = std::move(name);
  t->ctors = std::move(ctors);
  return t;
}

TypePtr TypeDescriptor::ref(std::string name, bool nullable) {
  if (name.empty()) throw DescriptorError("reference descriptor requires a name");
  auto t = std::make_shared<TypeDescriptor>();
  t->kind = Kind::Ref;
  t->name = std::move(name);
  t->nullable = nullable;
  return t;
}

bool operator==(const TypeDescriptor& a, const TypeDescriptor& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case TypeDescriptor::Kind::Numeric:
      return a.num == b.num;
    case TypeDescriptor::Kind::Boolean:
    case TypeDescriptor::Kind::Char:
    case TypeDescriptor::Kind::String:
      return true;
    case TypeDescriptor::Kind::Array:
      return *a.element == *b.element;
    case TypeDescriptor::Kind::Composite: {
      if (a.name != b.name || a.ctors.size() != b.ctors.size()) return false;
      for (size_t i = 0; i < a.ctors.size(); ++i) {
        if (a.ctors[i].size() != b.ctors[i].size()) return false;
        for (size_t j = 0; j < a.ctors[i].size(); ++j)
          if (*a.ctors[i][j] != *b.ctors[i][j]) return false;
      }
      return true;
    }
    case TypeDescriptor::Kind::Ref:
      return a.name == b.name && a.nullable == b.nullable;
  }
  return false;
}

ValuePtr Value::number(NumericKind k, uint64_t bit_pattern) {
  auto v = std::make_shared<Value>();
  v->kind = Kind::Number;
  v->num = k;
  v->bits = bit_pattern & numeric_mask(k);
  return v;
}

ValuePtr Value::number_f64(double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, sizeof bits);
  return number(NumericKind::F64, bits);
}

ValuePtr Value::number_f32(float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, sizeof bits);
  return number(NumericKind::F32, bits);
}

ValuePtr Value::number_int(NumericKind k, int64_t v) {
  return number(k, static_cast<uint64_t>(v) & numeric_mask(k));
}

ValuePtr Value::boolean(bool v) {
  auto p = std::make_shared<Value>();
  p->kind = Kind::Bool;
  p->b = v;
  return p;
}

ValuePtr Value::character(char32_t cp) {
  auto p = std::make_shared<Value>();
  p->kind = Kind::Char;
  p->cp = cp;
  return p;
}

ValuePtr Value::str_(std::u32string s) {
  auto p = std::make_shared<Value>();
  p->kind = Kind::Str;
  p->str = std::move(s);
  return p;
}

ValuePtr Value::str_utf8(std::string_view utf8) { return str_(utf8_decode(utf8)); }

ValuePtr Value::arr(TypePtr element, std::vector<ValuePtr> items) {
  if (!element) throw DescriptorError("array value requires an element descriptor");
  auto p = std::make_shared<Value>();
  p->kind = Kind::Arr;
  p->elem = std::move(element);
  p->items = std::move(items);
  return p;
}

ValuePtr Value::obj(std::string composite, uint32_t ctor, std::vector<ValuePtr> args) {
  auto p = std::make_shared<Value>();
  p->kind = Kind::Obj;
  p->composite = std::move(composite);
  p->ctor = ctor;
  p->args = std::move(args);
  return p;
}

ValuePtr Value::null() {
  auto p = std::make_shared<Value>();
  p->kind = Kind::Null;
  return p;
}

int64_t Value::as_int() const {
  int bits_n = numeric_bits(num);
  uint64_t v = bits;
  if (bits_n < 64 && (v & (uint64_t{1} << (bits_n - 1))))
    v |= ~numeric_mask(num);  // sign extend
  return static_cast<int64_t>(v);
}

uint64_t Value::as_uint() const { return bits; }

double Value::as_double() const {
  if (num == NumericKind::F64) {
    double d;
    std::memcpy(&d, &bits, sizeof d);
    return d;
  }
  if (num == NumericKind::F32) {
    uint32_t b32 = static_cast<uint32_t>(bits);
    float f;
    std::memcpy(&f, &b32, sizeof f);
    return f;
  }
  return numeric_is_signed(num) ? static_cast<double>(as_int())
                                : static_cast<double>(bits);
}

bool operator==(const Value& a, const Value& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Value::Kind::Number:
      return a.num == b.num && a.bits == b.bits;
    case Value::Kind::Bool:
      return a.b == b.b;
    case Value::Kind::Char:
      return a.cp == b.cp;
    case Value::Kind::Str:
      return a.str == b.str;
    case Value::Kind::Arr: {
      if (*a.elem != *b.elem || a.items.size() != b.items.size()) return false;
      for (size_t i = 0; i < a.items.size(); ++i)
        if (*a.items[i] != *b.items[i]) return false;
      return true;
    }
    case Value::Kind::Obj: {
      if (a.composite != b.composite || a.ctor != b.ctor ||
          a.args.size() != b.args.size())
        return false;
      for (size_t i = 0; i < a.args.size(); ++i)
        if (*a.args[i] != *b.args[i]) return false;
      return true;
    }
    case Value::Kind::Null:
      return true;
  }
  return false;
}

bool valid_scalar(char32_t cp) {
  return cp <= 0x10FFFF && !(cp >= 0xD800 && cp <= 0xDFFF);
}

std::string utf8_encode(const std::u32string& s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t cp : s) {
    if (!valid_scalar(cp)) throw DecodeError("invalid scalar in string value");
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }
  return out;
}

std::u32string utf8_decode(std::string_view s) {
  std::u32string out;
  size_t i = 0;
  auto cont = [&](size_t k) -> uint32_t {
    if (i + k >= s.size()) throw DecodeError("truncated UTF-8 sequence");
    unsigned char c = static_cast<unsigned char>(s[i + k]);
    if ((c & 0xC0) != 0x80) throw DecodeError("bad UTF-8 continuation byte");
    return c & 0x3F;
  };
  while (i < s.size()) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    uint32_t cp;
    size_t len;
    if (c < 0x80) {
      cp = c;
      len = 1;
    } else if ((c & 0xE0) == 0xC0) {
      cp = (uint32_t{c} & 0x1F) << 6 | cont(1);
      len = 2;
      if (cp < 0x80) throw DecodeError("overlong UTF-8 sequence");
    } else if ((c & 0xF0) == 0xE0) {
      cp = (uint32_t{c} & 0x0F) << 12 | cont(1) << 6 | cont(2);
      len = 3;
      if (cp < 0x800) throw DecodeError("overlong UTF-8 sequence");
    } else if ((c & 0xF8) == 0xF0) {
      cp = (uint32_t{c} & 0x07) << 18 | cont(1) << 12 | cont(2) << 6 | cont(3);
      len = 4;
      if (cp < 0x10000) throw DecodeError("overlong UTF-8 sequence");
    } else {
      throw DecodeError("bad UTF-8 lead byte");
    }
    if (!valid_scalar(cp)) throw DecodeError("UTF-8 decodes to invalid scalar");
    out.push_back(static_cast<char32_t>(cp));
    i += len;
  }
  return out;
}

void DescriptorRegistry::define(const std::string& name, TypePtr t) {
  if (!t) throw DescriptorError("cannot register a null descriptor");
  if (name.empty()) throw ConfigError("descriptor name must be non-empty");
  if (!defs_.emplace(name, std::move(t)).second)
    throw ConfigError("duplicate descriptor name '" + name + "'");
}

TypePtr DescriptorRegistry::find(const std::string& name) const {
  auto it = defs_.find(name);
  return it == defs_.end() ? nullptr : it->second;
}

const TypeDescriptor& DescriptorRegistry::resolve(const TypeDescriptor& t) const {
  const TypeDescriptor* cur = &t;
  std::set<std::string> seen;
  while (cur->kind == TypeDescriptor::Kind::Ref) {
    if (!seen.insert(cur->name).second)
      throw DescriptorError("reference cycle through '" + cur->name + "'");
    TypePtr next = find(cur->name);
    if (!next) throw DescriptorError("unresolved descriptor reference '" + cur->name + "'");
    cur = next.get();
  }
  return *cur;
}

namespace {

void validate_rec(const DescriptorRegistry& reg, const TypeDescriptor& t,
                  std::set<const TypeDescriptor*>& visited) {
  if (!visited.insert(&t).second) return;
  switch (t.kind) {
    case TypeDescriptor::Kind::Array:
      validate_rec(reg, *t.element, visited);
      break;
    case TypeDescriptor::Kind::Composite:
      for (const auto& c : t.ctors)
        for (const auto& p : c) validate_rec(reg, *p, visited);
      break;
    case TypeDescriptor::Kind::Ref:
      validate_rec(reg, reg.resolve(t), visited);
      break;
    default:
      break;
  }
}

}  // namespace

void DescriptorRegistry::validate() const {
  std::set<const TypeDescriptor*> visited;
  for (const auto& [name, t] : defs_) validate_rec(*this, *t, visited);
}

std::vector<std::string> DescriptorRegistry::names() const {
  std::vector<std::string> out;
  out.reserve(defs_.size());
  for (const auto& [name, t] : defs_) out.push_back(name);
  return out;
}

json DescriptorRegistry::to_json() const {
  json j = json::object();
  for (const auto& [name, t] : defs_) j[name] = descriptor_to_json(*t);
  return j;
}

DescriptorRegistry DescriptorRegistry::from_json(const json& j) {
  if (!j.is_object()) throw DecodeError("descriptor registry must be a JSON object");
  DescriptorRegistry reg;
  for (const auto& [name, dj] : j.items()) reg.define(name, descriptor_from_json(dj));
  reg.validate();
  return reg;
}

bool conforms(const Value& v, const TypeDescriptor& t, const DescriptorRegistry& reg) {
  if (t.kind == TypeDescriptor::Kind::Ref) {
    const TypeDescriptor& resolved = reg.resolve(t);  // throws on dangling names
    if (v.kind == Value::Kind::Null) return t.nullable;
    return conforms(v, resolved, reg);
  }
  switch (t.kind) {
    case TypeDescriptor::Kind::Numeric:
      return v.kind == Value::Kind::Number && v.num == t.num &&
             (v.bits & ~numeric_mask(t.num)) == 0;
    case TypeDescriptor::Kind::Boolean:
      return v.kind == Value::Kind::Bool;
    case TypeDescriptor::Kind::Char:
      return v.kind == Value::Kind::Char && valid_scalar(v.cp);
    case TypeDescriptor::Kind::String: {
      if (v.kind != Value::Kind::Str) return false;
      for (char32_t cp : v.str)
        if (!valid_scalar(cp)) return false;
      return true;
    }
    case TypeDescriptor::Kind::Array: {
      if (v.kind != Value::Kind::Arr) return false;
      for (const auto& item : v.items)
        if (!conforms(*item, *t.element, reg)) return false;
      return true;
    }
    case TypeDescriptor::Kind::Composite: {
      if (v.kind != Value::Kind::Obj || v.composite != t.name) return false;
      if (v.ctor >= t.ctors.size()) return false;
      const auto& params = t.ctors[v.ctor];
      if (v.args.size() != params.size()) return false;
      for (size_t i = 0; i < params.size(); ++i)
        if (!conforms(*v.args[i], *params[i], reg)) return false;
      return true;
    }
    default:
      return false;
  }
}

json descriptor_to_json(const TypeDescriptor& t) {
  json j;
  switch (t.kind) {
    case TypeDescriptor::Kind::Numeric:
      j["t"] = "num";
      j["kind"] = std::string(numeric_name(t.num));
      break;
    case TypeDescriptor::Kind::Boolean:
      j["t"] = "bool";
      break;
    case TypeDescriptor::Kind::Char:
      j["t"] = "char";
      break;
    case TypeDescriptor::Kind::String:
      j["t"] = "str";
      break;
    case TypeDescriptor::Kind::Array:
      j["t"] = "arr";
      j["elem"] = descriptor_to_json(*t.element);
      break;
    case TypeDescriptor::Kind::Composite: {
      j["t"] = "composite";
      j["name"] = t.name;
      json ctors = json::array();
      for (const auto& c : t.ctors) {
        json params = json::array();
        for (const auto& p : c) params.push_back(descriptor_to_json(*p));
        ctors.push_back(std::move(params));
      }
      j["ctors"] = std::move(ctors);
      break;
    }
    case TypeDescriptor::Kind::Ref:
      j["t"] = "ref";
      j["name"] = t.name;
      j["nullable"] = t.nullable;
      break;
  }
  return j;
}

namespace {

std::string require_string(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string())
    throw DecodeError(std::string("missing or non-string field '") + key + "'");
  return j[key].get<std::string>();
}

}  // namespace

TypePtr descriptor_from_json(const json& j) {
  if (!j.is_object()) throw DecodeError("descriptor must be a JSON object");
  std::string tag = require_string(j, "t");
  if (tag == "num") {
    auto k = numeric_from_name(require_string(j, "kind"));
    if (!k) throw DecodeError("unknown numeric kind");
    return TypeDescriptor::numeric(*k);
  }
  if (tag == "bool") return TypeDescriptor::boolean();
  if (tag == "char") return TypeDescriptor::character();
  if (tag == "str") return TypeDescriptor::string_();
  if (tag == "arr") {
    if (!j.contains("elem")) throw DecodeError("array descriptor missing 'elem'");
    return TypeDescriptor::array(descriptor_from_json(j["elem"]));
  }
  if (tag == "composite") {
    std::string name = require_string(j, "name");
    if (!j.contains("ctors") || !j["ctors"].is_array())
      throw DecodeError("composite descriptor missing 'ctors'");
    std::vector<std::vector<TypePtr>> ctors;
    for (const auto& cj : j["ctors"]) {
      if (!cj.is_array()) throw DecodeError("constructor parameter list must be an array");
      std::vector<TypePtr> params;
      for (const auto& pj : cj) params.push_back(descriptor_from_json(pj));
      ctors.push_back(std::move(params));
    }
    try {
      return TypeDescriptor::composite(std::move(name), std::move(ctors));
    } catch (const DescriptorError& e) {
      throw DecodeError(e.what());
    }
  }
  if (tag == "ref") {
    bool nullable = j.contains("nullable") && j["nullable"].is_boolean()
                        ? j["nullable"].get<bool>()
                        : false;
    return TypeDescriptor::ref(require_string(j, "name"), nullable);
  }
  throw DecodeError("unknown descriptor tag '" + tag + "'");
}

json value_to_json(const Value& v) {
  json j;
  switch (v.kind) {
    case Value::Kind::Number:
      j["t"] = "num";
      j["kind"] = std::string(numeric_name(v.num));
      j["bits"] = std::to_string(v.bits);
      break;
    case Value::Kind::Bool:
      j["t"] = "bool";
      j["v"] = v.b;
      break;
    case Value::Kind::Char:
      j["t"] = "char";
      j["cp"] = static_cast<uint32_t>(v.cp);
      break;
    case Value::Kind::Str:
      j["t"] = "str";
      j["v"] = utf8_encode(v.str);
      break;
    case Value::Kind::Arr: {
      j["t"] = "arr";
      j["elem"] = descriptor_to_json(*v.elem);
      json items = json::array();
      for (const auto& item : v.items) items.push_back(value_to_json(*item));
      j["v"] = std::move(items);
      break;
    }
    case Value::Kind::Obj: {
      j["t"] = "obj";
      j["name"] = v.composite;
      j["ctor"] = v.ctor;
      json args = json::array();
      for (const auto& a : v.args) args.push_back(value_to_json(*a));
      j["args"] = std::move(args);
      break;
    }
    case Value::Kind::Null:
      j["t"] = "null";
      break;
  }
  return j;
}

ValuePtr value_from_json(const json& j) {
  if (!j.is_object()) throw DecodeError("value must be a JSON object");
  std::string tag = require_string(j, "t");
  if (tag == "num") {
    auto k = numeric_from_name(require_string(j, "kind"));
    if (!k) throw DecodeError("unknown numeric kind");
    std::string bits_str = require_string(j, "bits");
    uint64_t bits = 0;
    if (bits_str.empty()) throw DecodeError("empty bit pattern");
    for (char c : bits_str) {
      if (c < '0' || c > '9') throw DecodeError("non-decimal bit pattern");
      uint64_t next = bits * 10 + static_cast<uint64_t>(c - '0');
      if (next / 10 != bits) throw DecodeError("bit pattern overflows 64 bits");
      bits = next;
    }
    if ((bits & ~numeric_mask(*k)) != 0)
      throw DecodeError("bit pattern wider than numeric kind");
    return Value::number(*k, bits);
  }
  if (tag == "bool") {
    if (!j.contains("v") || !j["v"].is_boolean()) throw DecodeError("bool value missing 'v'");
    return Value::boolean(j["v"].get<bool>());
  }
  if (tag == "char") {
    if (!j.contains("cp") || !j["cp"].is_number_unsigned())
      throw DecodeError("char value missing 'cp'");
    uint64_t cp = j["cp"].get<uint64_t>();
    if (cp > 0x10FFFF) throw DecodeError("code point out of range");
    return Value::character(static_cast<char32_t>(cp));
  }
  if (tag == "str") return Value::str_utf8(require_string(j, "v"));
  if (tag == "arr") {
    if (!j.contains("elem")) throw DecodeError("array value missing 'elem'");
    TypePtr elem = descriptor_from_json(j["elem"]);
    if (!j.contains("v") || !j["v"].is_array()) throw DecodeError("array value missing 'v'");
    std::vector<ValuePtr> items;
    for (const auto& ij : j["v"]) items.push_back(value_from_json(ij));
    return Value::arr(std::move(elem), std::move(items));
  }
  if (tag == "obj") {
    std::string name = require_string(j, "name");
    if (!j.contains("ctor") || !j["ctor"].is_number_unsigned())
      throw DecodeError("object value missing 'ctor'");
    if (!j.contains("args") || !j["args"].is_array())
      throw DecodeError("object value missing 'args'");
    std::vector<ValuePtr> args;
    for (const auto& aj : j["args"]) args.push_back(value_from_json(aj));
    return Value::obj(std::move(name), j["ctor"].get<uint32_t>(), std::move(args));
  }
  if (tag == "null") return Value::null();
  throw DecodeError("unknown value tag '" + tag + "'");
}

std::string serialize(const Value& v) { return value_to_json(v).dump(); }

ValuePtr deserialize(std::string_view bytes, const TypeDescriptor& t,
                     const DescriptorRegistry& reg) {
  json j = json::parse(bytes, nullptr, false);
  if (j.is_discarded()) throw DecodeError("serialized value is not valid JSON");
  ValuePtr v = value_from_json(j);
  if (!conforms(*v, t, reg))
    throw ConformanceError("decoded value does not conform to the expected descriptor");
  return v;
}

size_t value_size(const Value& v) { return serialize(v).size(); }

}  // namespace microfuzz
