#pragma once

// Shared test utilities. The generators here are written independently of
// the library's own instantiation code so they can serve as oracles.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "microfuzz/value.hpp"

namespace testsupport {

using microfuzz::DescriptorRegistry;
using microfuzz::TypeDescriptor;
using microfuzz::TypePtr;
using microfuzz::Value;
using microfuzz::ValuePtr;

// Produces random values conforming to a descriptor by direct structural
// construction (uniform constructor choice, bounded depth).
class RandomValueGen {
 public:
  RandomValueGen(const DescriptorRegistry& reg, uint64_t seed)
      : reg_(reg), eng_(seed) {}

  ValuePtr generate(const TypeDescriptor& t, int depth = 0) {
    using K = TypeDescriptor::Kind;
    switch (t.kind) {
      case K::Numeric: {
        uint64_t bits = eng_();
        return Value::number(t.num, bits);  // factory masks to kind width
      }
      case K::Boolean:
        return Value::boolean(eng_() & 1);
      case K::Char:
        return Value::character(random_scalar());
      case K::String: {
        std::u32string s;
        size_t n = eng_() % 8;
        for (size_t i = 0; i < n; ++i) s.push_back(random_scalar());
        return Value::str_(std::move(s));
      }
      case K::Array: {
        std::vector<ValuePtr> items;
        size_t n = depth > 5 ? 0 : eng_() % 4;
        for (size_t i = 0; i < n; ++i) items.push_back(generate(*t.element, depth + 1));
        return Value::arr(t.element, std::move(items));
      }
      case K::Composite: {
        uint32_t ctor = static_cast<uint32_t>(eng_() % t.ctors.size());
        std::vector<ValuePtr> args;
        for (const auto& p : t.ctors[ctor]) args.push_back(generate(*p, depth + 1));
        return Value::obj(t.name, ctor, std::move(args));
      }
      case K::Ref: {
        if (t.nullable && (depth > 4 || (eng_() & 1))) return Value::null();
        return generate(reg_.resolve(t), depth + 1);
      }
    }
    return Value::null();
  }

 private:
  char32_t random_scalar() {
    // Mix of ASCII and multi-byte scalars to exercise UTF-8 paths.
    static const char32_t pool[] = {U'a', U'z', U'0', U' ', U'~', U'"', U'\\',
                                    U'é', U'а', U'中', U'\U0001F600'};
    return pool[eng_() % (sizeof(pool) / sizeof(pool[0]))];
  }

  const DescriptorRegistry& reg_;
  std::mt19937_64 eng_;
};

// Produces random descriptors, registering any composite definitions it
// invents into the supplied registry so references resolve.
class RandomDescriptorGen {
 public:
  RandomDescriptorGen(DescriptorRegistry& reg, uint64_t seed)
      : reg_(reg), eng_(seed) {}

  TypePtr generate(int depth = 0) {
    int pick = static_cast<int>(eng_() % (depth >= 3 ? 4 : 6));
    switch (pick) {
      case 0: {
        static const microfuzz::NumericKind kinds[] = {
            microfuzz::NumericKind::I8,  microfuzz::NumericKind::I16,
            microfuzz::NumericKind::I32, microfuzz::NumericKind::I64,
            microfuzz::NumericKind::U8,  microfuzz::NumericKind::U16,
            microfuzz::NumericKind::U32, microfuzz::NumericKind::U64,
            microfuzz::NumericKind::F32, microfuzz::NumericKind::F64};
        return TypeDescriptor::numeric(kinds[eng_() % 10]);
      }
      case 1:
        return TypeDescriptor::boolean();
      case 2:
        return TypeDescriptor::character();
      case 3:
        return TypeDescriptor::string_();
      case 4:
        return TypeDescriptor::array(generate(depth + 1));
      default: {
        std::string name = "T" + std::to_string(counter_++);
        size_t nctors = 1 + eng_() % 2;
        std::vector<std::vector<TypePtr>> ctors;
        for (size_t c = 0; c < nctors; ++c) {
          std::vector<TypePtr> params;
          size_t nparams = eng_() % 3;
          for (size_t p = 0; p < nparams; ++p) {
            if (eng_() % 4 == 0) {
              // Recursive nullable self-reference.
              params.push_back(TypeDescriptor::ref(name, true));
            } else {
              params.push_back(generate(depth + 1));
            }
          }
          ctors.push_back(std::move(params));
        }
        auto t = TypeDescriptor::composite(name, std::move(ctors));
        reg_.define(name, t);
        return t;
      }
    }
  }

 private:
  DescriptorRegistry& reg_;
  std::mt19937_64 eng_;
  int counter_ = 0;
};

// Spearman rank correlation coefficient. Average ranks for ties.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    size_t n = v.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  std::vector<double> rx = ranks(x), ry = ranks(y);
  double mx = 0, my = 0;
  for (size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(rx.size());
  my /= static_cast<double>(ry.size());
  double num = 0, dx = 0, dy = 0;
  for (size_t i = 0; i < rx.size(); ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    dx += (rx[i] - mx) * (rx[i] - mx);
    dy += (ry[i] - my) * (ry[i] - my);
  }
  if (dx == 0 || dy == 0) return 0;
  return num / std::sqrt(dx * dy);
}

inline std::filesystem::path fresh_temp_dir(const std::string& tag) {
  auto base = std::filesystem::temp_directory_path() /
              ("microfuzz_test_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(base);
  std::filesystem::create_directories(base);
  return base;
}

}  // namespace testsupport
