#include "microfuzz/corpus.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "microfuzz/errors.hpp"

namespace microfuzz {
namespace {

// Per-step work constants. Each unit is a hardware pause instruction, whose
// latency is fixed by the CPU rather than the optimizer, so per-step cost is
// comparable between the -O0 exploration build and the -O3 replay build.
constexpr int kRegexStepSpin = 48;
constexpr int kDigitSpin = 2;
constexpr int kCompareSpin = 16;
constexpr int kLenRescan = 48;

constexpr size_t kHashBuckets = 2048;
constexpr long long kExpCap = 10000000;  // decimal exponents clamp to +/- 1e7
constexpr long long kSleepCapMs = 5000;

inline void spin(int units) {
#if defined(__x86_64__) || defined(__i386__)
  for (int i = 0; i < units; ++i) asm volatile("pause" ::: "memory");
#else
  for (int i = 0; i < units; ++i) asm volatile("" ::: "memory");
#endif
}

inline bool word_char(char32_t c) {
  return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z') ||
         (c >= U'0' && c <= U'9') || c == U'_';
}

const Value& arg_at(const std::vector<ValuePtr>& args, size_t i) {
  return *args[i];
}

// ---------------------------------------------------------------------------
// corpus/regex_split
//
// Splits the input on matches of the fixed pattern (\w|\w)+! using a naive
// backtracking matcher, where \w is [A-Za-z0-9_]. The alternation's branches
// are identical, so a failing word-character run of length k explores a 2^k
// search tree; a successful match is found on the first branch and costs
// linear time.

// Tries to consume one group character at i and then either extend the
// repetition or close it with the '!' terminator. On success *end is one past
// the terminator.
bool match_plus(const std::u32string& s, size_t i, size_t* end) {
  if (i >= s.size() || !word_char(s[i])) return false;
  for (int branch = 0; branch < 2; ++branch) {
    spin(kRegexStepSpin);
    if (match_plus(s, i + 1, end)) return true;
    if (i + 1 < s.size() && s[i + 1] == U'!') {
      *end = i + 2;
      return true;
    }
  }
  return false;
}

ValuePtr regex_split(CallContext& ctx, const std::vector<ValuePtr>& args) {
  const std::u32string& s = arg_at(args, 0).str;
  std::vector<ValuePtr> pieces;
  size_t start = 0;
  size_t i = 0;
  while (i < s.size()) {
    if (ctx.tracing()) ctx.enter("corpus/regex_split/match_at", {nlohmann::json(i)});
    size_t end = 0;
    bool hit = word_char(s[i]) && match_plus(s, i, &end);
    if (ctx.tracing()) ctx.leave("corpus/regex_split/match_at");
    if (hit) {
      pieces.push_back(Value::str_(s.substr(start, i - start)));
      start = end;
      i = end;
    } else {
      ++i;
    }
  }
  pieces.push_back(Value::str_(s.substr(start)));
  return Value::arr(TypeDescriptor::string_(), std::move(pieces));
}

// ---------------------------------------------------------------------------
// corpus/decimal_add
//
// Arbitrary-precision decimal addition over Decimal{coeff, exp}. Alignment
// multiplies the higher-exponent coefficient by 10^gap by appending zeros, so
// the cost is linear in the exponent gap rather than in the digit counts.

struct Dec {
  std::string digits;  // most significant first, no leading zeros except "0"
  long long exp = 0;
};

Dec decode_decimal(const Value& v) {
  Dec d;
  const std::u32string& coeff = v.args[0]->str;
  for (char32_t c : coeff) {
    if (c >= U'0' && c <= U'9') d.digits.push_back(static_cast<char>(c));
  }
  if (d.digits.empty()) throw TargetError("decimal coefficient has no digits");
  size_t nz = d.digits.find_first_not_of('0');
  d.digits = nz == std::string::npos ? "0" : d.digits.substr(nz);
  long long e = v.args[1]->as_int();
  d.exp = std::clamp(e, -kExpCap, kExpCap);
  return d;
}

std::string add_digit_strings(const std::string& a, const std::string& b) {
  std::string out;
  out.reserve(std::max(a.size(), b.size()) + 1);
  int carry = 0;
  size_t ia = a.size(), ib = b.size();
  while (ia > 0 || ib > 0 || carry) {
    int da = ia > 0 ? a[--ia] - '0' : 0;
    int db = ib > 0 ? b[--ib] - '0' : 0;
    int sum = da + db + carry;
    out.push_back(static_cast<char>('0' + sum % 10));
    carry = sum / 10;
  }
  std::reverse(out.begin(), out.end());
  size_t nz = out.find_first_not_of('0');
  return nz == std::string::npos ? "0" : out.substr(nz);
}

ValuePtr decimal_add(CallContext& ctx, const std::vector<ValuePtr>& args) {
  Dec a = decode_decimal(arg_at(args, 0));
  Dec b = decode_decimal(arg_at(args, 1));
  if (a.exp < b.exp) std::swap(a, b);
  unsigned long long gap = static_cast<unsigned long long>(a.exp - b.exp);

  const bool tracing = ctx.tracing();
  if (tracing) ctx.enter("corpus/decimal_add/scale", {nlohmann::json(gap)});
  std::string scaled = a.digits;
  scaled.reserve(scaled.size() + gap);
  for (unsigned long long g = 0; g < gap; ++g) {
    spin(kDigitSpin);
    scaled.push_back('0');
    // One marker per chunk keeps the trace length proportional to the
    // scaling work without drowning the event budget.
    if (tracing && (g & 1023) == 0) {
      ctx.enter("corpus/decimal_add/scale_step", {nlohmann::json(g)});
      ctx.leave("corpus/decimal_add/scale_step");
    }
  }
  if (tracing) ctx.leave("corpus/decimal_add/scale");

  if (ctx.tracing()) ctx.enter("corpus/decimal_add/add_digits");
  std::string digits = add_digit_strings(scaled, b.digits);
  if (ctx.tracing()) ctx.leave("corpus/decimal_add/add_digits");

  std::u32string coeff(digits.begin(), digits.end());
  return Value::obj("Decimal", 0,
                    {Value::str_(std::move(coeff)),
                     Value::number_int(NumericKind::I32,
                                       static_cast<int64_t>(b.exp))});
}

// ---------------------------------------------------------------------------
// corpus/comment_scan
//
// Walks a markup string collecting opening tag names and comments. The branch
// for a "<!" opener whose tail is not "--" was meant to skip the malformed
// declaration but forgets to advance the cursor, so the scan loops forever
// without allocating.

ValuePtr comment_scan(CallContext& ctx, const std::vector<ValuePtr>& args) {
  const std::u32string& s = arg_at(args, 0).str;
  const size_t n = s.size();
  std::vector<ValuePtr> nodes;
  size_t i = 0;
  while (i < n) {
    if (s[i] != U'<') {
      ++i;
      continue;
    }
    if (i + 1 < n && s[i + 1] == U'!') {
      if (i + 3 < n && s[i + 2] == U'-' && s[i + 3] == U'-') {
        size_t j = i + 4;
        while (j + 2 < n && !(s[j] == U'-' && s[j + 1] == U'-' && s[j + 2] == U'>')) ++j;
        if (ctx.tracing()) {
          ctx.enter("corpus/comment_scan/node", {nlohmann::json("#comment")});
          ctx.leave("corpus/comment_scan/node");
        }
        nodes.push_back(Value::str_utf8("#comment"));
        i = j + 2 < n ? j + 3 : n;
        continue;
      }
      if (ctx.tracing()) {
        ctx.enter("corpus/comment_scan/skip_decl", {nlohmann::json(i)});
        ctx.leave("corpus/comment_scan/skip_decl");
      }
      continue;  // cursor not advanced
    }
    size_t j = i + 1;
    bool closing = j < n && s[j] == U'/';
    if (closing) ++j;
    size_t k = j;
    while (k < n && s[k] != U'>' && s[k] != U' ') ++k;
    if (!closing && k > j) {
      if (ctx.tracing()) ctx.enter("corpus/comment_scan/node", {nlohmann::json(utf8_encode(s.substr(j, k - j)))});
      nodes.push_back(Value::str_(s.substr(j, k - j)));
      if (ctx.tracing()) ctx.leave("corpus/comment_scan/node");
    }
    i = k < n ? k + 1 : n;
  }
  return Value::arr(TypeDescriptor::string_(), std::move(nodes));
}

// ---------------------------------------------------------------------------
// corpus/colliding_table_insert
//
// Inserts every key into a chained hash table that hashes by byte sum modulo
// a small bucket count and tracks key multiplicities, so each insert walks
// its whole chain. Key comparison mimics a timing-safe equality check over
// NUL-padded buffers: it scans the longer of the two keys and never exits
// early, and its per-character bounds check revalidates the prefix scanned so
// far, so one comparison costs quadratic work in the longer key's length.

uint32_t weak_hash(const std::u32string& key) {
  uint64_t sum = 0;
  for (char32_t c : key) sum += static_cast<uint64_t>(c) & 0xFF;
  return static_cast<uint32_t>(sum % kHashBuckets);
}

bool keys_equal_fixed_time(const std::u32string& a, const std::u32string& b) {
  const size_t m = std::max(a.size(), b.size());
  unsigned eq = a.size() == b.size() ? 1u : 0u;
  for (size_t i = 0; i < m; ++i) {
    spin(kCompareSpin);
    spin(kLenRescan * static_cast<int>(i + 1));
    const char32_t ca = i < a.size() ? a[i] : U'\0';
    const char32_t cb = i < b.size() ? b[i] : U'\0';
    eq &= ca == cb ? 1u : 0u;
  }
  return eq != 0;
}

ValuePtr colliding_table_insert(CallContext& ctx, const std::vector<ValuePtr>& args) {
  const Value& keys = arg_at(args, 0);
  std::vector<std::vector<const std::u32string*>> buckets(kHashBuckets);
  uint64_t comparisons = 0;
  uint64_t entries = 0;
  size_t max_chain = 0;
  for (const ValuePtr& kv : keys.items) {
    const std::u32string& key = kv->str;
    std::vector<const std::u32string*>& chain = buckets[weak_hash(key)];
    uint64_t multiplicity = 0;
    for (const std::u32string* existing : chain) {
      ++comparisons;
      if (keys_equal_fixed_time(*existing, key)) ++multiplicity;
    }
    if (ctx.tracing() && multiplicity > 0) {
      ctx.enter("corpus/colliding_table_insert/duplicate", {nlohmann::json(multiplicity)});
      ctx.leave("corpus/colliding_table_insert/duplicate");
    }
    chain.push_back(&key);
    ++entries;
    max_chain = std::max(max_chain, chain.size());
  }
  return Value::obj("TableStats", 0,
                    {Value::number_int(NumericKind::I64, static_cast<int64_t>(comparisons)),
                     Value::number_int(NumericKind::I64, static_cast<int64_t>(entries)),
                     Value::number_int(NumericKind::I64, static_cast<int64_t>(max_chain))});
}

// ---------------------------------------------------------------------------
// corpus/sleep_trap: long wall-clock stall with almost no CPU time. Phase one
// flags it; replay validation rejects it as not CPU bound.

ValuePtr sleep_trap(CallContext&, const std::vector<ValuePtr>& args) {
  long long ms = arg_at(args, 0).as_int();
  if (ms < 0) ms = -ms;
  ms = std::min(ms, kSleepCapMs);
  std::this_thread::sleep_for(std::chrono::milliseconds(ms));
  return Value::number_int(NumericKind::I64, ms);
}

// ---------------------------------------------------------------------------
// Benign controls.

ValuePtr string_reverse(CallContext&, const std::vector<ValuePtr>& args) {
  std::u32string s = arg_at(args, 0).str;
  std::reverse(s.begin(), s.end());
  return Value::str_(std::move(s));
}

ValuePtr vector_sum(CallContext&, const std::vector<ValuePtr>& args) {
  uint64_t sum = 0;
  for (const ValuePtr& item : arg_at(args, 0).items) {
    sum += static_cast<uint64_t>(item->as_int());
  }
  return Value::number_int(NumericKind::I64, static_cast<int64_t>(sum));
}

ValuePtr copy_list(const Value& v) {
  if (v.kind == Value::Kind::Null) return Value::null();
  return Value::obj("List", 0, {Value::number_int(NumericKind::I64, v.args[0]->as_int()),
                                copy_list(*v.args[1])});
}

ValuePtr list_build(CallContext&, const std::vector<ValuePtr>& args) {
  return copy_list(arg_at(args, 0));
}

// ---------------------------------------------------------------------------
// bench/* targets: controlled-cost helpers for harness tests.

int64_t clamp_magnitude(int64_t v, int64_t cap) {
  if (v < 0) v = v == INT64_MIN ? cap : -v;
  return std::min(v, cap);
}

void busy_spin(int64_t iters) {
  volatile uint64_t acc = 0;
  for (int64_t i = 0; i < iters; ++i) {
    acc = acc + 1;
    asm volatile("" ::: "memory");
  }
}

ValuePtr bench_busy_loop(CallContext&, const std::vector<ValuePtr>& args) {
  int64_t n = clamp_magnitude(arg_at(args, 0).as_int(), 2000000000LL);
  busy_spin(n);
  return Value::number_int(NumericKind::I64, n);
}

ValuePtr bench_noop(CallContext&, const std::vector<ValuePtr>&) {
  return Value::null();
}

ValuePtr bench_fact(CallContext& ctx, const std::vector<ValuePtr>& args) {
  int64_t n = clamp_magnitude(arg_at(args, 0).as_int(), 20);
  if (n <= 1) return Value::number_int(NumericKind::I64, 1);
  ValuePtr rest = ctx.call("bench/fact", {Value::number_int(NumericKind::I64, n - 1)});
  return Value::number_int(NumericKind::I64, n * rest->as_int());
}

ValuePtr bench_inner(CallContext&, const std::vector<ValuePtr>& args) {
  busy_spin(clamp_magnitude(arg_at(args, 0).as_int(), 2000000000LL));
  return Value::null();
}

ValuePtr bench_outer(CallContext& ctx, const std::vector<ValuePtr>& args) {
  busy_spin(clamp_magnitude(arg_at(args, 0).as_int(), 2000000000LL));
  return ctx.call("bench/inner", {args[0]});
}

ValuePtr bench_hang(CallContext&, const std::vector<ValuePtr>&) {
  for (;;) spin(1);
  return Value::null();  // unreachable
}

ValuePtr bench_throw_always(CallContext&, const std::vector<ValuePtr>& args) {
  throw TargetError(utf8_encode(arg_at(args, 0).str));
}

ValuePtr bench_crash(CallContext&, const std::vector<ValuePtr>& args) {
  switch (arg_at(args, 0).as_int()) {
    case 1: std::abort();
    case 2: _exit(7);
    default: return Value::null();
  }
}

}  // namespace

void register_corpus(TargetRegistry& reg) {
  DescriptorRegistry& types = reg.types();
  types.define("List", TypeDescriptor::composite(
      "List", {{TypeDescriptor::numeric(NumericKind::I64),
                TypeDescriptor::ref("List", true)}}));
  types.define("Decimal", TypeDescriptor::composite(
      "Decimal", {{TypeDescriptor::string_(),
                   TypeDescriptor::numeric(NumericKind::I32)}}));
  types.define("TableStats", TypeDescriptor::composite(
      "TableStats", {{TypeDescriptor::numeric(NumericKind::I64),
                      TypeDescriptor::numeric(NumericKind::I64),
                      TypeDescriptor::numeric(NumericKind::I64)}}));

  TypePtr str = TypeDescriptor::string_();
  TypePtr i32 = TypeDescriptor::numeric(NumericKind::I32);
  TypePtr i64 = TypeDescriptor::numeric(NumericKind::I64);

  reg.add({"corpus/regex_split", {"corpus/regex_split", {str}}, regex_split,
           "splits on (\\w|\\w)+! with a backtracking matcher"});
  reg.add({"corpus/decimal_add",
           {"corpus/decimal_add",
            {TypeDescriptor::ref("Decimal", false), TypeDescriptor::ref("Decimal", false)}},
           decimal_add, "schoolbook decimal addition with exponent alignment"});
  reg.add({"corpus/comment_scan", {"corpus/comment_scan", {str}}, comment_scan,
           "markup scanner collecting tag names and comments"});
  reg.add({"corpus/colliding_table_insert",
           {"corpus/colliding_table_insert", {TypeDescriptor::array(str)}},
           colliding_table_insert,
           "chained hash table insert with byte-sum hashing and fixed-time compares"});
  reg.add({"corpus/sleep_trap", {"corpus/sleep_trap", {i32}}, sleep_trap,
           "sleeps up to five seconds of wall time"});
  reg.add({"corpus/string_reverse", {"corpus/string_reverse", {str}}, string_reverse,
           "benign control"});
  reg.add({"corpus/vector_sum",
           {"corpus/vector_sum", {TypeDescriptor::array(i64)}}, vector_sum,
           "benign control"});
  reg.add({"corpus/list_build",
           {"corpus/list_build", {TypeDescriptor::ref("List", true)}}, list_build,
           "benign control"});

  reg.add({"bench/busy_loop", {"bench/busy_loop", {i64}}, bench_busy_loop,
           "volatile spin of n iterations"});
  reg.add({"bench/noop", {"bench/noop", {}}, bench_noop, "returns immediately"});
  reg.add({"bench/fact", {"bench/fact", {i64}}, bench_fact,
           "recursive factorial through nested harness calls"});
  reg.add({"bench/inner", {"bench/inner", {i64}}, bench_inner, "spin helper"});
  reg.add({"bench/outer", {"bench/outer", {i64}}, bench_outer,
           "spins then calls bench/inner"});
  reg.add({"bench/hang", {"bench/hang", {}}, bench_hang,
           "never returns; allocation free"});
  reg.add({"bench/throw_always", {"bench/throw_always", {str}}, bench_throw_always,
           "throws its argument as an error"});
  reg.add({"bench/crash", {"bench/crash", {i32}}, bench_crash,
           "aborts or exits by mode for fault injection"});
}

}  // namespace microfuzz
