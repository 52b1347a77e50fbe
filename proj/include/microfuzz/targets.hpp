#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "microfuzz/value.hpp"

namespace microfuzz {

struct TraceEvent {
  enum class Kind { Invoke, Return };
  uint64_t seq = 0;
  Kind kind = Kind::Invoke;
  std::string target;
  std::vector<nlohmann::json> params;
  std::optional<uint64_t> object_id;

  nlohmann::json to_json() const;
};

struct Trace {
  std::vector<TraceEvent> events;
  std::optional<std::string> error;
  bool truncated = false;

  // Invoke count minus Return count for one target; zero in a balanced trace.
  long balance(const std::string& target) const;
  std::string to_jsonl() const;
};

// Thrown by tracing hooks when the event cap is reached; unwinds out of the
// traced target and is absorbed by trace_call. Deliberately not derived from
// std::exception so target-level catch blocks cannot swallow it.
struct TraceTruncated {};

// Single-producer event sink. Composite values are interned: the first
// sighting emits a constructor Invoke/Return pair carrying a fresh object id,
// and later references reuse the id, so every id is resolvable to its
// constructor event earlier in the stream.
class Tracer {
 public:
  explicit Tracer(size_t max_events) : max_events_(max_events) {}

  // Literal for primitives and Null, {"@obj": id} for arrays and objects.
  nlohmann::json param_for(const Value& v);
  void invoke(const std::string& target, std::vector<nlohmann::json> params,
              std::optional<uint64_t> object_id = {});
  void ret(const std::string& target, std::vector<nlohmann::json> params = {},
           std::optional<uint64_t> object_id = {});

  Trace take();

 private:
  uint64_t intern(const Value& v);
  void push(TraceEvent ev);

  size_t max_events_;
  uint64_t next_seq_ = 0;
  uint64_t next_id_ = 1;
  std::map<const Value*, uint64_t> ids_;
  Trace trace_;
};

class TargetRegistry;
class Harness;

// Handed to every target invocation. Nested calls to registered targets must
// go through call() so gating and tracing observe them; enter/leave mark
// corpus-internal subroutine boundaries and are no-ops when tracing is off.
class CallContext {
 public:
  ValuePtr call(const std::string& target, const std::vector<ValuePtr>& args);
  void enter(std::string_view fn, std::vector<nlohmann::json> params = {});
  void leave(std::string_view fn);
  bool tracing() const;
  nlohmann::json param(const Value& v);

 private:
  friend class Harness;
  explicit CallContext(Harness* h) : h_(h) {}
  Harness* h_;
};

using TargetFn =
    std::function<ValuePtr(CallContext&, const std::vector<ValuePtr>&)>;

struct TargetEntry {
  std::string id;
  SignatureDescriptor sig;
  TargetFn fn;
  std::string notes;
};

class TargetRegistry {
 public:
  DescriptorRegistry& types() { return types_; }
  const DescriptorRegistry& types() const { return types_; }

  void add(TargetEntry entry);
  bool has(const std::string& id) const;
  const TargetEntry& get(const std::string& id) const;
  // Target ids in lexicographic order.
  std::vector<std::string> ids() const;
  size_t size() const { return targets_.size(); }

  nlohmann::json manifest() const;

 private:
  DescriptorRegistry types_;
  std::map<std::string, TargetEntry> targets_;
};

}  // namespace microfuzz
