#include "microfuzz/targets.hpp"

#include "microfuzz/errors.hpp"

namespace microfuzz {

nlohmann::json TraceEvent::to_json() const {
  nlohmann::json j = {
      {"seq", seq},
      {"kind", kind == Kind::Invoke ? "invoke" : "return"},
      {"target", target},
      {"params", params},
  };
  if (object_id.has_value()) j["object_id"] = *object_id;
  return j;
}

long Trace::balance(const std::string& target) const {
  long n = 0;
  for (const auto& ev : events) {
    if (ev.target != target) continue;
    n += ev.kind == TraceEvent::Kind::Invoke ? 1 : -1;
  }
  return n;
}

std::string Trace::to_jsonl() const {
  std::string out;
  for (const auto& ev : events) {
    out += ev.to_json().dump();
    out += '\n';
  }
  return out;
}

nlohmann::json Tracer::param_for(const Value& v) {
  switch (v.kind) {
    case Value::Kind::Arr:
    case Value::Kind::Obj:
      return nlohmann::json{{"@obj", intern(v)}};
    default:
      return value_to_json(v);
  }
}

uint64_t Tracer::intern(const Value& v) {
  auto it = ids_.find(&v);
  if (it != ids_.end()) return it->second;
  std::vector<nlohmann::json> params;
  if (v.kind == Value::Kind::Obj) {
    params.reserve(v.args.size());
    for (const auto& a : v.args) params.push_back(param_for(*a));
  } else {
    params.reserve(v.items.size());
    for (const auto& i : v.items) params.push_back(param_for(*i));
  }
  uint64_t id = next_id_++;
  ids_[&v] = id;
  std::string name =
      v.kind == Value::Kind::Obj ? "new/" + v.composite : "new/array";
  invoke(name, std::move(params), id);
  ret(name, {}, id);
  return id;
}

void Tracer::invoke(const std::string& target,
                    std::vector<nlohmann::json> params,
                    std::optional<uint64_t> object_id) {
  TraceEvent ev;
  ev.kind = TraceEvent::Kind::Invoke;
  ev.target = target;
  ev.params = std::move(params);
  ev.object_id = object_id;
  push(std::move(ev));
}

void Tracer::ret(const std::string& target, std::vector<nlohmann::json> params,
                 std::optional<uint64_t> object_id) {
  TraceEvent ev;
  ev.kind = TraceEvent::Kind::Return;
  ev.target = target;
  ev.params = std::move(params);
  ev.object_id = object_id;
  push(std::move(ev));
}

void Tracer::push(TraceEvent ev) {
  if (trace_.events.size() >= max_events_) {
    trace_.truncated = true;
    throw TraceTruncated{};
  }
  ev.seq = next_seq_++;
  trace_.events.push_back(std::move(ev));
}

Trace Tracer::take() { return std::move(trace_); }

void TargetRegistry::add(TargetEntry entry) {
  if (entry.id.empty()) throw ConfigError("target id must not be empty");
  if (targets_.count(entry.id))
    throw ConfigError("duplicate target id: " + entry.id);
  if (!entry.fn) throw ConfigError("target has no callable: " + entry.id);
  targets_.emplace(entry.id, std::move(entry));
}

bool TargetRegistry::has(const std::string& id) const {
  return targets_.count(id) > 0;
}

const TargetEntry& TargetRegistry::get(const std::string& id) const {
  auto it = targets_.find(id);
  if (it == targets_.end()) throw HarnessError("unregistered target: " + id);
  return it->second;
}

std::vector<std::string> TargetRegistry::ids() const {
  std::vector<std::string> out;
  out.reserve(targets_.size());
  for (const auto& [id, entry] : targets_) out.push_back(id);
  return out;
}

nlohmann::json TargetRegistry::manifest() const {
  nlohmann::json targets = nlohmann::json::array();
  for (const auto& [id, entry] : targets_) {
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : entry.sig.params) params.push_back(descriptor_to_json(*p));
    targets.push_back({{"id", id}, {"params", params}, {"notes", entry.notes}});
  }
  nlohmann::json types = types_.to_json();
  return {{"types", types}, {"targets", targets}};
}

}  // namespace microfuzz
