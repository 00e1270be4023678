#pragma once

// Deterministic single-threaded message bus that executes the protocol as a simulated
// distributed system: one global FIFO queue (hence FIFO per ordered pair), handlers run
// to completion before the next dispatch.

#include <nlohmann/json.hpp>

#include <array>
#include <bit>
#include <chrono>
#include <cstdint>
#include <deque>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dbay/dcop.hpp"
#include "dbay/error.hpp"
#include "dbay/protocol.hpp"
#include "dbay/pseudo_tree.hpp"

namespace dbay {

struct Envelope {
  std::uint64_t seq = 0;
  MessageKind kind = MessageKind::sample;
  AgentId from = 0;
  AgentId to = 0;
  Payload payload;
  friend bool operator==(const Envelope&, const Envelope&) = default;
};

// --- wire format ----------------------------------------------------------------------

inline nlohmann::json value_map_to_json(const std::map<AgentId, double>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [a, v] : m) j[std::to_string(a)] = v;
  return j;
}

inline std::map<AgentId, double> value_map_from_json(const nlohmann::json& j) {
  std::map<AgentId, double> m;
  for (const auto& [k, v] : j.items()) m[static_cast<AgentId>(std::stoull(k))] = v.get<double>();
  return m;
}

inline nlohmann::json to_json(const Envelope& e) {
  nlohmann::json j;
  j["seq"] = e.seq;
  j["kind"] = to_string(e.kind);
  j["from"] = e.from;
  j["to"] = e.to;
  if (const auto* s = std::get_if<SampleMessage>(&e.payload)) {
    j["payload"] = {{"samples", value_map_to_json(s->samples)}};
  } else if (const auto* u = std::get_if<UtilityMessage>(&e.payload)) {
    j["payload"] = {{"utility", u->utility}};
  } else {
    j["payload"] = {{"assignments", value_map_to_json(std::get<FinalMessage>(e.payload).assignments)}};
  }
  return j;
}

inline Envelope envelope_from_json(const nlohmann::json& j) {
  Envelope e;
  try {
    e.seq = j.at("seq").get<std::uint64_t>();
    e.from = j.at("from").get<AgentId>();
    e.to = j.at("to").get<AgentId>();
    const auto kind = j.at("kind").get<std::string>();
    const auto& p = j.at("payload");
    if (kind == "sample") {
      e.kind = MessageKind::sample;
      e.payload = SampleMessage{value_map_from_json(p.at("samples"))};
    } else if (kind == "utility") {
      e.kind = MessageKind::utility;
      e.payload = UtilityMessage{p.at("utility").get<double>()};
    } else if (kind == "final") {
      e.kind = MessageKind::final_assignment;
      e.payload = FinalMessage{value_map_from_json(p.at("assignments"))};
    } else {
      throw Error(Errc::parse_error, "unknown message kind '" + kind + "'");
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::parse_error, std::string("bad trace record: ") + ex.what());
  }
  return e;
}

/// Envelope log plus a running 64-bit digest over every dispatched message. Envelopes are
/// only retained when `keep_envelopes` is set; the digest is always maintained.
class Trace {
 public:
  nlohmann::json header = nlohmann::json::object();
  bool keep_envelopes = true;

  void append(const Envelope& e) {
    ++count_;
    mix(e.seq);
    mix(static_cast<std::uint64_t>(e.kind));
    mix(e.from);
    mix(e.to);
    std::visit([this](const auto& p) { mix_payload(p); }, e.payload);
    if (keep_envelopes) envelopes_.push_back(e);
  }

  const std::vector<Envelope>& envelopes() const noexcept { return envelopes_; }
  std::uint64_t size() const noexcept { return count_; }
  std::uint64_t digest() const noexcept { return digest_; }

  std::string digest_hex() const {
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << digest_;
    return os.str();
  }

  /// NDJSON: one header record, then one record per envelope.
  void write(std::ostream& os) const {
    nlohmann::json h = {{"trace", header}, {"messages", count_}, {"digest", digest_hex()}};
    os << h.dump() << '\n';
    for (const auto& e : envelopes_) os << to_json(e).dump() << '\n';
  }

  static Trace read(std::istream& is) {
    Trace t;
    std::string line;
    if (!std::getline(is, line)) throw Error(Errc::parse_error, "empty trace");
    nlohmann::json h;
    try {
      h = nlohmann::json::parse(line);
      t.header = h.at("trace");
    } catch (const nlohmann::json::exception& ex) {
      throw Error(Errc::parse_error, std::string("bad trace header: ") + ex.what());
    }
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      try {
        t.append(envelope_from_json(nlohmann::json::parse(line)));
      } catch (const nlohmann::json::exception& ex) {
        throw Error(Errc::parse_error, std::string("bad trace record: ") + ex.what());
      }
    }
    return t;
  }

  /// Index of the first differing envelope, or -1 when both logs are identical.
  static long long first_difference(const Trace& a, const Trace& b) {
    const auto& x = a.envelopes_;
    const auto& y = b.envelopes_;
    const std::size_t n = std::min(x.size(), y.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (!(x[i] == y[i])) return static_cast<long long>(i);
    }
    return x.size() == y.size() ? -1 : static_cast<long long>(n);
  }

 private:
  void mix(std::uint64_t v) {
    // FNV-1a over the 8 bytes of v.
    for (int i = 0; i < 8; ++i) {
      digest_ ^= (v >> (8 * i)) & 0xffu;
      digest_ *= 0x100000001b3ULL;
    }
  }
  void mix(double v) { mix(std::bit_cast<std::uint64_t>(v)); }
  void mix_map(const std::map<AgentId, double>& m) {
    mix(static_cast<std::uint64_t>(m.size()));
    for (const auto& [a, v] : m) {
      mix(static_cast<std::uint64_t>(a));
      mix(v);
    }
  }
  void mix_payload(const SampleMessage& p) { mix_map(p.samples); }
  void mix_payload(const UtilityMessage& p) { mix(p.utility); }
  void mix_payload(const FinalMessage& p) { mix_map(p.assignments); }

  std::vector<Envelope> envelopes_;
  std::uint64_t count_ = 0;
  std::uint64_t digest_ = 0xcbf29ce484222325ULL;
};

struct RunMetrics {
  std::vector<std::size_t> samples_per_agent;
  std::array<std::size_t, 3> messages_by_kind{};
  std::size_t utility_evaluations = 0;
  std::chrono::duration<double> wall_time{0.0};

  std::size_t total_samples() const noexcept {
    std::size_t s = 0;
    for (auto n : samples_per_agent) s += n;
    return s;
  }
  std::size_t total_messages() const noexcept {
    return messages_by_kind[0] + messages_by_kind[1] + messages_by_kind[2];
  }
  std::size_t messages(MessageKind k) const noexcept {
    return messages_by_kind[static_cast<std::size_t>(k)];
  }
};

/// Transport: validates routes and delivers in global send order.
class MessageBus final : public Outbox {
 public:
  MessageBus(const PseudoTree& tree, Trace& trace, RunMetrics& metrics)
      : tree_(&tree), trace_(&trace), metrics_(&metrics) {}

  void register_agent(Agent& agent) {
    if (agent.id() >= agents_.size()) agents_.resize(agent.id() + 1, nullptr);
    agents_[agent.id()] = &agent;
  }

  void send(AgentId from, AgentId to, Payload payload) override {
    if (to >= agents_.size() || agents_[to] == nullptr) {
      throw Error(Errc::unknown_recipient, "no agent " + std::to_string(to), from);
    }
    if (from == to) throw Error(Errc::invalid_route, "self-send", from);
    const auto& node = tree_->node(to);
    const bool tree_edge = node.parent == from || tree_->node(from).parent == to;
    if (!tree_edge) {
      throw Error(Errc::invalid_route,
                  "no tree edge " + std::to_string(from) + " -> " + std::to_string(to), from);
    }
    queue_.push_back(Envelope{next_seq_++, kind_of(payload), from, to, std::move(payload)});
  }

  /// Delivers until the queue is empty.
  void drain() {
    while (!queue_.empty()) {
      Envelope env = std::move(queue_.front());
      queue_.pop_front();
      trace_->append(env);
      ++metrics_->messages_by_kind[static_cast<std::size_t>(env.kind)];
      dispatch(env);
    }
  }

  std::size_t pending() const noexcept { return queue_.size(); }

 private:
  void dispatch(const Envelope& env) {
    Agent& agent = *agents_[env.to];
    try {
      switch (env.kind) {
        case MessageKind::sample:
          agent.on_sample(env.from, std::get<SampleMessage>(env.payload), *this);
          break;
        case MessageKind::utility:
          agent.on_utility(env.from, std::get<UtilityMessage>(env.payload), *this);
          break;
        case MessageKind::final_assignment:
          agent.on_final(env.from, std::get<FinalMessage>(env.payload), *this);
          break;
      }
    } catch (const Error& e) {
      if (e.agent()) throw;
      throw Error(e.code(), e.message(), env.to);
    }
  }

  const PseudoTree* tree_;
  Trace* trace_;
  RunMetrics* metrics_;
  std::vector<Agent*> agents_;
  std::deque<Envelope> queue_;
  std::uint64_t next_seq_ = 0;
};

struct RunSettings {
  AgentSettings defaults;
  std::map<AgentId, AgentSettings> overrides;  // per-agent budgets, Lipschitz constants, samplers
  bool keep_trace = true;

  const AgentSettings& for_agent(AgentId a) const {
    auto it = overrides.find(a);
    return it == overrides.end() ? defaults : it->second;
  }
};

struct RunResult {
  Assignment assignment;
  RunMetrics metrics;
  Trace trace;
  double utility = 0.0;                  // G(assignment)
  std::map<AgentId, double> root_best;  // best observed utility of each root's loop
};

/// Initialization, sampling and final phases for every tree of the forest, roots in
/// ascending order. Agent errors propagate with the owning agent id attached.
inline RunResult run_to_completion(const DcopInstance& instance, const PseudoTree& tree,
                                   const RunSettings& settings, std::uint64_t seed = 0) {
  const auto start = std::chrono::steady_clock::now();
  RunResult result;
  result.trace.keep_envelopes = settings.keep_trace;
  result.trace.header["seed"] = seed;
  result.trace.header["agents"] = instance.agent_count();
  std::vector<std::unique_ptr<Agent>> agents;
  agents.reserve(instance.agent_count());
  MessageBus bus(tree, result.trace, result.metrics);
  for (AgentId a = 0; a < instance.agent_count(); ++a) {
    agents.push_back(std::make_unique<Agent>(instance, tree, a, settings.for_agent(a)));
    bus.register_agent(*agents.back());
  }
  for (AgentId root : tree.roots()) {
    try {
      agents[root]->run_root(bus);
    } catch (const Error& e) {
      if (e.agent()) throw;
      throw Error(e.code(), e.message(), root);
    }
    bus.drain();
    result.root_best[root] = agents[root]->best_utility();
  }
  result.assignment = Assignment(instance.variable_count());
  result.metrics.samples_per_agent.resize(instance.agent_count());
  for (AgentId a = 0; a < instance.agent_count(); ++a) {
    const auto value = agents[a]->assignment();
    if (!value) throw Error(Errc::incomplete_assignment, "agent ended without an assignment", a);
    result.assignment.set(instance.variable_of(a), *value);
    result.metrics.samples_per_agent[a] = agents[a]->samples_taken();
    result.metrics.utility_evaluations += agents[a]->utility_evaluations();
  }
  result.utility = evaluate_objective(instance, result.assignment);
  result.metrics.wall_time = std::chrono::steady_clock::now() - start;
  return result;
}

}  // namespace dbay
