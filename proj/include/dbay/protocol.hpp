#pragma once

// D-Bay agent: a single-threaded reactive state machine. Sampling is a nested Bayesian
// optimization along the pseudo-tree: a sample message from the parent opens a budgeted
// loop; every own sample is pushed to the children, whose best utilities come back as
// utility messages. After the root's loop, final messages fix the assignment top-down.

#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "dbay/acquisition.hpp"
#include "dbay/bayes_opt.hpp"
#include "dbay/dcop.hpp"
#include "dbay/error.hpp"
#include "dbay/gp.hpp"
#include "dbay/pseudo_tree.hpp"

namespace dbay {

/// Tentative values of the sender and all its ancestors, by agent id.
struct SampleMessage {
  std::map<AgentId, double> samples;
  friend bool operator==(const SampleMessage&, const SampleMessage&) = default;
};

/// Best aggregate utility of the sender's subtree for the sample it was given.
struct UtilityMessage {
  double utility = 0.0;
  friend bool operator==(const UtilityMessage&, const UtilityMessage&) = default;
};

/// Final assignments of the sender and its ancestors.
struct FinalMessage {
  std::map<AgentId, double> assignments;
  friend bool operator==(const FinalMessage&, const FinalMessage&) = default;
};

using Payload = std::variant<SampleMessage, UtilityMessage, FinalMessage>;

enum class MessageKind { sample = 0, utility = 1, final_assignment = 2 };

inline MessageKind kind_of(const Payload& p) noexcept { return static_cast<MessageKind>(p.index()); }

inline const char* to_string(MessageKind k) noexcept {
  switch (k) {
    case MessageKind::sample: return "sample";
    case MessageKind::utility: return "utility";
    case MessageKind::final_assignment: return "final";
  }
  return "?";
}

/// Sending side of the transport.
class Outbox {
 public:
  virtual ~Outbox() = default;
  virtual void send(AgentId from, AgentId to, Payload payload) = 0;
};

/// Acquisition-driven sampling: three bootstrap inputs, then argmax expected improvement.
struct BayesianSampling {
  AcquisitionParams params;
};

/// Equidistant inputs j/(points-1), j = 0..points-1, in ascending order (midpoint if points == 1).
struct GridSampling {
  std::size_t points = 2;
};

using SamplingStrategy = std::variant<BayesianSampling, GridSampling>;

enum class KeyPolicy {
  separator,       // key on ancestors that reach this agent's subtree through some function
  full_ancestors,  // key on every ancestor value carried by the sample message
};

enum class LipschitzCheck { off, leaves, all };

struct AgentSettings {
  std::size_t budget = 10;  // samples per received sample message
  SamplingStrategy sampling = BayesianSampling{};
  KeyPolicy key_policy = KeyPolicy::separator;
  LipschitzCheck lipschitz_check = LipschitzCheck::leaves;
  std::optional<double> lipschitz;  // normalized override
};

/// Quantized map key: ancestor values rounded to 12 decimal digits.
using SampleKey = std::vector<std::pair<AgentId, std::int64_t>>;

inline std::int64_t quantize(double v) noexcept {
  const double scaled = v * 1e12;
  if (std::abs(scaled) < 9.0e18) return std::llround(scaled);
  return std::bit_cast<std::int64_t>(v);
}

/// L_i for the acquisition kernel: sum over functions involving the agent's variable of
/// their slope bound in that variable, scaled to the normalized domain.
inline double agent_lipschitz(const DcopInstance& instance, AgentId agent) {
  const VariableId v = instance.variable_of(agent);
  double total = 0.0;
  for (const auto& f : instance.functions()) total += f.lipschitz_for(v);
  return total * instance.domain(v).width();
}

class Agent {
 public:
  struct Session {
    ObservationSet observations;
    AcquisitionCache cache;
    std::map<std::int64_t, double> utilities;  // own sample (quantized) -> utility
    bool complete = false;
  };

  Agent(const DcopInstance& instance, const PseudoTree& tree, AgentId id, AgentSettings settings)
      : instance_(&instance),
        id_(id),
        variable_(instance.variable_of(id)),
        domain_(instance.domain(variable_)),
        node_(tree.node(id)),
        settings_(std::move(settings)) {
    functions_ = tree.functions_of(id);
    lipschitz_ = settings_.lipschitz.value_or(agent_lipschitz(instance, id));
    if (lipschitz_ > 0.0) kernel_.emplace(lipschitz_);
    if (settings_.key_policy == KeyPolicy::separator) {
      key_agents_ = node_.separator;
    } else {
      key_agents_ = tree.ancestors(id);
      std::sort(key_agents_.begin(), key_agents_.end());
    }
    if (settings_.budget == 0) throw Error(Errc::invalid_instance, "budget must be positive", id);
  }

  AgentId id() const noexcept { return id_; }
  bool is_root() const noexcept { return !node_.parent.has_value(); }
  bool is_leaf() const noexcept { return node_.children.empty(); }
  double lipschitz() const noexcept { return lipschitz_; }
  const std::vector<AgentId>& key_agents() const noexcept { return key_agents_; }
  const std::map<SampleKey, Session>& sessions() const noexcept { return sessions_; }
  std::optional<double> assignment() const noexcept { return assignment_; }
  std::size_t samples_taken() const noexcept { return samples_taken_; }
  std::size_t utility_evaluations() const noexcept { return utility_evaluations_; }
  bool busy() const noexcept { return active_.has_value(); }

  /// Largest number of samples one session may take.
  std::size_t effective_budget() const noexcept {
    if (!kernel_ && std::holds_alternative<BayesianSampling>(settings_.sampling)) return 1;
    if (const auto* grid = std::get_if<GridSampling>(&settings_.sampling)) {
      return std::min(settings_.budget, grid->points);
    }
    return settings_.budget;
  }

  SampleKey key_for(const std::map<AgentId, double>& values) const {
    SampleKey key;
    key.reserve(key_agents_.size());
    for (AgentId a : key_agents_) {
      auto it = values.find(a);
      if (it == values.end()) {
        throw Error(Errc::missing_ancestor_sample,
                    "no value for ancestor " + std::to_string(a) + " in incoming message", id_);
      }
      key.emplace_back(a, quantize(it->second));
    }
    return key;
  }

  const ObservationSet* observations_for(const std::map<AgentId, double>& ancestor_values) const {
    auto it = sessions_.find(key_for(ancestor_values));
    return it == sessions_.end() ? nullptr : &it->second.observations;
  }

  // --- event handlers -------------------------------------------------------------------

  /// Root entry point: runs the budgeted loop and, once it ends, the final phase.
  void run_root(Outbox& out) {
    if (!is_root()) throw Error(Errc::invalid_route, "run_root on a non-root agent", id_);
    open_session(SampleMessage{});
    drive(out);
  }

  void on_sample(AgentId from, const SampleMessage& msg, Outbox& out) {
    if (node_.parent != from) throw Error(Errc::invalid_route, "sample from non-parent", id_);
    if (active_) throw Error(Errc::invalid_route, "sample while a session is open", id_);
    Session& session = open_session(msg);
    if (session.complete) {
      // Replay: identical parent samples get identical replies.
      const double best = session.observations.incumbent().y;
      active_.reset();
      out.send(id_, *node_.parent, UtilityMessage{best});
      return;
    }
    drive(out);
  }

  void on_utility(AgentId from, const UtilityMessage& msg, Outbox& out) {
    if (!active_ || !active_->pending_sample) {
      throw Error(Errc::invalid_route, "unexpected utility message", id_);
    }
    auto& it = *active_;
    auto slot = std::find(node_.children.begin(), node_.children.end(), from);
    if (slot == node_.children.end()) throw Error(Errc::invalid_route, "utility from non-child", id_);
    const auto idx = static_cast<std::size_t>(slot - node_.children.begin());
    if (it.replied[idx]) throw Error(Errc::invalid_route, "duplicate utility reply", id_);
    it.replied[idx] = 1;
    it.child_replies[idx] = msg.utility;
    if (--it.pending_children > 0) return;
    record(aggregate_child_utility(it.child_replies));
    drive(out);
  }

  void on_final(AgentId from, const FinalMessage& msg, Outbox& out) {
    if (node_.parent != from) throw Error(Errc::invalid_route, "final from non-parent", id_);
    process_final(msg, out);
  }

  // --- protocol functions ---------------------------------------------------------------

  /// One iteration of the local loop: choose the next own sample for the session opened by
  /// `parent_sample` and evaluate it. Returns the utility when no children are involved;
  /// otherwise sample messages were sent and the result arrives through on_utility.
  std::optional<UtilityMessage> optimize_local_variables(Outbox& out) {
    if (!active_) throw Error(Errc::invalid_route, "no open session", id_);
    Session& session = *active_->session;
    if (session.complete || session.observations.size() >= effective_budget()) {
      throw Error(Errc::budget_exhausted, "session budget used", id_);
    }
    const auto unit = next_input(session);
    if (!unit) {
      session.complete = true;
      throw Error(Errc::budget_exhausted, "search region empty", id_);
    }
    SampleMessage own = active_->parent;
    own.samples[id_] = domain_.from_unit(*unit);
    active_->pending_unit = *unit;
    if (auto cached = session.utilities.find(quantize(own.samples[id_]));
        cached != session.utilities.end()) {
      active_->pending_sample = own;
      const double y = cached->second;
      record(y);
      return UtilityMessage{y};
    }
    active_->pending_sample = own;
    return calculate_utility(own, out);
  }

  /// Local aggregate over F_i with ancestor samples substituted; joined with the children's
  /// best replies when children exist (then resolved asynchronously).
  std::optional<UtilityMessage> calculate_utility(const SampleMessage& own_sample, Outbox& out) {
    const double local = local_utility(own_sample);
    ++utility_evaluations_;
    if (!is_leaf()) {
      active_->local = local;
      get_child_utility(own_sample, out);
      return std::nullopt;
    }
    record(local);
    return UtilityMessage{local};
  }

  double local_utility(const SampleMessage& own_sample) const {
    double total = identity(instance_->op());
    Assignment partial(instance_->variable_count());
    for (const auto& [agent, value] : own_sample.samples) {
      partial.set(instance_->variable_of(agent), value);
    }
    for (std::size_t k : functions_) {
      const auto& f = instance_->function(k);
      for (VariableId v : f.scope) {
        if (!partial.has(v)) {
          throw Error(Errc::missing_ancestor_sample,
                      "function " + std::to_string(k) + " needs agent " +
                          std::to_string(instance_->agent_of(v)),
                      id_);
        }
      }
      total = combine(instance_->op(), total, evaluate_function(f, partial));
    }
    return total;
  }

  /// Sends the own sample message to every child; replies are joined by on_utility.
  void get_child_utility(const SampleMessage& own_sample, Outbox& out) {
    auto& it = *active_;
    it.pending_children = node_.children.size();
    it.child_replies.assign(node_.children.size(), 0.0);
    it.replied.assign(node_.children.size(), 0);
    for (AgentId c : node_.children) out.send(id_, c, own_sample);
  }

  double aggregate_child_utility(const std::vector<double>& replies) const {
    double agg = identity(instance_->op());
    for (double r : replies) agg = combine(instance_->op(), agg, r);
    return combine(instance_->op(), active_->local, agg);
  }

  /// Fixes the own assignment to the incumbent of the session the ancestors' final values
  /// select, and forwards the grown final message.
  FinalMessage process_final(const FinalMessage& parent_final, Outbox& out) {
    auto it = sessions_.find(key_for(parent_final.assignments));
    if (it == sessions_.end() || it->second.observations.empty()) {
      throw Error(Errc::unknown_parent_sample, "final assignment was never sampled", id_);
    }
    const double value = domain_.from_unit(it->second.observations.incumbent().x);
    assignment_ = value;
    FinalMessage next = parent_final;
    next.assignments[id_] = value;
    for (AgentId c : node_.children) out.send(id_, c, next);
    return next;
  }

  /// Incumbent utility of the root's own loop.
  double best_utility() const {
    auto it = sessions_.find(SampleKey{});
    if (it == sessions_.end()) throw Error(Errc::insufficient_observations, "no root session", id_);
    return it->second.observations.incumbent().y;
  }

 private:
  struct Active {
    SampleMessage parent;
    Session* session = nullptr;
    std::optional<SampleMessage> pending_sample;
    double pending_unit = 0.0;
    double local = 0.0;
    std::size_t pending_children = 0;
    std::vector<double> child_replies;
    std::vector<char> replied;
  };

  Session& open_session(const SampleMessage& parent) {
    Session& session = sessions_[key_for(parent.samples)];
    active_ = Active{};
    active_->parent = parent;
    active_->session = &session;
    return session;
  }

  void drive(Outbox& out) {
    while (active_) {
      Session& session = *active_->session;
      if (session.complete || session.observations.size() >= effective_budget()) {
        finish(out);
        return;
      }
      std::optional<UtilityMessage> reply;
      try {
        reply = optimize_local_variables(out);
      } catch (const Error& e) {
        if (e.code() != Errc::budget_exhausted) throw;
        finish(out);
        return;
      }
      if (!reply) return;  // waiting on children
    }
  }

  std::optional<double> next_input(Session& session) const {
    const auto& obs = session.observations;
    const std::size_t n = obs.size();
    if (const auto* grid = std::get_if<GridSampling>(&settings_.sampling)) {
      if (n >= grid->points) return std::nullopt;
      return grid_unit(n, grid->points);
    }
    if (n < kBootstrapInputs.size()) return kBootstrapInputs[n];
    const auto& params = std::get<BayesianSampling>(settings_.sampling).params;
    try {
      const double x = select_next_sample(obs, *kernel_, params, &session.cache);
      if (obs.contains(x)) return std::nullopt;
      return x;
    } catch (const Error& e) {
      if (e.code() == Errc::converged_flat) return std::nullopt;
      throw;
    }
  }

  void record(double y) {
    auto& it = *active_;
    Session& session = *it.session;
    const std::size_t idx = session.observations.insert(it.pending_unit, y);
    session.utilities[quantize(it.pending_sample->samples.at(id_))] = y;
    ++samples_taken_;
    it.pending_sample.reset();
    const bool check = settings_.lipschitz_check == LipschitzCheck::all ||
                       (settings_.lipschitz_check == LipschitzCheck::leaves && is_leaf());
    if (check && kernel_) {
      const auto& e = session.observations.entries();
      const LipschitzModel lip{lipschitz_};
      try {
        if (idx > 0) critical_point(e[idx - 1], e[idx], lip);
        if (idx + 1 < e.size()) critical_point(e[idx], e[idx + 1], lip);
      } catch (const Error& err) {
        throw Error(err.code(), err.message(), id_);
      }
    }
  }

  void finish(Outbox& out) {
    Session& session = *active_->session;
    session.complete = true;
    const Observation best = session.observations.incumbent();
    active_.reset();
    if (is_root()) {
      process_final(FinalMessage{}, out);
    } else {
      out.send(id_, *node_.parent, UtilityMessage{best.y});
    }
  }

  const DcopInstance* instance_;
  AgentId id_;
  VariableId variable_;
  ContinuousDomain domain_;
  TreeNode node_;
  AgentSettings settings_;
  std::vector<std::size_t> functions_;
  double lipschitz_ = 0.0;
  std::optional<DirichletKernel> kernel_;
  std::vector<AgentId> key_agents_;
  std::map<SampleKey, Session> sessions_;
  std::optional<Active> active_;
  std::optional<double> assignment_;
  std::size_t samples_taken_ = 0;
  std::size_t utility_evaluations_ = 0;
};

}  // namespace dbay
