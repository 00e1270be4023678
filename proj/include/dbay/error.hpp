#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dbay {

enum class Errc {
  invalid_instance,
  disconnected_graph,
  scope_not_on_branch,
  incomplete_assignment,
  out_of_domain,
  duplicate_input,
  insufficient_observations,
  singular_gramian,
  zero_lipschitz,
  lipschitz_violated,
  converged_flat,
  budget_exhausted,
  missing_ancestor_sample,
  child_timeout,
  unknown_parent_sample,
  unknown_recipient,
  invalid_route,
  cap_exceeded,
  grid_mismatch,
  separator_too_large,
  zero_reference,
  parse_error,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_instance: return "InvalidInstance";
    case Errc::disconnected_graph: return "DisconnectedGraph";
    case Errc::scope_not_on_branch: return "ScopeNotOnBranch";
    case Errc::incomplete_assignment: return "IncompleteAssignment";
    case Errc::out_of_domain: return "OutOfDomain";
    case Errc::duplicate_input: return "DuplicateInput";
    case Errc::insufficient_observations: return "InsufficientObservations";
    case Errc::singular_gramian: return "SingularGramian";
    case Errc::zero_lipschitz: return "ZeroLipschitz";
    case Errc::lipschitz_violated: return "LipschitzViolated";
    case Errc::converged_flat: return "ConvergedFlat";
    case Errc::budget_exhausted: return "BudgetExhausted";
    case Errc::missing_ancestor_sample: return "MissingAncestorSample";
    case Errc::child_timeout: return "ChildTimeout";
    case Errc::unknown_parent_sample: return "UnknownParentSample";
    case Errc::unknown_recipient: return "UnknownRecipient";
    case Errc::invalid_route: return "InvalidRoute";
    case Errc::cap_exceeded: return "CapExceeded";
    case Errc::grid_mismatch: return "GridMismatch";
    case Errc::separator_too_large: return "SeparatorTooLarge";
    case Errc::zero_reference: return "ZeroReference";
    case Errc::parse_error: return "ParseError";
  }
  return "Unknown";
}

/// Library module that raises the code.
constexpr std::string_view module_of(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_instance:
    case Errc::disconnected_graph:
    case Errc::scope_not_on_branch:
    case Errc::incomplete_assignment:
    case Errc::out_of_domain: return "dcop-core";
    case Errc::duplicate_input:
    case Errc::insufficient_observations:
    case Errc::singular_gramian: return "gp-markov";
    case Errc::zero_lipschitz:
    case Errc::lipschitz_violated:
    case Errc::converged_flat: return "acquisition";
    case Errc::budget_exhausted:
    case Errc::missing_ancestor_sample:
    case Errc::child_timeout:
    case Errc::unknown_parent_sample: return "dbay-protocol";
    case Errc::unknown_recipient:
    case Errc::invalid_route: return "runtime";
    case Errc::cap_exceeded:
    case Errc::grid_mismatch:
    case Errc::separator_too_large: return "baselines";
    case Errc::zero_reference: return "benchmark";
    case Errc::parse_error: return "cli";
  }
  return "unknown";
}

/// Every failure raised by the library. Carries a machine-readable code and,
/// when raised inside the simulator, the id of the agent that failed.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), message_(what) {}

  Error(Errc code, const std::string& what, std::size_t agent)
      : std::runtime_error(std::string(to_string(code)) + " (agent " + std::to_string(agent) +
                           "): " + what),
        code_(code),
        agent_(agent),
        message_(what) {}

  Errc code() const noexcept { return code_; }
  std::optional<std::size_t> agent() const noexcept { return agent_; }
  /// Description without the code/agent prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  Errc code_;
  std::optional<std::size_t> agent_;
  std::string message_;
};

}  // namespace dbay
