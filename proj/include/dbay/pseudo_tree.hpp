#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dbay/dcop.hpp"
#include "dbay/error.hpp"

namespace dbay {

/// Undirected constraint graph over agents. Edges are stored as (low, high) pairs,
/// sorted lexicographically; adjacency lists are ascending.
struct ConstraintGraph {
  std::size_t agent_count = 0;
  std::vector<std::pair<AgentId, AgentId>> edges;
  std::vector<std::vector<AgentId>> adjacency;

  static ConstraintGraph from_edges(std::size_t agents,
                                    std::vector<std::pair<AgentId, AgentId>> edge_list) {
    ConstraintGraph g;
    g.agent_count = agents;
    for (auto& [a, b] : edge_list) {
      if (a == b || a >= agents || b >= agents) {
        throw Error(Errc::invalid_instance, "bad graph edge");
      }
      if (a > b) std::swap(a, b);
    }
    std::sort(edge_list.begin(), edge_list.end());
    edge_list.erase(std::unique(edge_list.begin(), edge_list.end()), edge_list.end());
    g.edges = std::move(edge_list);
    g.adjacency.assign(agents, {});
    for (const auto& [a, b] : g.edges) {
      g.adjacency[a].push_back(b);
      g.adjacency[b].push_back(a);
    }
    for (auto& adj : g.adjacency) std::sort(adj.begin(), adj.end());
    return g;
  }

  bool connected(AgentId a, AgentId b) const {
    const auto& adj = adjacency.at(a);
    return std::binary_search(adj.begin(), adj.end(), b);
  }
};

inline ConstraintGraph build_constraint_graph(const DcopInstance& instance) {
  std::vector<std::pair<AgentId, AgentId>> edges;
  for (const auto& f : instance.functions()) {
    for (std::size_t i = 0; i < f.scope.size(); ++i) {
      for (std::size_t j = i + 1; j < f.scope.size(); ++j) {
        edges.emplace_back(instance.agent_of(f.scope[i]), instance.agent_of(f.scope[j]));
      }
    }
  }
  return ConstraintGraph::from_edges(instance.agent_count(), std::move(edges));
}

struct TreeNode {
  std::optional<AgentId> parent;
  std::vector<AgentId> pseudo_parents;
  std::vector<AgentId> children;
  std::vector<AgentId> pseudo_children;
  std::vector<std::size_t> local_functions;
  std::vector<std::size_t> shared_functions;
  /// Ancestors referenced by functions allocated anywhere in this agent's subtree.
  std::vector<AgentId> separator;
  std::size_t depth = 0;
  AgentId root = 0;
};

struct FunctionAllocation {
  std::vector<std::vector<std::size_t>> local;
  std::vector<std::vector<std::size_t>> shared;
};

/// DFS pseudo-tree (or pseudo-forest when built per connected component).
class PseudoTree {
 public:
  PseudoTree() = default;
  explicit PseudoTree(std::size_t agents) : nodes_(agents) {}

  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<AgentId>& roots() const noexcept { return roots_; }
  AgentId root() const {
    if (roots_.size() != 1) throw Error(Errc::disconnected_graph, "pseudo-forest has several roots");
    return roots_.front();
  }
  const TreeNode& node(AgentId a) const { return nodes_.at(a); }
  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  /// DFS visiting order, component by component.
  const std::vector<AgentId>& preorder() const noexcept { return preorder_; }

  bool is_root(AgentId a) const { return !nodes_.at(a).parent.has_value(); }
  bool is_leaf(AgentId a) const { return nodes_.at(a).children.empty(); }

  /// True when `ancestor` lies strictly above `a` on its tree path.
  bool is_ancestor(AgentId ancestor, AgentId a) const {
    auto p = nodes_.at(a).parent;
    while (p) {
      if (*p == ancestor) return true;
      p = nodes_[*p].parent;
    }
    return false;
  }

  /// Path from the parent of `a` up to its root.
  std::vector<AgentId> ancestors(AgentId a) const {
    std::vector<AgentId> out;
    for (auto p = nodes_.at(a).parent; p; p = nodes_[*p].parent) out.push_back(*p);
    return out;
  }

  /// All functions held by the agent (local and shared), sorted by id.
  std::vector<std::size_t> functions_of(AgentId a) const {
    const auto& n = nodes_.at(a);
    std::vector<std::size_t> all = n.local_functions;
    all.insert(all.end(), n.shared_functions.begin(), n.shared_functions.end());
    std::sort(all.begin(), all.end());
    return all;
  }

  /// Attach function sets and derive separators bottom-up.
  void assign(const DcopInstance& instance, const FunctionAllocation& alloc) {
    for (AgentId a = 0; a < nodes_.size(); ++a) {
      nodes_[a].local_functions = alloc.local.at(a);
      nodes_[a].shared_functions = alloc.shared.at(a);
      nodes_[a].separator.clear();
    }
    for (auto it = preorder_.rbegin(); it != preorder_.rend(); ++it) {
      const AgentId a = *it;
      auto& n = nodes_[a];
      std::vector<AgentId> sep;
      for (std::size_t k : functions_of(a)) {
        for (VariableId v : instance.function(k).scope) sep.push_back(instance.agent_of(v));
      }
      for (AgentId c : n.children) {
        sep.insert(sep.end(), nodes_[c].separator.begin(), nodes_[c].separator.end());
      }
      std::sort(sep.begin(), sep.end());
      sep.erase(std::unique(sep.begin(), sep.end()), sep.end());
      sep.erase(std::remove(sep.begin(), sep.end(), a), sep.end());
      n.separator = std::move(sep);
    }
  }

  friend bool operator==(const PseudoTree& lhs, const PseudoTree& rhs) {
    if (lhs.roots_ != rhs.roots_ || lhs.preorder_ != rhs.preorder_) return false;
    for (std::size_t a = 0; a < lhs.nodes_.size(); ++a) {
      const auto& x = lhs.nodes_[a];
      const auto& y = rhs.nodes_[a];
      if (x.parent != y.parent || x.pseudo_parents != y.pseudo_parents ||
          x.children != y.children || x.pseudo_children != y.pseudo_children ||
          x.local_functions != y.local_functions || x.shared_functions != y.shared_functions ||
          x.separator != y.separator || x.depth != y.depth || x.root != y.root) {
        return false;
      }
    }
    return lhs.nodes_.size() == rhs.nodes_.size();
  }

  /// Iterative DFS from `root`, neighbors in ascending index order. Used by the builders.
  void grow_from(const ConstraintGraph& g, AgentId root, std::vector<char>& visited) {
    roots_.push_back(root);
    std::vector<char> on_path(g.agent_count, 0);
    struct Frame {
      AgentId agent;
      std::size_t next;
    };
    std::vector<Frame> stack;
    visited[root] = 1;
    on_path[root] = 1;
    nodes_[root].depth = 0;
    nodes_[root].root = root;
    preorder_.push_back(root);
    stack.push_back({root, 0});
    while (!stack.empty()) {
      auto& top = stack.back();
      const AgentId u = top.agent;
      const auto& adj = g.adjacency[u];
      if (top.next == adj.size()) {
        on_path[u] = 0;
        stack.pop_back();
        continue;
      }
      const AgentId v = adj[top.next++];
      if (!visited[v]) {
        visited[v] = 1;
        on_path[v] = 1;
        nodes_[v].parent = u;
        nodes_[v].depth = nodes_[u].depth + 1;
        nodes_[v].root = root;
        nodes_[u].children.push_back(v);
        preorder_.push_back(v);
        stack.push_back({v, 0});
      } else if (on_path[v] && nodes_[u].parent != v) {
        nodes_[u].pseudo_parents.push_back(v);
        nodes_[v].pseudo_children.push_back(u);
      }
    }
    for (auto& n : nodes_) {
      std::sort(n.pseudo_children.begin(), n.pseudo_children.end());
      std::sort(n.pseudo_parents.begin(), n.pseudo_parents.end());
    }
  }

 private:
  std::vector<TreeNode> nodes_;
  std::vector<AgentId> roots_;
  std::vector<AgentId> preorder_;
};

/// DFS pseudo-tree rooted at `root`. The graph must be connected.
inline PseudoTree build_pseudo_tree(const ConstraintGraph& graph, AgentId root) {
  if (root >= graph.agent_count) throw Error(Errc::invalid_instance, "root agent does not exist");
  PseudoTree tree(graph.agent_count);
  std::vector<char> visited(graph.agent_count, 0);
  tree.grow_from(graph, root, visited);
  if (std::find(visited.begin(), visited.end(), 0) != visited.end()) {
    throw Error(Errc::disconnected_graph,
                "constraint graph is disconnected; solve its components separately");
  }
  return tree;
}

/// One DFS tree per connected component, each rooted at its lowest agent index.
inline PseudoTree build_pseudo_forest(const ConstraintGraph& graph) {
  PseudoTree tree(graph.agent_count);
  std::vector<char> visited(graph.agent_count, 0);
  for (AgentId a = 0; a < graph.agent_count; ++a) {
    if (!visited[a]) tree.grow_from(graph, a, visited);
  }
  return tree;
}

/// Each function goes to the deepest agent of its scope; unary scopes are local.
inline FunctionAllocation allocate_functions(const DcopInstance& instance, const PseudoTree& tree) {
  FunctionAllocation alloc;
  alloc.local.assign(instance.agent_count(), {});
  alloc.shared.assign(instance.agent_count(), {});
  for (const auto& f : instance.functions()) {
    AgentId deepest = instance.agent_of(f.scope.front());
    for (VariableId v : f.scope) {
      const AgentId a = instance.agent_of(v);
      if (tree.node(a).depth > tree.node(deepest).depth) deepest = a;
    }
    for (VariableId v : f.scope) {
      const AgentId a = instance.agent_of(v);
      if (a != deepest && !tree.is_ancestor(a, deepest)) {
        throw Error(Errc::scope_not_on_branch,
                    "function " + std::to_string(f.id) + " spans several tree branches");
      }
    }
    (f.scope.size() == 1 ? alloc.local : alloc.shared)[deepest].push_back(f.id);
  }
  return alloc;
}

/// Graph, forest, function allocation and separators for an instance.
inline PseudoTree prepare_pseudo_tree(const DcopInstance& instance) {
  auto tree = build_pseudo_forest(build_constraint_graph(instance));
  tree.assign(instance, allocate_functions(instance, tree));
  return tree;
}

}  // namespace dbay
