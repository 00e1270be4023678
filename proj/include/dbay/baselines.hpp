#pragma once

// Centralized grid baselines: equidistant discretization, exhaustive enumeration and DPOP
// (bottom-up utility tables, top-down value propagation). Both solvers return the
// lexicographically first grid assignment within `tie_tolerance` of the optimum, variables
// ranked by a shared priority order, so they agree exactly on assignments.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dbay/dcop.hpp"
#include "dbay/error.hpp"
#include "dbay/pseudo_tree.hpp"

namespace dbay {

/// Equidistant sample values per variable, endpoints included.
struct Grid {
  std::vector<std::vector<double>> values;

  static Grid equidistant(const DcopInstance& instance, std::vector<std::size_t> counts) {
    if (counts.size() != instance.variable_count()) {
      throw Error(Errc::invalid_instance, "grid needs one sample count per variable");
    }
    Grid g;
    g.values.resize(counts.size());
    for (VariableId v = 0; v < counts.size(); ++v) {
      if (counts[v] == 0) throw Error(Errc::invalid_instance, "grid sample count must be positive");
      const auto& d = instance.domain(v);
      g.values[v].resize(counts[v]);
      for (std::size_t j = 0; j < counts[v]; ++j) g.values[v][j] = d.from_unit(grid_unit(j, counts[v]));
    }
    return g;
  }

  static Grid equidistant(const DcopInstance& instance, std::size_t k) {
    return equidistant(instance, std::vector<std::size_t>(instance.variable_count(), k));
  }

  std::size_t size(VariableId v) const { return values.at(v).size(); }
  double value(VariableId v, std::size_t j) const { return values.at(v).at(j); }
};

/// Dense table over grid indices of its scope; first scope variable is the outermost axis.
struct UtilityTable {
  std::vector<VariableId> scope;
  std::vector<std::vector<double>> axes;  // grid values per scope entry
  std::vector<double> values;

  static UtilityTable scalar(double v) {
    UtilityTable t;
    t.values = {v};
    return t;
  }

  std::size_t cells() const noexcept { return values.size(); }
  std::size_t extent(std::size_t axis) const { return axes.at(axis).size(); }

  std::vector<std::size_t> strides() const {
    std::vector<std::size_t> s(scope.size(), 1);
    for (std::size_t a = scope.size(); a-- > 1;) s[a - 1] = s[a] * axes[a].size();
    return s;
  }

  double at(std::span<const std::size_t> index) const {
    const auto s = strides();
    std::size_t off = 0;
    for (std::size_t a = 0; a < scope.size(); ++a) off += index[a] * s[a];
    return values.at(off);
  }

  std::optional<std::size_t> axis_of(VariableId v) const {
    for (std::size_t a = 0; a < scope.size(); ++a) {
      if (scope[a] == v) return a;
    }
    return std::nullopt;
  }
};

namespace detail {

inline bool next_index(std::vector<std::size_t>& idx, const std::vector<std::size_t>& extents) {
  for (std::size_t a = idx.size(); a-- > 0;) {
    if (++idx[a] < extents[a]) return true;
    idx[a] = 0;
  }
  return false;
}

inline std::size_t checked_product(const std::vector<std::size_t>& extents, std::size_t cap,
                                   bool& over) {
  std::size_t p = 1;
  over = false;
  for (auto e : extents) {
    if (e != 0 && p > cap / e) {
      over = true;
      return cap;
    }
    p *= e;
  }
  if (p > cap) over = true;
  return p;
}

}  // namespace detail

/// Function values on the grid of its scope.
inline UtilityTable tabulate(const UtilityFunction& f, const Grid& grid) {
  UtilityTable t;
  t.scope = f.scope;
  std::vector<std::size_t> extents;
  for (VariableId v : f.scope) {
    t.axes.push_back(grid.values.at(v));
    extents.push_back(grid.size(v));
  }
  std::size_t cells = 1;
  for (auto e : extents) cells *= e;
  t.values.resize(cells);
  std::vector<std::size_t> idx(f.scope.size(), 0);
  std::vector<double> args(f.scope.size());
  std::size_t c = 0;
  do {
    for (std::size_t a = 0; a < idx.size(); ++a) args[a] = t.axes[a][idx[a]];
    t.values[c++] = f(args);
  } while (detail::next_index(idx, extents));
  return t;
}

/// Union-scope table, each cell op(aligned cells). Shared variables must use identical grids.
inline UtilityTable dpop_join(const UtilityTable& t1, const UtilityTable& t2, Aggregation op) {
  UtilityTable out;
  out.scope = t1.scope;
  out.axes = t1.axes;
  for (std::size_t a = 0; a < t2.scope.size(); ++a) {
    if (auto b = t1.axis_of(t2.scope[a])) {
      if (t1.axes[*b] != t2.axes[a]) {
        throw Error(Errc::grid_mismatch,
                    "variable " + std::to_string(t2.scope[a]) + " sampled on different grids");
      }
    } else {
      out.scope.push_back(t2.scope[a]);
      out.axes.push_back(t2.axes[a]);
    }
  }
  std::vector<std::size_t> extents;
  std::size_t cells = 1;
  for (const auto& ax : out.axes) {
    extents.push_back(ax.size());
    cells *= ax.size();
  }
  out.values.resize(cells);
  // Strides of each input expressed on the output axes.
  auto project_strides = [&](const UtilityTable& t) {
    const auto s = t.strides();
    std::vector<std::size_t> r(out.scope.size(), 0);
    for (std::size_t a = 0; a < t.scope.size(); ++a) r[*out.axis_of(t.scope[a])] = s[a];
    return r;
  };
  const auto s1 = project_strides(t1);
  const auto s2 = project_strides(t2);
  std::vector<std::size_t> idx(out.scope.size(), 0);
  std::size_t c = 0;
  do {
    std::size_t o1 = 0, o2 = 0;
    for (std::size_t a = 0; a < idx.size(); ++a) {
      o1 += idx[a] * s1[a];
      o2 += idx[a] * s2[a];
    }
    out.values[c++] = combine(op, t1.values[o1], t2.values[o2]);
  } while (detail::next_index(idx, extents));
  return out;
}

struct Projection {
  UtilityTable table;
  std::vector<VariableId> projected;
  /// Per remaining cell, the grid indices of the projected variables (row of size
  /// projected.size()), lowest index tuple among ties.
  std::vector<std::size_t> argmax;

  std::span<const std::size_t> argmax_at(std::size_t cell) const {
    return {argmax.data() + cell * projected.size(), projected.size()};
  }
};

/// Maximizes out `vars`; remaining axes keep their order.
inline Projection dpop_project(const UtilityTable& t, const std::vector<VariableId>& vars) {
  Projection p;
  std::vector<std::size_t> keep_axes, drop_axes;
  for (std::size_t a = 0; a < t.scope.size(); ++a) {
    const bool drop = std::find(vars.begin(), vars.end(), t.scope[a]) != vars.end();
    (drop ? drop_axes : keep_axes).push_back(a);
  }
  for (VariableId v : vars) {
    if (!t.axis_of(v)) {
      throw Error(Errc::invalid_instance, "projected variable " + std::to_string(v) + " not in scope");
    }
  }
  for (auto a : keep_axes) {
    p.table.scope.push_back(t.scope[a]);
    p.table.axes.push_back(t.axes[a]);
  }
  for (auto a : drop_axes) p.projected.push_back(t.scope[a]);
  const auto s = t.strides();
  std::vector<std::size_t> keep_ext, drop_ext;
  std::size_t keep_cells = 1;
  for (auto a : keep_axes) {
    keep_ext.push_back(t.extent(a));
    keep_cells *= t.extent(a);
  }
  for (auto a : drop_axes) drop_ext.push_back(t.extent(a));
  p.table.values.assign(keep_cells, -std::numeric_limits<double>::infinity());
  p.argmax.assign(keep_cells * drop_axes.size(), 0);
  std::vector<std::size_t> ki(keep_axes.size(), 0);
  std::size_t cell = 0;
  do {
    std::size_t base = 0;
    for (std::size_t a = 0; a < keep_axes.size(); ++a) base += ki[a] * s[keep_axes[a]];
    std::vector<std::size_t> di(drop_axes.size(), 0);
    bool first = true;
    do {
      std::size_t off = base;
      for (std::size_t a = 0; a < drop_axes.size(); ++a) off += di[a] * s[drop_axes[a]];
      const double v = t.values[off];
      if (first || v > p.table.values[cell]) {
        p.table.values[cell] = v;
        std::copy(di.begin(), di.end(), p.argmax.begin() + static_cast<std::ptrdiff_t>(cell * di.size()));
        first = false;
      }
    } while (detail::next_index(di, drop_ext));
    ++cell;
  } while (detail::next_index(ki, keep_ext));
  return p;
}

struct GridSolution {
  Assignment assignment;
  std::vector<std::size_t> indices;  // grid index per variable
  double utility = 0.0;              // evaluate_objective(assignment)
  std::vector<VariableId> priority;  // tie-break order used
  std::size_t evaluations = 0;
};

inline constexpr double kTieTolerance = 1e-9;
inline constexpr std::size_t kTabulateLimit = 4'000'000;

/// Pseudo-forest used by DPOP: per component, the DFS root giving the smallest largest
/// separator (then smallest separator total), lowest index among equals.
inline PseudoTree dpop_pseudo_tree(const DcopInstance& instance) {
  const auto graph = build_constraint_graph(instance);
  const auto alloc_tree = [&](const std::vector<AgentId>& roots) {
    PseudoTree t(graph.agent_count);
    std::vector<char> visited(graph.agent_count, 0);
    for (AgentId r : roots) {
      if (!visited[r]) t.grow_from(graph, r, visited);
    }
    for (AgentId a = 0; a < graph.agent_count; ++a) {
      if (!visited[a]) t.grow_from(graph, a, visited);
    }
    t.assign(instance, allocate_functions(instance, t));
    return t;
  };
  const auto plain = build_pseudo_forest(graph);
  std::vector<AgentId> chosen;
  for (AgentId comp_root : plain.roots()) {
    std::vector<AgentId> members;
    for (AgentId a = 0; a < graph.agent_count; ++a) {
      if (plain.node(a).root == comp_root) members.push_back(a);
    }
    std::pair<std::size_t, std::size_t> best_score{std::numeric_limits<std::size_t>::max(), 0};
    AgentId best = comp_root;
    for (AgentId r : members) {
      PseudoTree t(graph.agent_count);
      std::vector<char> visited(graph.agent_count, 0);
      t.grow_from(graph, r, visited);
      // Only this component's functions matter for its separators.
      for (AgentId a = 0; a < graph.agent_count; ++a) {
        if (!visited[a]) t.grow_from(graph, a, visited);
      }
      t.assign(instance, allocate_functions(instance, t));
      std::pair<std::size_t, std::size_t> score{0, 0};
      for (AgentId a : members) {
        score.first = std::max(score.first, t.node(a).separator.size());
        score.second += t.node(a).separator.size();
      }
      if (score < best_score) {
        best_score = score;
        best = r;
      }
    }
    chosen.push_back(best);
  }
  return alloc_tree(chosen);
}

inline std::vector<VariableId> preorder_variables(const DcopInstance& instance, const PseudoTree& tree) {
  std::vector<VariableId> order;
  for (AgentId a : tree.preorder()) order.push_back(instance.variable_of(a));
  return order;
}

struct ExhaustiveOptions {
  std::size_t cap = 100'000'000;  // maximum number of complete assignments
  std::optional<std::vector<VariableId>> priority;  // default: preorder of dpop_pseudo_tree
  double tie_tolerance = kTieTolerance;
};

/// Full enumeration of the grid in priority order.
inline GridSolution exhaustive_solve(const DcopInstance& instance, const Grid& grid,
                                     const ExhaustiveOptions& options = {}) {
  const std::size_t n = instance.variable_count();
  GridSolution sol;
  sol.priority = options.priority ? *options.priority
                                  : preorder_variables(instance, dpop_pseudo_tree(instance));
  {
    auto check = sol.priority;
    std::sort(check.begin(), check.end());
    for (std::size_t i = 0; i < n; ++i) {
      if (check.size() != n || check[i] != i) {
        throw Error(Errc::invalid_instance, "priority must be a permutation of the variables");
      }
    }
  }
  std::vector<std::size_t> extents(n);
  for (std::size_t p = 0; p < n; ++p) extents[p] = grid.size(sol.priority[p]);
  bool over = false;
  const std::size_t total = detail::checked_product(extents, options.cap, over);
  if (over) {
    throw Error(Errc::cap_exceeded,
                "grid has more than " + std::to_string(options.cap) + " assignments; use dpop_solve");
  }

  std::vector<std::size_t> position(n);
  for (std::size_t p = 0; p < n; ++p) position[sol.priority[p]] = p;

  // Functions grouped by the enumeration level at which their scope becomes complete.
  struct Term {
    const UtilityFunction* f;
    std::optional<UtilityTable> table;
    std::vector<std::pair<std::size_t, std::size_t>> level_stride;  // (level, stride)
  };
  std::vector<std::vector<Term>> levels(n);
  for (const auto& f : instance.functions()) {
    std::size_t level = 0;
    std::size_t size = 1;
    for (VariableId v : f.scope) {
      level = std::max(level, position[v]);
      size = size > kTabulateLimit ? size : size * grid.size(v);
    }
    Term term{&f, std::nullopt, {}};
    if (size <= kTabulateLimit) {
      term.table = tabulate(f, grid);
      const auto s = term.table->strides();
      for (std::size_t a = 0; a < f.scope.size(); ++a) term.level_stride.emplace_back(position[f.scope[a]], s[a]);
    }
    levels[level].push_back(std::move(term));
  }

  const Aggregation op = instance.op();
  std::vector<std::size_t> idx(n, 0);
  std::vector<double> partial(n, identity(op));
  std::vector<double> args;
  auto level_value = [&](std::size_t d) {
    double acc = d == 0 ? identity(op) : partial[d - 1];
    for (const auto& term : levels[d]) {
      double v;
      if (term.table) {
        std::size_t off = 0;
        for (const auto& [lv, st] : term.level_stride) off += idx[lv] * st;
        v = term.table->values[off];
      } else {
        args.resize(term.f->scope.size());
        for (std::size_t a = 0; a < args.size(); ++a) {
          const VariableId var = term.f->scope[a];
          args[a] = grid.value(var, idx[position[var]]);
        }
        v = (*term.f)(args);
      }
      acc = combine(op, acc, v);
    }
    return acc;
  };
  auto enumerate = [&](auto&& visit) {
    std::fill(idx.begin(), idx.end(), 0);
    for (std::size_t d = 0; d < n; ++d) partial[d] = level_value(d);
    while (true) {
      if (visit(partial[n - 1])) return;
      std::size_t d = n;
      while (d-- > 0) {
        if (++idx[d] < extents[d]) break;
        idx[d] = 0;
      }
      if (d == static_cast<std::size_t>(-1)) return;
      for (std::size_t e = d; e < n; ++e) partial[e] = level_value(e);
    }
  };

  double best = -std::numeric_limits<double>::infinity();
  enumerate([&](double g) {
    best = std::max(best, g);
    return false;
  });
  sol.evaluations = total;
  const double threshold = best - options.tie_tolerance;
  std::vector<std::size_t> pick;
  enumerate([&](double g) {
    if (g >= threshold) {
      pick = idx;
      return true;
    }
    return false;
  });
  sol.indices.assign(n, 0);
  sol.assignment = Assignment(n);
  for (std::size_t p = 0; p < n; ++p) {
    const VariableId v = sol.priority[p];
    sol.indices[v] = pick[p];
    sol.assignment.set(v, grid.value(v, pick[p]));
  }
  sol.utility = evaluate_objective(instance, sol.assignment);
  return sol;
}

struct DpopOptions {
  std::size_t max_message_cells = 50'000'000;
  double tie_tolerance = kTieTolerance;
  const PseudoTree* tree = nullptr;  // default: dpop_pseudo_tree(instance)
};

/// Exact grid optimum: fused join+project messages bottom-up, then value propagation in
/// preorder with the shared tie-break.
inline GridSolution dpop_solve(const DcopInstance& instance, const Grid& grid,
                               const DpopOptions& options = {}) {
  std::optional<PseudoTree> owned;
  if (!options.tree) owned = dpop_pseudo_tree(instance);
  const PseudoTree& tree = options.tree ? *options.tree : *owned;
  const std::size_t m = instance.agent_count();
  const Aggregation op = instance.op();
  const auto var = [&](AgentId a) { return instance.variable_of(a); };

  // Tabulate small functions once.
  std::vector<std::optional<UtilityTable>> tables(instance.functions().size());
  for (const auto& f : instance.functions()) {
    std::size_t size = 1;
    for (VariableId v : f.scope) size = size > kTabulateLimit ? size : size * grid.size(v);
    if (size <= kTabulateLimit) tables[f.id] = tabulate(f, grid);
  }

  // Message of agent a: table over its separator variables (ascending agent order).
  std::vector<UtilityTable> messages(m);

  // Subtree value of agent a for each own grid index, given grid indices of its separator.
  // `sep_index(agent)` returns the chosen index of that ancestor.
  struct Component {
    const UtilityTable* table = nullptr;
    const UtilityFunction* f = nullptr;  // untabulated fallback
    std::vector<std::size_t> sep_stride;  // stride per separator position
    std::size_t own_stride = 0;
  };
  auto components_of = [&](AgentId a) {
    const auto& node = tree.node(a);
    std::vector<Component> comps;
    auto strides_for = [&](const UtilityTable& t) {
      Component c;
      c.table = &t;
      const auto s = t.strides();
      c.sep_stride.assign(node.separator.size(), 0);
      for (std::size_t ax = 0; ax < t.scope.size(); ++ax) {
        const AgentId owner = instance.agent_of(t.scope[ax]);
        if (owner == a) {
          c.own_stride = s[ax];
        } else {
          auto it = std::find(node.separator.begin(), node.separator.end(), owner);
          c.sep_stride[static_cast<std::size_t>(it - node.separator.begin())] = s[ax];
        }
      }
      return c;
    };
    for (std::size_t k : tree.functions_of(a)) {
      if (tables[k]) {
        comps.push_back(strides_for(*tables[k]));
      } else {
        Component c;
        c.f = &instance.function(k);
        comps.push_back(c);
      }
    }
    for (AgentId c : node.children) comps.push_back(strides_for(messages[c]));
    return comps;
  };

  std::vector<double> args;
  // Fills out[j] with the subtree value for own index j under separator indices sidx.
  auto subtree_values = [&](AgentId a, const std::vector<Component>& comps,
                            const std::vector<std::size_t>& sidx, std::vector<double>& out) {
    const auto& node = tree.node(a);
    const std::size_t k = grid.size(var(a));
    out.assign(k, identity(op));
    for (const auto& c : comps) {
      if (c.table) {
        std::size_t base = 0;
        for (std::size_t p = 0; p < sidx.size(); ++p) base += sidx[p] * c.sep_stride[p];
        const double* data = c.table->values.data() + base;
        if (c.own_stride == 0) {
          for (std::size_t j = 0; j < k; ++j) out[j] = combine(op, out[j], data[0]);
        } else {
          for (std::size_t j = 0; j < k; ++j) out[j] = combine(op, out[j], data[j * c.own_stride]);
        }
      } else {
        args.resize(c.f->scope.size());
        for (std::size_t j = 0; j < k; ++j) {
          for (std::size_t ax = 0; ax < args.size(); ++ax) {
            const VariableId v = c.f->scope[ax];
            const AgentId owner = instance.agent_of(v);
            if (owner == a) {
              args[ax] = grid.value(v, j);
            } else {
              auto it = std::find(node.separator.begin(), node.separator.end(), owner);
              args[ax] = grid.value(v, sidx[static_cast<std::size_t>(it - node.separator.begin())]);
            }
          }
          out[j] = combine(op, out[j], (*c.f)(args));
        }
      }
    }
  };

  GridSolution sol;
  const auto& pre = tree.preorder();
  std::vector<double> buf;
  for (auto it = pre.rbegin(); it != pre.rend(); ++it) {
    const AgentId a = *it;
    const auto& node = tree.node(a);
    UtilityTable& msg = messages[a];
    std::vector<std::size_t> extents;
    for (AgentId s : node.separator) {
      msg.scope.push_back(var(s));
      msg.axes.push_back(grid.values.at(var(s)));
      extents.push_back(grid.size(var(s)));
    }
    bool over = false;
    const std::size_t cells = detail::checked_product(extents, options.max_message_cells, over);
    if (over) {
      throw Error(Errc::separator_too_large,
                  "utility message of agent " + std::to_string(a) + " exceeds " +
                      std::to_string(options.max_message_cells) + " cells");
    }
    msg.values.resize(cells);
    const auto comps = components_of(a);
    std::vector<std::size_t> sidx(extents.size(), 0);
    std::size_t c = 0;
    do {
      subtree_values(a, comps, sidx, buf);
      msg.values[c++] = *std::max_element(buf.begin(), buf.end());
      sol.evaluations += buf.size();
    } while (detail::next_index(sidx, extents));
  }

  // Value propagation.
  double opt = identity(op);
  std::map<AgentId, double> frontier;
  for (AgentId r : tree.roots()) {
    frontier[r] = messages[r].values.at(0);
    opt = combine(op, opt, frontier[r]);
  }
  const double threshold = opt - options.tie_tolerance;
  std::vector<std::size_t> chosen(m, 0);
  double fixed = identity(op);
  std::vector<double> local_only;
  for (AgentId a : pre) {
    const auto& node = tree.node(a);
    frontier.erase(a);
    double rest = fixed;
    for (const auto& [b, v] : frontier) rest = combine(op, rest, v);
    std::vector<std::size_t> sidx;
    for (AgentId s : node.separator) sidx.push_back(chosen[s]);
    const auto comps = components_of(a);
    subtree_values(a, comps, sidx, buf);
    std::size_t pick = static_cast<std::size_t>(std::max_element(buf.begin(), buf.end()) - buf.begin());
    for (std::size_t j = 0; j < buf.size(); ++j) {
      if (combine(op, rest, buf[j]) >= threshold) {
        pick = j;
        break;
      }
    }
    chosen[a] = pick;
    // Split the chosen subtree value into the agent's own functions and its children.
    const std::vector<Component> local(comps.begin(), comps.end() - static_cast<std::ptrdiff_t>(node.children.size()));
    subtree_values(a, local, sidx, local_only);
    fixed = combine(op, fixed, local_only[pick]);
    for (std::size_t ci = 0; ci < node.children.size(); ++ci) {
      const auto& cc = comps[comps.size() - node.children.size() + ci];
      std::size_t off = pick * cc.own_stride;
      for (std::size_t p = 0; p < sidx.size(); ++p) off += sidx[p] * cc.sep_stride[p];
      frontier[node.children[ci]] = cc.table->values[off];
    }
  }

  sol.priority = preorder_variables(instance, tree);
  sol.indices.assign(m, 0);
  sol.assignment = Assignment(m);
  for (AgentId a = 0; a < m; ++a) {
    sol.indices[var(a)] = chosen[a];
    sol.assignment.set(var(a), grid.value(var(a), chosen[a]));
  }
  sol.utility = evaluate_objective(instance, sol.assignment);
  return sol;
}

}  // namespace dbay
