#pragma once

#include <span>
#include <string>
#include <vector>

#include "nsnet/cnf.hpp"

namespace nsnet {

/// One literal occurrence: variable (0-based), clause, and polarity.
struct Incidence {
  int var = 0;
  int clause = 0;
  bool positive = true;

  /// Value of the variable that satisfies the clause through this literal.
  int satisfying_value() const { return positive ? 1 : 0; }
  bool satisfies(int value) const { return value == satisfying_value(); }
};

enum class Direction { to_clause, to_variable };

/// Addresses one message/embedding slot: incidence, variable value, direction.
struct EdgeIndex {
  int incidence = 0;
  int value = 0;
  Direction direction = Direction::to_clause;

  /// Row within the per-direction slot array.
  int slot() const { return 2 * incidence + value; }
};

/**
 * Bipartite encoding with two assignment nodes per variable and one node per
 * clause. Every incidence carries two value slots per direction; exactly one
 * of them is satisfying.
 *
 * Incidences are stored in clause order, so N(a) is a contiguous range; N(i)
 * is a compressed adjacency list in increasing incidence order.
 */
class FactorGraph {
 public:
  FactorGraph() = default;

  /// Throws CnfError on a non-normalized formula or the unsatisfiable marker.
  static FactorGraph build(const CnfFormula& formula);

  int num_vars() const { return num_vars_; }
  int num_clauses() const { return num_clauses_; }
  int num_incidences() const { return static_cast<int>(incidences_.size()); }
  int num_slots() const { return 2 * num_incidences(); }

  const Incidence& incidence(int e) const { return incidences_[static_cast<std::size_t>(e)]; }
  const std::vector<Incidence>& incidences() const { return incidences_; }

  /// Incidence ids of variable v (0-based).
  std::span<const int> var_incidences(int v) const {
    const auto b = static_cast<std::size_t>(var_offsets_[static_cast<std::size_t>(v)]);
    const auto e = static_cast<std::size_t>(var_offsets_[static_cast<std::size_t>(v) + 1]);
    return {var_adjacency_.data() + b, e - b};
  }
  int var_degree(int v) const { return static_cast<int>(var_incidences(v).size()); }

  int clause_begin(int a) const { return clause_offsets_[static_cast<std::size_t>(a)]; }
  int clause_end(int a) const { return clause_offsets_[static_cast<std::size_t>(a) + 1]; }
  int clause_size(int a) const { return clause_end(a) - clause_begin(a); }
  int max_clause_size() const;

  /// One line per slot: `var value clause sat|unsat` (1-based var and clause).
  std::string dump_edges() const;

 private:
  int num_vars_ = 0;
  int num_clauses_ = 0;
  std::vector<Incidence> incidences_;
  std::vector<int> var_offsets_;
  std::vector<int> var_adjacency_;
  std::vector<int> clause_offsets_;
};

}  // namespace nsnet
