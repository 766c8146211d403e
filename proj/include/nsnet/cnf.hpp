#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nsnet {

/// DIMACS-style literal: +v or -v for variable v (1-based).
using Lit = std::int32_t;
using Clause = std::vector<Lit>;

inline int lit_var(Lit lit) { return lit < 0 ? -lit : lit; }
inline bool lit_positive(Lit lit) { return lit > 0; }

class CnfError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Counts of model-count-neutral rewrites performed while normalizing.
struct NormalizationStats {
  std::size_t duplicate_literals = 0;
  std::size_t tautologies = 0;
};

/**
 * A propositional formula in conjunctive normal form.
 *
 * Instances are always normalized: no clause repeats a literal, and no clause
 * holds both v and -v. A single empty clause is the unsatisfiable marker; it
 * is the only clause of a formula that carries it.
 */
class CnfFormula {
 public:
  CnfFormula() = default;

  /// Validates and normalizes. Throws CnfError on out-of-range literals.
  CnfFormula(int num_vars, std::vector<Clause> clauses,
             NormalizationStats* stats = nullptr);

  int num_vars() const { return num_vars_; }
  std::size_t num_clauses() const { return clauses_.size(); }
  const std::vector<Clause>& clauses() const { return clauses_; }
  const Clause& clause(std::size_t i) const { return clauses_[i]; }

  /// True when the formula is the explicit unsatisfiable marker.
  bool is_unsat_marker() const {
    return clauses_.size() == 1 && clauses_.front().empty();
  }

  std::size_t num_literals() const;
  std::size_t max_clause_length() const;

  static CnfFormula unsat_marker(int num_vars);

  bool operator==(const CnfFormula&) const = default;

 private:
  int num_vars_ = 0;
  std::vector<Clause> clauses_;
};

/// Total assignment over variables 1..n.
class Assignment {
 public:
  Assignment() = default;
  explicit Assignment(int num_vars, bool fill = false)
      : values_(static_cast<std::size_t>(num_vars), fill ? 1 : 0) {}
  explicit Assignment(std::vector<std::uint8_t> values)
      : values_(std::move(values)) {}

  int num_vars() const { return static_cast<int>(values_.size()); }
  bool value(int var) const { return values_[static_cast<std::size_t>(var - 1)] != 0; }
  void set(int var, bool v) { values_[static_cast<std::size_t>(var - 1)] = v ? 1 : 0; }
  void flip(int var) { values_[static_cast<std::size_t>(var - 1)] ^= 1; }
  bool satisfies(Lit lit) const { return value(lit_var(lit)) == lit_positive(lit); }

  const std::vector<std::uint8_t>& values() const { return values_; }

  bool operator==(const Assignment&) const = default;

 private:
  std::vector<std::uint8_t> values_;
};

/// Partial assignment; assigning a variable twice with different values throws.
class PartialAssignment {
 public:
  explicit PartialAssignment(int num_vars)
      : values_(static_cast<std::size_t>(num_vars), -1) {}

  static PartialAssignment from_literals(int num_vars, std::span<const Lit> lits);

  int num_vars() const { return static_cast<int>(values_.size()); }
  void set(int var, bool value);
  std::optional<bool> get(int var) const;
  bool is_assigned(int var) const { return get(var).has_value(); }
  std::size_t num_assigned() const;

  /// Lifts to a total assignment, filling unassigned variables with `fill`.
  Assignment complete(bool fill = true) const;

 private:
  std::vector<std::int8_t> values_;
};

struct ParseResult {
  CnfFormula formula;
  std::vector<std::string> warnings;
};

/// Parses DIMACS CNF. Throws CnfError on malformed input.
ParseResult parse_dimacs(std::string_view text);
ParseResult read_dimacs_file(const std::string& path);

std::string emit_dimacs(const CnfFormula& formula);
void write_dimacs_file(const CnfFormula& formula, const std::string& path);

/// Throws CnfError when the assignment does not cover the formula's variables.
bool evaluate(const CnfFormula& formula, const Assignment& assignment);

std::size_t count_unsatisfied(const CnfFormula& formula, const Assignment& assignment);

struct SimplifyResult {
  CnfFormula formula;
  /// The input assignment plus anything forced by unit propagation.
  PartialAssignment fixed;
};

/**
 * Applies a partial assignment: satisfied clauses are dropped and falsified
 * literals removed. With `unit_propagate`, unit clauses are fixed until a
 * fixpoint. Variables are never renumbered. A derived empty clause yields the
 * unsatisfiable marker.
 */
SimplifyResult simplify(const CnfFormula& formula, const PartialAssignment& fixed,
                        bool unit_propagate);

/// Convenience overload; throws CnfError on conflicting literals.
CnfFormula simplify(const CnfFormula& formula, std::span<const Lit> fixed,
                    bool unit_propagate);

}  // namespace nsnet
