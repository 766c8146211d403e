#include "nsnet/cnf.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace nsnet {

namespace {

// Returns false when the clause is a tautology.
bool normalize_clause(Clause& clause, NormalizationStats& stats) {
  Clause out;
  out.reserve(clause.size());
  for (Lit lit : clause) {
    if (std::find(out.begin(), out.end(), -lit) != out.end()) {
      ++stats.tautologies;
      return false;
    }
    if (std::find(out.begin(), out.end(), lit) != out.end()) {
      ++stats.duplicate_literals;
      continue;
    }
    out.push_back(lit);
  }
  clause = std::move(out);
  return true;
}

}  // namespace

CnfFormula::CnfFormula(int num_vars, std::vector<Clause> clauses,
                       NormalizationStats* stats)
    : num_vars_(num_vars) {
  if (num_vars < 0) throw CnfError("negative variable count");
  NormalizationStats local;
  NormalizationStats& st = stats ? *stats : local;
  clauses_.reserve(clauses.size());
  bool has_empty = false;
  for (auto& clause : clauses) {
    for (Lit lit : clause) {
      if (lit == 0 || lit_var(lit) > num_vars) {
        throw CnfError("literal " + std::to_string(lit) +
                       " out of range for " + std::to_string(num_vars) + " variables");
      }
    }
    if (clause.empty()) {
      has_empty = true;
      continue;
    }
    if (normalize_clause(clause, st)) clauses_.push_back(std::move(clause));
  }
  if (has_empty) clauses_.assign(1, Clause{});
}

CnfFormula CnfFormula::unsat_marker(int num_vars) {
  return CnfFormula(num_vars, {Clause{}});
}

std::size_t CnfFormula::num_literals() const {
  std::size_t total = 0;
  for (const auto& c : clauses_) total += c.size();
  return total;
}

std::size_t CnfFormula::max_clause_length() const {
  std::size_t best = 0;
  for (const auto& c : clauses_) best = std::max(best, c.size());
  return best;
}

PartialAssignment PartialAssignment::from_literals(int num_vars,
                                                   std::span<const Lit> lits) {
  PartialAssignment out(num_vars);
  for (Lit lit : lits) {
    if (lit == 0 || lit_var(lit) > num_vars) {
      throw CnfError("fixed literal " + std::to_string(lit) + " out of range");
    }
    out.set(lit_var(lit), lit_positive(lit));
  }
  return out;
}

void PartialAssignment::set(int var, bool value) {
  if (var < 1 || var > num_vars()) {
    throw CnfError("variable " + std::to_string(var) + " out of range");
  }
  auto& slot = values_[static_cast<std::size_t>(var - 1)];
  const std::int8_t v = value ? 1 : 0;
  if (slot >= 0 && slot != v) {
    throw CnfError("conflicting values for variable " + std::to_string(var));
  }
  slot = v;
}

std::optional<bool> PartialAssignment::get(int var) const {
  const auto v = values_[static_cast<std::size_t>(var - 1)];
  if (v < 0) return std::nullopt;
  return v != 0;
}

std::size_t PartialAssignment::num_assigned() const {
  return static_cast<std::size_t>(
      std::count_if(values_.begin(), values_.end(), [](auto v) { return v >= 0; }));
}

Assignment PartialAssignment::complete(bool fill) const {
  Assignment out(num_vars());
  for (int v = 1; v <= num_vars(); ++v) out.set(v, get(v).value_or(fill));
  return out;
}

ParseResult parse_dimacs(std::string_view text) {
  ParseResult result;
  bool have_header = false;
  long long header_vars = 0;
  long long header_clauses = 0;
  std::vector<Clause> clauses;
  Clause current;
  std::size_t line_no = 0;

  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;

    std::size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) continue;
    line.remove_prefix(first);
    if (line.front() == 'c') continue;
    // SATLIB files end with a "%" line followed by a stray 0.
    if (line.front() == '%') break;
    if (line.front() == 'p') {
      if (have_header) throw CnfError("line " + std::to_string(line_no) + ": duplicate header");
      std::istringstream in{std::string(line)};
      std::string p, fmt;
      if (!(in >> p >> fmt >> header_vars >> header_clauses) || p != "p" ||
          fmt != "cnf" || header_vars < 0 || header_clauses < 0) {
        throw CnfError("line " + std::to_string(line_no) + ": malformed header");
      }
      std::string extra;
      if (in >> extra) throw CnfError("line " + std::to_string(line_no) + ": malformed header");
      if (header_vars > INT32_MAX) throw CnfError("variable count exceeds 32-bit range");
      have_header = true;
      continue;
    }
    if (!have_header) {
      throw CnfError("line " + std::to_string(line_no) + ": clause before header");
    }

    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
      if (i >= line.size()) break;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
      long long value = 0;
      const char* b = line.data() + i;
      const char* e = line.data() + j;
      if (*b == '+') ++b;
      auto [ptr, ec] = std::from_chars(b, e, value);
      if (ec != std::errc() || ptr != e) {
        throw CnfError("line " + std::to_string(line_no) + ": bad token '" +
                       std::string(line.substr(i, j - i)) + "'");
      }
      if (value == 0) {
        clauses.push_back(std::move(current));
        current.clear();
      } else {
        if ((value < 0 ? -value : value) > header_vars) {
          throw CnfError("line " + std::to_string(line_no) + ": literal " +
                         std::to_string(value) + " out of range");
        }
        current.push_back(static_cast<Lit>(value));
      }
      i = j;
    }
  }

  if (!have_header) throw CnfError("missing 'p cnf' header");
  if (!current.empty()) throw CnfError("unterminated final clause");
  if (static_cast<long long>(clauses.size()) != header_clauses) {
    result.warnings.push_back("header declares " + std::to_string(header_clauses) +
                              " clauses, found " + std::to_string(clauses.size()));
  }

  NormalizationStats stats;
  result.formula = CnfFormula(static_cast<int>(header_vars), std::move(clauses), &stats);
  for (std::size_t k = 0; k < stats.tautologies; ++k) {
    result.warnings.push_back("removed tautological clause");
  }
  if (stats.duplicate_literals > 0) {
    result.warnings.push_back("removed " + std::to_string(stats.duplicate_literals) +
                              " duplicate literal(s)");
  }
  return result;
}

ParseResult read_dimacs_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CnfError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dimacs(buf.str());
}

std::string emit_dimacs(const CnfFormula& formula) {
  std::string out = "p cnf " + std::to_string(formula.num_vars()) + " " +
                    std::to_string(formula.num_clauses()) + "\n";
  for (const auto& clause : formula.clauses()) {
    for (Lit lit : clause) {
      out += std::to_string(lit);
      out += ' ';
    }
    out += "0\n";
  }
  return out;
}

void write_dimacs_file(const CnfFormula& formula, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CnfError("cannot write " + path);
  out << emit_dimacs(formula);
}

bool evaluate(const CnfFormula& formula, const Assignment& assignment) {
  return count_unsatisfied(formula, assignment) == 0;
}

std::size_t count_unsatisfied(const CnfFormula& formula, const Assignment& assignment) {
  if (assignment.num_vars() != formula.num_vars()) {
    throw CnfError("assignment covers " + std::to_string(assignment.num_vars()) +
                   " variables, formula has " + std::to_string(formula.num_vars()));
  }
  std::size_t unsat = 0;
  for (const auto& clause : formula.clauses()) {
    bool sat = false;
    for (Lit lit : clause) {
      if (assignment.satisfies(lit)) {
        sat = true;
        break;
      }
    }
    if (!sat) ++unsat;
  }
  return unsat;
}

SimplifyResult simplify(const CnfFormula& formula, const PartialAssignment& fixed,
                        bool unit_propagate) {
  if (fixed.num_vars() != formula.num_vars()) {
    throw CnfError("partial assignment size does not match formula");
  }
  PartialAssignment values = fixed;
  if (formula.is_unsat_marker()) return {formula, values};

  std::vector<Clause> current = formula.clauses();
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<Clause> next;
    next.reserve(current.size());
    std::vector<Lit> units;
    for (const auto& clause : current) {
      Clause reduced;
      bool satisfied = false;
      for (Lit lit : clause) {
        auto v = values.get(lit_var(lit));
        if (!v) {
          reduced.push_back(lit);
        } else if (*v == lit_positive(lit)) {
          satisfied = true;
          break;
        }
      }
      if (satisfied) continue;
      if (reduced.empty()) return {CnfFormula::unsat_marker(formula.num_vars()), values};
      if (unit_propagate && reduced.size() == 1) units.push_back(reduced.front());
      next.push_back(std::move(reduced));
    }
    current = std::move(next);
    for (Lit u : units) {
      auto v = values.get(lit_var(u));
      if (v && *v != lit_positive(u)) {
        return {CnfFormula::unsat_marker(formula.num_vars()), values};
      }
      if (!v) {
        values.set(lit_var(u), lit_positive(u));
        changed = true;
      }
    }
  }
  return {CnfFormula(formula.num_vars(), std::move(current)), values};
}

CnfFormula simplify(const CnfFormula& formula, std::span<const Lit> fixed,
                    bool unit_propagate) {
  return simplify(formula, PartialAssignment::from_literals(formula.num_vars(), fixed),
                  unit_propagate)
      .formula;
}

}  // namespace nsnet
