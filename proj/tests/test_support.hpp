#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "nsnet/cnf.hpp"
#include "nsnet/rng.hpp"

namespace nsnet::testing {

/// (x1 ∨ ¬x2) ∧ (x1 ∨ x3) ∧ (¬x1 ∨ x2 ∨ x3)
inline CnfFormula f0() { return CnfFormula(3, {{1, -2}, {1, 3}, {-1, 2, 3}}); }
/// (x1 ∨ x2)
inline CnfFormula f1() { return CnfFormula(2, {{1, 2}}); }
/// (x1 ∨ x2) ∧ (¬x2 ∨ x3)
inline CnfFormula f4() { return CnfFormula(3, {{1, 2}, {-2, 3}}); }

/// Random CNF: m clauses with lengths uniform in [min_len, max_len] over distinct variables.
inline CnfFormula random_cnf(Rng& rng, int n, int m, int min_len, int max_len) {
  std::vector<Clause> clauses;
  std::vector<int> vars(static_cast<std::size_t>(n));
  std::iota(vars.begin(), vars.end(), 1);
  for (int c = 0; c < m; ++c) {
    const int len = static_cast<int>(rng.uniform_int(min_len, std::min(max_len, n)));
    rng.shuffle(vars);
    Clause clause;
    for (int j = 0; j < len; ++j) {
      const int v = vars[static_cast<std::size_t>(j)];
      clause.push_back(rng.bernoulli(0.5) ? v : -v);
    }
    clauses.push_back(std::move(clause));
  }
  return CnfFormula(n, std::move(clauses));
}

/**
 * Random formula whose factor graph is a forest: each new clause shares at
 * most one variable with the clauses before it. Unit clauses on an existing
 * variable are allowed.
 */
inline CnfFormula random_tree_cnf(Rng& rng, int n, int max_len = 3) {
  std::vector<Clause> clauses;
  std::vector<int> used;
  int next = 1;
  auto lit = [&](int v) { return rng.bernoulli(0.5) ? v : -v; };
  while (next <= n) {
    Clause clause;
    if (!used.empty() && rng.bernoulli(0.85)) clause.push_back(lit(used[rng.index(used.size())]));
    const int fresh = static_cast<int>(rng.uniform_int(clause.empty() ? 1 : 0, max_len - static_cast<int>(clause.size())));
    for (int j = 0; j < fresh && next <= n; ++j) {
      clause.push_back(lit(next));
      used.push_back(next++);
    }
    if (clause.empty()) continue;
    clauses.push_back(std::move(clause));
  }
  return CnfFormula(n, std::move(clauses));
}

/// Relabels variables (perm[v-1] is the new index of v), reorders clauses and
/// shuffles literals within each clause.
struct Relabeling {
  std::vector<int> var_perm;     // old var -> new var (1-based values)
  std::vector<int> clause_perm;  // new position -> old clause index
};

inline CnfFormula apply(const CnfFormula& f, const Relabeling& r, Rng* literal_shuffle) {
  std::vector<Clause> clauses;
  for (int old : r.clause_perm) {
    Clause c;
    for (Lit l : f.clause(static_cast<std::size_t>(old))) {
      const int nv = r.var_perm[static_cast<std::size_t>(std::abs(l) - 1)];
      c.push_back(l > 0 ? nv : -nv);
    }
    if (literal_shuffle) literal_shuffle->shuffle(c);
    clauses.push_back(std::move(c));
  }
  return CnfFormula(f.num_vars(), std::move(clauses));
}

inline Relabeling random_relabeling(Rng& rng, const CnfFormula& f, bool vars, bool clauses) {
  Relabeling r;
  r.var_perm.resize(static_cast<std::size_t>(f.num_vars()));
  std::iota(r.var_perm.begin(), r.var_perm.end(), 1);
  if (vars) rng.shuffle(r.var_perm);
  r.clause_perm.resize(f.num_clauses());
  std::iota(r.clause_perm.begin(), r.clause_perm.end(), 0);
  if (clauses) rng.shuffle(r.clause_perm);
  return r;
}

/// Negates every occurrence of variable v.
inline CnfFormula negate_var(const CnfFormula& f, int v) {
  std::vector<Clause> clauses = f.clauses();
  for (auto& c : clauses) {
    for (auto& l : c) {
      if (std::abs(l) == v) l = -l;
    }
  }
  return CnfFormula(f.num_vars(), std::move(clauses));
}

/// Fresh directory under the system temp path, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    const auto base = std::filesystem::temp_directory_path();
    Rng rng((static_cast<std::uint64_t>(std::random_device{}()) << 32) ^ std::random_device{}());
    do {
      path_ = base / ("nsnet_" + tag + "_" + std::to_string(rng.next_u64() % 1000000000ull));
    } while (std::filesystem::exists(path_));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& child = "") const { return child.empty() ? path_.string() : (path_ / child).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace nsnet::testing
