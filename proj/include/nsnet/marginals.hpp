#pragma once

#include <vector>

namespace nsnet {

/// Per-variable distribution over satisfying assignments; b(0) = 1 - b(1).
struct Marginals {
  std::vector<double> p1;  // index var-1

  Marginals() = default;
  explicit Marginals(std::vector<double> ones) : p1(std::move(ones)) {}

  int num_vars() const { return static_cast<int>(p1.size()); }
  double b1(int var) const { return p1[static_cast<std::size_t>(var - 1)]; }
  double b0(int var) const { return 1.0 - b1(var); }
};

}  // namespace nsnet
