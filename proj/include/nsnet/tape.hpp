#pragma once

#include <vector>

#include "nsnet/nsnet.hpp"

namespace nsnet {

/// Intermediate values of one message-passing iteration (rows = slots).
struct IterationTape {
  RowMatrix agg;    // sum over the other clauses of c2v, per (incidence, value)
  Mlp::Cache a1;
  RowMatrix pair;   // [a1(value), a1(flipped value)]
  Mlp::Cache a2;
  RowMatrix v2c;
  RowMatrix lse;    // clause completion LSE before a3
  Mlp::Cache a3;
  RowMatrix c2v;
};

/// Everything backprop needs from a neural forward pass.
struct ForwardTape {
  RowMatrix v2c0;
  RowMatrix c2v0;
  std::vector<IterationTape> iterations;

  RowMatrix var_sum;  // 2n x d, row 2v + x
  Mlp::Cache r_var;
  std::vector<double> var_log_belief;  // 2n, log-softmax per variable

  bool has_factor_readout = false;
  RowMatrix fac_sum;  // one row per satisfying clause configuration
  Mlp::Cache r_fac;
  std::vector<int> fac_clause;     // clause of each row
  std::vector<unsigned> fac_code;  // value code of each row
  std::vector<double> fac_log_belief;

  NsnetOutput output;

  const RowMatrix& final_v2c() const { return iterations.empty() ? v2c0 : iterations.back().v2c; }
  const RowMatrix& final_c2v() const { return iterations.empty() ? c2v0 : iterations.back().c2v; }
};

/// Neural forward pass that records the tape. Throws for exact_bp params.
ForwardTape forward_with_tape(const FactorGraph& graph, const ModelParams& params,
                              const ForwardOptions& options);

/// Log-beliefs and ln Z of the same forward pass evaluated in extended precision;
/// a low-noise reference for finite-difference checks.
struct ExtendedOutput {
  std::vector<long double> var_log_belief;  // 2n, index 2v + x
  std::optional<long double> ln_z;
};
ExtendedOutput forward_extended(const FactorGraph& graph, const ModelParams& params,
                                const ForwardOptions& options);

/// Upstream gradients of the loss with respect to the outputs.
struct OutputGradient {
  std::vector<double> d_var_log_belief;  // 2n, index 2v + x
  double d_ln_z = 0.0;
};

/// Reverse-mode pass through readouts and all iterations; accumulates into `grads`.
void backward(const FactorGraph& graph, const ModelParams& params, const ForwardTape& tape,
              const OutputGradient& seed, ModelParams& grads);

}  // namespace nsnet
