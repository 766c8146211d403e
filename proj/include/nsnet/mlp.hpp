#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "nsnet/rng.hpp"

namespace nsnet {

/// Batches are row-major: one row per message slot.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct DenseLayer {
  RowMatrix w;        // out x in
  Eigen::VectorXd b;  // out
};

/**
 * Feed-forward network: `hidden_layers` ReLU layers of width `hidden`, then an
 * affine output layer.
 */
class Mlp {
 public:
  /// Layer inputs recorded by forward() for backward().
  struct Cache {
    std::vector<RowMatrix> inputs;
  };

  Mlp() = default;
  /// Zero-initialized network of the given shape.
  Mlp(int in, int hidden, int out, int hidden_layers = 3);

  /// Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static Mlp random(int in, int hidden, int out, Rng& rng, int hidden_layers = 3);

  int in_dim() const { return static_cast<int>(layers_.front().w.cols()); }
  int out_dim() const { return static_cast<int>(layers_.back().w.rows()); }
  bool empty() const { return layers_.empty(); }

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  RowMatrix forward(const RowMatrix& x, Cache* cache = nullptr) const;

  /// Accumulates parameter gradients into `grad` (same shape) and returns dL/dx.
  RowMatrix backward(const RowMatrix& dy, const Cache& cache, Mlp& grad) const;

  bool operator==(const Mlp& other) const;

 private:
  std::vector<DenseLayer> layers_;
};

}  // namespace nsnet
