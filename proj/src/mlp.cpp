#include "nsnet/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace nsnet {

Mlp::Mlp(int in, int hidden, int out, int hidden_layers) {
  if (in < 1 || hidden < 1 || out < 1 || hidden_layers < 0) {
    throw std::invalid_argument("invalid MLP shape");
  }
  int width = in;
  for (int l = 0; l < hidden_layers; ++l) {
    layers_.push_back({RowMatrix::Zero(hidden, width), Eigen::VectorXd::Zero(hidden)});
    width = hidden;
  }
  layers_.push_back({RowMatrix::Zero(out, width), Eigen::VectorXd::Zero(out)});
}

Mlp Mlp::random(int in, int hidden, int out, Rng& rng, int hidden_layers) {
  Mlp mlp(in, hidden, out, hidden_layers);
  for (auto& layer : mlp.layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.w.cols()));
    for (Eigen::Index i = 0; i < layer.w.size(); ++i) {
      layer.w.data()[i] = rng.uniform(-bound, bound);
    }
    for (Eigen::Index i = 0; i < layer.b.size(); ++i) layer.b[i] = rng.uniform(-bound, bound);
  }
  return mlp;
}

RowMatrix Mlp::forward(const RowMatrix& x, Cache* cache) const {
  if (x.cols() != in_dim()) throw std::invalid_argument("MLP input width mismatch");
  if (cache) cache->inputs.clear();
  RowMatrix h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    RowMatrix next(h.rows(), layer.w.rows());
    next.noalias() = h * layer.w.transpose();
    next.rowwise() += layer.b.transpose();
    if (l + 1 < layers_.size()) next.array() = next.array().max(0.0);
    if (cache) cache->inputs.push_back(std::move(h));
    h = std::move(next);
  }
  return h;
}

RowMatrix Mlp::backward(const RowMatrix& dy, const Cache& cache, Mlp& grad) const {
  RowMatrix delta = dy;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& input = cache.inputs[l];
    auto& g = grad.layers_[l];
    g.w.noalias() += delta.transpose() * input;
    g.b += delta.colwise().sum().transpose();
    RowMatrix dx(delta.rows(), layers_[l].w.cols());
    dx.noalias() = delta * layers_[l].w;
    if (l > 0) {
      // input is the previous layer's ReLU output.
      dx.array() = (input.array() > 0.0).select(dx.array(), 0.0);
    }
    delta = std::move(dx);
  }
  return delta;
}

bool Mlp::operator==(const Mlp& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& a = layers_[l];
    const auto& b = other.layers_[l];
    if (a.w.rows() != b.w.rows() || a.w.cols() != b.w.cols() || a.w != b.w || a.b != b.b) {
      return false;
    }
  }
  return true;
}

}  // namespace nsnet
