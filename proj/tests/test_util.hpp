#pragma once

#include "fedsl/compression.hpp"
#include "fedsl/engine.hpp"
#include "fedsl/nn.hpp"
#include "fedsl/rng.hpp"
#include "fedsl/types.hpp"

#include <cmath>
#include <vector>

namespace testutil {

using fedsl::Activation;
using fedsl::DenseLayer;
using fedsl::Index;
using fedsl::KeepMask;
using fedsl::Labels;
using fedsl::LayerGrads;
using fedsl::Matrix;
using fedsl::Rng;

inline Matrix random_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.uniform(-1.0, 1.0);
  return m;
}

inline std::vector<DenseLayer> random_net(const std::vector<Index>& dims, Rng& rng) {
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const Activation act = l + 2 == dims.size() ? Activation::Identity : Activation::ReLU;
    DenseLayer layer = fedsl::make_dense_layer(dims[l], dims[l + 1], act, rng);
    for (Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = rng.uniform(-0.1, 0.1);
    layers.push_back(std::move(layer));
  }
  return layers;
}

inline Labels random_labels(Index n, int classes, Rng& rng) {
  Labels labels(static_cast<std::size_t>(n));
  for (auto& y : labels) y = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(classes)));
  return labels;
}

inline double net_loss(const std::vector<DenseLayer>& layers, const Matrix& x, const Labels& y) {
  fedsl::ForwardCache cache = fedsl::stack_forward(layers, x);
  return fedsl::softmax_cross_entropy(cache.output, y).loss;
}

inline std::vector<LayerGrads> net_grads(const std::vector<DenseLayer>& layers, const Matrix& x,
                                         const Labels& y) {
  fedsl::ForwardCache cache = fedsl::stack_forward(layers, x);
  fedsl::SoftmaxLoss sl = fedsl::softmax_cross_entropy(cache.output, y);
  return fedsl::stack_backward(layers, cache, sl.d_logits).per_layer;
}

inline std::vector<double*> param_ptrs(std::vector<DenseLayer>& layers) {
  std::vector<double*> ptrs;
  for (DenseLayer& layer : layers) {
    for (Index i = 0; i < layer.weights.size(); ++i) ptrs.push_back(layer.weights.data() + i);
    for (Index i = 0; i < layer.bias.size(); ++i) ptrs.push_back(layer.bias.data() + i);
  }
  return ptrs;
}

inline std::vector<double> flatten_grads(const std::vector<LayerGrads>& grads) {
  std::vector<double> flat;
  for (const LayerGrads& g : grads) {
    for (Index i = 0; i < g.d_weights.size(); ++i) flat.push_back(g.d_weights.data()[i]);
    for (Index i = 0; i < g.d_bias.size(); ++i) flat.push_back(g.d_bias.data()[i]);
  }
  return flat;
}

inline bool close_rel(double a, double b, double rel, double floor) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)) + floor;
}

// Kahan-compensated elementwise accumulator; keeps Monte Carlo means exact
// enough for zero-variance entries.
class KahanMean {
 public:
  KahanMean(Index rows, Index cols)
      : sum_(Matrix::Zero(rows, cols)), comp_(Matrix::Zero(rows, cols)) {}

  void add(const Matrix& x) {
    for (Index i = 0; i < sum_.size(); ++i) {
      const double y = x.data()[i] - comp_.data()[i];
      const double t = sum_.data()[i] + y;
      comp_.data()[i] = (t - sum_.data()[i]) - y;
      sum_.data()[i] = t;
    }
  }

  Matrix mean(long draws) const { return sum_ / static_cast<double>(draws); }

 private:
  Matrix sum_;
  Matrix comp_;
};

// Central finite difference of `loss` w.r.t. every parameter reachable
// through `ptrs`, compared against `analytic` entrywise.
template <typename LossFn>
bool fd_gradient_check(const std::vector<double*>& ptrs, const std::vector<double>& analytic,
                       LossFn loss, double step = 1e-5, double rel = 1e-4,
                       double floor = 1e-8) {
  for (std::size_t i = 0; i < ptrs.size(); ++i) {
    const double saved = *ptrs[i];
    *ptrs[i] = saved + step;
    const double up = loss();
    *ptrs[i] = saved - step;
    const double down = loss();
    *ptrs[i] = saved;
    const double fd = (up - down) / (2.0 * step);
    if (!close_rel(analytic[i], fd, rel, floor)) return false;
  }
  return true;
}

// A split network with a frozen dropout mask at the split layer; the loss is
// the mean cross entropy over the kept rows, exactly as the engine computes
// it. Used to finite-difference through the whole chain.
struct FrozenSplitPipeline {
  std::vector<DenseLayer> client;
  std::vector<DenseLayer> server;
  KeepMask keep;
  fedsl::DropoutSpec dropout;
  Matrix x;
  Labels y;

  Index kept_count() const {
    Index kept = 0;
    for (std::uint8_t k : keep) kept += k;
    return kept;
  }

  Matrix masked_split(const Matrix& activations) const {
    Matrix out(activations.rows(), activations.cols());
    const double scale = dropout.scale();
    for (Index i = 0; i < activations.rows(); ++i) {
      if (keep[static_cast<std::size_t>(i)]) {
        out.row(i) = activations.row(i) * scale;
      } else {
        out.row(i).setZero();
      }
    }
    return out;
  }

  double loss() const {
    fedsl::ForwardCache ccache = fedsl::stack_forward(client, x);
    Matrix split = masked_split(ccache.output);
    fedsl::ForwardCache scache = fedsl::stack_forward(server, split);
    const Index kept = kept_count();
    Matrix kept_logits(kept, scache.output.cols());
    Labels kept_labels;
    Index row = 0;
    for (Index i = 0; i < x.rows(); ++i) {
      if (!keep[static_cast<std::size_t>(i)]) continue;
      kept_logits.row(row++) = scache.output.row(i);
      kept_labels.push_back(y[static_cast<std::size_t>(i)]);
    }
    return fedsl::softmax_cross_entropy(kept_logits, kept_labels).loss;
  }

  // Analytic gradients via the library's backward path, including
  // dropout_backward as the adjoint of the frozen mask.
  std::pair<std::vector<LayerGrads>, std::vector<LayerGrads>> grads() const {
    fedsl::ForwardCache ccache = fedsl::stack_forward(client, x);
    Matrix split = masked_split(ccache.output);
    fedsl::ForwardCache scache = fedsl::stack_forward(server, split);

    const Index kept = kept_count();
    Matrix kept_logits(kept, scache.output.cols());
    Labels kept_labels;
    std::vector<Index> kept_rows;
    for (Index i = 0; i < x.rows(); ++i) {
      if (!keep[static_cast<std::size_t>(i)]) continue;
      kept_rows.push_back(i);
      kept_logits.row(static_cast<Index>(kept_rows.size()) - 1) = scache.output.row(i);
      kept_labels.push_back(y[static_cast<std::size_t>(i)]);
    }
    fedsl::SoftmaxLoss sl = fedsl::softmax_cross_entropy(kept_logits, kept_labels);

    Matrix upstream = Matrix::Zero(x.rows(), scache.output.cols());
    for (Index i = 0; i < kept; ++i) upstream.row(kept_rows[static_cast<std::size_t>(i)]) = sl.d_logits.row(i);

    fedsl::StackGrads server_grads = fedsl::stack_backward(server, scache, upstream);
    Matrix d_split = fedsl::dropout_backward(server_grads.d_input, keep, dropout);
    fedsl::StackGrads client_grads = fedsl::stack_backward(client, ccache, d_split);
    return {std::move(client_grads.per_layer), std::move(server_grads.per_layer)};
  }
};

}  // namespace testutil
