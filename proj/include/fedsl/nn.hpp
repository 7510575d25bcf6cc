#pragma once

#include "fedsl/rng.hpp"
#include "fedsl/types.hpp"

#include <utility>
#include <vector>

namespace fedsl {

enum class Activation { ReLU, Identity };

struct DenseLayer {
  Matrix weights;  // out_dim x in_dim
  Vector bias;     // out_dim
  Activation activation = Activation::ReLU;

  Index in_dim() const { return weights.cols(); }
  Index out_dim() const { return weights.rows(); }
};

struct LayerGrads {
  Matrix d_weights;
  Vector d_bias;
  Matrix d_input;
};

// Glorot-uniform weights, zero bias.
DenseLayer make_dense_layer(Index in_dim, Index out_dim, Activation act, Rng& rng);

// x * W^T + b, one bias row added to every batch row.
Matrix linear(const DenseLayer& layer, const Matrix& input);

Matrix apply_activation(Activation act, const Matrix& pre_activation);

// ReLU subgradient at exactly 0 is 0.
Matrix activation_grad(Activation act, const Matrix& pre_activation);

Matrix dense_forward(const DenseLayer& layer, const Matrix& input);

// Gradients of a scalar loss w.r.t. weights, bias and input, given the
// upstream gradient at the layer output and the cached pre-activation.
LayerGrads dense_backward(const DenseLayer& layer, const Matrix& input,
                          const Matrix& pre_activation, const Matrix& upstream);

struct SoftmaxLoss {
  double loss = 0.0;
  Matrix d_logits;
};

// Mean cross entropy over batch rows; d_logits = (softmax - onehot) / batch.
SoftmaxLoss softmax_cross_entropy(const Matrix& logits, const Labels& labels);

// A plain layer stack plus the caches needed for backprop. Shared by the
// client and server halves of a split model, and by monolithic training.
struct ForwardCache {
  std::vector<Matrix> inputs;           // inputs[l]: input of layer l
  std::vector<Matrix> pre_activations;  // pre_activations[l]
  Matrix output;
};

ForwardCache stack_forward(const std::vector<DenseLayer>& layers, const Matrix& input);

struct StackGrads {
  std::vector<LayerGrads> per_layer;
  Matrix d_input;
};

StackGrads stack_backward(const std::vector<DenseLayer>& layers,
                          const ForwardCache& cache, const Matrix& upstream);

}  // namespace fedsl
