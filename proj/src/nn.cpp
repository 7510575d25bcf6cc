#include "fedsl/nn.hpp"

#include "fedsl/errors.hpp"

#include <cmath>
#include <string>

namespace fedsl {

DenseLayer make_dense_layer(Index in_dim, Index out_dim, Activation act, Rng& rng) {
  DenseLayer layer;
  layer.weights.resize(out_dim, in_dim);
  const double bound = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  for (Index r = 0; r < out_dim; ++r)
    for (Index c = 0; c < in_dim; ++c) layer.weights(r, c) = rng.uniform(-bound, bound);
  layer.bias = Vector::Zero(out_dim);
  layer.activation = act;
  return layer;
}

Matrix linear(const DenseLayer& layer, const Matrix& input) {
  if (input.cols() != layer.weights.cols()) {
    throw DimensionError("dense_forward: input has " + std::to_string(input.cols()) +
                         " features, layer expects " + std::to_string(layer.weights.cols()));
  }
  Matrix out = input * layer.weights.transpose();
  out.rowwise() += layer.bias.transpose();
  return out;
}

Matrix apply_activation(Activation act, const Matrix& pre_activation) {
  switch (act) {
    case Activation::ReLU:
      return pre_activation.cwiseMax(0.0);
    case Activation::Identity:
      return pre_activation;
  }
  throw InputError("unknown activation");
}

Matrix activation_grad(Activation act, const Matrix& pre_activation) {
  switch (act) {
    case Activation::ReLU:
      return (pre_activation.array() > 0.0).cast<double>().matrix();
    case Activation::Identity:
      return Matrix::Ones(pre_activation.rows(), pre_activation.cols());
  }
  throw InputError("unknown activation");
}

Matrix dense_forward(const DenseLayer& layer, const Matrix& input) {
  return apply_activation(layer.activation, linear(layer, input));
}

LayerGrads dense_backward(const DenseLayer& layer, const Matrix& input,
                          const Matrix& pre_activation, const Matrix& upstream) {
  if (input.cols() != layer.weights.cols() || upstream.cols() != layer.weights.rows() ||
      input.rows() != upstream.rows() || pre_activation.rows() != input.rows() ||
      pre_activation.cols() != upstream.cols()) {
    throw DimensionError("dense_backward: inconsistent shapes");
  }
  Matrix dz = upstream.cwiseProduct(activation_grad(layer.activation, pre_activation));
  LayerGrads g;
  g.d_weights = dz.transpose() * input;
  g.d_bias = dz.colwise().sum().transpose();
  g.d_input = dz * layer.weights;
  return g;
}

SoftmaxLoss softmax_cross_entropy(const Matrix& logits, const Labels& labels) {
  const Index batch = logits.rows();
  const Index classes = logits.cols();
  if (static_cast<Index>(labels.size()) != batch) {
    throw DimensionError("softmax_cross_entropy: one label per batch row required");
  }
  for (int y : labels) {
    if (y < 0 || y >= classes) {
      throw InputError("softmax_cross_entropy: label " + std::to_string(y) +
                       " out of range [0, " + std::to_string(classes) + ")");
    }
  }

  SoftmaxLoss result;
  result.d_logits.resize(batch, classes);
  double loss = 0.0;
  for (Index i = 0; i < batch; ++i) {
    const double zmax = logits.row(i).maxCoeff();
    Eigen::RowVectorXd shifted = logits.row(i).array() - zmax;
    Eigen::RowVectorXd ex = shifted.array().exp();
    const double denom = ex.sum();
    loss -= shifted(labels[i]) - std::log(denom);
    result.d_logits.row(i) = ex / denom;
    result.d_logits(i, labels[i]) -= 1.0;
  }
  result.loss = loss / static_cast<double>(batch);
  result.d_logits /= static_cast<double>(batch);
  return result;
}

ForwardCache stack_forward(const std::vector<DenseLayer>& layers, const Matrix& input) {
  ForwardCache cache;
  cache.inputs.reserve(layers.size());
  cache.pre_activations.reserve(layers.size());
  Matrix x = input;
  for (const DenseLayer& layer : layers) {
    cache.inputs.push_back(x);
    Matrix z = linear(layer, x);
    cache.pre_activations.push_back(z);
    x = apply_activation(layer.activation, z);
  }
  cache.output = std::move(x);
  return cache;
}

StackGrads stack_backward(const std::vector<DenseLayer>& layers,
                          const ForwardCache& cache, const Matrix& upstream) {
  StackGrads grads;
  grads.per_layer.resize(layers.size());
  Matrix up = upstream;
  for (std::size_t l = layers.size(); l-- > 0;) {
    grads.per_layer[l] =
        dense_backward(layers[l], cache.inputs[l], cache.pre_activations[l], up);
    up = grads.per_layer[l].d_input;
  }
  grads.d_input = std::move(up);
  return grads;
}

}  // namespace fedsl
