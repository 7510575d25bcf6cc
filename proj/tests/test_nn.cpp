#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fedsl/errors.hpp"
#include "fedsl/nn.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace fedsl;

namespace {

DenseLayer layer_from(std::initializer_list<std::initializer_list<double>> w,
                      std::initializer_list<double> b, Activation act) {
  DenseLayer layer;
  layer.weights.resize(static_cast<Index>(w.size()),
                       static_cast<Index>(w.begin()->size()));
  Index r = 0;
  for (const auto& row : w) {
    Index c = 0;
    for (double v : row) layer.weights(r, c++) = v;
    ++r;
  }
  layer.bias.resize(static_cast<Index>(b.size()));
  Index i = 0;
  for (double v : b) layer.bias(i++) = v;
  layer.activation = act;
  return layer;
}

}  // namespace

TEST_CASE("dense_forward identity weights clamp negatives through ReLU") {
  DenseLayer layer = layer_from({{1, 0}, {0, 1}}, {0, 0}, Activation::ReLU);
  Matrix input(1, 2);
  input << 2.0, -3.0;
  Matrix out = dense_forward(layer, input);
  CHECK(out(0, 0) == 2.0);
  CHECK(out(0, 1) == 0.0);
}

TEST_CASE("dense_forward forced arithmetic with identity activation") {
  DenseLayer layer = layer_from({{1, 1}}, {-1}, Activation::Identity);
  Matrix input(1, 2);
  input << 0.5, 0.5;
  Matrix out = dense_forward(layer, input);
  CHECK(out(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("dense_forward matches a scalar triple-loop reference") {
  Rng rng(42);
  DenseLayer layer = make_dense_layer(3, 4, Activation::ReLU, rng);
  for (Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = rng.uniform(-0.5, 0.5);
  Matrix input = testutil::random_matrix(2, 3, rng);

  Matrix expected(2, 4);
  for (Index i = 0; i < 2; ++i) {
    for (Index o = 0; o < 4; ++o) {
      double acc = layer.bias(o);
      for (Index j = 0; j < 3; ++j) acc += input(i, j) * layer.weights(o, j);
      expected(i, o) = acc > 0.0 ? acc : 0.0;
    }
  }

  Matrix out = dense_forward(layer, input);
  CHECK((out - expected).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("dense_forward rejects shape mismatch") {
  Rng rng(1);
  DenseLayer layer = make_dense_layer(3, 2, Activation::ReLU, rng);
  CHECK_THROWS_AS(dense_forward(layer, Matrix::Zero(1, 4)), DimensionError);
}

TEST_CASE("dense_backward zero input kills the weight gradient") {
  DenseLayer layer = layer_from({{1, 2}, {3, 4}}, {0, 0}, Activation::Identity);
  Matrix input = Matrix::Zero(3, 2);
  Matrix pre = linear(layer, input);
  Matrix upstream = Matrix::Ones(3, 2);
  LayerGrads g = dense_backward(layer, input, pre, upstream);
  CHECK(g.d_weights.isZero(0.0));
  CHECK(g.d_bias(0) == 3.0);  // bias still accumulates over the batch
}

TEST_CASE("dense_backward dead ReLU blocks the input gradient") {
  DenseLayer layer = layer_from({{1, 0}, {0, 1}}, {-10, -10}, Activation::ReLU);
  Matrix input(2, 2);
  input << 0.5, 0.5, 1.0, 1.0;
  Matrix pre = linear(layer, input);
  REQUIRE(pre.maxCoeff() < 0.0);
  LayerGrads g = dense_backward(layer, input, pre, Matrix::Ones(2, 2));
  CHECK(g.d_input.isZero(0.0));
  CHECK(g.d_weights.isZero(0.0));
}

TEST_CASE("relu subgradient at exactly zero is zero") {
  Matrix pre(1, 2);
  pre << 0.0, 1.0;
  Matrix g = activation_grad(Activation::ReLU, pre);
  CHECK(g(0, 0) == 0.0);
  CHECK(g(0, 1) == 1.0);
}

TEST_CASE("softmax cross entropy on uniform logits is ln C") {
  Matrix logits = Matrix::Zero(2, 4);
  SoftmaxLoss sl = softmax_cross_entropy(logits, {1, 3});
  CHECK(sl.loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("softmax cross entropy saturates toward zero loss") {
  Matrix logits(1, 2);
  logits << 100.0, 0.0;
  SoftmaxLoss sl = softmax_cross_entropy(logits, {0});
  CHECK(sl.loss < 1e-10);
}

TEST_CASE("softmax cross entropy rejects out-of-range labels") {
  Matrix logits = Matrix::Zero(1, 3);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {3}), InputError);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {-1}), InputError);
}

TEST_CASE("softmax gradient matches finite differences") {
  Rng rng(7);
  Matrix logits = testutil::random_matrix(3, 5, rng, 2.0);
  Labels labels = testutil::random_labels(3, 5, rng);
  SoftmaxLoss sl = softmax_cross_entropy(logits, labels);

  const double step = 1e-5;
  for (Index i = 0; i < logits.size(); ++i) {
    const double saved = logits.data()[i];
    logits.data()[i] = saved + step;
    const double up = softmax_cross_entropy(logits, labels).loss;
    logits.data()[i] = saved - step;
    const double down = softmax_cross_entropy(logits, labels).loss;
    logits.data()[i] = saved;
    const double fd = (up - down) / (2.0 * step);
    CHECK(testutil::close_rel(sl.d_logits.data()[i], fd, 1e-4, 1e-8));
  }
}

TEST_CASE("random dense layer gradients match finite differences") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Index> dims{4, 5, 3};
    auto layers = testutil::random_net(dims, rng);
    Matrix x = testutil::random_matrix(3, 4, rng);
    Labels y = testutil::random_labels(3, 3, rng);

    auto analytic = testutil::flatten_grads(testutil::net_grads(layers, x, y));
    auto ptrs = testutil::param_ptrs(layers);
    CHECK(testutil::fd_gradient_check(ptrs, analytic,
                                      [&] { return testutil::net_loss(layers, x, y); }));
  }
}

TEST_CASE("four-layer network gradients match finite differences") {
  Rng rng(13);
  std::vector<Index> dims{5, 6, 4, 4, 3};
  auto layers = testutil::random_net(dims, rng);
  Matrix x = testutil::random_matrix(4, 5, rng);
  Labels y = testutil::random_labels(4, 3, rng);

  auto analytic = testutil::flatten_grads(testutil::net_grads(layers, x, y));
  auto ptrs = testutil::param_ptrs(layers);
  CHECK(testutil::fd_gradient_check(ptrs, analytic,
                                    [&] { return testutil::net_loss(layers, x, y); }));
}

TEST_CASE("identity-activation forward is linear in the input") {
  Rng rng(17);
  DenseLayer layer = make_dense_layer(4, 3, Activation::Identity, rng);
  layer.bias.setZero();
  for (int trial = 0; trial < 20; ++trial) {
    Matrix a = testutil::random_matrix(2, 4, rng);
    Matrix b = testutil::random_matrix(2, 4, rng);
    const double alpha = rng.uniform(-2.0, 2.0);
    Matrix lhs = dense_forward(layer, a + alpha * b);
    Matrix rhs = dense_forward(layer, a) + alpha * dense_forward(layer, b);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("seeded initialization and training are bit-identical") {
  auto train = [](std::uint64_t seed) {
    Rng init(seed);
    std::vector<Index> dims{4, 6, 3};
    auto layers = testutil::random_net(dims, init);
    Rng data(seed + 99);
    for (int step = 0; step < 5; ++step) {
      Matrix x = testutil::random_matrix(4, 4, data);
      Labels y = testutil::random_labels(4, 3, data);
      auto grads = testutil::net_grads(layers, x, y);
      for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l].weights -= 0.1 * grads[l].d_weights;
        layers[l].bias -= 0.1 * grads[l].d_bias;
      }
    }
    return layers;
  };

  auto a = train(123);
  auto b = train(123);
  REQUIRE(a.size() == b.size());
  for (std::size_t l = 0; l < a.size(); ++l) {
    CHECK(a[l].weights == b[l].weights);
    CHECK(a[l].bias == b[l].bias);
  }
}

TEST_CASE("finite outputs for finite inputs") {
  Rng rng(19);
  std::vector<Index> dims{6, 8, 4};
  auto layers = testutil::random_net(dims, rng);
  Matrix x = testutil::random_matrix(5, 6, rng, 10.0);
  ForwardCache cache = stack_forward(layers, x);
  CHECK(all_finite(cache.output));
}
