#pragma once

#include "fedsl/errors.hpp"
#include "fedsl/rng.hpp"
#include "fedsl/types.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace fedsl {

// Cubic ramp from 0 at t=0 to rho_f at t=T.
struct SparsitySchedule {
  double rho_f = 0.0;  // final sparsity, in [0, 1)
  int total_rounds = 1;
};

// rho_f + (t/T - 1)^3 * rho_f for t in [1, T].
double target_sparsity(const SparsitySchedule& schedule, int t);

struct PruneMask {
  MaskMatrix bits;  // 1 = keep, 0 = pruned

  static PruneMask ones(Index rows, Index cols) {
    PruneMask m;
    m.bits = MaskMatrix::Constant(rows, cols, 1);
    return m;
  }

  double sparsity() const {
    const Index n = bits.size();
    if (n == 0) return 0.0;
    Index zeros = n - static_cast<Index>(bits.cast<int>().sum());
    return static_cast<double>(zeros) / static_cast<double>(n);
  }
};

struct QuantizerSpec {
  int bits = 0;  // q >= 1; 0 means quantization off (pass-through)
  bool enabled() const { return bits >= 1; }
};

struct DropoutSpec {
  double p = 0.0;  // drop probability, in [0, 1)
  double scale() const { return 1.0 / (1.0 - p); }
};

// Fraction of exactly-zero entries.
inline double tensor_sparsity(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Index zeros = 0;
  for (Index i = 0; i < m.size(); ++i) {
    if (m.data()[i] == 0.0) ++zeros;
  }
  return static_cast<double>(zeros) / static_cast<double>(m.size());
}

// Per-weight first-order saliency |w * g|, elementwise.
template <typename D1, typename D2>
Matrix importance(const Eigen::MatrixBase<D1>& weights, const Eigen::MatrixBase<D2>& grads) {
  if (weights.rows() != grads.rows() || weights.cols() != grads.cols()) {
    throw DimensionError("importance: weights and grads must have the same shape");
  }
  return weights.cwiseProduct(grads).cwiseAbs();
}

// Zeros the ceil(target*N) lowest-importance entries (ties broken by ascending
// row-major flat index), then unions the existing mask's zero set so sparsity
// never decreases within an aggregation period.
PruneMask build_mask(const Matrix& importance_scores, double target, const PruneMask& existing);

template <typename Derived>
Matrix apply_mask(const PruneMask& mask, const Eigen::MatrixBase<Derived>& tensor) {
  if (mask.bits.rows() != tensor.rows() || mask.bits.cols() != tensor.cols()) {
    throw DimensionError("apply_mask: mask and tensor must have the same shape");
  }
  return tensor.cwiseProduct(mask.bits.template cast<double>());
}

// Stochastic uniform quantization onto the 2^q-knob grid spanning
// [min|g|, max|g|] over the nonzero support; zero entries pass through as
// exact zeros, signs are preserved, and E[quantize(g)] = g per entry.
// Degenerate range (g_max == g_min, including all-zero input) passes through.
Matrix quantize(const Matrix& grad, const QuantizerSpec& spec, Rng& rng);

// Knob magnitudes n_0..n_{2^q - 1} for a given support range.
std::vector<double> quantizer_knobs(const QuantizerSpec& spec, double g_min, double g_max);

using KeepMask = std::vector<std::uint8_t>;  // one flag per batch row

struct DropoutResult {
  Matrix dropped;
  KeepMask keep_mask;
};

// Inverted dropout over whole feature vectors: each batch row is kept with
// probability 1-p and scaled by 1/(1-p); dropped rows are zero.
DropoutResult dropout_forward(const Matrix& activations, const DropoutSpec& spec, Rng& rng);

// Exact linear adjoint of dropout_forward for a frozen keep mask.
Matrix dropout_backward(const Matrix& upstream, const KeepMask& keep_mask,
                        const DropoutSpec& spec);

}  // namespace fedsl
