#include "fedsl/compression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace fedsl {

double target_sparsity(const SparsitySchedule& schedule, int t) {
  if (schedule.rho_f < 0.0 || schedule.rho_f >= 1.0) {
    throw InputError("target_sparsity: rho_f must be in [0, 1)");
  }
  if (t < 1 || t > schedule.total_rounds) {
    throw InputError("target_sparsity: round " + std::to_string(t) + " outside [1, " +
                     std::to_string(schedule.total_rounds) + "]");
  }
  const double x = static_cast<double>(t) / static_cast<double>(schedule.total_rounds) - 1.0;
  return schedule.rho_f + x * x * x * schedule.rho_f;
}

PruneMask build_mask(const Matrix& importance_scores, double target, const PruneMask& existing) {
  if (target < 0.0 || target >= 1.0) {
    throw InputError("build_mask: target sparsity must be in [0, 1)");
  }
  if (existing.bits.rows() != importance_scores.rows() ||
      existing.bits.cols() != importance_scores.cols()) {
    throw DimensionError("build_mask: existing mask shape mismatch");
  }

  const Index n = importance_scores.size();
  // Guard ceil against the product landing one ulp above an integer.
  const auto zero_count = static_cast<Index>(
      std::ceil(target * static_cast<double>(n) - 1e-9));

  PruneMask mask;
  mask.bits = MaskMatrix::Constant(importance_scores.rows(), importance_scores.cols(), 1);

  if (zero_count > 0) {
    const double* scores = importance_scores.data();  // row-major flat order
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    auto lower = [scores](Index a, Index b) {
      if (scores[a] != scores[b]) return scores[a] < scores[b];
      return a < b;
    };
    std::nth_element(order.begin(), order.begin() + zero_count, order.end(), lower);
    std::uint8_t* bits = mask.bits.data();
    for (Index i = 0; i < zero_count; ++i) bits[order[static_cast<std::size_t>(i)]] = 0;
  }

  mask.bits = mask.bits.cwiseProduct(existing.bits);
  return mask;
}

std::vector<double> quantizer_knobs(const QuantizerSpec& spec, double g_min, double g_max) {
  if (!spec.enabled()) throw InputError("quantizer_knobs: q must be >= 1");
  const int knob_count = 1 << spec.bits;
  const double step = (g_max - g_min) / static_cast<double>(knob_count - 1);
  std::vector<double> knobs(static_cast<std::size_t>(knob_count));
  for (int i = 0; i < knob_count; ++i) knobs[static_cast<std::size_t>(i)] = g_min + i * step;
  return knobs;
}

Matrix quantize(const Matrix& grad, const QuantizerSpec& spec, Rng& rng) {
  if (!spec.enabled()) return grad;

  // Range over the nonzero support only; structural zeros from pruning must
  // neither widen the grid nor leave the zero state.
  double g_min = std::numeric_limits<double>::infinity();
  double g_max = 0.0;
  const Index n = grad.size();
  const double* g = grad.data();
  for (Index i = 0; i < n; ++i) {
    const double a = std::abs(g[i]);
    if (a == 0.0) continue;
    g_min = std::min(g_min, a);
    g_max = std::max(g_max, a);
  }
  if (!(g_max > g_min)) return grad;  // empty or degenerate support

  const int intervals = (1 << spec.bits) - 1;
  const double step = (g_max - g_min) / static_cast<double>(intervals);

  Matrix out(grad.rows(), grad.cols());
  double* o = out.data();
  for (Index i = 0; i < n; ++i) {
    const double a = std::abs(g[i]);
    if (a == 0.0) {
      o[i] = 0.0;
      continue;
    }
    if (a == g_max) {  // already on the top knob
      o[i] = g[i];
      continue;
    }
    auto idx = static_cast<int>((a - g_min) / step);
    idx = std::clamp(idx, 0, intervals - 1);
    const double lo = g_min + idx * step;
    const double hi = g_min + (idx + 1) * step;
    const double p_hi = std::clamp((a - lo) / (hi - lo), 0.0, 1.0);
    const double mag = rng.uniform() < p_hi ? hi : lo;
    o[i] = std::copysign(mag, g[i]);
  }
  return out;
}

DropoutResult dropout_forward(const Matrix& activations, const DropoutSpec& spec, Rng& rng) {
  if (spec.p < 0.0 || spec.p >= 1.0) {
    throw InputError("dropout_forward: p must be in [0, 1)");
  }
  DropoutResult result;
  result.dropped.resize(activations.rows(), activations.cols());
  result.keep_mask.resize(static_cast<std::size_t>(activations.rows()));
  const double scale = spec.scale();
  for (Index i = 0; i < activations.rows(); ++i) {
    const bool keep = rng.uniform() >= spec.p;
    result.keep_mask[static_cast<std::size_t>(i)] = keep ? 1 : 0;
    if (keep) {
      result.dropped.row(i) = activations.row(i) * scale;
    } else {
      result.dropped.row(i).setZero();
    }
  }
  return result;
}

Matrix dropout_backward(const Matrix& upstream, const KeepMask& keep_mask,
                        const DropoutSpec& spec) {
  if (static_cast<Index>(keep_mask.size()) != upstream.rows()) {
    throw DimensionError("dropout_backward: keep mask has " +
                         std::to_string(keep_mask.size()) + " rows, upstream has " +
                         std::to_string(upstream.rows()));
  }
  Matrix out(upstream.rows(), upstream.cols());
  const double scale = spec.scale();
  for (Index i = 0; i < upstream.rows(); ++i) {
    if (keep_mask[static_cast<std::size_t>(i)]) {
      out.row(i) = upstream.row(i) * scale;
    } else {
      out.row(i).setZero();
    }
  }
  return out;
}

}  // namespace fedsl
