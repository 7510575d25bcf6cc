#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace fedsl {

// Batch-by-feature layout everywhere: rows are samples, columns are features.
// Storage is row-major so that .data() is already in serialization order.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = Mat<double>;
using MatrixF = Mat<float>;
using Vector = Vec<double>;
using VectorF = Vec<float>;

// 0/1 per entry; same shape as the tensor it masks.
using MaskMatrix = Mat<std::uint8_t>;

using Index = Eigen::Index;

using Labels = std::vector<int>;

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace fedsl
