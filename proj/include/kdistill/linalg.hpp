#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <vector>

namespace kdistill {

template <class S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using Scalar = double;
using Mat = MatX<Scalar>;
using Vec = VecX<Scalar>;

using TokenId = int;
using TokenSeq = std::vector<TokenId>;

// Row-wise softmax with max subtraction. Each row of the result sums to 1.
template <class Derived>
MatX<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using S = typename Derived::Scalar;
  MatX<S> out = logits;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    row = (row.array() - row.maxCoeff()).exp();
    row /= row.sum();
  }
  return out;
}

// Row-wise log-softmax.
template <class Derived>
MatX<typename Derived::Scalar> log_softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using S = typename Derived::Scalar;
  MatX<S> out = logits;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    const S m = row.maxCoeff();
    const S lse = m + std::log((row.array() - m).exp().sum());
    row = row.array() - lse;
  }
  return out;
}

template <class Derived>
VecX<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using S = typename Derived::Scalar;
  VecX<S> out = logits;
  out = (out.array() - out.maxCoeff()).exp();
  out /= out.sum();
  return out;
}

template <class Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

// FNV-1a over raw bytes; used for parameter checksums and manifest hashes.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace kdistill
