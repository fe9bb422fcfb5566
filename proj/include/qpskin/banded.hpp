#pragma once

// Diagonal-storage (DIA) sparse operator.  Lattice generators here are
// tridiagonal or pentadiagonal plus two corner entries for periodic chains;
// storing only the non-zero diagonals makes one apply() O(L).

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace qpskin {

template <typename Scalar>
class BandedMatrix {
 public:
  using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  BandedMatrix() = default;

  // Keeps every diagonal of `dense` that holds a non-zero entry.
  explicit BandedMatrix(const Dense& dense) : n_(static_cast<std::size_t>(dense.rows())) {
    const auto n = static_cast<long>(n_);
    for (long d = -(n - 1); d <= n - 1; ++d) {
      Diagonal diag;
      diag.offset = d;
      diag.row_begin = static_cast<std::size_t>(d < 0 ? -d : 0);
      diag.row_end = static_cast<std::size_t>(d < 0 ? n : n - d);
      bool nonzero = false;
      for (std::size_t r = diag.row_begin; r < diag.row_end; ++r) {
        const Scalar v = dense(static_cast<long>(r), static_cast<long>(r) + d);
        diag.values.push_back(v);
        if (v != Scalar(0)) nonzero = true;
      }
      if (nonzero || d == 0) diags_.push_back(std::move(diag));
    }
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t diagonal_count() const noexcept { return diags_.size(); }

  // y = A x
  void apply(std::span<const Scalar> x, std::span<Scalar> y) const {
    for (std::size_t i = 0; i < n_; ++i) y[i] = Scalar(0);
    for (const auto& diag : diags_) {
      const Scalar* v = diag.values.data();
      const std::size_t begin = diag.row_begin;
      const std::size_t end = diag.row_end;
      const long d = diag.offset;
      for (std::size_t r = begin; r < end; ++r)
        y[r] += v[r - begin] * x[static_cast<std::size_t>(static_cast<long>(r) + d)];
    }
  }

  Dense to_dense() const {
    Dense m = Dense::Zero(static_cast<long>(n_), static_cast<long>(n_));
    for (const auto& diag : diags_)
      for (std::size_t r = diag.row_begin; r < diag.row_end; ++r)
        m(static_cast<long>(r), static_cast<long>(r) + diag.offset) = diag.values[r - diag.row_begin];
    return m;
  }

 private:
  struct Diagonal {
    long offset = 0;
    std::size_t row_begin = 0;
    std::size_t row_end = 0;
    std::vector<Scalar> values;
  };

  std::size_t n_ = 0;
  std::vector<Diagonal> diags_;
};

}  // namespace qpskin
