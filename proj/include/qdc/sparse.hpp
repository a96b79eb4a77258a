#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

namespace qdc {

using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;
};

/// Square real matrix in compressed row form.
///
/// Column indices are sorted within each row and no explicit zeros are
/// stored. Every operator built by this library (normalized adjacency,
/// kernels, baselines) is symmetric; from_csr() and the loaders check it.
class SparseMatrix {
 public:
  SparseMatrix() : offsets_(1, 0) {}

  /// Duplicates are summed; entries that end up exactly zero are dropped.
  static SparseMatrix from_triplets(std::size_t n, std::vector<Triplet> entries) {
    for (const auto& t : entries) {
      if (t.row >= n || t.col >= n) {
        throw std::out_of_range("triplet index out of range for dimension " +
                                std::to_string(n));
      }
    }
    std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    SparseMatrix m;
    m.n_ = n;
    m.offsets_.assign(n + 1, 0);
    m.cols_.reserve(entries.size());
    m.values_.reserve(entries.size());
    std::size_t i = 0;
    while (i < entries.size()) {
      const std::size_t r = entries[i].row;
      const std::size_t c = entries[i].col;
      double v = 0.0;
      while (i < entries.size() && entries[i].row == r && entries[i].col == c) {
        v += entries[i].value;
        ++i;
      }
      if (v != 0.0) {
        m.cols_.push_back(c);
        m.values_.push_back(v);
        ++m.offsets_[r + 1];
      }
    }
    for (std::size_t r = 0; r < n; ++r) m.offsets_[r + 1] += m.offsets_[r];
    return m;
  }

  /// Takes ownership of raw compressed-row arrays after checking structure.
  static SparseMatrix from_csr(std::size_t n, std::vector<std::size_t> offsets,
                               std::vector<std::size_t> cols, std::vector<double> values) {
    if (offsets.size() != n + 1 || offsets.front() != 0 || offsets.back() != cols.size() ||
        cols.size() != values.size()) {
      throw std::invalid_argument("inconsistent compressed-row arrays");
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (offsets[r] > offsets[r + 1]) throw std::invalid_argument("row offsets decrease");
      for (std::size_t p = offsets[r]; p < offsets[r + 1]; ++p) {
        if (cols[p] >= n) throw std::invalid_argument("column index out of range");
        if (p > offsets[r] && cols[p] <= cols[p - 1]) {
          throw std::invalid_argument("column indices not strictly increasing");
        }
        if (values[p] == 0.0) throw std::invalid_argument("explicit zero stored");
      }
    }
    SparseMatrix m;
    m.n_ = n;
    m.offsets_ = std::move(offsets);
    m.cols_ = std::move(cols);
    m.values_ = std::move(values);
    return m;
  }

  static SparseMatrix identity(std::size_t n) {
    std::vector<Triplet> t;
    t.reserve(n);
    for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
    return from_triplets(n, std::move(t));
  }

  /// Keeps entries with |a_ij| > drop_below (all nonzeros by default).
  static SparseMatrix from_dense(const Matrix& a, double drop_below = 0.0) {
    if (a.rows() != a.cols()) throw std::invalid_argument("from_dense: matrix not square");
    std::vector<Triplet> t;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index j = 0; j < a.cols(); ++j) {
        if (a(i, j) != 0.0 && std::abs(a(i, j)) > drop_below) {
          t.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), a(i, j)});
        }
      }
    }
    return from_triplets(static_cast<std::size_t>(a.rows()), std::move(t));
  }

  std::size_t dim() const { return n_; }
  std::size_t nnz() const { return cols_.size(); }

  std::span<const std::size_t> row_offsets() const { return offsets_; }
  std::span<const std::size_t> col_indices() const { return cols_; }
  std::span<const double> values() const { return values_; }

  std::span<const std::size_t> row_cols(std::size_t r) const {
    return std::span<const std::size_t>(cols_).subspan(offsets_[r], offsets_[r + 1] - offsets_[r]);
  }
  std::span<const double> row_values(std::size_t r) const {
    return std::span<const double>(values_).subspan(offsets_[r], offsets_[r + 1] - offsets_[r]);
  }

  double at(std::size_t r, std::size_t c) const {
    const auto cols = row_cols(r);
    const auto it = std::lower_bound(cols.begin(), cols.end(), c);
    if (it == cols.end() || *it != c) return 0.0;
    return values_[offsets_[r] + static_cast<std::size_t>(it - cols.begin())];
  }

  /// Largest |a_ij - a_ji| over stored entries (0 for an exactly symmetric matrix).
  double symmetry_defect() const {
    double worst = 0.0;
    for (std::size_t r = 0; r < n_; ++r) {
      for (std::size_t p = offsets_[r]; p < offsets_[r + 1]; ++p) {
        worst = std::max(worst, std::abs(values_[p] - at(cols_[p], r)));
      }
    }
    return worst;
  }
  bool is_symmetric() const { return symmetry_defect() == 0.0; }

  Matrix to_dense() const {
    Matrix d = Matrix::Zero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    for (std::size_t r = 0; r < n_; ++r) {
      for (std::size_t p = offsets_[r]; p < offsets_[r + 1]; ++p) {
        d(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(cols_[p])) = values_[p];
      }
    }
    return d;
  }

  /// out = A * in for a dense block with n rows. Rows accumulate in stored
  /// column order, so results are reproducible bit for bit.
  template <class In, class Out>
  void multiply(const Eigen::MatrixBase<In>& in, Eigen::MatrixBase<Out>& out) const {
    if (static_cast<std::size_t>(in.rows()) != n_) {
      throw std::invalid_argument("sparse multiply: dimension mismatch");
    }
    out.derived().resize(in.rows(), in.cols());
    if constexpr (std::decay_t<In>::IsRowMajor) {
      out.setZero();
      for (std::size_t r = 0; r < n_; ++r) {
        const auto ri = static_cast<Eigen::Index>(r);
        for (std::size_t p = offsets_[r]; p < offsets_[r + 1]; ++p) {
          out.row(ri) += values_[p] * in.row(static_cast<Eigen::Index>(cols_[p]));
        }
      }
    } else {
      for (Eigen::Index c = 0; c < in.cols(); ++c) {
        for (std::size_t r = 0; r < n_; ++r) {
          double acc = 0.0;
          for (std::size_t p = offsets_[r]; p < offsets_[r + 1]; ++p) {
            acc += values_[p] * in(static_cast<Eigen::Index>(cols_[p]), c);
          }
          out(static_cast<Eigen::Index>(r), c) = acc;
        }
      }
    }
  }

  Matrix operator*(const Matrix& in) const {
    Matrix out;
    multiply(in, out);
    return out;
  }

  RowMatrix operator*(const RowMatrix& in) const {
    RowMatrix out;
    multiply(in, out);
    return out;
  }

  Vector operator*(const Vector& in) const {
    Vector out;
    multiply(in, out);
    return out;
  }

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> cols_;
  std::vector<double> values_;
};

}  // namespace qdc
