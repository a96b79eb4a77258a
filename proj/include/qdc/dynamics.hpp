#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qdc/graph.hpp"
#include "qdc/spectral.hpp"

namespace qdc {

/// Two copies of K_lobe joined through a chain of `path_length` vertices.
/// Vertices [0, lobe) and [lobe + path, 2 lobe + path) are the lobes; the
/// chain runs from vertex lobe - 1 to vertex lobe + path. Labels mark the lobe
/// side (chain vertices in the first half get 0), features are all ones.
inline GraphDataset barbell_graph(std::size_t lobe_size, std::size_t path_length) {
  if (lobe_size < 3) throw std::invalid_argument("barbell_graph: lobe size must be >= 3");
  if (path_length < 1) throw std::invalid_argument("barbell_graph: path length must be >= 1");
  const std::size_t n = 2 * lobe_size + path_length;
  const std::size_t second = lobe_size + path_length;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < lobe_size; ++i) {
    for (std::size_t j = i + 1; j < lobe_size; ++j) {
      pairs.emplace_back(i, j);
      pairs.emplace_back(second + i, second + j);
    }
  }
  for (std::size_t v = lobe_size - 1; v < second; ++v) pairs.emplace_back(v, v + 1);
  std::vector<int> labels(n);
  for (std::size_t v = 0; v < n; ++v) labels[v] = 2 * v < n ? 0 : 1;
  return GraphDataset::from_pairs(n, pairs, RowMatrix::Ones(static_cast<Eigen::Index>(n), 1),
                                  std::move(labels), {});
}

/// I - L: positive semidefinite, with the stationary direction as nullspace.
inline SparseMatrix psd_operator(const SparseMatrix& op) {
  std::vector<Triplet> t;
  t.reserve(op.nnz() + op.dim());
  for (std::size_t r = 0; r < op.dim(); ++r) {
    t.push_back({r, r, 1.0});
    const auto cols = op.row_cols(r);
    const auto vals = op.row_values(r);
    for (std::size_t p = 0; p < cols.size(); ++p) t.push_back({r, cols[p], -vals[p]});
  }
  return SparseMatrix::from_triplets(op.dim(), std::move(t));
}

inline void validate_time_grid(const std::vector<double>& times) {
  if (times.empty() || times.front() != 0.0) throw std::invalid_argument("time grid must start at 0");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) throw std::invalid_argument("time grid must be strictly ascending");
  }
}

/// 0, dt, 2 dt, ..., steps dt.
inline std::vector<double> uniform_time_grid(std::size_t steps, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("time step must be > 0");
  std::vector<double> t(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) t[i] = static_cast<double>(i) * dt;
  return t;
}

struct PropagationRun {
  std::string kind;  // "heat" or "schrodinger"
  std::vector<double> times;
  /// Heat: f(t). Schrodinger: |psi_i(t)|^2.
  std::vector<Vector> snapshots;
  /// Schrodinger only: real and imaginary parts of psi(t).
  std::vector<Vector> real;
  std::vector<Vector> imag;
};

/// f(t) = sum_a exp(-E_a t) <phi_a, f0> phi_a over the spectrum of `psd`.
inline PropagationRun heat_propagate(const SparseMatrix& psd, const Vector& f0, const std::vector<double>& times) {
  validate_time_grid(times);
  if (static_cast<std::size_t>(f0.size()) != psd.dim()) {
    throw std::invalid_argument("heat_propagate: initial state has wrong length");
  }
  const EigenSystem es = dense_eigensolve(psd, psd.dim());
  const Vector c = es.eigenvectors.transpose() * f0;
  PropagationRun run;
  run.kind = "heat";
  run.times = times;
  for (double t : times) {
    if (t == 0.0) {
      run.snapshots.push_back(f0);
      continue;
    }
    Vector decay(c.size());
    for (Eigen::Index a = 0; a < c.size(); ++a) decay(a) = std::exp(-es.eigenvalues(a) * t) * c(a);
    run.snapshots.push_back(es.eigenvectors * decay);
  }
  return run;
}

/// psi(t) = sum_a exp(-i E_a t) <phi_a, psi0> phi_a over the spectrum of `psd`,
/// with psi0 = psi0_re + i psi0_im of unit norm.
inline PropagationRun schrodinger_propagate(const SparseMatrix& psd, const Vector& psi0_re, const Vector& psi0_im,
                                            const std::vector<double>& times) {
  validate_time_grid(times);
  if (static_cast<std::size_t>(psi0_re.size()) != psd.dim() || psi0_im.size() != psi0_re.size()) {
    throw std::invalid_argument("schrodinger_propagate: initial state has wrong length");
  }
  const double norm = std::sqrt(psi0_re.squaredNorm() + psi0_im.squaredNorm());
  if (std::abs(norm - 1.0) > 1e-12) {
    throw std::invalid_argument("schrodinger_propagate: initial state must have unit norm");
  }
  const EigenSystem es = dense_eigensolve(psd, psd.dim());
  const Vector c_re = es.eigenvectors.transpose() * psi0_re;
  const Vector c_im = es.eigenvectors.transpose() * psi0_im;
  PropagationRun run;
  run.kind = "schrodinger";
  run.times = times;
  for (double t : times) {
    Vector re, im;
    if (t == 0.0) {
      re = psi0_re;
      im = psi0_im;
    } else {
      // (c_re + i c_im)(cos Et - i sin Et)
      Vector a_re(c_re.size()), a_im(c_re.size());
      for (Eigen::Index a = 0; a < c_re.size(); ++a) {
        const double cs = std::cos(es.eigenvalues(a) * t);
        const double sn = std::sin(es.eigenvalues(a) * t);
        a_re(a) = c_re(a) * cs + c_im(a) * sn;
        a_im(a) = c_im(a) * cs - c_re(a) * sn;
      }
      re = es.eigenvectors * a_re;
      im = es.eigenvectors * a_im;
    }
    run.snapshots.push_back(re.cwiseAbs2() + im.cwiseAbs2());
    run.real.push_back(std::move(re));
    run.imag.push_back(std::move(im));
  }
  return run;
}

inline PropagationRun schrodinger_propagate(const SparseMatrix& psd, const Vector& psi0,
                                            const std::vector<double>& times) {
  return schrodinger_propagate(psd, psi0, Vector::Zero(psi0.size()), times);
}

}  // namespace qdc
