#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qdc/rng.hpp"
#include "qdc/sparse.hpp"

namespace qdc {

struct SolverMeta {
  std::string method;
  std::size_t iterations = 0;
  /// ||L phi - E phi||_2 for every reported pair.
  std::vector<double> residuals;
  bool converged = false;
  bool retry_applied = false;
  /// Shift actually used by the solver (differs from the target after a retry).
  double effective_target = 0.0;
  std::size_t requested = 0;
};

/// A band of eigenpairs of a symmetric operator. Column j of `eigenvectors`
/// belongs to `eigenvalues[j]`.
struct EigenSystem {
  Vector eigenvalues;
  Matrix eigenvectors;
  double target = 0.0;
  SolverMeta meta;

  std::size_t size() const { return static_cast<std::size_t>(eigenvalues.size()); }
  std::size_t dim() const { return static_cast<std::size_t>(eigenvectors.rows()); }
};

class EigenSolverError : public std::runtime_error {
 public:
  EigenSolverError(const std::string& what, std::vector<double> residuals)
      : std::runtime_error(what), residuals_(std::move(residuals)) {}
  const std::vector<double>& residuals() const { return residuals_; }

 private:
  std::vector<double> residuals_;
};

inline std::vector<double> residual_norms(const SparseMatrix& op, const Vector& values,
                                          const Matrix& vectors) {
  const Matrix r = op * vectors - vectors * values.asDiagonal();
  std::vector<double> out(static_cast<std::size_t>(r.cols()));
  for (Eigen::Index j = 0; j < r.cols(); ++j) out[static_cast<std::size_t>(j)] = r.col(j).norm();
  return out;
}

/// Full spectrum of a symmetric sparse matrix by dense diagonalization,
/// eigenvalues ascending. Intended as ground truth and for small graphs.
inline EigenSystem dense_eigensolve(const SparseMatrix& op, std::size_t dense_limit = 2000) {
  if (op.dim() > dense_limit) {
    throw std::invalid_argument("dense_eigensolve: dimension " + std::to_string(op.dim()) +
                                " exceeds limit " + std::to_string(dense_limit));
  }
  EigenSystem es;
  if (op.dim() == 0) {
    es.meta.method = "dense";
    es.meta.converged = true;
    return es;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(op.to_dense());
  if (solver.info() != Eigen::Success) {
    throw EigenSolverError("dense_eigensolve: symmetric eigensolver failed", {});
  }
  es.eigenvalues = solver.eigenvalues();
  es.eigenvectors = solver.eigenvectors();
  es.meta.method = "dense";
  es.meta.converged = true;
  es.meta.requested = op.dim();
  es.meta.residuals = residual_norms(op, es.eigenvalues, es.eigenvectors);
  return es;
}

/// (L - mu I)^2 x composed as L(Lx) - 2 mu Lx + mu^2 x. The square is never formed.
inline Matrix apply_folded(const SparseMatrix& op, double mu, const Matrix& x) {
  const Matrix lx = op * x;
  Matrix out = op * lx;
  out -= (2.0 * mu) * lx;
  out += (mu * mu) * x;
  return out;
}

struct FoldedOptions {
  double tol = 1e-6;
  std::size_t max_iterations = 500;
  /// Block width is max(min_block, min(k, max_block) + guard), capped at N.
  std::size_t min_block = 64;
  std::size_t max_block = 64;
  std::size_t guard = 16;
  std::uint64_t seed = 0;
  double retry_shift = 1e-6;
  /// Eigenvalues closer than this form one degenerate cluster.
  double cluster_gap = 1e-9;
};

namespace detail {

// Removes the span of `basis` (orthonormal columns) from `q`, two passes.
inline void project_out(Matrix& q, const Matrix& basis) {
  if (basis.cols() == 0 || q.cols() == 0) return;
  for (int pass = 0; pass < 2; ++pass) q -= basis * (basis.transpose() * q);
}

// Orthonormalizes the columns of `q` in place (SVQB, two passes). Directions
// whose relative Gram eigenvalue falls below `drop` are discarded, so the
// result may have fewer columns.
inline void orthonormalize(Matrix& q, double drop = 1e-12) {
  for (int pass = 0; pass < 2 && q.cols() > 0; ++pass) {
    Matrix gram = q.transpose() * q;
    Vector scale(gram.rows());
    for (Eigen::Index i = 0; i < gram.rows(); ++i) {
      scale(i) = gram(i, i) > 0.0 ? 1.0 / std::sqrt(gram(i, i)) : 0.0;
    }
    gram = scale.asDiagonal() * gram * scale.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    const Vector& ev = eig.eigenvalues();
    const double top = ev.size() ? ev.maxCoeff() : 0.0;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      if (top > 0.0 && ev(i) > drop * top) keep.push_back(i);
    }
    Matrix transform(q.cols(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) {
      transform.col(static_cast<Eigen::Index>(c)) =
          eig.eigenvectors().col(keep[c]) / std::sqrt(ev(keep[c]));
    }
    q = q * (scale.asDiagonal() * transform);
  }
}

inline Matrix gaussian_block(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.normal();
  }
  return m;
}

inline Matrix hcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() > 0 ? a.rows() : b.rows(), a.cols() + b.cols());
  if (a.cols()) out.leftCols(a.cols()) = a;
  if (b.cols()) out.rightCols(b.cols()) = b;
  return out;
}

struct LobpcgResult {
  Matrix locked;  // converged vectors, in locking order
  std::vector<double> open_residuals;  // L-residuals of the unlocked block on failure
  std::size_t iterations = 0;
  bool converged = false;
};

// Eigenpairs of L nearest `shift` by unpreconditioned LOBPCG on the folded
// operator A = (L - shift I)^2.
//
// Each iteration performs Rayleigh-Ritz for A over an orthonormal [X, W, P]
// basis, then rotates the new block by a second Rayleigh-Ritz with L inside
// span(X). The rotation leaves the block subspace unchanged but separates
// vectors that A cannot tell apart (E = shift +- d). A column is converged
// when its A-residual <= tol (1 + theta) and its L-residual <= lock_tol.
// Leading converged columns in |rho - shift| order are locked and the block is
// refilled with fresh random directions. The run ends once `wanted` vectors
// are locked and the smallest A-Ritz value left in the block lies beyond the
// wanted-th locked distance (plus `cluster_gap`), so nothing nearer and no
// member of a straddling degenerate cluster is left behind.
inline LobpcgResult folded_lobpcg(const SparseMatrix& op, double shift, std::size_t wanted,
                                  std::size_t block, double tol, double lock_tol,
                                  double cluster_gap, std::size_t max_iterations, Rng& rng) {
  const std::size_t n = op.dim();
  const double shift_sq = shift * shift;
  LobpcgResult out;
  out.locked.resize(static_cast<Eigen::Index>(n), 0);
  std::vector<double> locked_distance;
  Matrix x, lx, ax, p(static_cast<Eigen::Index>(n), 0);

  const auto fold = [&](const Matrix& v, const Matrix& lv) -> Matrix {
    Matrix av = op * lv;
    av -= (2.0 * shift) * lv;
    av += shift_sq * v;
    return av;
  };
  // Rayleigh-Ritz with L inside span(x); p is rotated along when aligned.
  const auto rotate_by_l = [&]() {
    if (x.cols() == 0) return;
    Matrix h = x.transpose() * lx;
    h = 0.5 * (h + h.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(h);
    const Matrix& z = eig.eigenvectors();
    x = x * z;
    lx = lx * z;
    ax = ax * z;
    if (p.cols() == x.cols()) p = p * z;
  };
  const auto restart = [&](Matrix keep) {
    const std::size_t locked = static_cast<std::size_t>(out.locked.cols());
    const std::size_t width = std::min(block, n - locked);
    const std::size_t have = static_cast<std::size_t>(keep.cols());
    x = have < width ? hcat(keep, gaussian_block(n, width - have, rng)) : std::move(keep);
    project_out(x, out.locked);
    orthonormalize(x);
    lx = op * x;
    ax = fold(x, lx);
    p.resize(static_cast<Eigen::Index>(n), 0);
    rotate_by_l();
  };
  const auto finished = [&]() {
    if (locked_distance.size() < wanted) return false;
    if (x.cols() == 0) return true;
    std::vector<double> d = locked_distance;
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(wanted - 1), d.end());
    const double boundary = d[wanted - 1] + cluster_gap;
    Matrix g = x.transpose() * ax;
    g = 0.5 * (g + g.transpose()).eval();
    const double ritz_min = Eigen::SelfAdjointEigenSolver<Matrix>(g, Eigen::EigenvaluesOnly)
                                .eigenvalues()
                                .minCoeff();
    return ritz_min >= boundary * boundary;
  };

  restart(Matrix(static_cast<Eigen::Index>(n), 0));
  while (true) {
    if (finished()) {
      out.converged = true;
      break;
    }
    const Eigen::Index m = x.cols();
    if (m == 0) break;
    Vector theta(m), rho(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      theta(j) = x.col(j).dot(ax.col(j));
      rho(j) = x.col(j).dot(lx.col(j));
    }
    const Matrix r_fold = ax - x * theta.asDiagonal();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      return std::abs(rho(a) - shift) < std::abs(rho(b) - shift);
    });
    std::vector<char> done(static_cast<std::size_t>(m));
    for (Eigen::Index j = 0; j < m; ++j) {
      const double r_l = (lx.col(j) - rho(j) * x.col(j)).norm();
      done[static_cast<std::size_t>(j)] =
          r_fold.col(j).norm() <= tol * (1.0 + std::abs(theta(j))) && r_l <= lock_tol;
    }
    std::size_t lead = 0;
    while (lead < order.size() && done[static_cast<std::size_t>(order[lead])]) ++lead;

    if (lead > 0) {
      Matrix newly(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(lead));
      Matrix keep(static_cast<Eigen::Index>(n), m - static_cast<Eigen::Index>(lead));
      for (std::size_t i = 0; i < order.size(); ++i) {
        if (i < lead) {
          newly.col(static_cast<Eigen::Index>(i)) = x.col(order[i]);
          locked_distance.push_back(std::abs(rho(order[i]) - shift));
        } else {
          keep.col(static_cast<Eigen::Index>(i - lead)) = x.col(order[i]);
        }
      }
      out.locked = hcat(out.locked, newly);
      restart(std::move(keep));
      continue;
    }
    if (out.iterations >= max_iterations) break;
    ++out.iterations;

    std::vector<Eigen::Index> open;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (!done[static_cast<std::size_t>(j)]) open.push_back(j);
    }
    Matrix extra(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(open.size()) + p.cols());
    for (std::size_t c = 0; c < open.size(); ++c) {
      extra.col(static_cast<Eigen::Index>(c)) = r_fold.col(open[c]);
    }
    if (p.cols()) extra.rightCols(p.cols()) = p;
    project_out(extra, out.locked);
    project_out(extra, x);
    orthonormalize(extra);
    if (extra.cols() == 0) break;
    const Matrix l_extra = op * extra;
    const Matrix a_extra = fold(extra, l_extra);

    const Matrix s = hcat(x, extra);
    const Matrix as = hcat(ax, a_extra);
    Matrix g = s.transpose() * as;
    g = 0.5 * (g + g.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(g);
    const Matrix y = eig.eigenvectors().leftCols(m);
    const Matrix y_extra = y.bottomRows(extra.cols());
    p = extra * y_extra;
    x = s * y;
    ax = as * y;
    lx = lx * y.topRows(m) + l_extra * y_extra;
    rotate_by_l();
  }
  if (!out.converged) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      out.open_residuals.push_back((lx.col(j) - x.col(j).dot(lx.col(j)) * x.col(j)).norm());
    }
  }
  return out;
}

// Indices of the k values nearest `shift`, ordered by (|v - shift|, v), then
// extended over values within `gap` of a selected one and over values whose
// distance to `shift` ties a selected distance within `gap`.
inline std::vector<Eigen::Index> select_nearest(const Vector& values, double shift, std::size_t k,
                                                double gap) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    const double da = std::abs(values(a) - shift);
    const double db = std::abs(values(b) - shift);
    return da != db ? da < db : values(a) < values(b);
  });
  std::size_t take = std::min(k, order.size());
  const auto joins = [&](Eigen::Index candidate) {
    const double dc = std::abs(values(candidate) - shift);
    for (std::size_t i = 0; i < take; ++i) {
      const Eigen::Index inside = order[i];
      if (std::abs(values(candidate) - values(inside)) < gap) return true;
      if (std::abs(dc - std::abs(values(inside) - shift)) < gap) return true;
    }
    return false;
  };
  if (take > 0) {
    while (take < order.size() && joins(order[take])) ++take;
  }
  order.resize(take);
  return order;
}

}  // namespace detail

/// The k pairs of a full (dense) spectrum nearest `mu`, with the same ordering
/// and cluster extension as folded_eigensolve().
inline EigenSystem nearest_band(const EigenSystem& full, double mu, std::size_t k,
                                double cluster_gap = 1e-9) {
  const auto order = detail::select_nearest(full.eigenvalues, mu, k, cluster_gap);
  EigenSystem es;
  es.target = mu;
  es.eigenvalues.resize(static_cast<Eigen::Index>(order.size()));
  es.eigenvectors.resize(full.eigenvectors.rows(), static_cast<Eigen::Index>(order.size()));
  es.meta = full.meta;
  es.meta.requested = k;
  es.meta.effective_target = mu;
  es.meta.residuals.clear();
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    es.eigenvalues(col) = full.eigenvalues(order[i]);
    es.eigenvectors.col(col) = full.eigenvectors.col(order[i]);
    if (full.meta.residuals.size() == full.size()) {
      es.meta.residuals.push_back(full.meta.residuals[static_cast<std::size_t>(order[i])]);
    }
  }
  return es;
}

/// The k eigenpairs of a symmetric operator nearest `mu`.
///
/// Runs LOBPCG on the folded operator (L - mu I)^2, touching L only through
/// block products. If the inner solver does not converge within
/// `max_iterations`, it is restarted once at mu + retry_shift. A final
/// Rayleigh-Ritz step with L itself over the locked subspace yields the
/// reported pairs; eigenvalues are the
/// Rayleigh quotients phi^T L phi. Degenerate clusters straddling the k-th
/// pair are included whole, so more than k pairs can be returned.
///
/// Output is sorted by |E - mu| ascending. Throws EigenSolverError when the
/// retry also fails.
inline EigenSystem folded_eigensolve(const SparseMatrix& op, double mu, std::size_t k,
                                     const FoldedOptions& opts = {}) {
  const std::size_t n = op.dim();
  if (k == 0 || k > n) {
    throw std::invalid_argument("folded_eigensolve: k must be in [1, " + std::to_string(n) + "]");
  }
  if (!(opts.tol > 0.0)) throw std::invalid_argument("folded_eigensolve: tol must be positive");

  const std::size_t block =
      std::min(n, std::max(opts.min_block, std::min(k, opts.max_block) + opts.guard));
  Rng rng = Rng::stream(opts.seed, "lobpcg-init");

  double shift = mu;
  detail::LobpcgResult run;
  std::size_t total_iterations = 0;
  bool retried = false;
  for (int attempt = 0; attempt < 2; ++attempt) {
    if (attempt == 1) {
      shift = mu + opts.retry_shift;
      retried = true;
    }
    run = detail::folded_lobpcg(op, shift, k, block, opts.tol, 0.5 * opts.tol, opts.cluster_gap,
                                opts.max_iterations, rng);
    total_iterations += run.iterations;
    if (run.converged) break;
  }

  // Rayleigh-Ritz with L over the locked subspace.
  const Matrix& basis = run.locked;
  Matrix ritz_vectors(static_cast<Eigen::Index>(n), 0);
  Vector ritz_values;
  if (basis.cols() > 0) {
    Matrix projected = basis.transpose() * (op * basis);
    projected = 0.5 * (projected + projected.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(projected);
    ritz_vectors = basis * eig.eigenvectors();
    ritz_values = eig.eigenvalues();
  }

  const std::vector<Eigen::Index> order =
      detail::select_nearest(ritz_values, shift, k, opts.cluster_gap);
  const std::size_t take = order.size();

  EigenSystem es;
  es.target = mu;
  es.eigenvalues.resize(static_cast<Eigen::Index>(take));
  es.eigenvectors.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(take));
  for (std::size_t i = 0; i < take; ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    es.eigenvectors.col(col) = ritz_vectors.col(order[i]);
    es.eigenvectors.col(col).normalize();
  }
  // Rayleigh quotients against L itself.
  const Matrix l_phi = op * es.eigenvectors;
  for (Eigen::Index i = 0; i < es.eigenvectors.cols(); ++i) {
    es.eigenvalues(i) = es.eigenvectors.col(i).dot(l_phi.col(i));
  }
  es.meta.method = "folded-lobpcg";
  es.meta.iterations = total_iterations;
  es.meta.requested = k;
  es.meta.retry_applied = retried;
  es.meta.effective_target = shift;
  es.meta.residuals = residual_norms(op, es.eigenvalues, es.eigenvectors);
  double worst = es.meta.residuals.empty()
                           ? 0.0
                           : *std::max_element(es.meta.residuals.begin(), es.meta.residuals.end());
  es.meta.converged = run.converged && take >= k && worst <= opts.tol;
  if (!es.meta.converged) {
    std::vector<double> reported = es.meta.residuals;
    reported.insert(reported.end(), run.open_residuals.begin(), run.open_residuals.end());
    for (double r : reported) worst = std::max(worst, r);
    throw EigenSolverError("folded_eigensolve: no convergence near mu=" + std::to_string(mu) +
                               " after retry (worst residual " + std::to_string(worst) +
                               ", iterations " + std::to_string(total_iterations) + ")",
                           std::move(reported));
  }
  return es;
}

}  // namespace qdc
