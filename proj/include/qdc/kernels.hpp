#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qdc/binary_io.hpp"
#include "qdc/eigen_cache.hpp"
#include "qdc/sparse.hpp"
#include "qdc/spectral.hpp"

namespace qdc {

enum class KernelFamily { gaussian, bandpass, heat, ppr };

inline std::string to_string(KernelFamily f) {
  switch (f) {
    case KernelFamily::gaussian: return "gaussian";
    case KernelFamily::bandpass: return "bandpass";
    case KernelFamily::heat: return "heat";
    case KernelFamily::ppr: return "ppr";
  }
  return "?";
}

inline KernelFamily parse_kernel_family(const std::string& s) {
  if (s == "gaussian") return KernelFamily::gaussian;
  if (s == "bandpass") return KernelFamily::bandpass;
  if (s == "heat") return KernelFamily::heat;
  if (s == "ppr") return KernelFamily::ppr;
  throw std::invalid_argument("unknown kernel family '" + s + "'");
}

inline bool is_spectral(KernelFamily f) {
  return f == KernelFamily::gaussian || f == KernelFamily::bandpass;
}

struct Sparsification {
  enum class Mode { threshold, top_k };
  Mode mode = Mode::threshold;
  double epsilon = 0.0;
  std::size_t k = 0;

  static Sparsification threshold(double epsilon) { return {Mode::threshold, epsilon, 0}; }
  static Sparsification top_k(std::size_t k) { return {Mode::top_k, 0.0, k}; }

  void validate() const {
    if (mode == Mode::threshold && !(epsilon >= 0.0)) {
      throw std::invalid_argument("sparsify: threshold must be >= 0");
    }
    if (mode == Mode::top_k && k < 1) throw std::invalid_argument("sparsify: top-k must be >= 1");
  }

  friend bool operator==(const Sparsification&, const Sparsification&) = default;
};

/// Kernel family plus its parameters. Exactly the parameters of the family
/// are set: gaussian (mu, sigma), bandpass (mu, gamma), heat (t), ppr (alpha).
struct KernelSpec {
  KernelFamily family = KernelFamily::gaussian;
  std::optional<double> mu;
  std::optional<double> sigma;
  std::optional<double> gamma;
  std::optional<double> t;
  std::optional<double> alpha;
  Sparsification sparsify;
  /// Number of eigenpairs for spectral families; min(512, N) when unset.
  std::optional<std::size_t> eigen_budget;

  static KernelSpec gaussian(double mu, double sigma, Sparsification s) {
    KernelSpec k;
    k.family = KernelFamily::gaussian;
    k.mu = mu;
    k.sigma = sigma;
    k.sparsify = s;
    return k;
  }
  static KernelSpec bandpass(double mu, double gamma, Sparsification s) {
    KernelSpec k;
    k.family = KernelFamily::bandpass;
    k.mu = mu;
    k.gamma = gamma;
    k.sparsify = s;
    return k;
  }
  static KernelSpec heat(double t, Sparsification s) {
    KernelSpec k;
    k.family = KernelFamily::heat;
    k.t = t;
    k.sparsify = s;
    return k;
  }
  static KernelSpec ppr(double alpha, Sparsification s) {
    KernelSpec k;
    k.family = KernelFamily::ppr;
    k.alpha = alpha;
    k.sparsify = s;
    return k;
  }

  std::size_t budget(std::size_t n) const {
    return std::min(n, eigen_budget ? *eigen_budget : std::size_t{512});
  }

  void validate() const {
    const std::string name = to_string(family);
    const auto need = [&](const std::optional<double>& v, bool wanted, const char* what) {
      if (wanted && !v) throw std::invalid_argument(name + " kernel requires " + what);
      if (!wanted && v) throw std::invalid_argument(name + " kernel does not take " + what);
    };
    need(mu, is_spectral(family), "mu");
    need(sigma, family == KernelFamily::gaussian, "sigma");
    need(gamma, family == KernelFamily::bandpass, "gamma");
    need(t, family == KernelFamily::heat, "t");
    need(alpha, family == KernelFamily::ppr, "alpha");
    if (mu && !std::isfinite(*mu)) throw std::invalid_argument("mu must be finite");
    if (sigma && !(*sigma > 0.0 && std::isfinite(*sigma))) throw std::invalid_argument("sigma must be > 0");
    if (gamma && !(*gamma > 0.0 && std::isfinite(*gamma))) throw std::invalid_argument("gamma must be > 0");
    if (t && !(*t > 0.0 && std::isfinite(*t))) throw std::invalid_argument("t must be > 0");
    // alpha = 1 is the degenerate teleport-only kernel S = I.
    if (alpha && !(*alpha > 0.0 && *alpha <= 1.0)) throw std::invalid_argument("alpha must be in (0, 1]");
    if (eigen_budget && *eigen_budget < 1) throw std::invalid_argument("eigen_budget must be >= 1");
    sparsify.validate();
  }

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

inline nlohmann::json to_json(const Sparsification& s) {
  if (s.mode == Sparsification::Mode::threshold) return {{"mode", "threshold"}, {"epsilon", s.epsilon}};
  return {{"mode", "top_k"}, {"k", s.k}};
}

inline Sparsification sparsification_from_json(const nlohmann::json& j) {
  const auto mode = j.at("mode").get<std::string>();
  if (mode == "threshold") return Sparsification::threshold(j.at("epsilon").get<double>());
  if (mode == "top_k") return Sparsification::top_k(j.at("k").get<std::size_t>());
  throw std::invalid_argument("unknown sparsification mode '" + mode + "'");
}

inline nlohmann::json to_json(const KernelSpec& k) {
  nlohmann::json j = {{"family", to_string(k.family)}, {"sparsify", to_json(k.sparsify)}};
  if (k.mu) j["mu"] = *k.mu;
  if (k.sigma) j["sigma"] = *k.sigma;
  if (k.gamma) j["gamma"] = *k.gamma;
  if (k.t) j["t"] = *k.t;
  if (k.alpha) j["alpha"] = *k.alpha;
  if (k.eigen_budget) j["eigen_budget"] = *k.eigen_budget;
  return j;
}

inline KernelSpec kernel_spec_from_json(const nlohmann::json& j) {
  KernelSpec k;
  k.family = parse_kernel_family(j.at("family").get<std::string>());
  const auto opt = [&j](const char* key) -> std::optional<double> {
    if (!j.contains(key)) return std::nullopt;
    return j.at(key).get<double>();
  };
  k.mu = opt("mu");
  k.sigma = opt("sigma");
  k.gamma = opt("gamma");
  k.t = opt("t");
  k.alpha = opt("alpha");
  if (j.contains("eigen_budget")) k.eigen_budget = j.at("eigen_budget").get<std::size_t>();
  k.sparsify = sparsification_from_json(j.at("sparsify"));
  k.validate();
  return k;
}

inline Vector gaussian_filter_weights(const Vector& energies, double mu, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_filter_weights: sigma must be > 0");
  Vector w(energies.size());
  for (Eigen::Index a = 0; a < energies.size(); ++a) {
    const double d = energies(a) - mu;
    w(a) = std::exp(-(d * d) / (2.0 * sigma * sigma));
  }
  return w;
}

inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Vector bandpass_filter_weights(const Vector& energies, double mu, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("bandpass_filter_weights: gamma must be > 0");
  Vector w(energies.size());
  for (Eigen::Index a = 0; a < energies.size(); ++a) {
    w(a) = logistic(energies(a) - mu + gamma) * logistic(mu + gamma - energies(a));
  }
  return w;
}

/// Receives consecutive row blocks [begin, begin + block.rows()) of an N x N matrix.
using RowBlockVisitor = std::function<void(std::size_t begin, const RowMatrix& block)>;
/// Fills `block` (already sized) with rows [begin, begin + block.rows()).
using RowBlockSource = std::function<void(std::size_t begin, RowMatrix& block)>;

namespace detail {

// Sum of a[i] * b[i] in a fixed order. Swapping a and b gives the same bits.
inline double ordered_dot(const double* a, const double* b, std::size_t k) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= k; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < k; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace detail

/// Row-major factor B and signs s with Q = B diag(s) B^T, where
/// B = Phi diag(sqrt|w|). Every Q_ij is then a sum of products that are
/// symmetric in i and j.
struct KernelFactor {
  RowMatrix basis;
  std::vector<double> sign;  // +1 or -1 per column
  bool all_positive = true;

  std::size_t dim() const { return static_cast<std::size_t>(basis.rows()); }

  double entry(std::size_t i, std::size_t j) const {
    const auto k = static_cast<std::size_t>(basis.cols());
    const double* bi = basis.row(static_cast<Eigen::Index>(i)).data();
    const double* bj = basis.row(static_cast<Eigen::Index>(j)).data();
    if (all_positive) {
      return detail::ordered_dot(bi, bj, k);
    }
    double acc = 0.0;
    for (std::size_t a = 0; a < k; ++a) acc += sign[a] * (bi[a] * bj[a]);
    return acc;
  }

  void fill(std::size_t begin, RowMatrix& block) const {
    const std::size_t n = dim();
    for (Eigen::Index r = 0; r < block.rows(); ++r) {
      const std::size_t i = begin + static_cast<std::size_t>(r);
      for (std::size_t j = 0; j < n; ++j) block(r, static_cast<Eigen::Index>(j)) = entry(i, j);
    }
  }
};

inline KernelFactor kernel_factor(const EigenSystem& es, const Vector& weights) {
  if (static_cast<std::size_t>(weights.size()) != es.size()) {
    throw std::invalid_argument("assemble_kernel: " + std::to_string(weights.size()) +
                                " weights for " + std::to_string(es.size()) + " eigenpairs");
  }
  KernelFactor f;
  f.basis = es.eigenvectors;
  f.sign.resize(es.size());
  for (Eigen::Index a = 0; a < weights.size(); ++a) {
    f.basis.col(a) *= std::sqrt(std::abs(weights(a)));
    f.sign[static_cast<std::size_t>(a)] = weights(a) < 0.0 ? -1.0 : 1.0;
    f.all_positive = f.all_positive && weights(a) >= 0.0;
  }
  return f;
}

/// Streams Q = sum_a w_a phi_a phi_a^T in row blocks of `block_height` rows.
inline void assemble_kernel(const EigenSystem& es, const Vector& weights, const RowBlockVisitor& visit,
                            std::size_t block_height = 1024) {
  if (block_height == 0) throw std::invalid_argument("assemble_kernel: block height must be >= 1");
  const KernelFactor f = kernel_factor(es, weights);
  const std::size_t n = f.dim();
  RowMatrix block;
  for (std::size_t begin = 0; begin < n; begin += block_height) {
    const std::size_t rows = std::min(block_height, n - begin);
    block.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n));
    f.fill(begin, block);
    visit(begin, block);
  }
}

/// The whole of Q as one dense matrix.
inline Matrix dense_kernel(const EigenSystem& es, const Vector& weights) {
  const std::size_t n = es.dim();
  Matrix q(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  assemble_kernel(es, weights, [&q](std::size_t begin, const RowMatrix& block) {
    q.middleRows(static_cast<Eigen::Index>(begin), block.rows()) = block;
  });
  return q;
}

struct SparsifyStats {
  std::size_t nnz_before = 0;  // nonzero entries of the dense input
  std::size_t nnz_after = 0;
};

/// Drops entries of an N x N matrix supplied in row blocks.
///
/// threshold: keeps entries with |q_ij| >= epsilon (zeros are never stored).
/// top_k: keeps the k entries of largest |q_ij| per row (ties to the lower
/// column), then keeps (i, j) and (j, i) whenever either row selected it.
/// Signs are retained. A pair selected on both sides takes the value from the
/// lower-numbered row, so the output is exactly symmetric even when the input
/// is symmetric only to rounding.
inline SparseMatrix sparsify(std::size_t n, const RowBlockSource& source, const Sparsification& s,
                             std::size_t block_height = 1024, SparsifyStats* stats = nullptr) {
  s.validate();
  if (block_height == 0) throw std::invalid_argument("sparsify: block height must be >= 1");
  struct Picked {
    std::size_t lo, hi, from;
    double value;
  };
  std::vector<Picked> picked;
  std::size_t nnz_before = 0;
  RowMatrix block;
  std::vector<std::size_t> order;
  for (std::size_t begin = 0; begin < n; begin += block_height) {
    const std::size_t rows = std::min(block_height, n - begin);
    block.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n));
    source(begin, block);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t i = begin + r;
      const auto row = block.row(static_cast<Eigen::Index>(r));
      const auto keep = [&](std::size_t j) {
        picked.push_back({std::min(i, j), std::max(i, j), i, row(static_cast<Eigen::Index>(j))});
      };
      for (std::size_t j = 0; j < n; ++j) nnz_before += row(static_cast<Eigen::Index>(j)) != 0.0;
      if (s.mode == Sparsification::Mode::threshold) {
        for (std::size_t j = 0; j < n; ++j) {
          const double v = row(static_cast<Eigen::Index>(j));
          if (v != 0.0 && std::abs(v) >= s.epsilon) keep(j);
        }
      } else {
        order.clear();
        for (std::size_t j = 0; j < n; ++j) {
          if (row(static_cast<Eigen::Index>(j)) != 0.0) order.push_back(j);
        }
        const std::size_t take = std::min(s.k, order.size());
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                          [&](std::size_t a, std::size_t b) {
                            const double va = std::abs(row(static_cast<Eigen::Index>(a)));
                            const double vb = std::abs(row(static_cast<Eigen::Index>(b)));
                            return va != vb ? va > vb : a < b;
                          });
        for (std::size_t c = 0; c < take; ++c) keep(order[c]);
      }
    }
  }
  std::sort(picked.begin(), picked.end(), [](const Picked& a, const Picked& b) {
    if (a.lo != b.lo) return a.lo < b.lo;
    if (a.hi != b.hi) return a.hi < b.hi;
    return a.from < b.from;
  });
  std::vector<Triplet> entries;
  entries.reserve(2 * picked.size());
  for (std::size_t p = 0; p < picked.size(); ++p) {
    if (p > 0 && picked[p].lo == picked[p - 1].lo && picked[p].hi == picked[p - 1].hi) continue;
    const auto& e = picked[p];
    entries.push_back({e.lo, e.hi, e.value});
    if (e.lo != e.hi) entries.push_back({e.hi, e.lo, e.value});
  }
  SparseMatrix out = SparseMatrix::from_triplets(n, std::move(entries));
  if (stats) {
    stats->nnz_before = nnz_before;
    stats->nnz_after = out.nnz();
  }
  return out;
}

inline SparseMatrix sparsify(const Matrix& q, const Sparsification& s, SparsifyStats* stats = nullptr) {
  if (q.rows() != q.cols()) throw std::invalid_argument("sparsify: matrix not square");
  return sparsify(
      static_cast<std::size_t>(q.rows()),
      [&q](std::size_t begin, RowMatrix& block) {
        block = q.middleRows(static_cast<Eigen::Index>(begin), block.rows());
      },
      s, 1024, stats);
}

/// D^{-1/2} Q D^{-1/2} with D the absolute row sums of a symmetric Q. Rows
/// that sum to zero hold no entries and stay empty.
inline SparseMatrix renormalize(const SparseMatrix& q) {
  const std::size_t n = q.dim();
  std::vector<double> degree(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double d = 0.0;
    for (double v : q.row_values(r)) d += std::abs(v);
    degree[r] = d;
  }
  std::vector<std::size_t> offsets(q.row_offsets().begin(), q.row_offsets().end());
  std::vector<std::size_t> cols(q.col_indices().begin(), q.col_indices().end());
  std::vector<double> values(q.nnz());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t p = offsets[r]; p < offsets[r + 1]; ++p) {
      const double scale = std::sqrt(degree[r] * degree[cols[p]]);
      values[p] = q.values()[p] / scale;
    }
  }
  return SparseMatrix::from_csr(n, std::move(offsets), std::move(cols), std::move(values));
}

struct KernelProvenance {
  SolverMeta solver;
  std::size_t eigenpairs = 0;  // 0 for diffusion baselines
  std::size_t nnz_before = 0;
  std::size_t nnz_after = 0;
};

inline nlohmann::json to_json(const SolverMeta& m) {
  double worst = 0.0;
  for (double r : m.residuals) worst = std::max(worst, r);
  return {{"method", m.method},
          {"iterations", m.iterations},
          {"converged", m.converged},
          {"retry_applied", m.retry_applied},
          {"effective_target", m.effective_target},
          {"requested", m.requested},
          {"max_residual", worst},
          {"residuals", m.residuals}};
}

inline SolverMeta solver_meta_from_json(const nlohmann::json& j) {
  SolverMeta m;
  m.method = j.at("method").get<std::string>();
  m.iterations = j.at("iterations").get<std::size_t>();
  m.converged = j.at("converged").get<bool>();
  m.retry_applied = j.at("retry_applied").get<bool>();
  m.effective_target = j.at("effective_target").get<double>();
  m.requested = j.at("requested").get<std::size_t>();
  m.residuals = j.value("residuals", std::vector<double>{});
  return m;
}

/// Rewired propagation operator: sparsified and renormalized kernel.
struct RewiredKernel {
  SparseMatrix matrix;
  KernelSpec spec;
  KernelProvenance provenance;
};

inline nlohmann::json kernel_header_json(const RewiredKernel& k) {
  return {{"spec", to_json(k.spec)},
          {"provenance",
           {{"solver", to_json(k.provenance.solver)},
            {"eigenpairs", k.provenance.eigenpairs},
            {"nnz_before", k.provenance.nnz_before},
            {"nnz_after", k.provenance.nnz_after}}}};
}

enum class EigenMethod { automatic, dense, folded };

inline EigenMethod parse_eigen_method(const std::string& s) {
  if (s == "auto") return EigenMethod::automatic;
  if (s == "dense") return EigenMethod::dense;
  if (s == "folded") return EigenMethod::folded;
  throw std::invalid_argument("unknown eigen method '" + s + "'");
}

struct KernelOptions {
  /// automatic: dense diagonalization when N <= dense_limit, folded LOBPCG otherwise.
  EigenMethod method = EigenMethod::automatic;
  std::size_t dense_limit = 8000;
  FoldedOptions folded;
  std::size_t block_height = 1024;
  const EigenCache* cache = nullptr;
};

/// The eigenpairs a spectral kernel needs: k = budget nearest mu.
inline EigenSystem solve_band(const SparseMatrix& op, double mu, std::size_t k, const KernelOptions& opts) {
  const bool dense = opts.method == EigenMethod::dense ||
                     (opts.method == EigenMethod::automatic && op.dim() <= opts.dense_limit);
  if (opts.cache) {
    if (auto hit = opts.cache->load(op, mu, k, opts.folded.tol)) return *hit;
  }
  EigenSystem es = dense ? nearest_band(dense_eigensolve(op, std::max(opts.dense_limit, op.dim())), mu, k,
                                        opts.folded.cluster_gap)
                         : folded_eigensolve(op, mu, k, opts.folded);
  if (opts.cache) opts.cache->store(op, k, opts.folded.tol, es);
  return es;
}

inline Vector filter_weights(const KernelSpec& spec, const Vector& energies) {
  switch (spec.family) {
    case KernelFamily::gaussian: return gaussian_filter_weights(energies, *spec.mu, *spec.sigma);
    case KernelFamily::bandpass: return bandpass_filter_weights(energies, *spec.mu, *spec.gamma);
    default: throw std::invalid_argument("filter_weights: " + to_string(spec.family) + " is not spectral");
  }
}

/// QDC or BPDC kernel from precomputed eigenpairs.
inline RewiredKernel kernel_from_eigensystem(const EigenSystem& es, const KernelSpec& spec,
                                             std::size_t block_height = 1024) {
  spec.validate();
  const KernelFactor f = kernel_factor(es, filter_weights(spec, es.eigenvalues));
  SparsifyStats stats;
  RewiredKernel out;
  out.matrix = renormalize(sparsify(
      f.dim(), [&f](std::size_t begin, RowMatrix& block) { f.fill(begin, block); }, spec.sparsify,
      block_height, &stats));
  out.spec = spec;
  out.provenance.solver = es.meta;
  out.provenance.eigenpairs = es.size();
  out.provenance.nnz_before = stats.nnz_before;
  out.provenance.nnz_after = stats.nnz_after;
  return out;
}

inline RewiredKernel build_spectral_kernel(const SparseMatrix& op, const KernelSpec& spec,
                                           const KernelOptions& opts = {}) {
  spec.validate();
  if (!is_spectral(spec.family)) {
    throw std::invalid_argument("build_spectral_kernel: " + to_string(spec.family) + " is a diffusion baseline");
  }
  const EigenSystem es = solve_band(op, *spec.mu, spec.budget(op.dim()), opts);
  return kernel_from_eigensystem(es, spec, opts.block_height);
}

/// Columns of alpha (I - (1 - alpha) L)^{-1} for the identity columns in
/// [begin, begin + width), by conjugate gradients to relative residual `tol`.
inline Matrix ppr_columns(const SparseMatrix& op, double alpha, std::size_t begin, std::size_t width,
                          double tol, std::size_t* iterations = nullptr) {
  const auto n = static_cast<Eigen::Index>(op.dim());
  const auto w = static_cast<Eigen::Index>(width);
  const double beta = 1.0 - alpha;
  const auto apply = [&](const Matrix& v) -> Matrix { return v - beta * (op * v); };
  Matrix b = Matrix::Zero(n, w);
  for (Eigen::Index c = 0; c < w; ++c) b(static_cast<Eigen::Index>(begin) + c, c) = alpha;
  Matrix x = Matrix::Zero(n, w);
  Matrix r = b;
  Matrix p = r;
  Vector rr = r.colwise().squaredNorm().transpose();
  const Vector target = (tol * tol) * b.colwise().squaredNorm().transpose();
  const std::size_t max_iterations = 10 * op.dim() + 100;
  std::size_t it = 0;
  for (; it < max_iterations; ++it) {
    bool done = true;
    for (Eigen::Index c = 0; c < w; ++c) done = done && rr(c) <= target(c);
    if (done) break;
    const Matrix ap = apply(p);
    for (Eigen::Index c = 0; c < w; ++c) {
      if (rr(c) <= target(c)) continue;
      const double step = rr(c) / p.col(c).dot(ap.col(c));
      x.col(c) += step * p.col(c);
      r.col(c) -= step * ap.col(c);
      const double next = r.col(c).squaredNorm();
      p.col(c) = r.col(c) + (next / rr(c)) * p.col(c);
      rr(c) = next;
    }
  }
  for (Eigen::Index c = 0; c < w; ++c) {
    if (rr(c) > target(c)) throw std::runtime_error("ppr_columns: conjugate gradients did not converge");
  }
  if (iterations) *iterations = std::max(*iterations, it);
  return x;
}

/// Columns of exp(-t (I - L)) = e^{-t} sum_n t^n L^n / n! for the identity
/// columns in [begin, begin + width). ||L||_2 <= 1 bounds the tail by the sum
/// of the remaining coefficients; the series stops once that is below `tol`.
inline Matrix heat_columns(const SparseMatrix& op, double t, std::size_t begin, std::size_t width,
                           double tol, std::size_t* terms = nullptr) {
  const auto n = static_cast<Eigen::Index>(op.dim());
  const auto w = static_cast<Eigen::Index>(width);
  Matrix power = Matrix::Zero(n, w);
  for (Eigen::Index c = 0; c < w; ++c) power(static_cast<Eigen::Index>(begin) + c, c) = 1.0;
  Matrix sum = Matrix::Zero(n, w);
  std::size_t m = 0;
  for (;; ++m) {
    const double coeff = std::exp(-t + static_cast<double>(m) * std::log(t) - std::lgamma(m + 1.0));
    sum += coeff * power;
    // Remaining coefficients decay at least geometrically with ratio t/(m+2) once m+2 > t.
    const double ratio = t / static_cast<double>(m + 2);
    if (ratio < 0.5) {
      const double next = coeff * t / static_cast<double>(m + 1);
      if (next / (1.0 - ratio) < tol) break;
    }
    power = op * power;
  }
  if (terms) *terms = std::max(*terms, m + 1);
  return sum;
}

/// GDC comparison kernel: dense diffusion matrix S (ppr or heat), symmetrized
/// as (S + S^T) / 2, then sparsified and renormalized like the spectral kernels.
inline RewiredKernel gdc_baseline(const SparseMatrix& op, const KernelSpec& spec, double tol = 1e-8,
                                  std::size_t block_height = 1024) {
  spec.validate();
  if (is_spectral(spec.family)) {
    throw std::invalid_argument("gdc_baseline: " + to_string(spec.family) + " is a spectral kernel");
  }
  const std::size_t n = op.dim();
  Matrix s(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  SolverMeta meta;
  meta.converged = true;
  if (spec.family == KernelFamily::ppr && *spec.alpha == 1.0) {
    s.setIdentity();
    meta.method = "identity";
  } else {
    meta.method = spec.family == KernelFamily::ppr ? "cg" : "taylor";
    for (std::size_t begin = 0; begin < n; begin += block_height) {
      const std::size_t width = std::min(block_height, n - begin);
      s.middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(width)) =
          spec.family == KernelFamily::ppr ? ppr_columns(op, *spec.alpha, begin, width, tol, &meta.iterations)
                                           : heat_columns(op, *spec.t, begin, width, tol, &meta.iterations);
    }
  }
  s = 0.5 * (s + s.transpose()).eval();
  SparsifyStats stats;
  RewiredKernel out;
  out.matrix = renormalize(sparsify(s, spec.sparsify, &stats));
  out.spec = spec;
  out.provenance.solver = meta;
  out.provenance.nnz_before = stats.nnz_before;
  out.provenance.nnz_after = stats.nnz_after;
  return out;
}

/// Any kernel family: spectral ones go through the eigensolver, the rest
/// through the diffusion baseline.
inline RewiredKernel build_kernel(const SparseMatrix& op, const KernelSpec& spec, const KernelOptions& opts = {}) {
  return is_spectral(spec.family) ? build_spectral_kernel(op, spec, opts)
                                  : gdc_baseline(op, spec, 1e-8, opts.block_height);
}

// Kernel file: u64 N, u64 nnz, u64 header length, header JSON (spec and
// provenance), N+1 u64 row offsets, nnz u64 columns, nnz f64 values.

inline void write_kernel(std::ostream& os, const RewiredKernel& k) {
  const std::string header = kernel_header_json(k).dump();
  io::write_u64(os, k.matrix.dim());
  io::write_u64(os, k.matrix.nnz());
  io::write_u64(os, header.size());
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (auto o : k.matrix.row_offsets()) io::write_u64(os, o);
  for (auto c : k.matrix.col_indices()) io::write_u64(os, c);
  for (double v : k.matrix.values()) io::write_f64(os, v);
}

inline RewiredKernel read_kernel(std::istream& is) {
  const std::size_t n = io::read_u64(is);
  const std::size_t nnz = io::read_u64(is);
  const std::size_t header_len = io::read_u64(is);
  std::string header(header_len, '\0');
  is.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!is) throw std::runtime_error("kernel file: truncated header");
  const auto j = nlohmann::json::parse(header);
  std::vector<std::size_t> offsets(n + 1), cols(nnz);
  std::vector<double> values(nnz);
  for (auto& o : offsets) o = io::read_u64(is);
  for (auto& c : cols) c = io::read_u64(is);
  for (auto& v : values) v = io::read_f64(is);
  RewiredKernel k;
  k.matrix = SparseMatrix::from_csr(n, std::move(offsets), std::move(cols), std::move(values));
  if (!k.matrix.is_symmetric()) throw std::runtime_error("kernel file: matrix is not symmetric");
  k.spec = kernel_spec_from_json(j.at("spec"));
  const auto& p = j.at("provenance");
  k.provenance.solver = solver_meta_from_json(p.at("solver"));
  k.provenance.eigenpairs = p.at("eigenpairs").get<std::size_t>();
  k.provenance.nnz_before = p.at("nnz_before").get<std::size_t>();
  k.provenance.nnz_after = p.at("nnz_after").get<std::size_t>();
  return k;
}

inline void save_kernel(const RewiredKernel& k, const std::filesystem::path& path) {
  std::ostringstream out;
  write_kernel(out, k);
  io::write_file(path, out.str());
}

inline RewiredKernel load_kernel(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  return read_kernel(in);
}

}  // namespace qdc
