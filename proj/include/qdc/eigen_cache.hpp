#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "qdc/binary_io.hpp"
#include "qdc/spectral.hpp"

namespace qdc {

/// FNV-1a over the dimension and compressed-row arrays of an operator.
inline std::uint64_t operator_hash(const SparseMatrix& op) {
  std::uint64_t h = fnv1a("qdc-operator");
  const auto mix = [&h](std::uint64_t word) {
    for (int i = 0; i < 8; ++i) {
      h ^= (word >> (8 * i)) & 0xffULL;
      h *= 0x100000001b3ULL;
    }
  };
  mix(op.dim());
  for (auto o : op.row_offsets()) mix(o);
  for (auto c : op.col_indices()) mix(c);
  for (double v : op.values()) mix(std::bit_cast<std::uint64_t>(v));
  return h;
}

// File layout: u64 N, u64 count, f64 mu, f64 tol, count eigenvalues, then
// the N x count eigenvector matrix column by column.

inline void write_eigensystem(std::ostream& os, const EigenSystem& es, double tol) {
  io::write_u64(os, es.dim());
  io::write_u64(os, es.size());
  io::write_f64(os, es.target);
  io::write_f64(os, tol);
  for (Eigen::Index i = 0; i < es.eigenvalues.size(); ++i) io::write_f64(os, es.eigenvalues(i));
  for (Eigen::Index j = 0; j < es.eigenvectors.cols(); ++j) {
    for (Eigen::Index i = 0; i < es.eigenvectors.rows(); ++i) io::write_f64(os, es.eigenvectors(i, j));
  }
}

inline EigenSystem read_eigensystem(std::istream& is, double* tol = nullptr) {
  const auto n = static_cast<Eigen::Index>(io::read_u64(is));
  const auto k = static_cast<Eigen::Index>(io::read_u64(is));
  EigenSystem es;
  es.target = io::read_f64(is);
  const double stored_tol = io::read_f64(is);
  if (tol) *tol = stored_tol;
  es.eigenvalues.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) es.eigenvalues(i) = io::read_f64(is);
  es.eigenvectors.resize(n, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) es.eigenvectors(i, j) = io::read_f64(is);
  }
  es.meta.method = "cache";
  es.meta.converged = true;
  es.meta.effective_target = es.target;
  return es;
}

/// On-disk store of eigensystems keyed by (operator hash, mu, k, tol).
class EigenCache {
 public:
  explicit EigenCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  /// Cache rooted at $QDC_CACHE_DIR, or nothing when the variable is unset or empty.
  static std::optional<EigenCache> from_environment() {
    const char* dir = std::getenv("QDC_CACHE_DIR");
    if (!dir || !*dir) return std::nullopt;
    return EigenCache(dir);
  }

  const std::filesystem::path& dir() const { return dir_; }

  std::filesystem::path path_for(std::uint64_t hash, double mu, std::size_t k, double tol) const {
    char name[96];
    std::snprintf(name, sizeof name, "eig-%016llx-%016llx-%zu-%016llx.bin",
                  static_cast<unsigned long long>(hash),
                  static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(mu)), k,
                  static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(tol)));
    return dir_ / name;
  }

  std::optional<EigenSystem> load(const SparseMatrix& op, double mu, std::size_t k, double tol) const {
    const auto path = path_for(operator_hash(op), mu, k, tol);
    if (!std::filesystem::is_regular_file(path)) return std::nullopt;
    std::istringstream in(io::read_file(path));
    EigenSystem es = read_eigensystem(in);
    if (es.dim() != op.dim()) return std::nullopt;
    es.meta.requested = k;
    es.meta.residuals = residual_norms(op, es.eigenvalues, es.eigenvectors);
    return es;
  }

  void store(const SparseMatrix& op, std::size_t k, double tol, const EigenSystem& es) const {
    std::filesystem::create_directories(dir_);
    std::ostringstream out;
    write_eigensystem(out, es, tol);
    io::write_file(path_for(operator_hash(op), es.target, k, tol), out.str());
  }

 private:
  std::filesystem::path dir_;
};

}  // namespace qdc
