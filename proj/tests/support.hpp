#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "qdc/qdc.hpp"

namespace qdc::test {

/// Connected graph: a random spanning tree plus `extra` random edges.
/// Labels are drawn from `classes` classes, features are standard normal.
inline GraphDataset random_connected_graph(std::size_t n, std::size_t extra, std::uint64_t seed,
                                           std::size_t classes = 2, std::size_t features = 3) {
  Rng rng(seed);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t v = 1; v < n; ++v) pairs.emplace_back(v, rng.below(v));
  for (std::size_t e = 0; e < extra; ++e) pairs.emplace_back(rng.below(n), rng.below(n));
  RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(features));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = rng.normal();
  }
  std::vector<int> labels(n);
  for (std::size_t v = 0; v < n; ++v) labels[v] = static_cast<int>(v < classes ? v : rng.below(classes));
  return GraphDataset::from_pairs(n, pairs, std::move(x), std::move(labels));
}

inline GraphDataset path_graph(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t v = 0; v + 1 < n; ++v) pairs.emplace_back(v, v + 1);
  std::vector<int> labels(n, 0);
  if (n > 1) labels[n - 1] = 1;
  return GraphDataset::from_pairs(n, pairs, RowMatrix::Ones(static_cast<Eigen::Index>(n), 1), std::move(labels));
}

inline GraphDataset complete_graph(std::size_t n, std::vector<int> labels = {}) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  }
  if (labels.empty()) labels.assign(n, 0);
  return GraphDataset::from_pairs(n, pairs, RowMatrix::Ones(static_cast<Eigen::Index>(n), 1), std::move(labels));
}

/// Spectral projector onto the eigenvectors whose eigenvalues lie within
/// `radius` of `center`.
inline Matrix cluster_projector(const EigenSystem& es, double center, double radius) {
  Matrix p = Matrix::Zero(static_cast<Eigen::Index>(es.dim()), static_cast<Eigen::Index>(es.dim()));
  for (Eigen::Index a = 0; a < es.eigenvalues.size(); ++a) {
    if (std::abs(es.eigenvalues(a) - center) <= radius) p += es.eigenvectors.col(a) * es.eigenvectors.col(a).transpose();
  }
  return p;
}

}  // namespace qdc::test
