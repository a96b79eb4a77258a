#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "support.hpp"

namespace qdc {
namespace {

double nearest_distance(const Vector& reference, double value) {
  double best = INFINITY;
  for (Eigen::Index i = 0; i < reference.size(); ++i) best = std::min(best, std::abs(reference(i) - value));
  return best;
}

TEST(Dense, SmallSpectra) {
  const auto k3 = dense_eigensolve(normalized_operator(test::complete_graph(3)));
  ASSERT_EQ(k3.size(), 3u);
  EXPECT_NEAR(k3.eigenvalues(0), 0.0, 1e-12);
  EXPECT_NEAR(k3.eigenvalues(1), 0.0, 1e-12);
  EXPECT_NEAR(k3.eigenvalues(2), 1.0, 1e-12);
  const auto k2 = dense_eigensolve(normalized_operator(test::complete_graph(2)));
  EXPECT_NEAR(k2.eigenvalues(0), 0.0, 1e-12);
  EXPECT_NEAR(k2.eigenvalues(1), 1.0, 1e-12);
}

TEST(Dense, OrthonormalBasis) {
  const auto es = dense_eigensolve(normalized_operator(test::random_connected_graph(50, 60, 1)));
  const Matrix gram = es.eigenvectors.transpose() * es.eigenvectors;
  EXPECT_LE((gram - Matrix::Identity(50, 50)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Dense, RefusesAboveLimit) {
  const auto op = normalized_operator(test::path_graph(30));
  EXPECT_THROW(dense_eigensolve(op, 10), std::invalid_argument);
}

TEST(Folded, ApplyMatchesComposition) {
  const auto op = normalized_operator(test::random_connected_graph(40, 40, 2));
  Rng rng(3);
  Matrix x(40, 5);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  const double mu = 0.37;
  const Matrix lx = op * x;
  Matrix expected = op * lx;
  expected -= (2.0 * mu) * lx;
  expected += (mu * mu) * x;
  EXPECT_EQ((apply_folded(op, mu, x) - expected).cwiseAbs().maxCoeff(), 0.0);
  const Matrix d = op.to_dense() - mu * Matrix::Identity(40, 40);
  EXPECT_LE((apply_folded(op, mu, x) - d * d * x).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Folded, CompleteGraphTopEigenpair) {
  const auto es = folded_eigensolve(normalized_operator(test::complete_graph(3)), 1.0, 1);
  ASSERT_EQ(es.size(), 1u);
  EXPECT_NEAR(es.eigenvalues(0), 1.0, 1e-10);
  const Vector u = Vector::Constant(3, 1.0 / std::sqrt(3.0));
  EXPECT_NEAR(std::abs(es.eigenvectors.col(0).dot(u)), 1.0, 1e-10);
}

TEST(Folded, PathGraphNearZero) {
  const auto op = normalized_operator(test::path_graph(10));
  const auto dense = dense_eigensolve(op);
  const auto es = folded_eigensolve(op, 0.0, 4);
  const auto oracle = nearest_band(dense, 0.0, 4);
  ASSERT_EQ(es.size(), oracle.size());
  std::vector<double> a(es.eigenvalues.begin(), es.eigenvalues.end());
  std::vector<double> b(oracle.eigenvalues.begin(), oracle.eigenvalues.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-8);
}

TEST(Folded, FullSpectrumMatchesDense) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto op = normalized_operator(test::random_connected_graph(30 + 10 * seed, 40, seed));
    const auto dense = dense_eigensolve(op);
    const auto es = folded_eigensolve(op, 0.1, op.dim());
    ASSERT_EQ(es.size(), op.dim());
    std::vector<double> got(es.eigenvalues.begin(), es.eigenvalues.end());
    std::sort(got.begin(), got.end());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], dense.eigenvalues(static_cast<Eigen::Index>(i)), 1e-8);
  }
}

TEST(Folded, SubsetOfDenseAndNearest) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const std::size_t n = 60 + 50 * seed;
    const auto op = normalized_operator(test::random_connected_graph(n, n, seed + 100));
    const auto dense = dense_eigensolve(op);
    Rng rng(seed);
    const double mu = rng.uniform(-0.8, 0.9);
    const auto es = folded_eigensolve(op, mu, 8);
    const auto oracle = nearest_band(dense, mu, 8);
    ASSERT_EQ(es.size(), oracle.size());
    for (Eigen::Index i = 0; i < es.eigenvalues.size(); ++i) {
      EXPECT_LE(nearest_distance(dense.eigenvalues, es.eigenvalues(i)), 1e-8);
      EXPECT_NEAR(std::abs(es.eigenvalues(i) - mu), std::abs(oracle.eigenvalues(i) - mu), 1e-8);
    }
    for (double r : es.meta.residuals) EXPECT_LE(r, 1e-6);
  }
}

TEST(Folded, ProjectorsMatchDenseWithinClusters) {
  // K6 has eigenvalue 0 with multiplicity 5; only cluster projectors are basis independent.
  const auto op = normalized_operator(test::complete_graph(6));
  const auto dense = dense_eigensolve(op);
  const auto es = folded_eigensolve(op, 0.2, 2);
  EXPECT_EQ(es.size(), 5u);  // the cluster at 0 is taken whole
  EXPECT_LE((test::cluster_projector(es, 0.0, 1e-6) - test::cluster_projector(dense, 0.0, 1e-6)).norm(), 1e-8);
}

TEST(Folded, DeterministicInSeed) {
  const auto op = normalized_operator(test::random_connected_graph(120, 150, 9));
  FoldedOptions o;
  o.seed = 4;
  const auto a = folded_eigensolve(op, 0.3, 6, o);
  const auto b = folded_eigensolve(op, 0.3, 6, o);
  EXPECT_EQ(a.eigenvalues, b.eigenvalues);
  EXPECT_EQ(a.eigenvectors, b.eigenvectors);
}

TEST(Folded, NonConvergenceIsReported) {
  const auto op = normalized_operator(test::random_connected_graph(300, 300, 5));
  FoldedOptions o;
  o.max_iterations = 1;
  o.tol = 1e-14;
  try {
    folded_eigensolve(op, 0.0, 20, o);
    FAIL() << "expected EigenSolverError";
  } catch (const EigenSolverError& e) {
    EXPECT_FALSE(e.residuals().empty());
  }
}

TEST(Folded, RejectsBadArguments) {
  const auto op = normalized_operator(test::path_graph(5));
  EXPECT_THROW(folded_eigensolve(op, 0.0, 0), std::invalid_argument);
  EXPECT_THROW(folded_eigensolve(op, 0.0, 6), std::invalid_argument);
}

TEST(NearestBand, ExtendsDegenerateClusters) {
  const auto dense = dense_eigensolve(normalized_operator(test::complete_graph(5)));
  EXPECT_EQ(nearest_band(dense, 0.0, 1).size(), 4u);
  EXPECT_EQ(nearest_band(dense, 1.0, 1).size(), 1u);
}

TEST(EigenCache, RoundTrip) {
  const auto op = normalized_operator(test::random_connected_graph(30, 20, 6));
  const auto es = nearest_band(dense_eigensolve(op), 0.5, 7);
  const auto dir = std::filesystem::temp_directory_path() / "qdc_cache_test";
  std::filesystem::remove_all(dir);
  const EigenCache cache(dir);
  EXPECT_FALSE(cache.load(op, 0.5, 7, 1e-6).has_value());
  cache.store(op, 7, 1e-6, es);
  const auto hit = cache.load(op, 0.5, 7, 1e-6);
  ASSERT_TRUE(hit.has_value());
  EXPECT_EQ(hit->eigenvalues, es.eigenvalues);
  EXPECT_EQ(hit->eigenvectors, es.eigenvectors);
  EXPECT_FALSE(cache.load(op, 0.5, 8, 1e-6).has_value());
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace qdc
