#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "support.hpp"

namespace qdc {
namespace {

// Homophily of the support of an explicit dense adjacency, over vertices that keep an edge.
double dense_support_homophily(const Matrix& a, const std::vector<int>& labels, double threshold) {
  const auto n = static_cast<std::size_t>(a.rows());
  double total = 0.0;
  std::size_t connected = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t degree = 0, same = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || std::abs(a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) < threshold) continue;
      ++degree;
      same += labels[i] == labels[j];
    }
    if (!degree) continue;
    ++connected;
    total += static_cast<double>(same) / static_cast<double>(degree);
  }
  return connected ? total / static_cast<double>(connected) : 0.0;
}

TEST(SpectralHomophily, CompleteGraphSingleLabel) {
  const auto curve = spectral_homophily(test::complete_graph(3));
  for (const auto& p : curve.points) EXPECT_EQ(p.homophily, 1.0);
}

TEST(SpectralHomophily, TwoVertexDifferentLabels) {
  const auto curve = spectral_homophily(test::complete_graph(2, {0, 1}));
  ASSERT_EQ(curve.points.size(), 2u);
  EXPECT_NEAR(curve.points[1].eigenvalue, 1.0, 1e-12);
  EXPECT_EQ(curve.points[1].homophily, 0.0);
}

TEST(SpectralHomophily, MatchesExplicitAdjacencyOracle) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto g = test::random_connected_graph(40, 30, seed, 3);
    const auto es = dense_eigensolve(normalized_operator(g));
    const auto curve = spectral_homophily(g, 1e-3);
    std::size_t a = 0;
    for (const auto& p : curve.points) {
      double h = 0.0;
      for (std::size_t m = 0; m < p.multiplicity; ++m, ++a) {
        const Vector phi = es.eigenvectors.col(static_cast<Eigen::Index>(a));
        h += dense_support_homophily(phi * phi.transpose(), g.labels(), 1e-3);
      }
      EXPECT_NEAR(p.homophily, h / static_cast<double>(p.multiplicity), 1e-15);
      EXPECT_GE(p.homophily, 0.0);
      EXPECT_LE(p.homophily, 1.0);
    }
  }
}

TEST(SpectralHomophily, MultiplicitiesSumToN) {
  const auto g = barbell_graph(6, 2);
  const auto curve = spectral_homophily(g);
  std::size_t total = 0;
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    total += curve.points[i].multiplicity;
    if (i) EXPECT_GT(curve.points[i].eigenvalue - curve.points[i - 1].eigenvalue, 1e-9);
  }
  EXPECT_EQ(total, g.num_vertices());
}

TEST(SpectralHomophily, FullReconstructionRecoversGraph) {
  const auto g = test::random_connected_graph(50, 60, 3, 3);
  const auto op = normalized_operator(g);
  const auto es = dense_eigensolve(op);
  const Matrix rebuilt = es.eigenvectors * es.eigenvalues.asDiagonal() * es.eigenvectors.transpose();
  EXPECT_LT((rebuilt - op.to_dense()).norm(), 1e-8);
  // Self-loop-augmented reconstruction at threshold 0 carries the graph's edges.
  EXPECT_NEAR(dense_support_homophily(rebuilt, g.labels(), 1e-8), homophily(g), 1e-12);
}

TEST(Clusters, ConsecutiveGaps) {
  Vector v(5);
  v << 0.0, 1e-10, 0.5, 0.5 + 5e-10, 1.0;
  const auto c = cluster_ranges(v, 1e-9);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[0], std::make_pair(std::size_t{0}, std::size_t{2}));
  EXPECT_EQ(c[1], std::make_pair(std::size_t{2}, std::size_t{4}));
}

TEST(Aggregate, Examples) {
  auto a = aggregate({1.0, 1.0});
  EXPECT_EQ(a.mean, 1.0);
  EXPECT_EQ(a.std, 0.0);
  a = aggregate({0.8, 0.6});
  EXPECT_NEAR(a.mean, 0.7, 1e-15);
  EXPECT_NEAR(a.std, 0.1, 1e-15);
  EXPECT_EQ(aggregate(std::vector<double>(10, 0.42)).std, 0.0);
  EXPECT_THROW(aggregate_splits({TrainRun{}}), std::invalid_argument);
}

// Kolmogorov distribution tail, P(K > x).
double kolmogorov_tail(double x) {
  double s = 0.0;
  for (int k = 1; k < 100; ++k) s += (k % 2 ? 2.0 : -2.0) * std::exp(-2.0 * k * k * x * x);
  return std::clamp(s, 0.0, 1.0);
}

TEST(Search, LogUniformLearningRatePassesKs) {
  const auto space = SearchSpace::preset("gcn");
  std::vector<double> u;
  for (std::size_t t = 0; t < 250; ++t) {
    const double lr = space.sample(0, t).at("learning_rate").get<double>();
    ASSERT_GE(lr, 1e-4);
    ASSERT_LE(lr, 1e-1);
    u.push_back((std::log(lr) - std::log(1e-4)) / (std::log(1e-1) - std::log(1e-4)));
  }
  std::sort(u.begin(), u.end());
  double d = 0.0;
  const double n = static_cast<double>(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    d = std::max({d, static_cast<double>(i + 1) / n - u[i], u[i] - static_cast<double>(i) / n});
  }
  const double sqrt_n = std::sqrt(n);
  EXPECT_GT(kolmogorov_tail((sqrt_n + 0.12 + 0.11 / sqrt_n) * d), 0.01);
}

TEST(Search, PresetsCoverEveryModel) {
  for (const auto& m : SearchSpace::models()) {
    const auto s = SearchSpace::preset(m);
    const auto setup = decode_trial(m, s.sample(3, 7));
    EXPECT_EQ(setup.kernel.has_value(), m != "gcn") << m;
    EXPECT_EQ(setup.model.multiscale, m == "gcn+multiscale") << m;
  }
  EXPECT_THROW(SearchSpace::preset("mlp"), std::invalid_argument);
}

GraphDataset search_graph() {
  auto g = test::random_connected_graph(40, 40, 8, 2);
  return g.with_splits(generate_random_splits(g, 0, {}, 2));
}

TEST(Search, SinglePointSpaceGivesIdenticalConfigs) {
  SearchSpace s;
  s.model = "gcn";
  s.params = {{"num_layers", Distribution::categorical({2})},
              {"hidden_dim", Distribution::categorical({4})},
              {"dropout", Distribution::uniform(0.1, 0.1)},
              {"learning_rate", Distribution::uniform(0.01, 0.01)},
              {"weight_decay", Distribution::uniform(0.0, 0.0)}};
  SearchOptions o;
  o.trials = 6;
  o.max_epochs = 5;
  o.patience = 2;
  const auto board = run_search(s, search_graph(), 0, o);
  for (const auto& t : board.trials) EXPECT_EQ(t.config, board.trials[0].config);
}

TEST(Search, DeterministicAndRanked) {
  SearchOptions o;
  o.trials = 6;
  o.max_epochs = 20;
  o.patience = 5;
  const auto g = search_graph();
  const auto space = SearchSpace::preset("gcn+qdc");
  const auto a = run_search(space, g, 3, o);
  const auto b = run_search(space, g, 3, o);
  EXPECT_EQ(leaderboard_csv(a), leaderboard_csv(b));
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  o.threads = 3;
  EXPECT_EQ(leaderboard_csv(run_search(space, g, 3, o)), leaderboard_csv(a));
  for (std::size_t r = 1; r < a.ranking.size(); ++r) {
    EXPECT_GE(a.trials[a.ranking[r - 1]].val.mean, a.trials[a.ranking[r]].val.mean);
  }
  EXPECT_EQ(a.ranking.size() + a.failed, a.trials.size());
}

TEST(Search, FailedTrialsKeptOutOfRanking) {
  SearchSpace s = SearchSpace::preset("gcn");
  s.params[2] = {"dropout", Distribution::uniform(1.0, 1.0)};  // invalid config
  SearchOptions o;
  o.trials = 3;
  o.max_epochs = 3;
  o.patience = 1;
  const auto board = run_search(s, search_graph(), 0, o);
  EXPECT_EQ(board.failed, 3u);
  EXPECT_TRUE(board.ranking.empty());
  EXPECT_EQ(board.best(), nullptr);
}

}  // namespace
}  // namespace qdc
