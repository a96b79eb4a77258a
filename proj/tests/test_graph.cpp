#include <filesystem>

#include <gtest/gtest.h>

#include "support.hpp"

namespace qdc {
namespace {

TEST(Graph, FromPairsCanonicalizes) {
  IngestReport report;
  const auto g = GraphDataset::from_pairs(3, {{0, 1}, {1, 0}, {2, 2}, {1, 2}}, RowMatrix::Ones(3, 1), {0, 0, 1}, {},
                                          &report);
  EXPECT_EQ(g.num_edges(), 2u);
  EXPECT_EQ(report.duplicate_edges, 1u);
  EXPECT_EQ(report.self_loops, 1u);
  EXPECT_THROW(GraphDataset::from_pairs(2, {{0, 5}}, RowMatrix::Ones(2, 1), {0, 0}), std::out_of_range);
}

TEST(Graph, HomophilyExamples) {
  EXPECT_EQ(homophily(test::complete_graph(2, {0, 0})), 1.0);
  EXPECT_EQ(homophily(test::complete_graph(2, {0, 1})), 0.0);
  // Isolated vertices count as zero.
  const auto g = GraphDataset::from_pairs(3, {{0, 1}}, RowMatrix::Ones(3, 1), {0, 0, 0});
  EXPECT_DOUBLE_EQ(homophily(g), 2.0 / 3.0);
}

TEST(Graph, HomophilyInvariantUnderClassRelabeling) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto g = test::random_connected_graph(60, 80, seed, 4);
    const std::vector<int> perm = {2, 0, 3, 1};
    std::vector<int> relabeled;
    for (int l : g.labels()) relabeled.push_back(perm[static_cast<std::size_t>(l)]);
    const GraphDataset h(g.num_vertices(), g.edges(), g.features(), relabeled);
    EXPECT_EQ(homophily(g), homophily(h));
  }
}

TEST(Graph, NormalizedOperatorExactlySymmetric) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto op = normalized_operator(test::random_connected_graph(150, 300, seed));
    EXPECT_EQ(op.symmetry_defect(), 0.0);
  }
}

TEST(Graph, SpectrumInUnitInterval) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto g = test::random_connected_graph(20 + 18 * seed, 2 * seed * seed, seed);
    const auto es = dense_eigensolve(normalized_operator(g));
    EXPECT_GE(es.eigenvalues.minCoeff(), -1.0 - 1e-10);
    EXPECT_LE(es.eigenvalues.maxCoeff(), 1.0 + 1e-10);
  }
}

TEST(Graph, RandomSplitsExamples) {
  const auto g = test::random_connected_graph(100, 50, 7, 3);
  const auto splits = generate_random_splits(g, 0);
  ASSERT_EQ(splits.size(), 10u);
  for (const auto& s : splits) {
    EXPECT_EQ(s.train.size(), 48u);
    EXPECT_NO_THROW(validate_split(s, g.num_vertices()));
  }
  EXPECT_EQ(splits, generate_random_splits(g, 0));
  EXPECT_NE(splits, generate_random_splits(g, 1));
  EXPECT_THROW(generate_random_splits(g, 0, {0.6, 0.6, 0.2}), std::invalid_argument);
}

TEST(Graph, RandomSplitsStratified) {
  const auto g = test::random_connected_graph(200, 50, 3, 4);
  std::vector<std::size_t> count(4, 0);
  for (int l : g.labels()) ++count[static_cast<std::size_t>(l)];
  for (const auto& s : generate_random_splits(g, 5)) {
    std::vector<std::size_t> train(4, 0);
    for (auto v : s.train) ++train[static_cast<std::size_t>(g.labels()[v])];
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_GE(train[c], 1u);
      EXPECT_NEAR(static_cast<double>(train[c]), 0.48 * static_cast<double>(count[c]), 1.0);
    }
  }
}

TEST(Graph, SplitValidation) {
  EXPECT_THROW(validate_split({{0}, {0}, {1}}, 3), std::invalid_argument);
  EXPECT_THROW(validate_split({{0}, {1}, {}}, 3), std::invalid_argument);
  EXPECT_THROW(validate_split({{0}, {1}, {3}}, 3), std::invalid_argument);
  EXPECT_NO_THROW(validate_split({{0}, {1}, {2}}, 3));
}

TEST(Bundle, RoundTripIsBitIdentical) {
  auto g = test::random_connected_graph(40, 30, 11, 3);
  g = g.with_splits(generate_random_splits(g, 2, {}, 3));
  const auto dir = std::filesystem::temp_directory_path() / "qdc_bundle_roundtrip";
  std::filesystem::remove_all(dir);
  save_graph_bundle(g, dir / "a");
  const auto once = load_graph_bundle(dir / "a");
  EXPECT_TRUE(once == g);
  save_graph_bundle(once, dir / "b");
  for (const char* f : {"edges.tsv", "features.csv", "labels.txt", "splits.json"}) {
    EXPECT_EQ(io::read_file(dir / "a" / f), io::read_file(dir / "b" / f)) << f;
  }
  EXPECT_TRUE(load_graph_bundle(dir / "b") == once);
  std::filesystem::remove_all(dir);
}

TEST(Bundle, RejectsMalformedInput) {
  const auto dir = std::filesystem::temp_directory_path() / "qdc_bundle_bad";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  io::write_file(dir / "edges.tsv", "0\t1\n1\t9\n");
  io::write_file(dir / "features.csv", "1\n1\n");
  io::write_file(dir / "labels.txt", "0\n1\n");
  EXPECT_THROW(load_graph_bundle(dir), std::exception);
  io::write_file(dir / "edges.tsv", "0\t1\n");
  io::write_file(dir / "features.csv", "1\nx\n");
  EXPECT_THROW(load_graph_bundle(dir), std::exception);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace qdc
