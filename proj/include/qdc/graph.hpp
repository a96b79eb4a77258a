#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qdc/rng.hpp"
#include "qdc/sparse.hpp"

namespace qdc {

/// Unordered vertex pair, stored with u < v.
struct Edge {
  std::size_t u;
  std::size_t v;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  friend bool operator==(const Split&, const Split&) = default;
};

/// What canonicalization dropped from raw input.
struct IngestReport {
  std::size_t duplicate_edges = 0;
  std::size_t self_loops = 0;
};

/// Throws std::invalid_argument unless the three index sets are nonempty,
/// pairwise disjoint and inside [0, n).
inline void validate_split(const Split& s, std::size_t n) {
  std::vector<char> seen(n, 0);
  const std::array<std::pair<const char*, const std::vector<std::size_t>*>, 3> parts{
      {{"train", &s.train}, {"val", &s.val}, {"test", &s.test}}};
  for (const auto& [name, idx] : parts) {
    if (idx->empty()) throw std::invalid_argument(std::string("split part '") + name + "' is empty");
    for (std::size_t v : *idx) {
      if (v >= n) {
        throw std::invalid_argument(std::string("split part '") + name + "' index " +
                                    std::to_string(v) + " out of range");
      }
      if (seen[v]) {
        throw std::invalid_argument("split parts overlap at vertex " + std::to_string(v));
      }
      seen[v] = 1;
    }
  }
}

/// Undirected, unweighted attributed graph with node labels and evaluation splits.
/// Immutable after construction.
class GraphDataset {
 public:
  GraphDataset(std::size_t num_vertices, std::vector<Edge> edges, RowMatrix features,
               std::vector<int> labels, std::vector<Split> splits = {})
      : n_(num_vertices),
        edges_(std::move(edges)),
        features_(std::move(features)),
        labels_(std::move(labels)),
        splits_(std::move(splits)) {
    validate();
    build_neighbors();
  }

  /// Canonicalizes raw vertex pairs: (i,j) and (j,i) collapse to one edge and
  /// self-loops are dropped. Out-of-range indices are an error.
  static GraphDataset from_pairs(std::size_t num_vertices,
                                 const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                 RowMatrix features, std::vector<int> labels,
                                 std::vector<Split> splits = {}, IngestReport* report = nullptr) {
    IngestReport local;
    std::vector<Edge> edges;
    edges.reserve(pairs.size());
    for (const auto& [a, b] : pairs) {
      if (a >= num_vertices || b >= num_vertices) {
        throw std::out_of_range("edge (" + std::to_string(a) + ", " + std::to_string(b) +
                                ") references a vertex outside [0, " +
                                std::to_string(num_vertices) + ")");
      }
      if (a == b) {
        ++local.self_loops;
        continue;
      }
      edges.push_back({std::min(a, b), std::max(a, b)});
    }
    std::sort(edges.begin(), edges.end());
    const auto last = std::unique(edges.begin(), edges.end());
    local.duplicate_edges = static_cast<std::size_t>(edges.end() - last);
    edges.erase(last, edges.end());
    if (report) *report = local;
    return GraphDataset(num_vertices, std::move(edges), std::move(features), std::move(labels),
                        std::move(splits));
  }

  std::size_t num_vertices() const { return n_; }
  std::size_t num_edges() const { return edges_.size(); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(features_.cols()); }
  std::size_t num_classes() const { return num_classes_; }

  const std::vector<Edge>& edges() const { return edges_; }
  const RowMatrix& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<Split>& splits() const { return splits_; }
  const std::vector<std::size_t>& neighbors(std::size_t v) const { return neighbors_[v]; }

  GraphDataset with_splits(std::vector<Split> splits) const {
    return GraphDataset(n_, edges_, features_, labels_, std::move(splits));
  }

  friend bool operator==(const GraphDataset& a, const GraphDataset& b) {
    return a.n_ == b.n_ && a.edges_ == b.edges_ && a.features_ == b.features_ &&
           a.labels_ == b.labels_ && a.splits_ == b.splits_;
  }

 private:
  void validate() {
    for (const auto& e : edges_) {
      if (e.u >= e.v || e.v >= n_) {
        throw std::invalid_argument("edge (" + std::to_string(e.u) + ", " + std::to_string(e.v) +
                                    ") is not a canonical pair inside the vertex range");
      }
    }
    if (!std::is_sorted(edges_.begin(), edges_.end()) ||
        std::adjacent_find(edges_.begin(), edges_.end()) != edges_.end()) {
      throw std::invalid_argument("edge list must be sorted and free of duplicates");
    }
    if (static_cast<std::size_t>(features_.rows()) != n_) {
      throw std::invalid_argument("features have " + std::to_string(features_.rows()) +
                                  " rows, expected " + std::to_string(n_));
    }
    if (labels_.size() != n_) {
      throw std::invalid_argument("labels have " + std::to_string(labels_.size()) +
                                  " entries, expected " + std::to_string(n_));
    }
    int max_label = -1;
    for (int l : labels_) {
      if (l < 0) throw std::invalid_argument("negative class id");
      max_label = std::max(max_label, l);
    }
    num_classes_ = static_cast<std::size_t>(max_label + 1);
    std::vector<char> present(num_classes_, 0);
    for (int l : labels_) present[static_cast<std::size_t>(l)] = 1;
    if (std::find(present.begin(), present.end(), 0) != present.end()) {
      throw std::invalid_argument("class ids are not contiguous from 0");
    }
    for (const auto& s : splits_) validate_split(s, n_);
  }

  void build_neighbors() {
    neighbors_.assign(n_, {});
    for (const auto& e : edges_) {
      neighbors_[e.u].push_back(e.v);
      neighbors_[e.v].push_back(e.u);
    }
    for (auto& nb : neighbors_) std::sort(nb.begin(), nb.end());
  }

  std::size_t n_;
  std::vector<Edge> edges_;
  RowMatrix features_;
  std::vector<int> labels_;
  std::vector<Split> splits_;
  std::size_t num_classes_ = 0;
  std::vector<std::vector<std::size_t>> neighbors_;
};

/// Adjacency A (no self-loops), unit weights.
inline SparseMatrix adjacency(const GraphDataset& g) {
  std::vector<Triplet> t;
  t.reserve(2 * g.num_edges());
  for (const auto& e : g.edges()) {
    t.push_back({e.u, e.v, 1.0});
    t.push_back({e.v, e.u, 1.0});
  }
  return SparseMatrix::from_triplets(g.num_vertices(), std::move(t));
}

/// D^{-1/2} (A + I) D^{-1/2}, D the degree matrix of A + I.
///
/// Each stored value is computed as 1 / sqrt(d_i * d_j) from the commutative
/// product d_i * d_j, so the result is exactly symmetric.
inline SparseMatrix normalized_operator(const GraphDataset& g) {
  const std::size_t n = g.num_vertices();
  std::vector<double> degree(n);
  for (std::size_t v = 0; v < n; ++v) degree[v] = 1.0 + static_cast<double>(g.neighbors(v).size());
  std::vector<Triplet> t;
  t.reserve(n + 2 * g.num_edges());
  for (std::size_t v = 0; v < n; ++v) {
    t.push_back({v, v, 1.0 / degree[v]});
    for (std::size_t u : g.neighbors(v)) {
      t.push_back({v, u, 1.0 / std::sqrt(degree[v] * degree[u])});
    }
  }
  return SparseMatrix::from_triplets(n, std::move(t));
}

/// Mean over vertices of the fraction of neighbors sharing the vertex's label.
/// Vertices with an empty neighborhood contribute 0.
template <class NeighborFn>
double neighborhood_homophily(std::size_t n, const std::vector<int>& labels, NeighborFn&& neighbors) {
  if (n == 0) return 0.0;
  double total = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    const auto& nb = neighbors(v);
    if (nb.empty()) continue;
    std::size_t same = 0;
    for (std::size_t u : nb) same += labels[u] == labels[v] ? 1 : 0;
    total += static_cast<double>(same) / static_cast<double>(nb.size());
  }
  return total / static_cast<double>(n);
}

inline double homophily(const GraphDataset& g) {
  return neighborhood_homophily(g.num_vertices(), g.labels(),
                                [&](std::size_t v) -> const auto& { return g.neighbors(v); });
}

struct SplitFractions {
  double train = 0.48;
  double val = 0.32;
  double test = 0.20;
};

namespace detail {

// Largest-remainder apportionment of `total` slots over groups, proportional
// to `weights`, never exceeding `capacity`. Ties go to the lower group index.
inline std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& weights,
                                          const std::vector<std::size_t>& capacity) {
  const std::size_t groups = weights.size();
  const double weight_sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> out(groups, 0);
  if (total == 0 || weight_sum <= 0.0) return out;
  std::vector<double> remainder(groups, 0.0);
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < groups; ++c) {
    const double quota = static_cast<double>(total) * weights[c] / weight_sum;
    out[c] = std::min(capacity[c], static_cast<std::size_t>(std::floor(quota)));
    remainder[c] = quota - std::floor(quota);
    assigned += out[c];
  }
  std::vector<std::size_t> order(groups);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  while (assigned < total) {
    bool progressed = false;
    for (std::size_t c : order) {
      if (assigned == total) break;
      if (out[c] < capacity[c]) {
        ++out[c];
        ++assigned;
        progressed = true;
      }
    }
    if (!progressed) break;
  }
  return out;
}

}  // namespace detail

/// Class-stratified random splits, deterministic in `seed`.
///
/// Part sizes are round(fraction * N). Every class first receives
/// `min_train_per_class` training vertices; the remaining slots of each part
/// are spread over classes in proportion to class size.
inline std::vector<Split> generate_random_splits(const GraphDataset& g, std::uint64_t seed,
                                                 SplitFractions fractions = {},
                                                 std::size_t count = 10,
                                                 std::size_t min_train_per_class = 1) {
  if (!(fractions.train > 0.0 && fractions.val > 0.0 && fractions.test > 0.0)) {
    throw std::invalid_argument("split fractions must be positive");
  }
  if (fractions.train + fractions.val + fractions.test > 1.0 + 1e-12) {
    throw std::invalid_argument("split fractions sum to more than 1");
  }
  const std::size_t n = g.num_vertices();
  const std::size_t classes = g.num_classes();
  std::vector<std::vector<std::size_t>> members(classes);
  for (std::size_t v = 0; v < n; ++v) members[static_cast<std::size_t>(g.labels()[v])].push_back(v);
  for (std::size_t c = 0; c < classes; ++c) {
    if (members[c].size() < min_train_per_class) {
      throw std::invalid_argument("class " + std::to_string(c) + " has " +
                                  std::to_string(members[c].size()) +
                                  " members, fewer than the required " +
                                  std::to_string(min_train_per_class));
    }
  }
  const auto target = [&](double f) {
    return static_cast<std::size_t>(std::llround(f * static_cast<double>(n)));
  };
  const std::size_t n_train = target(fractions.train);
  const std::size_t n_val = target(fractions.val);
  const std::size_t n_test = std::min(target(fractions.test), n - std::min(n, n_train + n_val));
  if (n_train < classes * min_train_per_class) {
    throw std::invalid_argument("training fraction too small for per-class minimum");
  }

  std::vector<double> sizes(classes);
  std::vector<std::size_t> capacity(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    sizes[c] = static_cast<double>(members[c].size());
    capacity[c] = members[c].size() - min_train_per_class;
  }
  std::vector<std::size_t> train_q =
      detail::apportion(n_train - classes * min_train_per_class, sizes, capacity);
  for (std::size_t c = 0; c < classes; ++c) {
    train_q[c] += min_train_per_class;
    capacity[c] = members[c].size() - train_q[c];
  }
  const std::vector<std::size_t> val_q = detail::apportion(n_val, sizes, capacity);
  for (std::size_t c = 0; c < classes; ++c) capacity[c] -= val_q[c];
  const std::vector<std::size_t> test_q = detail::apportion(n_test, sizes, capacity);

  std::vector<Split> splits;
  splits.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    Rng rng = Rng::stream(seed, "split", s);
    Split split;
    for (std::size_t c = 0; c < classes; ++c) {
      std::vector<std::size_t> pool = members[c];
      rng.shuffle(pool);
      auto it = pool.begin();
      split.train.insert(split.train.end(), it, it + static_cast<std::ptrdiff_t>(train_q[c]));
      it += static_cast<std::ptrdiff_t>(train_q[c]);
      split.val.insert(split.val.end(), it, it + static_cast<std::ptrdiff_t>(val_q[c]));
      it += static_cast<std::ptrdiff_t>(val_q[c]);
      split.test.insert(split.test.end(), it, it + static_cast<std::ptrdiff_t>(test_q[c]));
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.val.begin(), split.val.end());
    std::sort(split.test.begin(), split.test.end());
    validate_split(split, n);
    splits.push_back(std::move(split));
  }
  return splits;
}

}  // namespace qdc
