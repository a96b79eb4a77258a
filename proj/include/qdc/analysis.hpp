#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qdc/binary_io.hpp"
#include "qdc/gnn.hpp"
#include "qdc/graph.hpp"
#include "qdc/kernels.hpp"
#include "qdc/rng.hpp"
#include "qdc/spectral.hpp"

namespace qdc {

struct HomophilyPoint {
  double eigenvalue = 0.0;  // cluster mean
  double homophily = 0.0;
  std::size_t multiplicity = 0;
};

struct SpectralHomophilyCurve {
  std::vector<HomophilyPoint> points;  // ascending eigenvalue
  double global_homophily = 0.0;
  double threshold = 1e-7;
};

/// Groups ascending values into runs whose consecutive gaps are below `tol`.
inline std::vector<std::pair<std::size_t, std::size_t>> cluster_ranges(const Vector& ascending, double tol) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const auto n = static_cast<std::size_t>(ascending.size());
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i == n || !(ascending(static_cast<Eigen::Index>(i)) - ascending(static_cast<Eigen::Index>(i - 1)) < tol)) {
      out.emplace_back(begin, i);
      begin = i;
    }
  }
  return out;
}

/// Homophily of the support of phi phi^T: edges (i, j), i != j, with
/// |phi_i phi_j| >= threshold. Averaged over vertices with at least one such
/// edge; 0 when there are none.
///
/// For fixed i the kept j form a suffix of the vertices sorted by |phi_j|, so
/// each vertex costs two binary searches (all vertices, same class).
inline double eigenvector_support_homophily(const Vector& phi, const std::vector<int>& labels,
                                            std::size_t classes, double threshold) {
  const auto n = static_cast<std::size_t>(phi.size());
  if (n == 0) return 0.0;
  std::vector<double> all(n);
  std::vector<std::vector<double>> by_class(classes);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = std::abs(phi(static_cast<Eigen::Index>(i)));
    all[i] = a;
    by_class[static_cast<std::size_t>(labels[i])].push_back(a);
  }
  std::sort(all.begin(), all.end());
  for (auto& c : by_class) std::sort(c.begin(), c.end());
  double total = 0.0;
  std::size_t connected = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = std::abs(phi(static_cast<Eigen::Index>(i)));
    const auto kept = [&](const std::vector<double>& sorted) {
      const auto it = std::partition_point(sorted.begin(), sorted.end(), [&](double b) { return a * b < threshold; });
      return static_cast<std::size_t>(sorted.end() - it);
    };
    const std::size_t self = a * a >= threshold ? 1 : 0;
    const std::size_t degree = kept(all) - self;
    if (degree == 0) continue;
    ++connected;
    const std::size_t same = kept(by_class[static_cast<std::size_t>(labels[i])]) - self;
    total += static_cast<double>(same) / static_cast<double>(degree);
  }
  return connected ? total / static_cast<double>(connected) : 0.0;
}

/// Homophily of the graph rebuilt from each eigenvalue cluster of L.
/// A cluster's value is the mean over its eigenvectors' single-vector supports.
inline SpectralHomophilyCurve spectral_homophily(const GraphDataset& g, double threshold = 1e-7,
                                                 double cluster_tol = 1e-9, std::size_t dense_limit = 50000) {
  const EigenSystem es = dense_eigensolve(normalized_operator(g), dense_limit);
  SpectralHomophilyCurve curve;
  curve.threshold = threshold;
  curve.global_homophily = homophily(g);
  for (const auto& [begin, end] : cluster_ranges(es.eigenvalues, cluster_tol)) {
    HomophilyPoint p;
    p.multiplicity = end - begin;
    double value = 0.0, h = 0.0;
    for (std::size_t a = begin; a < end; ++a) {
      value += es.eigenvalues(static_cast<Eigen::Index>(a));
      h += eigenvector_support_homophily(es.eigenvectors.col(static_cast<Eigen::Index>(a)), g.labels(),
                                         g.num_classes(), threshold);
    }
    p.eigenvalue = value / static_cast<double>(p.multiplicity);
    p.homophily = h / static_cast<double>(p.multiplicity);
    curve.points.push_back(p);
  }
  return curve;
}

inline std::string curve_csv(const SpectralHomophilyCurve& c) {
  std::string out = "eigenvalue,homophily,multiplicity\n";
  for (const auto& p : c.points) {
    out += io::format_double(p.eigenvalue) + "," + io::format_double(p.homophily) + "," +
           std::to_string(p.multiplicity) + "\n";
  }
  return out;
}

inline nlohmann::json to_json(const SpectralHomophilyCurve& c) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : c.points) {
    points.push_back({{"eigenvalue", p.eigenvalue}, {"homophily", p.homophily}, {"multiplicity", p.multiplicity}});
  }
  return {{"global_homophily", c.global_homophily}, {"threshold", c.threshold}, {"points", points}};
}

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // population
};

inline Aggregate aggregate(const std::vector<double>& xs) {
  Aggregate a;
  if (xs.empty()) return a;
  // Shifting by the first value keeps the spread of equal values exactly 0.
  double offset = 0.0;
  for (double x : xs) offset += x - xs.front();
  a.mean = xs.front() + offset / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - a.mean) * (x - a.mean);
  a.std = std::sqrt(ss / static_cast<double>(xs.size()));
  return a;
}

/// Mean and population standard deviation of test accuracy over runs.
inline Aggregate aggregate_splits(const std::vector<TrainRun>& runs) {
  if (runs.size() < 2) throw std::invalid_argument("aggregate_splits: need at least 2 runs");
  std::vector<double> acc;
  for (const auto& r : runs) acc.push_back(r.test_accuracy);
  return aggregate(acc);
}

/// One hyperparameter's sampling law.
struct Distribution {
  enum class Kind { categorical, uniform, log_uniform };
  Kind kind = Kind::uniform;
  std::vector<nlohmann::json> choices;
  double lo = 0.0;
  double hi = 0.0;

  static Distribution categorical(std::vector<nlohmann::json> c) { return {Kind::categorical, std::move(c), 0, 0}; }
  static Distribution uniform(double lo, double hi) { return {Kind::uniform, {}, lo, hi}; }
  static Distribution log_uniform(double lo, double hi) { return {Kind::log_uniform, {}, lo, hi}; }

  nlohmann::json sample(Rng& rng) const {
    switch (kind) {
      case Kind::categorical: return choices[static_cast<std::size_t>(rng.below(choices.size()))];
      case Kind::uniform: return rng.uniform(lo, hi);
      case Kind::log_uniform: return rng.log_uniform(lo, hi);
    }
    return nullptr;
  }

  nlohmann::json describe() const {
    switch (kind) {
      case Kind::categorical: return {{"categorical", choices}};
      case Kind::uniform: return {{"uniform", {lo, hi}}};
      case Kind::log_uniform: return {{"log_uniform", {lo, hi}}};
    }
    return nullptr;
  }
};

/// Model family plus ordered hyperparameter distributions. Sampling follows
/// the declared order, so a trial's draw depends only on (seed, trial index).
struct SearchSpace {
  std::string model;
  std::vector<std::pair<std::string, Distribution>> params;

  static std::vector<std::string> models() { return {"gcn", "gcn+gdc", "gcn+qdc", "gcn+bpdc", "gcn+multiscale"}; }

  static SearchSpace preset(const std::string& model) {
    const auto layers = Distribution::categorical({1, 2});
    const auto hidden = Distribution::categorical({2, 4, 8, 16, 32, 64, 128});
    const auto dropout = Distribution::uniform(0.0, 0.99);
    const auto lr = Distribution::log_uniform(1e-4, 1e-1);
    const auto decay = Distribution::uniform(0.0, 0.9);
    SearchSpace s;
    s.model = model;
    if (model == "gcn+multiscale") {
      s.params = {{"gcn_num_layers", layers}, {"gcn_hidden_dim", hidden}, {"gcn_dropout", dropout},
                  {"qdc_num_layers", layers}, {"qdc_hidden_dim", hidden}, {"qdc_dropout", dropout},
                  {"mu", Distribution::uniform(-1.0, 1.0)},           {"sigma", Distribution::uniform(0.1, 1.0)},
                  {"epsilon", Distribution::log_uniform(1e-7, 1e-1)},
                  {"combinator", Distribution::categorical({"concat", "add"})},
                  {"learning_rate", lr},                              {"weight_decay", decay}};
      return s;
    }
    s.params = {{"num_layers", layers}, {"hidden_dim", hidden}, {"dropout", dropout}};
    if (model == "gcn+gdc") {
      s.params.push_back({"alpha", Distribution::uniform(0.001, 0.5)});
      s.params.push_back({"epsilon", Distribution::uniform(1e-7, 1e-1)});
    } else if (model == "gcn+qdc") {
      s.params.push_back({"mu", Distribution::uniform(-1.0, 1.0)});
      s.params.push_back({"sigma", Distribution::uniform(0.1, 1.0)});
      s.params.push_back({"epsilon", Distribution::log_uniform(1e-7, 1e-1)});
    } else if (model == "gcn+bpdc") {
      s.params.push_back({"mu", Distribution::uniform(-1.0, 1.0)});
      s.params.push_back({"gamma", Distribution::uniform(0.1, 1.0)});
      s.params.push_back({"epsilon", Distribution::log_uniform(1e-7, 1e-1)});
    } else if (model != "gcn") {
      throw std::invalid_argument("unknown model family '" + model + "'");
    }
    s.params.push_back({"learning_rate", lr});
    s.params.push_back({"weight_decay", decay});
    return s;
  }

  nlohmann::json sample(std::uint64_t seed, std::size_t trial) const {
    Rng rng = Rng::stream(seed, "sampler", trial);
    nlohmann::json config = nlohmann::json::object();
    for (const auto& [name, dist] : params) config[name] = dist.sample(rng);
    return config;
  }

  nlohmann::json describe() const {
    nlohmann::json j = {{"model", model}, {"params", nlohmann::json::array()}};
    for (const auto& [name, dist] : params) j["params"].push_back({{"name", name}, {"distribution", dist.describe()}});
    return j;
  }
};

/// Model, optimizer and (optional) kernel settings decoded from a flat trial config.
struct TrialSetup {
  ModelConfig model;
  TrainConfig train;
  std::optional<KernelSpec> kernel;
};

inline TrialSetup decode_trial(const std::string& model, const nlohmann::json& c) {
  TrialSetup t;
  const auto tower = [&c](const std::string& prefix) {
    TowerConfig tc;
    tc.num_layers = c.at(prefix + "num_layers").get<std::size_t>();
    tc.hidden_dim = c.at(prefix + "hidden_dim").get<std::size_t>();
    tc.dropout = c.at(prefix + "dropout").get<double>();
    return tc;
  };
  if (model == "gcn+multiscale") {
    t.model.tower = tower("gcn_");
    t.model.second = tower("qdc_");
    t.model.multiscale = true;
    t.model.combinator = parse_combinator(c.at("combinator").get<std::string>());
  } else {
    t.model.tower = tower("");
  }
  t.train.learning_rate = c.at("learning_rate").get<double>();
  t.train.weight_decay = c.at("weight_decay").get<double>();
  if (model == "gcn+gdc") {
    t.kernel = KernelSpec::ppr(c.at("alpha").get<double>(), Sparsification::threshold(c.at("epsilon").get<double>()));
  } else if (model == "gcn+qdc" || model == "gcn+multiscale") {
    t.kernel = KernelSpec::gaussian(c.at("mu").get<double>(), c.at("sigma").get<double>(),
                                    Sparsification::threshold(c.at("epsilon").get<double>()));
  } else if (model == "gcn+bpdc") {
    t.kernel = KernelSpec::bandpass(c.at("mu").get<double>(), c.at("gamma").get<double>(),
                                    Sparsification::threshold(c.at("epsilon").get<double>()));
  }
  return t;
}

struct Trial {
  std::size_t index = 0;
  nlohmann::json config;
  Aggregate val;
  Aggregate test;
  std::vector<double> split_val;
  std::vector<double> split_test;
  std::size_t kernel_nnz = 0;
  bool failed = false;
  std::string failure;
};

struct Leaderboard {
  std::string model;
  std::uint64_t seed = 0;
  std::vector<Trial> trials;   // in trial order, failed ones included
  std::vector<std::size_t> ranking;  // indices of successful trials, best first
  std::size_t failed = 0;

  const Trial* best() const { return ranking.empty() ? nullptr : &trials[ranking.front()]; }
};

struct SearchOptions {
  std::size_t trials = 250;
  std::size_t max_epochs = 1000;
  std::size_t patience = 50;
  std::size_t threads = 1;
  KernelOptions kernel;
  /// Called after each finished trial (from worker threads, serialized).
  std::function<void(const Trial&)> progress;
};

/// Seeded random search. Every trial samples a config, builds its kernel,
/// trains once per split, and records mean and population std of the best-val
/// checkpoint accuracies. Failed trials (non-finite loss, invalid config,
/// eigensolver failure) keep their slot but are left out of the ranking.
/// Ranking: mean val accuracy descending, then trial index.
inline Leaderboard run_search(const SearchSpace& space, const GraphDataset& g, std::uint64_t seed,
                              const SearchOptions& opts = {}) {
  if (g.splits().empty()) throw std::invalid_argument("run_search: dataset has no splits");
  const SparseMatrix op = normalized_operator(g);
  const SparseFeatures x = SparseFeatures::from_dense(g.features());
  const bool spectral = space.model == "gcn+qdc" || space.model == "gcn+bpdc" || space.model == "gcn+multiscale";
  std::optional<EigenSystem> full;
  const bool dense = opts.kernel.method == EigenMethod::dense ||
                     (opts.kernel.method == EigenMethod::automatic && op.dim() <= opts.kernel.dense_limit);
  if (spectral && dense) full = dense_eigensolve(op, std::max(op.dim(), opts.kernel.dense_limit));

  Leaderboard board;
  board.model = space.model;
  board.seed = seed;
  board.trials.resize(opts.trials);

  const auto run_trial = [&](std::size_t index) {
    Trial trial;
    trial.index = index;
    trial.config = space.sample(seed, index);
    try {
      TrialSetup setup = decode_trial(space.model, trial.config);
      setup.train.max_epochs = opts.max_epochs;
      setup.train.patience = std::min(opts.patience, opts.max_epochs - 1);
      setup.model.validate();
      std::optional<RewiredKernel> kernel;
      if (setup.kernel) {
        if (full) {
          const KernelSpec& spec = *setup.kernel;
          kernel = kernel_from_eigensystem(nearest_band(*full, *spec.mu, spec.budget(op.dim()),
                                                        opts.kernel.folded.cluster_gap),
                                           spec, opts.kernel.block_height);
        } else {
          kernel = build_kernel(op, *setup.kernel, opts.kernel);
        }
        trial.kernel_nnz = kernel->matrix.nnz();
      }
      const SparseMatrix& first = setup.model.multiscale || !kernel ? op : kernel->matrix;
      const SparseMatrix* second = setup.model.multiscale ? &kernel->matrix : nullptr;
      for (std::size_t s = 0; s < g.splits().size(); ++s) {
        GcnModel model(setup.model, g.feature_dim(), g.num_classes(), first, second);
        TrainConfig tc = setup.train;
        tc.seed = Rng::stream(seed, "train", index * 1024 + s).next_u64();
        const TrainRun run = train(model, tc, x, g.labels(), g.splits()[s]);
        if (run.failed) throw std::runtime_error("split " + std::to_string(s) + ": " + run.failure);
        trial.split_val.push_back(run.best_val_accuracy);
        trial.split_test.push_back(run.test_accuracy);
      }
      trial.val = aggregate(trial.split_val);
      trial.test = aggregate(trial.split_test);
    } catch (const std::exception& e) {
      trial.failed = true;
      trial.failure = e.what();
    }
    return trial;
  };

  std::mutex report;
  std::atomic<std::size_t> next{0};
  const auto worker = [&]() {
    for (std::size_t i = next++; i < opts.trials; i = next++) {
      Trial t = run_trial(i);
      std::lock_guard<std::mutex> lock(report);
      board.trials[i] = std::move(t);
      if (opts.progress) opts.progress(board.trials[i]);
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(opts.threads, opts.trials));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (const auto& t : board.trials) {
    if (t.failed) {
      ++board.failed;
    } else {
      board.ranking.push_back(t.index);
    }
  }
  std::stable_sort(board.ranking.begin(), board.ranking.end(), [&](std::size_t a, std::size_t b) {
    const double va = board.trials[a].val.mean;
    const double vb = board.trials[b].val.mean;
    return va != vb ? va > vb : a < b;
  });
  return board;
}

/// Ranked rows; test accuracy appears only on the top row.
inline std::string leaderboard_csv(const Leaderboard& b) {
  std::string out = "rank,trial,val_mean,val_std,test_mean,test_std,kernel_nnz,config\n";
  for (std::size_t r = 0; r < b.ranking.size(); ++r) {
    const Trial& t = b.trials[b.ranking[r]];
    std::string config = t.config.dump();
    std::string quoted = "\"";
    for (char ch : config) quoted += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    quoted += '"';
    out += std::to_string(r + 1) + "," + std::to_string(t.index) + "," + io::format_double(t.val.mean) + "," +
           io::format_double(t.val.std) + "," + (r == 0 ? io::format_double(t.test.mean) : "") + "," +
           (r == 0 ? io::format_double(t.test.std) : "") + "," + std::to_string(t.kernel_nnz) + "," + quoted + "\n";
  }
  return out;
}

inline nlohmann::json to_json(const Leaderboard& b) {
  nlohmann::json ranked = nlohmann::json::array();
  for (std::size_t r = 0; r < b.ranking.size(); ++r) {
    const Trial& t = b.trials[b.ranking[r]];
    nlohmann::json row = {{"rank", r + 1},
                          {"trial", t.index},
                          {"config", t.config},
                          {"val_mean", t.val.mean},
                          {"val_std", t.val.std},
                          {"split_val", t.split_val},
                          {"kernel_nnz", t.kernel_nnz}};
    if (r == 0) {
      row["test_mean"] = t.test.mean;
      row["test_std"] = t.test.std;
      row["split_test"] = t.split_test;
    }
    ranked.push_back(std::move(row));
  }
  nlohmann::json failed = nlohmann::json::array();
  for (const auto& t : b.trials) {
    if (t.failed) failed.push_back({{"trial", t.index}, {"config", t.config}, {"failure", t.failure}});
  }
  return {{"model", b.model},          {"seed", b.seed},          {"trials", b.trials.size()},
          {"failed_count", b.failed}, {"leaderboard", ranked}, {"failed", failed}};
}

}  // namespace qdc
