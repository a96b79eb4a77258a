// Acceptance run: one PASS/FAIL line per criterion. Dataset-backed criteria
// read bundles from $QDC_DATA_DIR/<name> (default: <repo>/data).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"

#ifndef QDC_SOURCE_DIR
#define QDC_SOURCE_DIR "."
#endif
#ifndef QDC_CLI_PATH
#define QDC_CLI_PATH "qdc"
#endif

namespace fs = std::filesystem;
using namespace qdc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct DatasetRow {
  const char* name;
  double homophily;
  std::size_t vertices;
  std::size_t edges;
};

const std::vector<DatasetRow> kDatasets = {
    {"cornell", 0.11, 183, 280},      {"texas", 0.06, 183, 295},         {"wisconsin", 0.16, 251, 466},
    {"chameleon", 0.25, 2277, 31421}, {"squirrel", 0.22, 5201, 198493},  {"actor", 0.24, 7600, 26752},
    {"cora", 0.83, 2708, 5278},       {"citeseer", 0.71, 3327, 4676},    {"pubmed", 0.79, 18717, 44327},
};

fs::path data_dir() {
  const char* env = std::getenv("QDC_DATA_DIR");
  return env ? fs::path(env) : fs::path(QDC_SOURCE_DIR) / "data";
}

std::map<std::string, GraphDataset> cache;

const GraphDataset& bundle(const std::string& name) {
  auto it = cache.find(name);
  if (it != cache.end()) return it->second;
  const fs::path dir = data_dir() / name;
  if (!fs::is_directory(dir)) throw std::runtime_error("bundle not found: " + dir.string());
  return cache.emplace(name, load_graph_bundle(dir)).first->second;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double x, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << x;
  return os.str();
}

Outcome homophily_reproduction() {
  const auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool ok = true;
  for (const auto& row : kDatasets) {
    const double h = homophily(bundle(row.name));
    const bool hit = std::abs(h - row.homophily) <= 0.01 + 1e-12;
    ok = ok && hit;
    detail += std::string(row.name) + "=" + fmt(h, 3) + (hit ? " " : "(!) ");
  }
  const double wall = seconds_since(t0);
  ok = ok && wall < 10.0;
  return {ok, detail + "in " + fmt(wall, 3) + " s (tol 0.01, limit 10 s)"};
}

Outcome dataset_statistics() {
  std::string detail;
  bool ok = true;
  for (const auto& row : kDatasets) {
    const auto& g = bundle(row.name);
    const bool hit = g.num_vertices() == row.vertices && g.num_edges() == row.edges;
    ok = ok && hit;
    detail += std::string(row.name) + " " + std::to_string(g.num_vertices()) + "/" + std::to_string(g.num_edges()) +
              (hit ? " " : "(!) ");
  }
  return {ok, detail};
}

Outcome kernel_oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  Rng rng(20);
  for (std::uint64_t i = 0; i < 20; ++i) {
    const std::size_t n = 20 + rng.below(181);
    const auto op = normalized_operator(test::random_connected_graph(n, rng.below(2 * n), 1000 + i));
    const double mu = rng.uniform(-1.0, 1.0), sigma = rng.uniform(0.1, 1.0);
    const auto dense = dense_eigensolve(op);
    FoldedOptions o;
    o.seed = i;
    const auto folded = folded_eigensolve(op, mu, n, o);
    const Matrix a = dense_kernel(dense, gaussian_filter_weights(dense.eigenvalues, mu, sigma));
    const Matrix b = dense_kernel(folded, gaussian_filter_weights(folded.eigenvalues, mu, sigma));
    worst = std::max(worst, (a - b).norm());
  }
  const double wall = seconds_since(t0);
  return {worst <= 1e-6 && wall < 120.0,
          "max Frobenius " + fmt(worst, 3) + " (tol 1e-6) in " + fmt(wall, 3) + " s (limit 120 s)"};
}

Outcome eigensolver_correctness() {
  double worst_value = 0.0, worst_order = 0.0;
  Rng rng(40);
  for (std::uint64_t i = 0; i < 20; ++i) {
    const std::size_t n = 20 + rng.below(481);
    const auto op = normalized_operator(test::random_connected_graph(n, rng.below(3 * n), 2000 + i));
    const double mu = rng.uniform(-1.0, 1.0);
    const auto dense = dense_eigensolve(op);
    FoldedOptions o;
    o.seed = i;
    const auto es = folded_eigensolve(op, mu, 8, o);
    const auto oracle = nearest_band(dense, mu, 8);
    if (es.size() != oracle.size()) return {false, "graph " + std::to_string(i) + ": pair count differs"};
    for (Eigen::Index a = 0; a < es.eigenvalues.size(); ++a) {
      double nearest = INFINITY;
      for (Eigen::Index b = 0; b < dense.eigenvalues.size(); ++b) {
        nearest = std::min(nearest, std::abs(es.eigenvalues(a) - dense.eigenvalues(b)));
      }
      worst_value = std::max(worst_value, nearest);
      worst_order = std::max(worst_order, std::abs(std::abs(es.eigenvalues(a) - mu) - std::abs(oracle.eigenvalues(a) - mu)));
    }
  }
  return {worst_value <= 1e-8 && worst_order <= 1e-8,
          "max distance to oracle " + fmt(worst_value, 3) + ", max rank mismatch " + fmt(worst_order, 3) + " (tol 1e-8)"};
}

Outcome quantum_invariants() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto psd = psd_operator(normalized_operator(barbell_graph(5, 1)));
  const auto times = uniform_time_grid(1000, 1.0);
  Vector start = Vector::Zero(11);
  start(0) = 1.0;
  const auto q = schrodinger_propagate(psd, start, times);
  double drift = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    drift = std::max(drift, std::abs(std::sqrt(q.real[i].squaredNorm() + q.imag[i].squaredNorm()) - 1.0));
  }
  const auto h = heat_propagate(psd, start, times);
  const Matrix l = psd.to_dense();
  // Non-increasing up to rounding in the quadratic form: slack 1e-15 E(0).
  const double energy0 = start.dot(l * start);
  bool monotone = true;
  double rise = 0.0;
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double step = h.snapshots[i].dot(l * h.snapshots[i]) - h.snapshots[i - 1].dot(l * h.snapshots[i - 1]);
    rise = std::max(rise, step);
    monotone = monotone && step <= 1e-15 * energy0;
  }
  const auto two = psd_operator(normalized_operator(test::complete_graph(2)));
  const auto fine = uniform_time_grid(1000, 0.01);
  Vector e0 = Vector::Zero(2);
  e0(0) = 1.0;
  const auto q2 = schrodinger_propagate(two, e0, fine);
  const auto h2 = heat_propagate(two, e0, fine);
  double analytic = 0.0;
  for (std::size_t i = 0; i < fine.size(); ++i) {
    const double t = fine[i];
    analytic = std::max({analytic, std::abs(q2.snapshots[i](1) - std::sin(t / 2) * std::sin(t / 2)),
                         std::abs(h2.snapshots[i](0) - (1 + std::exp(-t)) / 2),
                         std::abs(h2.snapshots[i](1) - (1 - std::exp(-t)) / 2)});
  }
  const double wall = seconds_since(t0);
  return {drift < 1e-10 && monotone && analytic <= 1e-10,
          "norm drift " + fmt(drift, 3) + " (tol 1e-10), energy monotone " + (monotone ? "yes" : "no") +
              ", two-vertex error " + fmt(analytic, 3) + " (tol 1e-10), " + fmt(wall, 3) + " s"};
}

Outcome gradient_checks() {
  const auto g = test::random_connected_graph(10, 10, 1, 3, 4);
  const auto op = normalized_operator(g);
  const auto x = SparseFeatures::from_dense(g.features());
  std::vector<std::size_t> rows(10);
  for (std::size_t i = 0; i < 10; ++i) rows[i] = i;
  const auto q = kernel_from_eigensystem(dense_eigensolve(op),
                                         KernelSpec::gaussian(0.3, 0.4, Sparsification::threshold(1e-3)));
  ModelConfig one, two, ms;
  one.tower = {1, 8, 0.0};
  two.tower = {2, 8, 0.0};
  ms.tower = {2, 6, 0.0};
  ms.multiscale = true;
  ms.second = {2, 4, 0.0};
  ms.combinator = Combinator::concat;
  std::string detail;
  bool ok = true;
  for (const auto& [name, mc] : std::vector<std::pair<std::string, ModelConfig>>{{"1-layer", one}, {"2-layer", two}, {"multiscale-concat", ms}}) {
    GcnModel m(mc, 4, 3, op, mc.multiscale ? &q.matrix : nullptr);
    m.initialize(7);
    const double err = gradient_check(m, x, g.labels(), rows, 1e-5);
    ok = ok && err < 1e-4;
    detail += name + " " + fmt(err, 3) + " ";
  }
  return {ok, detail + "(tol 1e-4)"};
}

SearchOptions sweep_options(std::size_t trials) {
  SearchOptions o;
  o.trials = trials;
  return o;
}

Outcome baseline_training() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& cora = bundle("cora");
  const auto g = cora.with_splits(generate_random_splits(cora, 0));
  const auto board = run_search(SearchSpace::preset("gcn"), g, 0, sweep_options(50));
  const auto* best = board.best();
  if (!best) return {false, "no successful trial"};
  const double wall = seconds_since(t0);
  return {best->test.mean >= 0.84 && wall < 1800.0,
          "best-val trial test " + fmt(best->test.mean) + " +- " + fmt(best->test.std) + " (need >= 0.84) in " +
              fmt(wall, 4) + " s (limit 1800 s)"};
}

GraphDataset with_default_splits(const GraphDataset& g) {
  return g.splits().empty() ? g.with_splits(generate_random_splits(g, 0)) : g;
}

Outcome heterophily_lift() {
  std::string detail;
  bool ok = true;
  for (const char* name : {"texas", "cornell"}) {
    const auto g = with_default_splits(bundle(name));
    const auto gcn = run_search(SearchSpace::preset("gcn"), g, 0, sweep_options(250));
    const auto qdc = run_search(SearchSpace::preset("gcn+qdc"), g, 0, sweep_options(250));
    if (!gcn.best() || !qdc.best()) return {false, std::string(name) + ": no successful trial"};
    const double lift = qdc.best()->test.mean - gcn.best()->test.mean;
    ok = ok && lift >= 0.03;
    detail += std::string(name) + " gcn " + fmt(gcn.best()->test.mean) + " qdc " + fmt(qdc.best()->test.mean) +
              " lift " + fmt(100 * lift, 3) + " pts; ";
  }
  return {ok, detail + "(need >= 3 pts)"};
}

Outcome spectral_homophily_property() {
  const auto curve = spectral_homophily(bundle("cornell"));
  double best = 0.0;
  std::size_t above = 0;
  for (const auto& p : curve.points) {
    if (p.eigenvalue <= 0.0) continue;
    best = std::max(best, p.homophily);
    above += p.homophily > 0.11;
  }
  return {above > 0, std::to_string(above) + " upper-half clusters above 0.11, max " + fmt(best, 3) + " (global " +
                         fmt(curve.global_homophily, 3) + ")"};
}

// ------------------------------------------------------------ determinism

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + QDC_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  return std::system(cmd.c_str());
}

std::map<std::string, std::string> artifacts(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
    const auto ext = e.path().extension();
    if (ext == ".csv" || ext == ".json" || ext == ".jsonl") out[fs::relative(e.path(), dir).string()] = io::read_file(e.path());
  }
  return out;
}

Outcome cli_determinism() {
  const fs::path root = fs::temp_directory_path() / "qdc_acceptance_determinism";
  fs::remove_all(root);
  auto g = test::random_connected_graph(60, 90, 5, 3, 5);
  save_graph_bundle(g, root / "bundle");
  const std::string b = "--bundle \"" + (root / "bundle").string() + "\"";
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"ingest", "ingest " + b + " --splits 3"},
      {"kernel", "kernel " + b + " --family gaussian --mu 0.4 --sigma 0.3 --eps 1e-4"},
      {"kernel-folded", "kernel " + b + " --family bandpass --mu -0.2 --gamma 0.2 --top-k 5 --k 12 --eigen-method folded"},
      {"kernel-ppr", "kernel " + b + " --family ppr --alpha 0.2 --eps 1e-3"},
      {"train", "train " + b + " --model gcn+multiscale --mu 0.5 --sigma 0.4 --eps 1e-4 --max-epochs 30 --patience 10"},
      {"sweep", "sweep " + b + " --model gcn+qdc --trials 4 --max-epochs 20 --patience 5"},
      {"simulate", "simulate --barbell 5 1 --steps 50"},
      {"homophily", "homophily " + b + " --curve"},
      {"spectrum", "spectrum " + b + " --mu 0.1 --k 10 --eigen-method folded --vectors"},
  };
  std::string detail;
  bool ok = true;
  for (const auto& [name, args] : commands) {
    std::map<std::string, std::string> first;
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path out = root / (name + "-" + std::to_string(rep));
      if (run_cli("--seed 7 " + args + " --out \"" + out.string() + "\"") != 0) {
        return {false, name + ": command failed"};
      }
      auto files = artifacts(out);
      if (files.empty() || !fs::is_regular_file(out / "manifest.json")) return {false, name + ": no artifacts"};
      if (rep == 0) {
        first = std::move(files);
      } else if (files != first) {
        ok = false;
        detail += name + "(differs) ";
      }
    }
    if (ok) detail += name + " ";
  }
  fs::remove_all(root);
  return {ok, detail + "byte-identical"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 homophily reproduction", homophily_reproduction},
      {"2 dataset statistics", dataset_statistics},
      {"3 kernel oracle equivalence", kernel_oracle_equivalence},
      {"4 eigensolver correctness", eigensolver_correctness},
      {"5 quantum invariants", quantum_invariants},
      {"6 gradient checks", gradient_checks},
      {"7 baseline training sanity", baseline_training},
      {"8 heterophily lift", heterophily_lift},
      {"9 spectral homophily", spectral_homophily_property},
      {"10 CLI determinism", cli_determinism},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
