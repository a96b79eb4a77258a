#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qdc/qdc.hpp"

#ifndef QDC_VERSION
#define QDC_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::uint64_t seed = 0;
  std::string out;
};

/// Collects what a command read and wrote, then writes manifest.json.
class Manifest {
 public:
  Manifest(std::string command, const Common& common)
      : command_(std::move(command)), common_(common), start_(std::chrono::steady_clock::now()) {
    if (common_.out.empty()) throw CLI::ValidationError("--out", "output directory required");
    fs::create_directories(common_.out);
  }

  void input(const fs::path& path) {
    if (fs::is_directory(path)) {
      for (const auto& entry : fs::directory_iterator(path)) {
        if (entry.is_regular_file()) inputs_[entry.path().string()] = qdc::io::file_hash(entry.path());
      }
    } else {
      inputs_[path.string()] = qdc::io::file_hash(path);
    }
  }

  void config(json c) { config_ = std::move(c); }

  fs::path path(const std::string& name) {
    outputs_.push_back(name);
    return fs::path(common_.out) / name;
  }

  void write(const std::string& name, const std::string& contents) { qdc::io::write_file(path(name), contents); }

  void finish() {
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const json m = {{"command", command_}, {"config", config_},   {"inputs", inputs_},     {"seed", common_.seed},
                    {"version", QDC_VERSION}, {"outputs", outputs_}, {"wall_seconds", wall}};
    qdc::io::write_file(fs::path(common_.out) / "manifest.json", m.dump(2) + "\n");
  }

 private:
  std::string command_;
  const Common& common_;
  std::chrono::steady_clock::time_point start_;
  std::map<std::string, std::string> inputs_;
  json config_ = json::object();
  std::vector<std::string> outputs_;
};

struct KernelFlags {
  std::string family;
  std::optional<double> mu, sigma, gamma, t, alpha, eps;
  std::optional<std::size_t> top_k, budget;
  std::string method = "auto";
  std::size_t dense_limit = 8000;
  double tol = 1e-6;
  std::size_t max_iterations = 500;
  std::size_t block_height = 1024;

  void add(CLI::App* app, bool family_required) {
    auto* f = app->add_option("--family", family, "gaussian | bandpass | heat | ppr")
                  ->check(CLI::IsMember({"gaussian", "bandpass", "heat", "ppr"}));
    if (family_required) f->required();
    app->add_option("--mu", mu, "filter center");
    app->add_option("--sigma", sigma, "gaussian width");
    app->add_option("--gamma", gamma, "band-pass half-width");
    app->add_option("--t", t, "heat diffusion time");
    app->add_option("--alpha", alpha, "personalized pagerank teleport probability");
    auto* e = app->add_option("--eps", eps, "sparsification threshold on |Q_ij|");
    auto* k = app->add_option("--top-k", top_k, "keep the k largest entries per row");
    e->excludes(k);
    app->add_option("--k", budget, "eigenpair budget (default min(512, N))");
    app->add_option("--eigen-method", method, "auto | dense | folded")->check(CLI::IsMember({"auto", "dense", "folded"}));
    app->add_option("--dense-limit", dense_limit, "auto method diagonalizes densely up to this many vertices");
    app->add_option("--tol", tol, "eigensolver residual tolerance");
    app->add_option("--max-iterations", max_iterations, "eigensolver iteration cap per attempt");
    app->add_option("--block-height", block_height, "kernel assembly row block");
  }

  qdc::KernelSpec spec(const std::string& fallback_family) const {
    qdc::KernelSpec s;
    s.family = qdc::parse_kernel_family(family.empty() ? fallback_family : family);
    s.mu = mu;
    s.sigma = sigma;
    s.gamma = gamma;
    s.t = t;
    s.alpha = alpha;
    s.eigen_budget = budget;
    s.sparsify = top_k ? qdc::Sparsification::top_k(*top_k) : qdc::Sparsification::threshold(eps.value_or(0.0));
    s.validate();
    return s;
  }

  qdc::KernelOptions options(std::uint64_t seed, const qdc::EigenCache* cache) const {
    qdc::KernelOptions o;
    o.method = qdc::parse_eigen_method(method);
    o.dense_limit = dense_limit;
    o.folded.tol = tol;
    o.folded.max_iterations = max_iterations;
    o.folded.seed = seed;
    o.block_height = block_height;
    o.cache = cache;
    return o;
  }

  json resolved(const qdc::KernelSpec& s) const {
    return {{"spec", qdc::to_json(s)},
            {"eigen_method", method},
            {"dense_limit", dense_limit},
            {"tol", tol},
            {"max_iterations", max_iterations},
            {"block_height", block_height}};
  }
};

std::vector<qdc::Split> splits_for(const qdc::GraphDataset& g, std::uint64_t seed) {
  return g.splits().empty() ? qdc::generate_random_splits(g, seed) : g.splits();
}

json dataset_stats(const qdc::GraphDataset& g) {
  return {{"vertices", g.num_vertices()},
          {"edges", g.num_edges()},
          {"features", g.feature_dim()},
          {"classes", g.num_classes()},
          {"splits", g.splits().size()},
          {"homophily", qdc::homophily(g)}};
}

std::string model_family_for(const std::string& model) {
  if (model == "gcn+gdc") return "ppr";
  if (model == "gcn+bpdc") return "bandpass";
  return "gaussian";
}

// ---------------------------------------------------------------- commands

struct IngestArgs {
  std::string bundle;
  std::size_t splits = 10;
  bool regenerate = false;
};

int cmd_ingest(const IngestArgs& a, const Common& c) {
  Manifest m("ingest", c);
  m.input(a.bundle);
  qdc::IngestReport report;
  qdc::GraphDataset g = qdc::load_graph_bundle(a.bundle, &report);
  if (g.splits().empty() || a.regenerate) {
    g = g.with_splits(qdc::generate_random_splits(g, c.seed, {}, a.splits));
  }
  m.config({{"bundle", a.bundle}, {"splits", a.splits}, {"regenerate_splits", a.regenerate}});
  const fs::path bundle_out = fs::path(c.out) / "bundle";
  qdc::save_graph_bundle(g, bundle_out);
  m.path("bundle");
  json stats = dataset_stats(g);
  stats["duplicate_edges_dropped"] = report.duplicate_edges;
  stats["self_loops_dropped"] = report.self_loops;
  m.write("stats.json", stats.dump(2) + "\n");
  std::cout << "vertices " << g.num_vertices() << "\nedges " << g.num_edges() << "\nclasses " << g.num_classes()
            << "\nfeatures " << g.feature_dim() << "\nhomophily " << qdc::io::format_double(qdc::homophily(g))
            << "\nduplicate edges dropped " << report.duplicate_edges << "\nself-loops dropped " << report.self_loops
            << "\n";
  m.finish();
  return 0;
}

struct KernelArgs {
  std::string bundle;
  KernelFlags kernel;
};

int cmd_kernel(const KernelArgs& a, const Common& c) {
  Manifest m("kernel", c);
  m.input(a.bundle);
  const qdc::GraphDataset g = qdc::load_graph_bundle(a.bundle);
  const qdc::KernelSpec spec = a.kernel.spec("gaussian");
  m.config({{"bundle", a.bundle}, {"kernel", a.kernel.resolved(spec)}});
  const auto cache = qdc::EigenCache::from_environment();
  const qdc::RewiredKernel k =
      qdc::build_kernel(qdc::normalized_operator(g), spec, a.kernel.options(c.seed, cache ? &*cache : nullptr));
  qdc::save_kernel(k, m.path("kernel.bin"));
  m.write("kernel.json", qdc::kernel_header_json(k).dump(2) + "\n");
  std::cout << "nnz before " << k.provenance.nnz_before << "\nnnz after " << k.provenance.nnz_after << "\n";
  if (k.provenance.eigenpairs) {
    std::cout << "eigenpairs " << k.provenance.eigenpairs << " (" << k.provenance.solver.method << ", "
              << k.provenance.solver.iterations << " iterations"
              << (k.provenance.solver.retry_applied ? ", retried" : "") << ")\n";
  }
  m.finish();
  return 0;
}

struct ModelFlags {
  std::string model = "gcn";
  std::size_t layers = 2, hidden = 64;
  double dropout = 0.5;
  std::size_t second_layers = 2, second_hidden = 64;
  double second_dropout = 0.5;
  std::string combinator;
  double lr = 0.01, weight_decay = 0.0005;
  std::size_t max_epochs = 1000, patience = 50;

  void add(CLI::App* app) {
    app->add_option("--model", model, "gcn | gcn+gdc | gcn+qdc | gcn+bpdc | gcn+multiscale")
        ->check(CLI::IsMember(qdc::SearchSpace::models()));
    app->add_option("--layers", layers, "propagation layers (first tower)");
    app->add_option("--hidden", hidden, "hidden width (first tower)");
    app->add_option("--dropout", dropout, "dropout rate (first tower)");
    app->add_option("--second-layers", second_layers, "kernel tower layers (multiscale)");
    app->add_option("--second-hidden", second_hidden, "kernel tower width (multiscale)");
    app->add_option("--second-dropout", second_dropout, "kernel tower dropout (multiscale)");
    app->add_option("--combinator", combinator, "concat | add (multiscale)")->check(CLI::IsMember({"concat", "add"}));
    app->add_option("--lr", lr, "learning rate");
    app->add_option("--weight-decay", weight_decay, "decoupled weight decay");
    app->add_option("--max-epochs", max_epochs, "epoch cap");
    app->add_option("--patience", patience, "early stopping patience in epochs");
  }

  qdc::ModelConfig model_config() const {
    if (!combinator.empty() && model != "gcn+multiscale") {
      throw CLI::ValidationError("--combinator", "only valid with --model gcn+multiscale");
    }
    qdc::ModelConfig mc;
    mc.tower = {layers, hidden, dropout};
    if (model == "gcn+multiscale") {
      mc.multiscale = true;
      mc.second = {second_layers, second_hidden, second_dropout};
      mc.combinator = qdc::parse_combinator(combinator.empty() ? "concat" : combinator);
    }
    mc.validate();
    return mc;
  }
};

struct TrainArgs {
  std::string bundle;
  std::string kernel_file;
  int split = -1;
  ModelFlags model;
  KernelFlags kernel;
};

int cmd_train(const TrainArgs& a, const Common& c) {
  const qdc::ModelConfig mc = a.model.model_config();
  Manifest m("train", c);
  m.input(a.bundle);
  const qdc::GraphDataset g = qdc::load_graph_bundle(a.bundle);
  const auto splits = splits_for(g, c.seed);
  qdc::TrainConfig tc;
  tc.learning_rate = a.model.lr;
  tc.weight_decay = a.model.weight_decay;
  tc.max_epochs = a.model.max_epochs;
  tc.patience = a.model.patience;
  tc.validate();

  const qdc::SparseMatrix op = qdc::normalized_operator(g);
  std::optional<qdc::RewiredKernel> kernel;
  json config = {{"bundle", a.bundle}, {"model", a.model.model}, {"model_config", qdc::to_json(mc)},
                 {"train_config", qdc::to_json(tc)}, {"split", a.split}};
  if (a.model.model != "gcn") {
    if (!a.kernel_file.empty()) {
      m.input(a.kernel_file);
      kernel = qdc::load_kernel(a.kernel_file);
      if (kernel->matrix.dim() != g.num_vertices()) throw std::runtime_error("kernel dimension does not match bundle");
      config["kernel_file"] = a.kernel_file;
    } else {
      const qdc::KernelSpec spec = a.kernel.spec(model_family_for(a.model.model));
      const auto cache = qdc::EigenCache::from_environment();
      kernel = qdc::build_kernel(op, spec, a.kernel.options(c.seed, cache ? &*cache : nullptr));
      config["kernel"] = a.kernel.resolved(spec);
    }
  } else if (!a.kernel_file.empty() || !a.kernel.family.empty()) {
    throw CLI::ValidationError("--kernel", "plain gcn takes no kernel");
  }
  m.config(config);

  const qdc::SparseFeatures x = qdc::SparseFeatures::from_dense(g.features());
  const qdc::SparseMatrix& first = mc.multiscale || !kernel ? op : kernel->matrix;
  const qdc::SparseMatrix* second = mc.multiscale ? &kernel->matrix : nullptr;
  std::vector<std::size_t> which;
  if (a.split >= 0) {
    if (static_cast<std::size_t>(a.split) >= splits.size()) throw std::out_of_range("--split beyond available splits");
    which.push_back(static_cast<std::size_t>(a.split));
  } else {
    for (std::size_t s = 0; s < splits.size(); ++s) which.push_back(s);
  }
  json per_split = json::array();
  std::vector<double> val, test;
  for (std::size_t s : which) {
    qdc::GcnModel model(mc, g.feature_dim(), g.num_classes(), first, second);
    qdc::TrainConfig split_tc = tc;
    split_tc.seed = qdc::Rng::stream(c.seed, "train", s).next_u64();
    const qdc::TrainRun run = qdc::train(model, split_tc, x, g.labels(), splits[s]);
    const std::string tag = "split" + std::to_string(s);
    m.write(tag + "_epochs.jsonl", qdc::epochs_jsonl(run));
    qdc::save_checkpoint(model.params(), m.path(tag + "_checkpoint.bin"), m.path(tag + "_checkpoint.json"));
    json summary = qdc::summary_json(run);
    summary["split"] = s;
    per_split.push_back(summary);
    if (!run.failed) {
      val.push_back(run.best_val_accuracy);
      test.push_back(run.test_accuracy);
    }
    std::cout << tag << " best epoch " << run.best_epoch << " val " << qdc::io::format_double(run.best_val_accuracy)
              << " test " << qdc::io::format_double(run.test_accuracy) << (run.failed ? " FAILED" : "") << "\n";
  }
  const auto v = qdc::aggregate(val);
  const auto t = qdc::aggregate(test);
  const json summary = {{"splits", per_split},
                        {"val_mean", v.mean},
                        {"val_std", v.std},
                        {"test_mean", t.mean},
                        {"test_std", t.std},
                        {"failed", which.size() - test.size()}};
  m.write("summary.json", summary.dump(2) + "\n");
  std::cout << "test " << qdc::io::format_double(t.mean) << " +- " << qdc::io::format_double(t.std) << "\n";
  m.finish();
  return 0;
}

struct SweepArgs {
  std::string bundle;
  std::string model = "gcn";
  std::size_t trials = 250;
  std::size_t max_epochs = 1000, patience = 50;
  std::size_t threads = 1;
  KernelFlags kernel;
};

int cmd_sweep(const SweepArgs& a, const Common& c) {
  Manifest m("sweep", c);
  m.input(a.bundle);
  qdc::GraphDataset g = qdc::load_graph_bundle(a.bundle);
  if (g.splits().empty()) g = g.with_splits(splits_for(g, c.seed));
  const qdc::SearchSpace space = qdc::SearchSpace::preset(a.model);
  qdc::SearchOptions opts;
  opts.trials = a.trials;
  opts.max_epochs = a.max_epochs;
  opts.patience = a.patience;
  opts.threads = a.threads;
  const auto cache = qdc::EigenCache::from_environment();
  opts.kernel = a.kernel.options(c.seed, cache ? &*cache : nullptr);
  opts.progress = [](const qdc::Trial& t) {
    std::cerr << "trial " << t.index << (t.failed ? " failed: " + t.failure : " val " + qdc::io::format_double(t.val.mean))
              << "\n";
  };
  m.config({{"bundle", a.bundle},
            {"model", a.model},
            {"trials", a.trials},
            {"max_epochs", a.max_epochs},
            {"patience", a.patience},
            {"eigen_method", a.kernel.method},
            {"dense_limit", a.kernel.dense_limit},
            {"tol", a.kernel.tol},
            {"space", space.describe()}});
  const qdc::Leaderboard board = qdc::run_search(space, g, c.seed, opts);
  m.write("leaderboard.csv", qdc::leaderboard_csv(board));
  m.write("leaderboard.json", qdc::to_json(board).dump(2) + "\n");
  if (const auto* best = board.best()) {
    std::cout << "best trial " << best->index << " val " << qdc::io::format_double(best->val.mean) << " test "
              << qdc::io::format_double(best->test.mean) << " +- " << qdc::io::format_double(best->test.std) << "\n";
  } else {
    std::cout << "no successful trial\n";
  }
  std::cout << "failed trials " << board.failed << "\n";
  m.finish();
  return 0;
}

struct SimulateArgs {
  std::vector<std::size_t> barbell;
  std::string bundle;
  std::size_t steps = 1000;
  double dt = 1.0;
  std::size_t start = 0;
};

int cmd_simulate(const SimulateArgs& a, const Common& c) {
  Manifest m("simulate", c);
  std::optional<qdc::GraphDataset> g;
  json config = {{"steps", a.steps}, {"dt", a.dt}, {"start_vertex", a.start}, {"operator", "I - L"}};
  if (!a.bundle.empty()) {
    m.input(a.bundle);
    g = qdc::load_graph_bundle(a.bundle);
    config["bundle"] = a.bundle;
  } else {
    if (a.barbell.size() != 2) throw CLI::ValidationError("--barbell", "expects LOBE PATH");
    g = qdc::barbell_graph(a.barbell[0], a.barbell[1]);
    config["barbell"] = a.barbell;
  }
  if (a.start >= g->num_vertices()) throw CLI::ValidationError("--start", "vertex out of range");
  config["initial_state"] = "unit mass on vertex " + std::to_string(a.start);
  m.config(config);
  const qdc::SparseMatrix psd = qdc::psd_operator(qdc::normalized_operator(*g));
  qdc::Vector f0 = qdc::Vector::Zero(static_cast<Eigen::Index>(g->num_vertices()));
  f0(static_cast<Eigen::Index>(a.start)) = 1.0;
  const auto times = qdc::uniform_time_grid(a.steps, a.dt);
  const auto heat = qdc::heat_propagate(psd, f0, times);
  const auto quantum = qdc::schrodinger_propagate(psd, f0, times);
  const Eigen::Index n = f0.size();
  std::string csv = "time";
  for (Eigen::Index v = 0; v < n; ++v) csv += ",heat_" + std::to_string(v);
  for (Eigen::Index v = 0; v < n; ++v) csv += ",probability_" + std::to_string(v);
  csv += "\n";
  for (std::size_t i = 0; i < times.size(); ++i) {
    csv += qdc::io::format_double(times[i]);
    for (Eigen::Index v = 0; v < n; ++v) csv += "," + qdc::io::format_double(heat.snapshots[i](v));
    for (Eigen::Index v = 0; v < n; ++v) csv += "," + qdc::io::format_double(quantum.snapshots[i](v));
    csv += "\n";
  }
  m.write("snapshots.csv", csv);
  std::cout << "vertices " << g->num_vertices() << "\ntimes " << times.size() << "\n";
  m.finish();
  return 0;
}

struct HomophilyArgs {
  std::string bundle;
  bool curve = false;
  double threshold = 1e-7;
};

int cmd_homophily(const HomophilyArgs& a, const Common& c) {
  Manifest m("homophily", c);
  m.input(a.bundle);
  const qdc::GraphDataset g = qdc::load_graph_bundle(a.bundle);
  m.config({{"bundle", a.bundle}, {"curve", a.curve}, {"threshold", a.threshold}});
  const double h = qdc::homophily(g);
  json out = {{"homophily", h}, {"vertices", g.num_vertices()}, {"edges", g.num_edges()}};
  if (a.curve) {
    const auto curve = qdc::spectral_homophily(g, a.threshold);
    m.write("curve.csv", qdc::curve_csv(curve));
    m.write("curve.json", qdc::to_json(curve).dump(2) + "\n");
  }
  m.write("homophily.json", out.dump(2) + "\n");
  char rounded[32];
  std::snprintf(rounded, sizeof rounded, "%.2f", h);
  std::cout << "homophily " << rounded << " (" << qdc::io::format_double(h) << ")\n";
  m.finish();
  return 0;
}

struct SpectrumArgs {
  std::string bundle;
  double mu = 0.0;
  std::optional<std::size_t> k;
  KernelFlags solver;
  bool vectors = false;
};

int cmd_spectrum(const SpectrumArgs& a, const Common& c) {
  Manifest m("spectrum", c);
  m.input(a.bundle);
  const qdc::GraphDataset g = qdc::load_graph_bundle(a.bundle);
  const qdc::SparseMatrix op = qdc::normalized_operator(g);
  const std::size_t k = std::min(op.dim(), a.k.value_or(512));
  m.config({{"bundle", a.bundle}, {"mu", a.mu}, {"k", k}, {"eigen_method", a.solver.method},
            {"dense_limit", a.solver.dense_limit}, {"tol", a.solver.tol}});
  const auto cache = qdc::EigenCache::from_environment();
  const qdc::EigenSystem es = qdc::solve_band(op, a.mu, k, a.solver.options(c.seed, cache ? &*cache : nullptr));
  std::string csv = "index,eigenvalue,residual\n";
  for (std::size_t i = 0; i < es.size(); ++i) {
    const double r = i < es.meta.residuals.size() ? es.meta.residuals[i] : 0.0;
    csv += std::to_string(i) + "," + qdc::io::format_double(es.eigenvalues(static_cast<Eigen::Index>(i))) + "," +
           qdc::io::format_double(r) + "\n";
  }
  m.write("eigenvalues.csv", csv);
  json meta = qdc::to_json(es.meta);
  meta["count"] = es.size();
  meta["target"] = es.target;
  m.write("solver.json", meta.dump(2) + "\n");
  if (a.vectors) {
    std::ostringstream bin;
    qdc::write_eigensystem(bin, es, a.solver.tol);
    m.write("eigensystem.bin", bin.str());
  }
  std::cout << "eigenpairs " << es.size() << " near " << qdc::io::format_double(a.mu) << " (" << es.meta.method
            << ")\n";
  m.finish();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantum diffusion convolution toolkit"};
  app.set_version_flag("--version", QDC_VERSION);
  app.set_config("--config", "", "TOML/INI file with option defaults (flags take precedence)");
  app.require_subcommand(1);
  Common common;
  app.add_option("--seed", common.seed, "root seed for every random stream")->capture_default_str();

  const auto out_option = [&common](CLI::App* sub) {
    sub->add_option("--out", common.out, "output directory")->required();
  };

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "validate a bundle and write its canonical form with splits");
  ingest_cmd->add_option("--bundle", ingest.bundle, "bundle directory")->required()->check(CLI::ExistingDirectory);
  ingest_cmd->add_option("--splits", ingest.splits, "number of random splits to generate");
  ingest_cmd->add_flag("--regenerate-splits", ingest.regenerate, "replace splits shipped with the bundle");
  out_option(ingest_cmd);

  KernelArgs kernel;
  auto* kernel_cmd = app.add_subcommand("kernel", "build a rewired propagation kernel");
  kernel_cmd->add_option("--bundle", kernel.bundle, "bundle directory")->required()->check(CLI::ExistingDirectory);
  kernel.kernel.add(kernel_cmd, true);
  out_option(kernel_cmd);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train one configuration on every split (or one)");
  train_cmd->add_option("--bundle", train.bundle, "bundle directory")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--kernel", train.kernel_file, "precomputed kernel file")->check(CLI::ExistingFile);
  train_cmd->add_option("--split", train.split, "split index (default: all)");
  train.model.add(train_cmd);
  train.kernel.add(train_cmd, false);
  out_option(train_cmd);

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "seeded random hyperparameter search");
  sweep_cmd->add_option("--bundle", sweep.bundle, "bundle directory")->required()->check(CLI::ExistingDirectory);
  sweep_cmd->add_option("--model", sweep.model, "model family")->required()->check(CLI::IsMember(qdc::SearchSpace::models()));
  sweep_cmd->add_option("--trials", sweep.trials, "number of trials");
  sweep_cmd->add_option("--max-epochs", sweep.max_epochs, "epoch cap per split");
  sweep_cmd->add_option("--patience", sweep.patience, "early stopping patience");
  sweep_cmd->add_option("--threads", sweep.threads, "parallel trials");
  sweep_cmd->add_option("--eigen-method", sweep.kernel.method, "auto | dense | folded")
      ->check(CLI::IsMember({"auto", "dense", "folded"}));
  sweep_cmd->add_option("--dense-limit", sweep.kernel.dense_limit, "auto method diagonalizes densely up to this size");
  sweep_cmd->add_option("--tol", sweep.kernel.tol, "eigensolver residual tolerance");
  out_option(sweep_cmd);

  SimulateArgs simulate;
  auto* simulate_cmd = app.add_subcommand("simulate", "heat and Schrodinger propagation side by side");
  auto* barbell = simulate_cmd->add_option("--barbell", simulate.barbell, "LOBE PATH")->expected(2);
  auto* sim_bundle = simulate_cmd->add_option("--bundle", simulate.bundle, "bundle directory")->check(CLI::ExistingDirectory);
  barbell->excludes(sim_bundle);
  simulate_cmd->add_option("--steps", simulate.steps, "number of time steps");
  simulate_cmd->add_option("--dt", simulate.dt, "time step");
  simulate_cmd->add_option("--start", simulate.start, "vertex holding the initial unit mass");
  out_option(simulate_cmd);

  HomophilyArgs homophily;
  auto* homophily_cmd = app.add_subcommand("homophily", "neighborhood homophily and its spectral curve");
  homophily_cmd->add_option("--bundle", homophily.bundle, "bundle directory")->required()->check(CLI::ExistingDirectory);
  homophily_cmd->add_flag("--curve", homophily.curve, "also compute the per-eigenvalue curve");
  homophily_cmd->add_option("--threshold", homophily.threshold, "support threshold for eigenvector adjacencies");
  out_option(homophily_cmd);

  SpectrumArgs spectrum;
  auto* spectrum_cmd = app.add_subcommand("spectrum", "eigenpairs of L nearest a target");
  spectrum_cmd->add_option("--bundle", spectrum.bundle, "bundle directory")->required()->check(CLI::ExistingDirectory);
  spectrum_cmd->add_option("--mu", spectrum.mu, "target eigenvalue");
  spectrum_cmd->add_option("--k", spectrum.k, "number of eigenpairs (default min(512, N))");
  spectrum_cmd->add_option("--eigen-method", spectrum.solver.method, "auto | dense | folded")
      ->check(CLI::IsMember({"auto", "dense", "folded"}));
  spectrum_cmd->add_option("--dense-limit", spectrum.solver.dense_limit, "auto method diagonalizes densely up to this size");
  spectrum_cmd->add_option("--tol", spectrum.solver.tol, "residual tolerance");
  spectrum_cmd->add_option("--max-iterations", spectrum.solver.max_iterations, "iteration cap per attempt");
  spectrum_cmd->add_flag("--vectors", spectrum.vectors, "also write eigenvectors");
  out_option(spectrum_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest_cmd) return cmd_ingest(ingest, common);
    if (*kernel_cmd) return cmd_kernel(kernel, common);
    if (*train_cmd) return cmd_train(train, common);
    if (*sweep_cmd) return cmd_sweep(sweep, common);
    if (*simulate_cmd) return cmd_simulate(simulate, common);
    if (*homophily_cmd) return cmd_homophily(homophily, common);
    if (*spectrum_cmd) return cmd_spectrum(spectrum, common);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const qdc::EigenSolverError& e) {
    std::cerr << "error: " << e.what() << "\n";
    double worst = 0.0;
    for (double r : e.residuals()) worst = std::max(worst, r);
    std::cerr << "residuals reported: " << e.residuals().size() << ", worst " << qdc::io::format_double(worst) << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
