#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qdc/binary_io.hpp"
#include "qdc/graph.hpp"
#include "qdc/rng.hpp"
#include "qdc/sparse.hpp"

namespace qdc {

struct TowerConfig {
  std::size_t num_layers = 2;
  std::size_t hidden_dim = 64;
  double dropout = 0.5;

  void validate() const {
    if (num_layers < 1) throw std::invalid_argument("num_layers must be >= 1");
    if (hidden_dim < 1) throw std::invalid_argument("hidden_dim must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
  }
  friend bool operator==(const TowerConfig&, const TowerConfig&) = default;
};

enum class Combinator { concat, add };

inline std::string to_string(Combinator c) { return c == Combinator::concat ? "concat" : "add"; }

inline Combinator parse_combinator(const std::string& s) {
  if (s == "concat") return Combinator::concat;
  if (s == "add") return Combinator::add;
  throw std::invalid_argument("unknown combinator '" + s + "'");
}

/// Single-operator GCN (`tower` only) or two-tower multiscale model: `tower`
/// propagates with the original operator, `second` with the rewired kernel.
struct ModelConfig {
  TowerConfig tower;
  bool multiscale = false;
  TowerConfig second;
  Combinator combinator = Combinator::concat;

  void validate() const {
    tower.validate();
    if (!multiscale) return;
    second.validate();
    if (combinator == Combinator::add && tower.hidden_dim != second.hidden_dim) {
      throw std::invalid_argument("add combinator needs equal tower widths, got " +
                                  std::to_string(tower.hidden_dim) + " and " +
                                  std::to_string(second.hidden_dim));
    }
  }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
  double learning_rate = 0.01;
  double weight_decay = 0.0;
  std::size_t max_epochs = 1000;
  std::size_t patience = 50;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be >= 0");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
    if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
    if (patience >= max_epochs) throw std::invalid_argument("patience must be < max_epochs");
  }
};

inline nlohmann::json to_json(const TowerConfig& t) {
  return {{"num_layers", t.num_layers}, {"hidden_dim", t.hidden_dim}, {"dropout", t.dropout}};
}

inline TowerConfig tower_config_from_json(const nlohmann::json& j) {
  TowerConfig t;
  t.num_layers = j.at("num_layers").get<std::size_t>();
  t.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  t.dropout = j.at("dropout").get<double>();
  return t;
}

inline nlohmann::json to_json(const ModelConfig& m) {
  nlohmann::json j = {{"tower", to_json(m.tower)}, {"multiscale", m.multiscale}};
  if (m.multiscale) {
    j["second"] = to_json(m.second);
    j["combinator"] = to_string(m.combinator);
  }
  return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig m;
  m.tower = tower_config_from_json(j.at("tower"));
  m.multiscale = j.value("multiscale", false);
  if (m.multiscale) {
    m.second = tower_config_from_json(j.at("second"));
    m.combinator = parse_combinator(j.at("combinator").get<std::string>());
  }
  return m;
}

inline nlohmann::json to_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate}, {"weight_decay", t.weight_decay},
          {"max_epochs", t.max_epochs},       {"patience", t.patience},
          {"seed", t.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig t;
  t.learning_rate = j.at("learning_rate").get<double>();
  t.weight_decay = j.at("weight_decay").get<double>();
  t.max_epochs = j.value("max_epochs", std::size_t{1000});
  t.patience = j.value("patience", std::size_t{50});
  t.seed = j.value("seed", std::uint64_t{0});
  return t;
}

/// Row-compressed node features. Bag-of-words inputs are mostly zeros, so the
/// first layer multiplies and drops out stored entries only.
struct SparseFeatures {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> index;
  std::vector<double> value;

  static SparseFeatures from_dense(const RowMatrix& x) {
    SparseFeatures f;
    f.rows = static_cast<std::size_t>(x.rows());
    f.cols = static_cast<std::size_t>(x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        if (x(i, c) != 0.0) {
          f.index.push_back(static_cast<std::size_t>(c));
          f.value.push_back(x(i, c));
        }
      }
      f.offsets.push_back(f.index.size());
    }
    return f;
  }
  std::size_t nnz() const { return value.size(); }
};

/// Named parameter tensor.
struct Tensor {
  std::string name;
  RowMatrix value;
  bool decay = true;  // decoupled weight decay applies (weights, not biases)
};

namespace detail {

inline void relu_inplace(RowMatrix& m) { m = m.cwiseMax(0.0); }

// Dropout mask with inverted scaling: entries are 0 or 1 / (1 - p).
inline Vector dropout_mask(std::size_t count, double p, Rng& rng) {
  Vector m(static_cast<Eigen::Index>(count));
  const double keep = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < count; ++i) m(static_cast<Eigen::Index>(i)) = rng.uniform() < p ? 0.0 : keep;
  return m;
}

}  // namespace detail

/// Everything forward() keeps for backward().
struct ForwardCache {
  struct Layer {
    Vector mask;      // dropout mask (empty when no dropout); first layer: per stored feature entry
    RowMatrix input;  // later layers: dropped-out input
    RowMatrix pre;    // S (H W), before activation
  };
  std::vector<std::vector<Layer>> towers;
  std::vector<RowMatrix> tower_out;
  RowMatrix combined;
};

/// GCN with hand-derived gradients.
///
/// Layer: H' = act(S drop(H) W). In the single model the last layer is
/// linear and produces logits. In the multiscale model every tower layer uses
/// ReLU, tower outputs are concatenated or added, and a linear readout with
/// bias produces logits. Propagation operators must be symmetric.
class GcnModel {
 public:
  GcnModel(ModelConfig config, std::size_t in_dim, std::size_t classes, const SparseMatrix& op,
           const SparseMatrix* second_op = nullptr)
      : config_(std::move(config)), in_dim_(in_dim), classes_(classes) {
    config_.validate();
    if (config_.multiscale && !second_op) throw std::invalid_argument("multiscale model needs two operators");
    if (in_dim < 1 || classes < 1) throw std::invalid_argument("GcnModel: dims must be positive");
    ops_.push_back(&op);
    if (config_.multiscale) ops_.push_back(second_op);
    for (const auto* s : ops_) {
      if (s->dim() != op.dim()) throw std::invalid_argument("GcnModel: operator dimensions differ");
    }
    const auto add = [this](std::string name, std::size_t r, std::size_t c, bool decay) {
      params_.push_back({std::move(name), RowMatrix::Zero(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)),
                         decay});
    };
    const std::size_t towers = ops_.size();
    for (std::size_t t = 0; t < towers; ++t) {
      const TowerConfig& tc = t == 0 ? config_.tower : config_.second;
      std::vector<std::size_t> ids;
      std::size_t width = in_dim;
      for (std::size_t l = 0; l < tc.num_layers; ++l) {
        const bool last = l + 1 == tc.num_layers;
        const std::size_t out = last && !config_.multiscale ? classes : tc.hidden_dim;
        ids.push_back(params_.size());
        add("tower" + std::to_string(t) + ".layer" + std::to_string(l) + ".weight", width, out, true);
        width = out;
      }
      layer_ids_.push_back(std::move(ids));
    }
    if (config_.multiscale) {
      const std::size_t width = config_.combinator == Combinator::concat
                                    ? config_.tower.hidden_dim + config_.second.hidden_dim
                                    : config_.tower.hidden_dim;
      readout_weight_ = params_.size();
      add("readout.weight", width, classes, true);
      readout_bias_ = params_.size();
      add("readout.bias", 1, classes, false);
    }
  }

  const ModelConfig& config() const { return config_; }
  std::size_t classes() const { return classes_; }
  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }

  /// Glorot-uniform weights from the (seed, "init") stream; biases zero.
  void initialize(std::uint64_t seed) {
    Rng rng = Rng::stream(seed, "init");
    for (auto& p : params_) {
      if (!p.decay) {
        p.value.setZero();
        continue;
      }
      const double limit = std::sqrt(6.0 / static_cast<double>(p.value.rows() + p.value.cols()));
      for (Eigen::Index i = 0; i < p.value.rows(); ++i) {
        for (Eigen::Index j = 0; j < p.value.cols(); ++j) p.value(i, j) = rng.uniform(-limit, limit);
      }
    }
  }

  /// N x C logits. Dropout is active iff `dropout_rng` is given.
  RowMatrix forward(const SparseFeatures& x, Rng* dropout_rng = nullptr, ForwardCache* cache = nullptr) const {
    if (x.cols != in_dim_ || x.rows != ops_[0]->dim()) throw std::invalid_argument("forward: feature shape mismatch");
    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c.towers.assign(ops_.size(), {});
    c.tower_out.assign(ops_.size(), {});
    for (std::size_t t = 0; t < ops_.size(); ++t) {
      const TowerConfig& tc = t == 0 ? config_.tower : config_.second;
      const double p = dropout_rng ? tc.dropout : 0.0;
      RowMatrix h;
      for (std::size_t l = 0; l < tc.num_layers; ++l) {
        const RowMatrix& w = params_[layer_ids_[t][l]].value;
        ForwardCache::Layer layer;
        RowMatrix hw;
        if (l == 0) {
          if (p > 0.0) layer.mask = detail::dropout_mask(x.nnz(), p, *dropout_rng);
          hw = sparse_times(x, layer.mask, w);
        } else {
          layer.input = std::move(h);
          if (p > 0.0) {
            layer.mask = detail::dropout_mask(static_cast<std::size_t>(layer.input.size()), p, *dropout_rng);
            layer.input.reshaped<Eigen::RowMajor>().array() *= layer.mask.array();
          }
          hw = layer.input * w;
        }
        layer.pre = (*ops_[t]) * hw;
        const bool linear = !config_.multiscale && l + 1 == tc.num_layers;
        h = layer.pre;
        if (!linear) detail::relu_inplace(h);
        c.towers[t].push_back(std::move(layer));
      }
      c.tower_out[t] = std::move(h);
    }
    if (!config_.multiscale) return c.tower_out[0];
    if (config_.combinator == Combinator::concat) {
      c.combined.resize(c.tower_out[0].rows(), c.tower_out[0].cols() + c.tower_out[1].cols());
      c.combined << c.tower_out[0], c.tower_out[1];
    } else {
      c.combined = c.tower_out[0] + c.tower_out[1];
    }
    RowMatrix logits = c.combined * params_[readout_weight_].value;
    logits.rowwise() += params_[readout_bias_].value.row(0);
    return logits;
  }

  /// Gradients of the loss with respect to every parameter, given dL/dlogits.
  std::vector<RowMatrix> backward(const SparseFeatures& x, const ForwardCache& c, const RowMatrix& dlogits) const {
    std::vector<RowMatrix> grads(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      grads[i] = RowMatrix::Zero(params_[i].value.rows(), params_[i].value.cols());
    }
    std::vector<RowMatrix> dout(ops_.size());
    if (!config_.multiscale) {
      dout[0] = dlogits;
    } else {
      grads[readout_weight_] = c.combined.transpose() * dlogits;
      grads[readout_bias_] = dlogits.colwise().sum();
      const RowMatrix dcombined = dlogits * params_[readout_weight_].value.transpose();
      if (config_.combinator == Combinator::concat) {
        dout[0] = dcombined.leftCols(c.tower_out[0].cols());
        dout[1] = dcombined.rightCols(c.tower_out[1].cols());
      } else {
        dout[0] = dcombined;
        dout[1] = dcombined;
      }
    }
    for (std::size_t t = 0; t < ops_.size(); ++t) {
      const TowerConfig& tc = t == 0 ? config_.tower : config_.second;
      RowMatrix d = std::move(dout[t]);
      for (std::size_t l = tc.num_layers; l-- > 0;) {
        const auto& layer = c.towers[t][l];
        const bool linear = !config_.multiscale && l + 1 == tc.num_layers;
        if (!linear) d = d.cwiseProduct((layer.pre.array() > 0.0).cast<double>().matrix());
        const RowMatrix dhw = (*ops_[t]) * d;  // S is symmetric
        const std::size_t wid = layer_ids_[t][l];
        if (l == 0) {
          grads[wid] = sparse_transpose_times(x, layer.mask, dhw);
        } else {
          grads[wid] = layer.input.transpose() * dhw;
          d = dhw * params_[wid].value.transpose();
          if (layer.mask.size()) d.reshaped<Eigen::RowMajor>().array() *= layer.mask.array();
        }
      }
    }
    return grads;
  }

 private:
  // (drop(X)) W with the mask over stored entries.
  static RowMatrix sparse_times(const SparseFeatures& x, const Vector& mask, const RowMatrix& w) {
    RowMatrix out = RowMatrix::Zero(static_cast<Eigen::Index>(x.rows), w.cols());
    for (std::size_t i = 0; i < x.rows; ++i) {
      for (std::size_t p = x.offsets[i]; p < x.offsets[i + 1]; ++p) {
        const double v = mask.size() ? x.value[p] * mask(static_cast<Eigen::Index>(p)) : x.value[p];
        if (v != 0.0) out.row(static_cast<Eigen::Index>(i)) += v * w.row(static_cast<Eigen::Index>(x.index[p]));
      }
    }
    return out;
  }
  // drop(X)^T G.
  static RowMatrix sparse_transpose_times(const SparseFeatures& x, const Vector& mask, const RowMatrix& g) {
    RowMatrix out = RowMatrix::Zero(static_cast<Eigen::Index>(x.cols), g.cols());
    for (std::size_t i = 0; i < x.rows; ++i) {
      for (std::size_t p = x.offsets[i]; p < x.offsets[i + 1]; ++p) {
        const double v = mask.size() ? x.value[p] * mask(static_cast<Eigen::Index>(p)) : x.value[p];
        if (v != 0.0) out.row(static_cast<Eigen::Index>(x.index[p])) += v * g.row(static_cast<Eigen::Index>(i));
      }
    }
    return out;
  }

  ModelConfig config_;
  std::size_t in_dim_;
  std::size_t classes_;
  std::vector<const SparseMatrix*> ops_;
  std::vector<Tensor> params_;
  std::vector<std::vector<std::size_t>> layer_ids_;
  std::size_t readout_weight_ = 0;
  std::size_t readout_bias_ = 0;
};

/// Mean softmax cross-entropy over `rows`, and its gradient with respect to
/// the logits (zero outside `rows`). Zero logits give exactly ln C.
inline double cross_entropy(const RowMatrix& logits, const std::vector<int>& labels,
                            const std::vector<std::size_t>& rows, RowMatrix* grad = nullptr) {
  if (rows.empty()) throw std::invalid_argument("cross_entropy: no rows");
  if (grad) *grad = RowMatrix::Zero(logits.rows(), logits.cols());
  double mean = 0.0;
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(rows[k]);
    const double top = logits.row(i).maxCoeff();
    double total = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) total += std::exp(logits(i, c) - top);
    const double lse = top + std::log(total);
    const double loss = lse - logits(i, labels[rows[k]]);
    mean += (loss - mean) / static_cast<double>(k + 1);
    if (grad) {
      for (Eigen::Index c = 0; c < logits.cols(); ++c) (*grad)(i, c) = std::exp(logits(i, c) - lse) * inv;
      (*grad)(i, labels[rows[k]]) -= inv;
    }
  }
  return mean;
}

/// Fraction of `rows` whose arg-max logit (lowest index on ties) is the label.
inline double accuracy(const RowMatrix& logits, const std::vector<int>& labels, const std::vector<std::size_t>& rows) {
  if (rows.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t r : rows) {
    Eigen::Index best = 0;
    logits.row(static_cast<Eigen::Index>(r)).maxCoeff(&best);
    hit += best == labels[r];
  }
  return static_cast<double>(hit) / static_cast<double>(rows.size());
}

/// Adam with decoupled weight decay: w -= lr (decay w + m_hat / (sqrt(v_hat) + eps)).
class Adam {
 public:
  Adam(const std::vector<Tensor>& params, double lr, double weight_decay, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), decay_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
    for (const auto& p : params) {
      m_.push_back(RowMatrix::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(RowMatrix::Zero(p.value.rows(), p.value.cols()));
    }
  }

  void step(std::vector<Tensor>& params, const std::vector<RowMatrix>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1_ * m_[i] + (1.0 - b1_) * grads[i];
      v_[i] = b2_ * v_[i] + (1.0 - b2_) * grads[i].cwiseAbs2();
      auto& w = params[i].value;
      if (params[i].decay && decay_ != 0.0) w *= 1.0 - lr_ * decay_;
      w.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
  }

 private:
  double lr_, decay_, b1_, b2_, eps_;
  std::vector<RowMatrix> m_, v_;
  std::size_t t_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainRun {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
  double test_accuracy = 0.0;
  bool failed = false;
  std::string failure;
  double wall_seconds = 0.0;
  std::vector<Tensor> best_params;
};

/// Full-batch training with early stopping on validation accuracy.
///
/// Each epoch takes one optimizer step on the train-mode loss, then evaluates
/// validation accuracy without dropout. A strictly better validation accuracy
/// snapshots the parameters; `patience` epochs without one stop the run. The
/// snapshot is restored and test accuracy is computed once from it. A
/// non-finite loss marks the run failed.
inline TrainRun train(GcnModel& model, const TrainConfig& tc, const SparseFeatures& x, const std::vector<int>& labels,
                      const Split& split) {
  tc.validate();
  const auto started = std::chrono::steady_clock::now();
  TrainRun run;
  model.initialize(tc.seed);
  Rng dropout = Rng::stream(tc.seed, "dropout");
  Adam adam(model.params(), tc.learning_rate, tc.weight_decay);
  run.best_params = model.params();
  double best = -1.0;
  std::size_t since = 0;
  for (std::size_t epoch = 0; epoch < tc.max_epochs; ++epoch) {
    ForwardCache cache;
    const RowMatrix logits = model.forward(x, &dropout, &cache);
    RowMatrix dlogits;
    const double loss = cross_entropy(logits, labels, split.train, &dlogits);
    if (!std::isfinite(loss)) {
      run.failed = true;
      run.failure = "non-finite loss at epoch " + std::to_string(epoch);
      break;
    }
    adam.step(model.params(), model.backward(x, cache, dlogits));
    const double val = accuracy(model.forward(x), labels, split.val);
    run.epochs.push_back({epoch, loss, val});
    if (val > best) {
      best = val;
      run.best_epoch = epoch;
      run.best_val_accuracy = val;
      run.best_params = model.params();
      since = 0;
    } else if (++since >= tc.patience) {
      break;
    }
  }
  model.params() = run.best_params;
  if (!run.failed) run.test_accuracy = accuracy(model.forward(x), labels, split.test);
  run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return run;
}

/// Largest |analytic - numeric| / max(|analytic| + |numeric|, floor) over
/// `samples` parameter entries, numeric by central differences of the
/// dropout-free training loss.
inline double gradient_check(GcnModel& model, const SparseFeatures& x, const std::vector<int>& labels,
                             const std::vector<std::size_t>& rows, double epsilon = 1e-5,
                             std::size_t samples = 200, std::uint64_t seed = 0, double floor = 1e-8) {
  ForwardCache cache;
  RowMatrix dlogits;
  cross_entropy(model.forward(x, nullptr, &cache), labels, rows, &dlogits);
  const auto grads = model.backward(x, cache, dlogits);
  std::vector<std::pair<std::size_t, Eigen::Index>> entries;
  for (std::size_t t = 0; t < model.params().size(); ++t) {
    for (Eigen::Index i = 0; i < model.params()[t].value.size(); ++i) entries.emplace_back(t, i);
  }
  Rng rng = Rng::stream(seed, "gradient-check");
  rng.shuffle(entries);
  if (entries.size() > samples) entries.resize(samples);
  double worst = 0.0;
  for (const auto& [t, i] : entries) {
    double& w = model.params()[t].value.data()[i];
    const double saved = w;
    w = saved + epsilon;
    const double up = cross_entropy(model.forward(x), labels, rows);
    w = saved - epsilon;
    const double down = cross_entropy(model.forward(x), labels, rows);
    w = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double analytic = grads[t].data()[i];
    const double denom = std::max(std::abs(analytic) + std::abs(numeric), floor);
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  return worst;
}

// Checkpoint: u64 tensor count, then per tensor u64 name length, name bytes,
// u64 rows, u64 cols, rows*cols f64 in row-major order.

inline void save_checkpoint(const std::vector<Tensor>& params, const std::filesystem::path& bin,
                            const std::filesystem::path& manifest) {
  std::ostringstream out;
  io::write_u64(out, params.size());
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& p : params) {
    io::write_u64(out, p.name.size());
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    io::write_u64(out, static_cast<std::uint64_t>(p.value.rows()));
    io::write_u64(out, static_cast<std::uint64_t>(p.value.cols()));
    for (Eigen::Index i = 0; i < p.value.size(); ++i) io::write_f64(out, p.value.data()[i]);
    shapes.push_back({{"name", p.name}, {"shape", {p.value.rows(), p.value.cols()}}});
  }
  io::write_file(bin, out.str());
  io::write_file(manifest, shapes.dump(2) + "\n");
}

inline std::vector<Tensor> load_checkpoint(const std::filesystem::path& bin) {
  std::istringstream in(io::read_file(bin));
  const std::size_t count = io::read_u64(in);
  std::vector<Tensor> params(count);
  for (auto& p : params) {
    p.name.resize(io::read_u64(in));
    in.read(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const auto rows = static_cast<Eigen::Index>(io::read_u64(in));
    const auto cols = static_cast<Eigen::Index>(io::read_u64(in));
    p.value.resize(rows, cols);
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = io::read_f64(in);
    p.decay = p.name.find(".bias") == std::string::npos;
  }
  return params;
}

/// One JSON object per epoch, newline separated.
inline std::string epochs_jsonl(const TrainRun& run) {
  std::string out;
  for (const auto& e : run.epochs) {
    out += nlohmann::json{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_accuracy", e.val_accuracy}}.dump();
    out += '\n';
  }
  return out;
}

/// Summary without wall time, so repeated runs serialize identically.
inline nlohmann::json summary_json(const TrainRun& run) {
  nlohmann::json j = {{"epochs_run", run.epochs.size()},
                      {"best_epoch", run.best_epoch},
                      {"best_val_accuracy", run.best_val_accuracy},
                      {"test_accuracy", run.test_accuracy},
                      {"failed", run.failed}};
  if (run.failed) j["failure"] = run.failure;
  return j;
}

}  // namespace qdc
