#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "sescore/error.hpp"
#include "sescore/gateway.hpp"
#include "sescore/random.hpp"

namespace sescore {

using FeatureVector = std::vector<double>;

/// Pair features with h = candidate, f = reference:
/// [h; f; h*f; h-f], or [h*f; h-f] when include_raw is false.
inline FeatureVector extract_features(std::span<const double> ref_emb, std::span<const double> cand_emb,
                                      bool include_raw = true) {
  if (ref_emb.size() != cand_emb.size())
    throw DataError("extract_features: dimension mismatch (" + std::to_string(ref_emb.size()) + " vs " +
                    std::to_string(cand_emb.size()) + ")");
  const std::size_t d = ref_emb.size();
  FeatureVector out;
  out.reserve((include_raw ? 4 : 2) * d);
  if (include_raw) {
    out.insert(out.end(), cand_emb.begin(), cand_emb.end());
    out.insert(out.end(), ref_emb.begin(), ref_emb.end());
  }
  for (std::size_t i = 0; i < d; ++i) out.push_back(cand_emb[i] * ref_emb[i]);
  for (std::size_t i = 0; i < d; ++i) out.push_back(cand_emb[i] - ref_emb[i]);
  return out;
}

inline std::size_t feature_dim(std::size_t embed_dim, bool include_raw) { return (include_raw ? 4 : 2) * embed_dim; }

struct RegressorConfig {
  std::vector<std::size_t> hidden_dims{2048, 1024};
  double dropout = 0.15;
  double lr = 3e-5;
  std::size_t batch_size = 8;
  std::size_t epochs = 1;
  std::size_t max_steps = 0;  // 0: no cap
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool include_raw = true;
  bool scale_targets = false;  // affine map [score_min, score_max] -> [0, 1]
  double score_min = -25.0;
  double score_max = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (hidden_dims.empty()) throw UsageError("regressor: hidden_dims must be nonempty");
    for (auto h : hidden_dims)
      if (h == 0) throw UsageError("regressor: hidden dims must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw UsageError("regressor: dropout must be in [0, 1)");
    if (!(lr > 0.0)) throw UsageError("regressor: lr must be positive");
    if (batch_size == 0) throw UsageError("regressor: batch_size must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0))
      throw UsageError("regressor: invalid Adam hyperparameters");
    if (scale_targets && !(score_max > score_min)) throw UsageError("regressor: score_max must exceed score_min");
  }
};

/// Dense layer, y = W x + b, W stored row-major (rows = outputs).
struct Layer {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  Layer() = default;
  Layer(std::size_t r, std::size_t c) : rows(r), cols(c), weights(r * c, 0.0), bias(r, 0.0) {}

  double& w(std::size_t r, std::size_t c) { return weights[r * cols + c]; }
  double w(std::size_t r, std::size_t c) const { return weights[r * cols + c]; }
};

/// Per-sample dropout masks, one vector per hidden layer. Entries are 0 or
/// 1/(1-p) (inverted dropout), so inference needs no rescaling.
using DropoutMask = std::vector<std::vector<double>>;

/// Feed-forward regressor: (affine -> tanh -> dropout) per hidden layer, then
/// an affine map to one scalar.
class Regressor {
 public:
  Regressor() = default;

  Regressor(std::size_t input_dim, const std::vector<std::size_t>& hidden_dims) {
    std::size_t in = input_dim;
    for (std::size_t h : hidden_dims) {
      layers_.emplace_back(h, in);
      in = h;
    }
    layers_.emplace_back(1, in);
  }

  /// Symmetric uniform init scaled by fan-in: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  void init_uniform(Rng& rng) {
    for (Layer& l : layers_) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(l.cols));
      for (double& v : l.weights) v = (2.0 * rng.uniform01() - 1.0) * bound;
      for (double& v : l.bias) v = (2.0 * rng.uniform01() - 1.0) * bound;
    }
  }

  std::size_t input_dim() const { return layers_.empty() ? 0 : layers_.front().cols; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  std::size_t num_params() const {
    std::size_t n = 0;
    for (const Layer& l : layers_) n += l.weights.size() + l.bias.size();
    return n;
  }

  /// Inference-mode forward pass (no dropout).
  double forward(std::span<const double> x) const { return forward_impl(x, nullptr, nullptr); }

  DropoutMask sample_mask(double p, Rng& rng) const {
    DropoutMask mask;
    const double keep_scale = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
      std::vector<double> m(layers_[i].rows, 1.0);
      if (p > 0.0)
        for (double& v : m) v = rng.uniform01() < p ? 0.0 : keep_scale;
      mask.push_back(std::move(m));
    }
    return mask;
  }

  /// Zero-filled gradient buffer with this network's shapes.
  std::vector<Layer> zero_like() const {
    std::vector<Layer> out;
    for (const Layer& l : layers_) out.emplace_back(l.rows, l.cols);
    return out;
  }

  /// Mean squared error over the batch, accumulating dLoss/dtheta into grad
  /// when given. masks (one per sample) may be null for a dropout-free pass.
  double mse_loss(const std::vector<FeatureVector>& batch, std::span<const double> targets,
                  const std::vector<DropoutMask>* masks, std::vector<Layer>* grad) const {
    if (batch.size() != targets.size() || batch.empty()) throw DataError("mse_loss: batch/target size mismatch");
    const double scale = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    std::vector<std::vector<double>> acts;
    for (std::size_t s = 0; s < batch.size(); ++s) {
      const DropoutMask* mask = masks ? &(*masks)[s] : nullptr;
      const double y = forward_impl(batch[s], mask, grad ? &acts : nullptr);
      const double err = y - targets[s];
      loss += err * err * scale;
      if (grad) backward(batch[s], acts, mask, 2.0 * err * scale, *grad);
    }
    return loss;
  }

 private:
  double forward_impl(std::span<const double> x, const DropoutMask* mask,
                      std::vector<std::vector<double>>* acts) const {
    if (x.size() != input_dim())
      throw DataError("regressor: input dimension " + std::to_string(x.size()) + " != " +
                      std::to_string(input_dim()));
    if (acts) acts->clear();
    std::vector<double> cur(x.begin(), x.end());
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const Layer& l = layers_[li];
      std::vector<double> next(l.bias);
      for (std::size_t r = 0; r < l.rows; ++r) {
        const double* row = &l.weights[r * l.cols];
        double acc = 0.0;
        for (std::size_t c = 0; c < l.cols; ++c) acc += row[c] * cur[c];
        next[r] += acc;
      }
      if (li + 1 < layers_.size()) {
        for (double& v : next) v = std::tanh(v);
        if (acts) acts->push_back(next);
        if (mask)
          for (std::size_t r = 0; r < l.rows; ++r) next[r] *= (*mask)[li][r];
      }
      cur = std::move(next);
    }
    return cur[0];
  }

  // acts[i] = tanh output of hidden layer i before dropout.
  void backward(std::span<const double> x, const std::vector<std::vector<double>>& acts, const DropoutMask* mask,
                double dy, std::vector<Layer>& grad) const {
    auto layer_input = [&](std::size_t li) {
      if (li == 0) return std::vector<double>(x.begin(), x.end());
      std::vector<double> in = acts[li - 1];
      if (mask)
        for (std::size_t r = 0; r < in.size(); ++r) in[r] *= (*mask)[li - 1][r];
      return in;
    };
    std::vector<double> delta{dy};  // dLoss/d(pre-activation) of the current layer
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const Layer& l = layers_[li];
      Layer& g = grad[li];
      const std::vector<double> in = layer_input(li);
      for (std::size_t r = 0; r < l.rows; ++r) {
        g.bias[r] += delta[r];
        double* grow = &g.weights[r * l.cols];
        for (std::size_t c = 0; c < l.cols; ++c) grow[c] += delta[r] * in[c];
      }
      if (li == 0) break;
      std::vector<double> prev(l.cols, 0.0);
      for (std::size_t r = 0; r < l.rows; ++r) {
        const double* row = &l.weights[r * l.cols];
        for (std::size_t c = 0; c < l.cols; ++c) prev[c] += row[c] * delta[r];
      }
      const auto& t = acts[li - 1];
      for (std::size_t c = 0; c < l.cols; ++c) {
        const double m = mask ? (*mask)[li - 1][c] : 1.0;
        prev[c] *= m * (1.0 - t[c] * t[c]);
      }
      delta = std::move(prev);
    }
  }

  std::vector<Layer> layers_;
};

/// Adam with bias-corrected moments.
class Adam {
 public:
  Adam() = default;
  Adam(const Regressor& net, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps), m_(net.zero_like()), v_(net.zero_like()) {}

  void step(Regressor& net, const std::vector<Layer>& grad, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto update = [&](std::vector<double>& param, const std::vector<double>& g, std::vector<double>& m,
                      std::vector<double>& v) {
      for (std::size_t i = 0; i < param.size(); ++i) {
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
        param[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      }
    };
    auto& layers = net.layers();
    for (std::size_t li = 0; li < layers.size(); ++li) {
      update(layers[li].weights, grad[li].weights, m_[li].weights, v_[li].weights);
      update(layers[li].bias, grad[li].bias, m_[li].bias, v_[li].bias);
    }
  }

  std::size_t steps() const { return t_; }
  std::vector<Layer>& first_moment() { return m_; }
  std::vector<Layer>& second_moment() { return v_; }
  const std::vector<Layer>& first_moment() const { return m_; }
  const std::vector<Layer>& second_moment() const { return v_; }
  void set_steps(std::size_t t) { t_ = t; }

 private:
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::size_t t_ = 0;
  std::vector<Layer> m_, v_;
};

struct TrainingExample {
  std::string reference;
  std::string candidate;
  double score = 0.0;
};

struct EpochLog {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double mean_loss = 0.0;
};

struct TrainingLog {
  std::vector<EpochLog> epochs;
  std::vector<double> step_losses;
};

/// Embeds each distinct string once.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(const Provider& embedder) : embedder_(embedder) {}

  const Embedding& get(const std::string& text) {
    auto it = cache_.find(text);
    if (it == cache_.end()) {
      Embedding e = embedder_.embed(text);
      for (double v : e)
        if (!std::isfinite(v)) throw SchemaError("embed: non-finite entry");
      if (dim_ == 0) dim_ = e.size();
      if (e.size() != dim_) throw DataError("embed: dimension changed within a run");
      it = cache_.emplace(text, std::move(e)).first;
    }
    return it->second;
  }

  std::size_t dim() const { return dim_; }

 private:
  const Provider& embedder_;
  std::unordered_map<std::string, Embedding> cache_;
  std::size_t dim_ = 0;
};

/// The trained metric: config, network, optimizer state and the embedder
/// settings it was trained with (kept opaque here).
struct QualityModel {
  RegressorConfig config;
  std::size_t embed_dim = 0;
  Regressor net;
  Adam optimizer;
  nlohmann::json embedder;

  static QualityModel create(const RegressorConfig& config, std::size_t embed_dim) {
    config.validate();
    QualityModel m;
    m.config = config;
    m.embed_dim = embed_dim;
    m.net = Regressor(feature_dim(embed_dim, config.include_raw), config.hidden_dims);
    Rng rng(mix_seed(config.seed, 0x1417));
    m.net.init_uniform(rng);
    m.optimizer = Adam(m.net, config.beta1, config.beta2, config.eps);
    return m;
  }

  double to_target(double score) const {
    if (!config.scale_targets) return score;
    return (score - config.score_min) / (config.score_max - config.score_min);
  }
  double from_target(double y) const {
    if (!config.scale_targets) return y;
    return config.score_min + y * (config.score_max - config.score_min);
  }

  FeatureVector features(const Embedding& ref, const Embedding& cand) const {
    return extract_features(ref, cand, config.include_raw);
  }
};

inline void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
}

/// Minibatch MSE training with Adam. Stops after config.epochs epochs or
/// config.max_steps steps, whichever comes first.
inline TrainingLog train(QualityModel& model, std::span<const TrainingExample> data, const Provider& embedder) {
  if (data.empty()) throw DataError("train: no training triples");
  const RegressorConfig& cfg = model.config;
  EmbeddingCache cache(embedder);
  Rng rng(mix_seed(cfg.seed, 0x7e41));
  TrainingLog log;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  bool done = false;
  for (std::size_t epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
    shuffle_indices(order, rng);
    EpochLog elog{epoch + 1, 0, 0.0};
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      std::vector<FeatureVector> batch;
      std::vector<double> targets;
      std::vector<DropoutMask> masks;
      for (std::size_t i = begin; i < end; ++i) {
        const TrainingExample& ex = data[order[i]];
        const Embedding& ref = cache.get(ex.reference);
        const Embedding& cand = cache.get(ex.candidate);
        if (ref.size() != model.embed_dim)
          throw DataError("train: embedder returned dimension " + std::to_string(ref.size()) + ", model expects " +
                          std::to_string(model.embed_dim));
        batch.push_back(model.features(ref, cand));
        targets.push_back(model.to_target(ex.score));
        masks.push_back(model.net.sample_mask(cfg.dropout, rng));
      }
      auto grad = model.net.zero_like();
      const double loss = model.net.mse_loss(batch, targets, &masks, &grad);
      if (!std::isfinite(loss))
        throw DataError("train: non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " +
                        std::to_string(step + 1) + " (lr " + std::to_string(cfg.lr) + ")");
      model.optimizer.step(model.net, grad, cfg.lr);
      log.step_losses.push_back(loss);
      elog.mean_loss += loss;
      ++elog.steps;
      ++step;
      if (cfg.max_steps && step >= cfg.max_steps) {
        done = true;
        break;
      }
    }
    if (elog.steps) elog.mean_loss /= static_cast<double>(elog.steps);
    log.epochs.push_back(elog);
  }
  return log;
}

inline double predict(const QualityModel& model, const std::string& ref, const std::string& cand,
                      const Provider& embedder) {
  const Embedding r = embedder.embed(ref);
  const Embedding c = embedder.embed(cand);
  if (r.size() != model.embed_dim || c.size() != model.embed_dim)
    throw DataError("predict: embedder dimension does not match checkpoint (" + std::to_string(model.embed_dim) +
                    ")");
  return model.from_target(model.net.forward(model.features(r, c)));
}

// ---------------------------------------------------------------------------
// Checkpoint container (JSON).

inline constexpr std::string_view kCheckpointFormat = "sescore-regressor";
inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json regressor_config_to_json(const RegressorConfig& c) {
  return {{"hidden_dims", c.hidden_dims}, {"dropout", c.dropout},       {"lr", c.lr},
          {"batch_size", c.batch_size},   {"epochs", c.epochs},         {"max_steps", c.max_steps},
          {"beta1", c.beta1},             {"beta2", c.beta2},           {"eps", c.eps},
          {"include_raw", c.include_raw}, {"scale_targets", c.scale_targets}, {"score_min", c.score_min},
          {"score_max", c.score_max},     {"seed", c.seed}};
}

/// Rejects unknown keys; missing keys keep their defaults.
inline RegressorConfig regressor_config_from_json(const nlohmann::json& j, RegressorConfig c = {}) {
  if (!j.is_object()) throw DataError("regressor config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "hidden_dims") c.hidden_dims = v.get<std::vector<std::size_t>>();
      else if (key == "dropout") c.dropout = v.get<double>();
      else if (key == "lr") c.lr = v.get<double>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "max_steps") c.max_steps = v.get<std::size_t>();
      else if (key == "beta1") c.beta1 = v.get<double>();
      else if (key == "beta2") c.beta2 = v.get<double>();
      else if (key == "eps") c.eps = v.get<double>();
      else if (key == "include_raw") c.include_raw = v.get<bool>();
      else if (key == "scale_targets") c.scale_targets = v.get<bool>();
      else if (key == "score_min") c.score_min = v.get<double>();
      else if (key == "score_max") c.score_max = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else throw DataError("regressor config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("regressor config: ") + e.what());
  }
  return c;
}

namespace detail {

inline nlohmann::json layers_to_json(const std::vector<Layer>& layers) {
  nlohmann::json arr = nlohmann::json::array();
  for (const Layer& l : layers)
    arr.push_back({{"rows", l.rows}, {"cols", l.cols}, {"weights", l.weights}, {"bias", l.bias}});
  return arr;
}

inline std::vector<Layer> layers_from_json(const nlohmann::json& arr) {
  std::vector<Layer> out;
  for (const auto& j : arr) {
    Layer l(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    l.weights = j.at("weights").get<std::vector<double>>();
    l.bias = j.at("bias").get<std::vector<double>>();
    if (l.weights.size() != l.rows * l.cols || l.bias.size() != l.rows)
      throw DataError("checkpoint: layer shape does not match stored values");
    out.push_back(std::move(l));
  }
  return out;
}

}  // namespace detail

inline nlohmann::json checkpoint_to_json(const QualityModel& m) {
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"config", regressor_config_to_json(m.config)},
          {"embed_dim", m.embed_dim},
          {"embedder", m.embedder},
          {"layers", detail::layers_to_json(m.net.layers())},
          {"adam",
           {{"step", m.optimizer.steps()},
            {"m", detail::layers_to_json(m.optimizer.first_moment())},
            {"v", detail::layers_to_json(m.optimizer.second_moment())}}}};
}

inline QualityModel checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != kCheckpointFormat) throw DataError("checkpoint: unrecognized format");
    if (j.at("version") != kCheckpointVersion) throw DataError("checkpoint: unsupported version");
    QualityModel m = QualityModel::create(regressor_config_from_json(j.at("config")),
                                          j.at("embed_dim").get<std::size_t>());
    m.embedder = j.value("embedder", nlohmann::json::object());
    auto layers = detail::layers_from_json(j.at("layers"));
    auto& dst = m.net.layers();
    if (layers.size() != dst.size()) throw DataError("checkpoint: layer count does not match config");
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].rows != dst[i].rows || layers[i].cols != dst[i].cols)
        throw DataError("checkpoint: layer " + std::to_string(i) + " shape does not match config");
    dst = std::move(layers);
    const auto& adam = j.at("adam");
    m.optimizer.first_moment() = detail::layers_from_json(adam.at("m"));
    m.optimizer.second_moment() = detail::layers_from_json(adam.at("v"));
    m.optimizer.set_steps(adam.at("step").get<std::size_t>());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const QualityModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out << checkpoint_to_json(m).dump() << '\n';
}

inline QualityModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw DataError("checkpoint is not valid JSON: " + path);
  return checkpoint_from_json(j);
}

}  // namespace sescore
