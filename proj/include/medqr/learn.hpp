#pragma once

// Small supervised heads over frozen representations: a linear classifier
// and a convolutional text classifier (several filter widths, ReLU, max over
// time), trained with Adam on cross-entropy.
//
// Parameters live in one flat double vector per head; the optimizer and the
// finite-difference checker operate on that vector directly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "medqr/embed.hpp"
#include "medqr/error.hpp"
#include "medqr/index_io.hpp"
#include "medqr/io.hpp"
#include "medqr/rng.hpp"

namespace medqr {

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  std::size_t t = 0;
  std::vector<double> m;
  std::vector<double> v;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(std::size_t n_params, double learning_rate)
      : m(n_params, 0.0), v(n_params, 0.0), lr(learning_rate) {}
};

inline void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size() || params.size() != state.m.size() || state.v.size() != state.m.size()) {
    throw Error("adam_step: shape mismatch");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw Error("adam_step: non-finite gradient");
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy

inline std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += (p[i] = std::exp(logits[i] - mx));
  for (double& x : p) x /= z;
  return p;
}

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d logits
};

/// -log softmax(logits)[label] via log-sum-exp with the max subtracted.
inline LossGrad cross_entropy(std::span<const double> logits, std::size_t label) {
  if (logits.empty() || label >= logits.size()) throw Error("cross_entropy: label out of range");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  LossGrad out;
  out.loss = std::log(z) - (logits[label] - mx);
  out.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out.grad[i] = std::exp(logits[i] - mx) / z;
  out.grad[label] -= 1.0;
  return out;
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// ---------------------------------------------------------------------------
// Training configuration

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  double learning_rate = 2e-5;
  double dropout = 0.1;
  std::uint64_t seed = 0;

  static TrainConfig linear_defaults() { return {10, 8, 2e-5, 0.1, 0}; }
  static TrainConfig cnn_defaults() { return {3, 16, 2e-5, 0.0, 0}; }

  void validate() const {
    if (epochs == 0 || batch_size == 0 || !(learning_rate > 0.0)) {
      throw Error("train config: epochs, batch size and learning rate must be positive");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("train config: dropout must lie in [0, 1)");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
          {"dropout", c.dropout}, {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.dropout = j.at("dropout").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

namespace detail {

inline void init_uniform(std::span<double> params, double fan_in, Rng& rng) {
  const double bound = fan_in > 0 ? 1.0 / std::sqrt(fan_in) : 0.0;
  for (double& p : params) p = rng.uniform(-bound, bound);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear head

/// logits = W x + b. Dropout (inverted) is applied to x during training.
class LinearHead {
 public:
  LinearHead() = default;

  LinearHead(std::size_t input_dim, std::size_t classes, std::uint64_t init_seed, double dropout = 0.1)
      : input_dim_(input_dim), classes_(classes), dropout_(dropout),
        params_(classes * input_dim + classes, 0.0) {
    if (classes == 0) throw Error("linear head: need at least one class");
    Rng rng(init_seed);
    detail::init_uniform(params_, static_cast<double>(input_dim), rng);
  }

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t classes() const noexcept { return classes_; }
  double dropout() const noexcept { return dropout_; }
  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }
  std::size_t weight_count() const noexcept { return classes_ * input_dim_; }
  void set_dropout(double p) { dropout_ = p; }

  std::vector<double> logits(std::span<const double> x) const {
    check_input(x);
    std::vector<double> out(classes_);
    for (std::size_t c = 0; c < classes_; ++c) {
      double s = params_[weight_count() + c];
      const double* w = params_.data() + c * input_dim_;
      for (std::size_t d = 0; d < input_dim_; ++d) s += w[d] * x[d];
      out[c] = s;
    }
    return out;
  }

  std::size_t predict(std::span<const double> x) const { return argmax(logits(x)); }

  /// Loss on one example; adds d loss / d params into `grad`. With a
  /// non-null `rng` dropout is active.
  double loss_grad(std::span<const double> x, std::size_t label, std::span<double> grad, Rng* rng = nullptr) const {
    check_input(x);
    std::vector<double> input(x.begin(), x.end());
    if (rng && dropout_ > 0.0) {
      const double scale = 1.0 / (1.0 - dropout_);
      for (double& v : input) v = rng->uniform01() < dropout_ ? 0.0 : v * scale;
    }
    const auto lg = cross_entropy(logits(input), label);
    for (std::size_t c = 0; c < classes_; ++c) {
      double* gw = grad.data() + c * input_dim_;
      for (std::size_t d = 0; d < input_dim_; ++d) gw[d] += lg.grad[c] * input[d];
      grad[weight_count() + c] += lg.grad[c];
    }
    return lg.loss;
  }

  bool operator==(const LinearHead&) const = default;

 private:
  void check_input(std::span<const double> x) const {
    if (x.size() != input_dim_) {
      throw Error("linear head: input dim " + std::to_string(x.size()) + ", expected " + std::to_string(input_dim_));
    }
  }

  std::size_t input_dim_ = 0;
  std::size_t classes_ = 0;
  double dropout_ = 0.0;
  std::vector<double> params_;
};

// ---------------------------------------------------------------------------
// CNN head

/// For each width w, `filters_per_width` filters of shape (w x dim) plus a
/// bias; valid convolution over time, ReLU, max over time; concatenated
/// features feed a linear output layer. Inputs shorter than the widest
/// filter are zero-padded on the right.
class CnnHead {
 public:
  struct Forward {
    std::vector<double> features;   // one per filter
    std::vector<std::size_t> argmax;  // time step of the max pre-activation (earliest on ties)
    std::vector<double> logits;
  };

  CnnHead() = default;

  CnnHead(std::size_t embedding_dim, std::size_t classes, std::uint64_t init_seed,
          std::vector<std::size_t> widths = {2, 3, 4, 5, 6}, std::size_t filters_per_width = 100)
      : dim_(embedding_dim), classes_(classes), widths_(std::move(widths)), per_width_(filters_per_width) {
    if (dim_ == 0 || classes_ == 0 || widths_.empty() || per_width_ == 0) {
      throw Error("cnn head: dims, classes, widths and filter count must be positive");
    }
    for (std::size_t w : widths_) {
      if (w == 0) throw Error("cnn head: filter width must be >= 1");
    }
    layout();
    params_.assign(total_params_, 0.0);
    Rng rng(init_seed);
    for (std::size_t g = 0; g < widths_.size(); ++g) {
      const double fan_in = static_cast<double>(widths_[g] * dim_);
      detail::init_uniform(std::span(params_).subspan(group_offset_[g], per_width_ * widths_[g] * dim_ + per_width_),
                           fan_in, rng);
    }
    detail::init_uniform(std::span(params_).subspan(out_offset_), static_cast<double>(filter_count()), rng);
  }

  std::size_t embedding_dim() const noexcept { return dim_; }
  std::size_t classes() const noexcept { return classes_; }
  const std::vector<std::size_t>& widths() const noexcept { return widths_; }
  std::size_t filters_per_width() const noexcept { return per_width_; }
  std::size_t filter_count() const noexcept { return widths_.size() * per_width_; }
  std::size_t max_width() const noexcept { return *std::max_element(widths_.begin(), widths_.end()); }
  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }

  Forward forward(const VectorSequence& x) const {
    const VectorSequence pad = scratch_pad(x);
    const VectorSequence& in = padded(x, pad);
    Forward f;
    f.features.assign(filter_count(), 0.0);
    f.argmax.assign(filter_count(), 0);
    const std::size_t T = in.size();
    for (std::size_t g = 0; g < widths_.size(); ++g) {
      const std::size_t w = widths_[g];
      for (std::size_t k = 0; k < per_width_; ++k) {
        const double* W = filter(g, k);
        const double bias = params_[group_offset_[g] + per_width_ * w * dim_ + k];
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_t = 0;
        for (std::size_t t = 0; t + w <= T; ++t) {
          double s = bias;
          for (std::size_t i = 0; i < w; ++i) {
            const auto row = in[t + i];
            const double* wi = W + i * dim_;
            for (std::size_t d = 0; d < dim_; ++d) s += wi[d] * row[d];
          }
          if (s > best) best = s, best_t = t;
        }
        const std::size_t j = g * per_width_ + k;
        f.features[j] = std::max(0.0, best);
        f.argmax[j] = best_t;
      }
    }
    f.logits.assign(classes_, 0.0);
    const std::size_t F = filter_count();
    for (std::size_t c = 0; c < classes_; ++c) {
      const double* Wo = params_.data() + out_offset_ + c * F;
      double s = params_[out_offset_ + classes_ * F + c];
      for (std::size_t j = 0; j < F; ++j) s += Wo[j] * f.features[j];
      f.logits[c] = s;
    }
    return f;
  }

  std::vector<double> logits(const VectorSequence& x) const { return forward(x).logits; }
  std::size_t predict(const VectorSequence& x) const { return argmax(forward(x).logits); }

  /// Loss on one example; adds d loss / d params into `grad`. If
  /// `pre_grad` is non-null it receives d loss / d pre-activation as a
  /// (filter x time step) matrix; max pooling routes each filter's gradient
  /// to a single step.
  double loss_grad(const VectorSequence& x, std::size_t label, std::span<double> grad,
                   std::vector<std::vector<double>>* pre_grad = nullptr) const {
    VectorSequence pad_storage = scratch_pad(x);
    const VectorSequence& in = padded(x, pad_storage);
    const Forward f = forward(in);
    const auto lg = cross_entropy(f.logits, label);
    const std::size_t F = filter_count();
    std::vector<double> dfeat(F, 0.0);
    for (std::size_t c = 0; c < classes_; ++c) {
      const double dl = lg.grad[c];
      const double* Wo = params_.data() + out_offset_ + c * F;
      double* gWo = grad.data() + out_offset_ + c * F;
      for (std::size_t j = 0; j < F; ++j) {
        gWo[j] += dl * f.features[j];
        dfeat[j] += dl * Wo[j];
      }
      grad[out_offset_ + classes_ * F + c] += dl;
    }
    if (pre_grad) pre_grad->assign(F, std::vector<double>(in.size(), 0.0));
    for (std::size_t g = 0; g < widths_.size(); ++g) {
      const std::size_t w = widths_[g];
      for (std::size_t k = 0; k < per_width_; ++k) {
        const std::size_t j = g * per_width_ + k;
        if (f.features[j] <= 0.0) continue;  // ReLU closed
        const double dpre = dfeat[j];
        const std::size_t t = f.argmax[j];
        if (pre_grad) (*pre_grad)[j][t] = dpre;
        double* gW = grad.data() + group_offset_[g] + k * w * dim_;
        for (std::size_t i = 0; i < w; ++i) {
          const auto row = in[t + i];
          for (std::size_t d = 0; d < dim_; ++d) gW[i * dim_ + d] += dpre * row[d];
        }
        grad[group_offset_[g] + per_width_ * w * dim_ + k] += dpre;
      }
    }
    return lg.loss;
  }

  bool operator==(const CnnHead& o) const {
    return dim_ == o.dim_ && classes_ == o.classes_ && widths_ == o.widths_ && per_width_ == o.per_width_ &&
           params_ == o.params_;
  }

 private:
  void layout() {
    group_offset_.clear();
    std::size_t off = 0;
    for (std::size_t w : widths_) {
      group_offset_.push_back(off);
      off += per_width_ * w * dim_ + per_width_;
    }
    out_offset_ = off;
    total_params_ = off + classes_ * filter_count() + classes_;
  }

  const double* filter(std::size_t g, std::size_t k) const {
    return params_.data() + group_offset_[g] + k * widths_[g] * dim_;
  }

  // Right-pads to the widest filter when needed; returns empty otherwise.
  VectorSequence scratch_pad(const VectorSequence& x) const {
    check_input(x);
    if (x.size() >= max_width()) return {};
    VectorSequence p(max_width(), dim_);
    for (std::size_t t = 0; t < x.size(); ++t) std::copy(x[t].begin(), x[t].end(), p[t].begin());
    return p;
  }

  static const VectorSequence& padded(const VectorSequence& x, const VectorSequence& pad) {
    return pad.empty() ? x : pad;
  }

  void check_input(const VectorSequence& x) const {
    if (x.empty()) throw Error("cnn head: empty sequence");
    if (x.dim() != dim_) {
      throw Error("cnn head: embedding dim " + std::to_string(x.dim()) + ", expected " + std::to_string(dim_));
    }
  }

  friend CnnHead cnn_head_from_params(std::size_t, std::size_t, std::vector<std::size_t>, std::size_t,
                                      std::vector<double>);

  std::size_t dim_ = 0;
  std::size_t classes_ = 0;
  std::vector<std::size_t> widths_;
  std::size_t per_width_ = 0;
  std::vector<std::size_t> group_offset_;
  std::size_t out_offset_ = 0;
  std::size_t total_params_ = 0;
  std::vector<double> params_;
};

inline CnnHead cnn_head_from_params(std::size_t dim, std::size_t classes, std::vector<std::size_t> widths,
                                    std::size_t per_width, std::vector<double> params) {
  CnnHead head(dim, classes, 0, std::move(widths), per_width);
  if (params.size() != head.params_.size()) throw Error("cnn head: parameter count mismatch");
  head.params_ = std::move(params);
  return head;
}

// ---------------------------------------------------------------------------
// Training

struct LinearExample {
  std::vector<double> x;
  std::size_t label = 0;
};

struct SequenceExample {
  VectorSequence x;
  std::size_t label = 0;
};

template <typename Head>
struct TrainResult {
  Head head;
  std::vector<double> epoch_loss;  // mean training loss per epoch
};

namespace detail {

// Seeded shuffle per epoch, mini-batch mean gradients, one Adam step per batch.
template <typename Head, typename LossFn>
std::vector<double> run_training(Head& head, std::size_t n, const TrainConfig& config, LossFn&& loss_fn) {
  config.validate();
  if (n == 0) throw Error("train: empty dataset");
  Rng rng(derive_seed(config.seed, 0x7EA1));
  AdamState adam(head.params().size(), config.learning_rate);
  std::vector<double> grad(head.params().size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> log;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = start; i < stop; ++i) total += loss_fn(order[i], std::span<double>(grad), rng);
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (double& g : grad) g *= inv;
      adam_step(adam, head.params(), grad);
    }
    log.push_back(total / static_cast<double>(n));
  }
  return log;
}

}  // namespace detail

inline TrainResult<LinearHead> train_linear(LinearHead head, const std::vector<LinearExample>& data,
                                            const TrainConfig& config) {
  if (data.empty()) throw Error("train_linear: empty dataset");
  for (const auto& ex : data) {
    if (ex.x.size() != head.input_dim()) throw Error("train_linear: input dimension mismatch");
    if (ex.label >= head.classes()) throw Error("train_linear: label out of range");
  }
  head.set_dropout(config.dropout);
  auto log = detail::run_training(head, data.size(), config, [&](std::size_t i, std::span<double> grad, Rng& rng) {
    return head.loss_grad(data[i].x, data[i].label, grad, &rng);
  });
  return {std::move(head), std::move(log)};
}

inline TrainResult<CnnHead> train_cnn(CnnHead head, const std::vector<SequenceExample>& data,
                                      const TrainConfig& config) {
  if (data.empty()) throw Error("train_cnn: empty dataset");
  for (const auto& ex : data) {
    if (ex.x.empty() || ex.x.dim() != head.embedding_dim()) throw Error("train_cnn: input dimension mismatch");
    if (ex.label >= head.classes()) throw Error("train_cnn: label out of range");
  }
  auto log = detail::run_training(head, data.size(), config, [&](std::size_t i, std::span<double> grad, Rng&) {
    return head.loss_grad(data[i].x, data[i].label, grad);
  });
  return {std::move(head), std::move(log)};
}

/// Embeds every token sequence with the (frozen) backend, then trains.
inline TrainResult<CnnHead> train_cnn(CnnHead head,
                                      const std::vector<std::pair<TokenSequence, std::size_t>>& data,
                                      const EmbeddingBackend& backend, const TrainConfig& config) {
  std::vector<SequenceExample> embedded;
  embedded.reserve(data.size());
  for (const auto& [tokens, label] : data) embedded.push_back({backend.embed(tokens), label});
  return train_cnn(std::move(head), embedded, config);
}

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t checked = 0;
};

/// Central differences on every parameter against the analytic gradient;
/// relative error |ga - gn| / max(1e-12, |ga| + |gn|). Dropout is off.
template <typename Head, typename Instance>
GradCheckResult grad_check(Head head, const Instance& x, std::size_t label, double epsilon = 1e-4) {
  if (!(epsilon > 0.0)) throw Error("grad_check: epsilon must be positive");
  auto params = head.params();
  std::vector<double> analytic(params.size(), 0.0);
  std::vector<double> scratch(params.size(), 0.0);
  auto loss_at = [&] {
    std::fill(scratch.begin(), scratch.end(), 0.0);
    const double l = head.loss_grad(x, label, scratch);
    if (!std::isfinite(l)) throw Error("grad_check: non-finite loss");
    return l;
  };
  if (!std::isfinite(head.loss_grad(x, label, analytic))) throw Error("grad_check: non-finite loss");
  GradCheckResult result;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + epsilon;
    const double up = loss_at();
    params[i] = saved - epsilon;
    const double down = loss_at();
    params[i] = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double rel = std::abs(analytic[i] - numeric) / std::max(1e-12, std::abs(analytic[i]) + std::abs(numeric));
    if (rel > result.max_rel_error) result.max_rel_error = rel, result.worst_param = i;
    ++result.checked;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints: u32 LE header length, JSON header, then the parameters as
// little-endian binary32. Parameters train in double precision, so a
// checkpoint stores them rounded to float; reloading and re-saving is
// byte-identical.

using AnyHead = std::variant<LinearHead, CnnHead>;

struct Checkpoint {
  AnyHead head;
  nlohmann::json header;  // shapes, config, seed and caller-supplied metadata under "meta"
};

namespace detail {

inline std::string pack_params(const nlohmann::json& header, std::span<const double> params) {
  const std::string json = header.dump();
  std::string out;
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(json.size()));
  out += json;
  for (double p : params) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(p)));
  return out;
}

}  // namespace detail

inline std::string serialize_head(const AnyHead& head, const TrainConfig& config, const nlohmann::json& meta = {}) {
  nlohmann::json header;
  std::span<const double> params;
  if (const auto* lin = std::get_if<LinearHead>(&head)) {
    header = {{"type", "linear"}, {"input_dim", lin->input_dim()}, {"classes", lin->classes()},
              {"dropout", lin->dropout()}};
    params = lin->params();
  } else {
    const auto& cnn = std::get<CnnHead>(head);
    header = {{"type", "cnn"}, {"embedding_dim", cnn.embedding_dim()}, {"classes", cnn.classes()},
              {"widths", cnn.widths()}, {"filters_per_width", cnn.filters_per_width()}};
    params = cnn.params();
  }
  header["config"] = to_json(config);
  header["seed"] = config.seed;
  header["param_count"] = params.size();
  header["meta"] = meta;
  return detail::pack_params(header, params);
}

inline Checkpoint deserialize_head(std::string_view bytes, const std::string& origin = "<checkpoint>") {
  detail::ByteReader in(bytes, origin);
  const std::uint32_t len = in.le<std::uint32_t>("header length");
  nlohmann::json header = nlohmann::json::parse(in.take(len, "header"), nullptr, false);
  if (header.is_discarded() || !header.is_object()) throw Error(origin + ": malformed checkpoint header");
  try {
    const std::size_t count = header.at("param_count").get<std::size_t>();
    std::vector<double> params(count);
    const auto raw = in.take(count * 4, "parameters");
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t word = 0;
      for (std::size_t b = 0; b < 4; ++b) {
        word |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[4 * i + b])) << (8 * b);
      }
      params[i] = static_cast<double>(std::bit_cast<float>(word));
    }
    if (!in.at_end()) throw Error(origin + ": trailing bytes after parameters");
    const std::string type = header.at("type").get<std::string>();
    if (type == "linear") {
      LinearHead head(header.at("input_dim").get<std::size_t>(), header.at("classes").get<std::size_t>(), 0,
                      header.at("dropout").get<double>());
      if (head.params().size() != count) throw Error(origin + ": parameter count mismatch");
      std::copy(params.begin(), params.end(), head.params().begin());
      return {std::move(head), std::move(header)};
    }
    if (type == "cnn") {
      auto head = cnn_head_from_params(header.at("embedding_dim").get<std::size_t>(),
                                       header.at("classes").get<std::size_t>(),
                                       header.at("widths").get<std::vector<std::size_t>>(),
                                       header.at("filters_per_width").get<std::size_t>(), std::move(params));
      return {std::move(head), std::move(header)};
    }
    throw Error(origin + ": unknown head type \"" + type + "\"");
  } catch (const nlohmann::json::exception& e) {
    throw Error(origin + ": bad checkpoint header: " + e.what());
  }
}

inline void save_head(const AnyHead& head, const TrainConfig& config, const std::filesystem::path& path,
                      const nlohmann::json& meta = {}) {
  io::write_file(path, serialize_head(head, config, meta));
}

inline Checkpoint load_head(const std::filesystem::path& path) {
  return deserialize_head(io::read_file(path), path.string());
}

}  // namespace medqr
