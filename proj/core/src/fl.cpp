#include "fedunlearn/fl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fedunlearn/bigint.hpp"
#include "fedunlearn/chameleon.hpp"
#include "fedunlearn/error.hpp"

namespace fedunlearn::fl {

namespace {

// Parameter views for the flat layout:
//   logistic: W [C x D], b [C]
//   mlp:      W1 [H x D], b1 [H], W2 [C x H], b2 [C]
struct Layout {
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;
};

Layout layout(const ModelShape& s) {
  Layout l;
  if (s.hidden == 0) {
    l.w2 = 0;
    l.b2 = s.classes * s.inputs;
    return l;
  }
  l.w1 = 0;
  l.b1 = s.hidden * s.inputs;
  l.w2 = l.b1 + s.hidden;
  l.b2 = l.w2 + s.classes * s.hidden;
  return l;
}

void check_shape(const ModelShape& s, std::size_t weights) {
  if (s.inputs == 0 || s.classes < 2) fail(ErrorCode::kInvalidArgument, "degenerate model shape");
  if (weights != s.parameter_count()) {
    fail(ErrorCode::kDimensionMismatch, "weight vector does not match model shape");
  }
}

double activate(Activation a, double z) {
  return a == Activation::kTanh ? std::tanh(z) : std::max(0.0, z);
}

// Derivative expressed through the activation output.
double activate_grad(Activation a, double z, double out) {
  return a == Activation::kTanh ? 1.0 - out * out : (z > 0.0 ? 1.0 : 0.0);
}

void softmax_inplace(std::vector<double>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : logits) v /= sum;
}

// Forward pass; fills hidden pre/post activations when the model has them.
std::vector<double> forward(const ModelShape& s, std::span<const double> w,
                            std::span<const double> x, std::vector<double>& pre,
                            std::vector<double>& post) {
  const Layout l = layout(s);
  std::span<const double> input = x;
  std::size_t in_dim = s.inputs;
  if (s.hidden > 0) {
    pre.assign(s.hidden, 0.0);
    post.assign(s.hidden, 0.0);
    for (std::size_t h = 0; h < s.hidden; ++h) {
      double z = w[l.b1 + h];
      for (std::size_t d = 0; d < s.inputs; ++d) z += w[l.w1 + h * s.inputs + d] * x[d];
      pre[h] = z;
      post[h] = activate(s.activation, z);
    }
    input = post;
    in_dim = s.hidden;
  }
  std::vector<double> logits(s.classes);
  for (std::size_t c = 0; c < s.classes; ++c) {
    double z = w[l.b2 + c];
    for (std::size_t d = 0; d < in_dim; ++d) z += w[l.w2 + c * in_dim + d] * input[d];
    logits[c] = z;
  }
  return logits;
}

// -log softmax(logits)[label], computed stably.
double cross_entropy(const std::vector<double>& logits, int label) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  return std::log(sum) + mx - logits[static_cast<std::size_t>(label)];
}

void check_label(const ModelShape& s, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= s.classes) {
    fail(ErrorCode::kInvalidArgument, "label out of range");
  }
}

}  // namespace

std::size_t ModelShape::parameter_count() const {
  if (hidden == 0) return classes * inputs + classes;
  return hidden * inputs + hidden + classes * hidden + classes;
}

void Dataset::append(std::span<const double> x, int label) {
  if (x.size() != dim) fail(ErrorCode::kDimensionMismatch, "feature row has wrong dimension");
  features.insert(features.end(), x.begin(), x.end());
  labels.push_back(label);
}

GlobalModel init_model(const ModelShape& shape, std::uint64_t seed, double scale) {
  Rng rng(mix_seed(seed, 0x494E4954ULL));
  std::normal_distribution<double> normal(0.0, scale);
  GlobalModel m{shape, std::vector<double>(shape.parameter_count()), 0};
  for (double& w : m.weights) w = normal(rng);
  return m;
}

std::vector<double> predict_proba(const ModelShape& shape, std::span<const double> weights,
                                  std::span<const double> x) {
  check_shape(shape, weights.size());
  if (x.size() != shape.inputs) fail(ErrorCode::kDimensionMismatch, "input dimension mismatch");
  std::vector<double> pre, post;
  auto p = forward(shape, weights, x, pre, post);
  softmax_inplace(p);
  return p;
}

double loss_and_gradient(const ModelShape& s, std::span<const double> w, const Dataset& data,
                         std::span<const std::size_t> batch, std::span<double> grad) {
  check_shape(s, w.size());
  if (data.dim != s.inputs) fail(ErrorCode::kDimensionMismatch, "dataset dimension mismatch");
  if (batch.empty()) fail(ErrorCode::kEmptyInput, "empty batch");
  const bool want_grad = !grad.empty();
  if (want_grad) {
    if (grad.size() != w.size()) fail(ErrorCode::kDimensionMismatch, "gradient buffer size");
    std::fill(grad.begin(), grad.end(), 0.0);
  }

  const Layout l = layout(s);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  std::vector<double> pre, post, dhidden;
  for (std::size_t idx : batch) {
    const auto x = data.row(idx);
    const int y = data.labels[idx];
    check_label(s, y);
    auto logits = forward(s, w, x, pre, post);
    total += cross_entropy(logits, y);
    if (!want_grad) continue;

    auto& probs = logits;
    softmax_inplace(probs);
    probs[static_cast<std::size_t>(y)] -= 1.0;  // dL/dlogits

    std::span<const double> input = x;
    std::size_t in_dim = s.inputs;
    if (s.hidden > 0) {
      input = post;
      in_dim = s.hidden;
    }
    for (std::size_t c = 0; c < s.classes; ++c) {
      const double g = probs[c] * inv_n;
      grad[l.b2 + c] += g;
      for (std::size_t d = 0; d < in_dim; ++d) grad[l.w2 + c * in_dim + d] += g * input[d];
    }
    if (s.hidden == 0) continue;

    dhidden.assign(s.hidden, 0.0);
    for (std::size_t c = 0; c < s.classes; ++c) {
      for (std::size_t h = 0; h < s.hidden; ++h) dhidden[h] += probs[c] * w[l.w2 + c * s.hidden + h];
    }
    for (std::size_t h = 0; h < s.hidden; ++h) {
      const double g = dhidden[h] * activate_grad(s.activation, pre[h], post[h]) * inv_n;
      grad[l.b1 + h] += g;
      for (std::size_t d = 0; d < s.inputs; ++d) grad[l.w1 + h * s.inputs + d] += g * x[d];
    }
  }
  return total * inv_n;
}

std::vector<double> per_example_loss(const ModelShape& shape, std::span<const double> weights,
                                     const Dataset& data) {
  check_shape(shape, weights.size());
  std::vector<double> out(data.size());
  std::vector<double> pre, post;
  for (std::size_t i = 0; i < data.size(); ++i) {
    check_label(shape, data.labels[i]);
    out[i] = cross_entropy(forward(shape, weights, data.row(i), pre, post), data.labels[i]);
  }
  return out;
}

ModelUpdate local_train(const GlobalModel& model, const ClientDataset& data,
                        const TrainConfig& cfg) {
  check_shape(model.shape, model.weights.size());
  if (data.data.size() == 0) fail(ErrorCode::kEmptyInput, "client dataset is empty");
  if (!(cfg.learning_rate > 0.0) || cfg.batch_size == 0) {
    fail(ErrorCode::kInvalidArgument, "learning rate and batch size must be positive");
  }

  std::vector<double> w = model.weights;
  std::vector<double> grad(w.size());
  std::vector<std::size_t> order(data.data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(cfg.seed, 0x4C4F43414CULL, data.client, model.round));

  for (unsigned epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    // Fisher-Yates with our own index draw keeps the order platform-stable.
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng() % i]);
    }
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      loss_and_gradient(model.shape, w, data.data,
                        std::span<const std::size_t>(order).subspan(start, len), grad);
      for (std::size_t j = 0; j < w.size(); ++j) {
        w[j] -= cfg.learning_rate * grad[j];
        if (!std::isfinite(w[j])) {
          fail(ErrorCode::kDivergence, "local training diverged for client " +
                                           std::to_string(data.client));
        }
      }
    }
  }

  ModelUpdate out{std::move(w), data.client, model.round};
  for (std::size_t j = 0; j < out.delta.size(); ++j) out.delta[j] -= model.weights[j];
  return out;
}

ModelUpdate fedavg_aggregate(std::span<const ModelUpdate> updates, std::span<const double> weights) {
  if (updates.empty()) fail(ErrorCode::kEmptyInput, "no updates to aggregate");
  if (weights.size() != updates.size()) {
    fail(ErrorCode::kInvalidArgument, "one weight per update required");
  }
  const std::size_t dim = updates.front().delta.size();
  double weight_sum = 0.0;
  for (std::size_t k = 0; k < updates.size(); ++k) {
    if (updates[k].delta.size() != dim) fail(ErrorCode::kDimensionMismatch, "update dimensions differ");
    if (!(weights[k] > 0.0)) fail(ErrorCode::kInvalidArgument, "aggregation weights must be positive");
    weight_sum += weights[k];
  }
  ModelUpdate out{std::vector<double>(dim, 0.0), 0, updates.front().round};
  for (std::size_t k = 0; k < updates.size(); ++k) {
    for (std::size_t j = 0; j < dim; ++j) out.delta[j] += weights[k] * updates[k].delta[j];
  }
  for (double& v : out.delta) v /= weight_sum;
  return out;
}

GlobalModel apply_update(const GlobalModel& model, const ModelUpdate& agg) {
  if (agg.delta.size() != model.weights.size()) {
    fail(ErrorCode::kDimensionMismatch, "update does not match model dimension");
  }
  GlobalModel out = model;
  for (std::size_t j = 0; j < out.weights.size(); ++j) out.weights[j] += agg.delta[j];
  out.round = model.round + 1;
  return out;
}

EvalResult evaluate(const GlobalModel& model, const Dataset& data) {
  EvalResult r;
  if (data.size() == 0) return r;
  std::size_t correct = 0;
  double loss = 0.0;
  std::vector<double> pre, post;
  for (std::size_t i = 0; i < data.size(); ++i) {
    check_label(model.shape, data.labels[i]);
    auto logits = forward(model.shape, model.weights, data.row(i), pre, post);
    loss += cross_entropy(logits, data.labels[i]);
    const auto best = std::max_element(logits.begin(), logits.end()) - logits.begin();
    if (best == data.labels[i]) ++correct;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  r.loss = loss / static_cast<double>(data.size());
  return r;
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::kDimensionMismatch, "l2_distance size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

std::vector<std::uint8_t> save_checkpoint(const GlobalModel& model) {
  std::vector<std::uint8_t> out;
  auto put = [&out](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  put(4);
  put(model.shape.inputs);
  put(model.shape.hidden);
  put(model.shape.classes);
  put(model.shape.activation == Activation::kTanh ? 0 : 1);
  put(model.round);
  const auto body = chameleon::serialize_update(model.weights);
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

GlobalModel load_checkpoint(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto get = [&]() -> std::uint64_t {
    if (bytes.size() - pos < 8) fail(ErrorCode::kParse, "checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes[pos + i]} << (8 * i);
    pos += 8;
    return v;
  };
  if (get() != 4) fail(ErrorCode::kParse, "unsupported checkpoint descriptor");
  GlobalModel m;
  m.shape.inputs = get();
  m.shape.hidden = get();
  m.shape.classes = get();
  const auto act = get();
  if (act > 1) fail(ErrorCode::kParse, "unknown activation in checkpoint");
  m.shape.activation = act == 0 ? Activation::kTanh : Activation::kRelu;
  m.round = get();
  m.weights = chameleon::deserialize_update(bytes.subspan(pos));
  check_shape(m.shape, m.weights.size());
  return m;
}

}  // namespace fedunlearn::fl
