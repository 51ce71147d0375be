#pragma once

// Small federated-learning engine: softmax regression and a one-hidden-layer
// MLP over flat parameter vectors, mini-batch SGD, FedAvg.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedunlearn/ledger.hpp"

namespace fedunlearn::fl {

using ledger::NodeId;

enum class Activation { kTanh, kRelu };

struct ModelShape {
  std::size_t inputs = 0;
  std::size_t hidden = 0;  // 0 = multinomial logistic regression
  std::size_t classes = 0;
  Activation activation = Activation::kTanh;

  std::size_t parameter_count() const;
  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

struct GlobalModel {
  ModelShape shape;
  std::vector<double> weights;
  std::uint64_t round = 0;
};

/// U_k^t = w_k(t) - w(t-1).
struct ModelUpdate {
  std::vector<double> delta;
  NodeId client = 0;
  std::uint64_t round = 0;
};

/// Row-major features with integer labels in [0, classes).
struct Dataset {
  std::size_t dim = 0;
  std::vector<double> features;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * dim, dim);
  }
  void append(std::span<const double> x, int label);
};

struct ClientDataset {
  NodeId client = 0;
  Dataset data;
  double weight = 1.0;  // aggregation weight w_k > 0
};

struct TrainConfig {
  double learning_rate = 0.1;
  unsigned local_epochs = 5;
  std::size_t batch_size = 10;
  unsigned rounds = 20;
  std::size_t clients = 10;
  std::uint64_t seed = 1;
};

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
};

/// Small Gaussian initialization, deterministic in seed.
GlobalModel init_model(const ModelShape& shape, std::uint64_t seed, double scale = 0.1);

/// Class probabilities for one example (softmax with max-subtraction).
std::vector<double> predict_proba(const ModelShape& shape, std::span<const double> weights,
                                  std::span<const double> x);

/// Mean cross-entropy over `batch` (indices into data). When `grad` is
/// non-empty it receives the gradient of that mean w.r.t. the weights.
double loss_and_gradient(const ModelShape& shape, std::span<const double> weights,
                         const Dataset& data, std::span<const std::size_t> batch,
                         std::span<double> grad);

/// Cross-entropy of every example, in dataset order.
std::vector<double> per_example_loss(const ModelShape& shape, std::span<const double> weights,
                                     const Dataset& data);

/// E epochs of shuffled mini-batch SGD from the global weights; returns the
/// weight delta. Deterministic in (cfg.seed, client, model.round).
/// Throws kDivergence if a parameter becomes non-finite.
ModelUpdate local_train(const GlobalModel& model, const ClientDataset& data,
                        const TrainConfig& cfg);

/// sum(w_k U_k) / sum(w_k). Throws kEmptyInput, kDimensionMismatch,
/// kInvalidArgument (non-positive weight or size mismatch).
ModelUpdate fedavg_aggregate(std::span<const ModelUpdate> updates, std::span<const double> weights);

/// Component-wise sum; round + 1. Throws kDimensionMismatch.
GlobalModel apply_update(const GlobalModel& model, const ModelUpdate& agg);

EvalResult evaluate(const GlobalModel& model, const Dataset& data);

double l2_distance(std::span<const double> a, std::span<const double> b);

/// Checkpoint: u64 descriptor length (4), inputs, hidden, classes,
/// activation, u64 round, then the canonical update serialization.
std::vector<std::uint8_t> save_checkpoint(const GlobalModel& model);
GlobalModel load_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace fedunlearn::fl
