#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pirank/autodiff.hpp"
#include "pirank/data.hpp"
#include "pirank/losses.hpp"
#include "pirank/metrics.hpp"

namespace pirank::model {

/// Raised when training produces a non-finite loss or gradient.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MlpConfig {
  std::size_t input_width = 0;
  std::vector<std::size_t> hidden;  // ReLU layers; the output layer has width 1
};

/// Per-item scorer: ReLU hidden layers followed by a linear unit.
class Mlp {
 public:
  struct Layer {
    Tensor weight;  // (in, out)
    Tensor bias;    // (1, out)
  };

  Mlp() = default;
  /// He-style uniform init U(-sqrt(6 / fan_in), sqrt(6 / fan_in)), zero bias.
  Mlp(const MlpConfig& cfg, std::uint64_t seed);
  explicit Mlp(std::vector<Layer> layers);

  std::size_t input_width() const;
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  std::vector<std::size_t> hidden_sizes() const;

  /// Parameters in order (w0, b0, w1, b1, ...).
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;

  /// Registers every parameter as a leaf of `graph`.
  std::vector<Var> bind(Graph& graph) const;
  /// (L, m) features -> (L) scores.
  Var score(Graph& graph, const std::vector<Var>& params, const Tensor& features) const;
  std::vector<double> predict(const Tensor& features) const;

  /// Binary checkpoint, little-endian:
  ///   "PIRANKMLP" (9 bytes), u32 version = 1, u32 layer count,
  ///   per layer u64 fan_in, u64 fan_out,
  ///   then per layer fan_in*fan_out weights (row-major) and fan_out biases
  ///   as IEEE-754 binary64.
  void write(std::ostream& out) const;
  static Mlp read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static Mlp load(const std::filesystem::path& path);

  friend bool operator==(const Mlp& a, const Mlp& b);

 private:
  std::vector<Layer> layers_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// One bias-corrected update of every parameter.
  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads);
  std::size_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

/// tau_e = max(min(floor, tau), tau * decay^e); decay = 1 keeps tau constant,
/// including a starting tau below the floor.
struct TemperatureSchedule {
  double tau = 5.0;
  double decay = 1.0;
  double floor = 1e-2;

  double at(std::size_t epoch) const;
};

struct TrainConfig {
  losses::LossConfig loss;
  std::size_t batch_size = 16;
  AdamConfig adam;
  std::size_t epochs = 100;
  /// Stop after this many optimizer steps in total (0 = no cap).
  std::size_t max_steps = 0;
  double tau_decay = 1.0;
  double tau_floor = 1e-2;
  std::size_t early_stop_k = 10;
  /// Epochs without validation NDCG@early_stop_k improvement before stopping
  /// (0 disables early stopping).
  std::size_t patience = 10;
  std::vector<std::size_t> cutoffs{1, 3, 5, 10};
  std::uint64_t seed = 0;
  /// Gradient L2 norm above which a warning is emitted.
  double grad_warn = 10.0;
  /// Skip per-epoch validation (benchmarks).
  bool evaluate_epochs = true;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;        // mean training loss over the epoch's batches
  double tau = 0.0;
  std::vector<std::optional<double>> ndcg;  // validation, one per cutoff
  std::optional<double> mrr, arp, opa;
  double val_loss = 0.0;    // relaxed (no straight-through) validation loss
  double grad_norm = 0.0;   // largest batch gradient norm seen
};

struct TrainResult {
  Mlp model;
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  bool early_stopped = false;
  std::size_t gradient_warnings = 0;
};

/// Mean loss over queries with gradients w.r.t. every parameter.
struct BatchResult {
  double loss = 0.0;
  std::vector<Tensor> grads;
  std::size_t skipped = 0;
};

/// Per-query graphs may run on several threads; gradients are summed in
/// query order so results do not depend on the thread count.
BatchResult batch_gradient(const Mlp& mlp, const std::vector<const data::QueryGroup*>& batch,
                           const losses::LossConfig& loss);

/// Mean loss (forward only) over a dataset.
double dataset_loss(const Mlp& mlp, const data::Dataset& data, const losses::LossConfig& loss);

/// Epoch 0 in the log is the untrained model. With a validation set the
/// returned model is the best one by validation NDCG@early_stop_k.
TrainResult train(Mlp init, const data::Dataset& train_data, const data::Dataset* valid,
                  const TrainConfig& cfg, std::ostream* diagnostics = nullptr);

std::vector<metrics::QueryMetrics> evaluate(const Mlp& mlp, const data::Dataset& data,
                                            const std::vector<std::size_t>& cutoffs);

/// Header: epoch,step,loss,tau,ndcg@<k>...,mrr,arp,opa,val_loss,grad_norm
void write_epoch_csv(std::ostream& out, const std::vector<EpochRecord>& log,
                     const std::vector<std::size_t>& cutoffs);

}  // namespace pirank::model
