#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cascade/matrix.hpp"

// Small feedforward networks in double precision: dense layers with optional
// batch normalization and ReLU, a single output unit, Adam.
namespace cascade::nn {

enum class OutputKind { kLogit, kScalar };
enum class Mode { kTrain, kEval };
enum class LossKind { kLogistic, kSquared };

struct MlpConfig {
  std::size_t input_dim = 0;
  // Weight layers, output layer included: num_layers - 1 hidden blocks.
  std::size_t num_layers = 5;
  std::size_t hidden_units = 32;
  bool use_batchnorm = true;
  OutputKind output = OutputKind::kLogit;
  std::uint64_t seed = 0;
  double bn_epsilon = 1e-8;
  double bn_momentum = 0.9;  // weight on the old running statistic

  friend bool operator==(const MlpConfig&, const MlpConfig&) = default;
};

void validate(const MlpConfig& config);

struct BatchNorm {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;

  friend bool operator==(const BatchNorm&, const BatchNorm&) = default;
};

struct DenseLayer {
  Matrix weight;  // out x in
  std::vector<double> bias;
  std::optional<BatchNorm> bn;  // hidden layers only

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct MlpParams {
  MlpConfig config;
  std::vector<DenseLayer> layers;

  std::size_t num_trainable() const;

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

struct LayerGrads {
  Matrix weight;
  std::vector<double> bias;
  std::vector<double> gamma;  // empty without batchnorm
  std::vector<double> beta;
};

struct MlpGrads {
  std::vector<LayerGrads> layers;
};

// Trainable tensors in a fixed order (per layer: weight, bias, gamma, beta).
// The two view lists line up entry for entry.
std::vector<std::span<double>> trainable_views(MlpParams& params);
std::vector<std::span<const double>> trainable_views(const MlpParams& params);
std::vector<std::span<double>> grad_views(MlpGrads& grads);
std::vector<std::span<const double>> grad_views(const MlpGrads& grads);

// Uniform half-width used to initialize a layer with this fan-in.
double init_bound(std::size_t fan_in, bool output_layer);

// Seeded fan-in scaled uniform weights, zero biases, gamma 1, beta 0,
// running statistics (0, 1).
MlpParams init(const MlpConfig& config);

struct LayerCache {
  Matrix input;       // B x in
  Matrix normalized;  // batchnorm xhat (B x out), empty without batchnorm
  Matrix output;      // post-batchnorm pre-activation (B x out)
  std::vector<double> inv_std;
  std::vector<double> batch_mean;
  std::vector<double> batch_var;  // biased
};

struct ForwardPass {
  Mode mode = Mode::kEval;
  std::vector<double> outputs;  // one per batch row
  std::vector<LayerCache> layers;
};

// Pure forward pass. Train mode normalizes with batch statistics and needs
// at least 2 rows when batchnorm is on; running statistics are not touched.
ForwardPass forward(const MlpParams& params, const Matrix& batch, Mode mode);

// Folds the batch statistics of a train-mode pass into the running stats.
void update_running_stats(MlpParams& params, const ForwardPass& pass);

// forward() followed by update_running_stats() in train mode.
ForwardPass forward_train(MlpParams& params, const Matrix& batch);

// Scores for many rows in eval mode.
std::vector<double> predict(const MlpParams& params, const Matrix& rows);

struct LossResult {
  double value = 0.0;
  std::vector<double> grad;  // d(mean loss) / d(output_i)
};

// kLogistic: mean log(1 + exp(-(2z - 1) o)) with z in {0, 1};
// kSquared: mean (o - t)^2.
LossResult loss(std::span<const double> outputs, std::span<const double> targets,
                LossKind kind);

// Exact gradients of the loss whose output-gradients are given, including
// through the batch statistics in train mode.
MlpGrads backward(const MlpParams& params, const ForwardPass& pass,
                  std::span<const double> output_grad);

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig hp;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

AdamState adam_init(const MlpParams& params, const AdamConfig& hp = {});

// One bias-corrected Adam update on flat buffers; `step` is the 1-based
// count for this update. Throws Error on non-finite gradients.
void adam_update(std::span<double> params, std::span<const double> grads,
                 std::span<double> m, std::span<double> v, std::uint64_t step,
                 const AdamConfig& hp);

void adam_step(MlpParams& params, const MlpGrads& grads, AdamState& state);

struct GradCheckOptions {
  Mode mode = Mode::kTrain;
  std::size_t samples = 500;  // parameters sampled; all when fewer exist
  double step = 1e-5;
  // Relative error is |a - n| / max(|a|, |n|, abs_floor).
  double abs_floor = 1e-6;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Samples discarded because the perturbation flipped a ReLU.
  std::size_t skipped_kinks = 0;
};

// Central finite differences on a parameter subsample.
GradCheckResult grad_check(const MlpParams& params, const Matrix& batch,
                           std::span<const double> targets, LossKind kind,
                           const GradCheckOptions& options = {});

// Same, against caller-supplied analytic gradients.
GradCheckResult compare_gradients(const MlpParams& params, const Matrix& batch,
                                  std::span<const double> targets, LossKind kind,
                                  const MlpGrads& analytic,
                                  const GradCheckOptions& options = {});

}  // namespace cascade::nn
