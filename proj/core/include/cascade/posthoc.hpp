#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cascade/features.hpp"
#include "cascade/nn.hpp"
#include "cascade/scores.hpp"
#include "cascade/trace.hpp"

namespace cascade {

enum class TargetKind {
  kBinaryDefer,  // 1 iff the large model is right and the small one wrong
  kQualityGain,  // large_quality - small_quality
};

std::string_view to_string(TargetKind kind);

struct TrainTargets {
  TargetKind kind = TargetKind::kBinaryDefer;
  std::vector<double> values;  // dataset order
};

TrainTargets build_targets(const Dataset& d);

// "post-hoc-quantile", "post-hoc-embed-1", "post-hoc-embed-1+2",
// "post-hoc-prob", "post-hoc-sorted-prob".
std::string_view method_name(FeatureVariant v);
FeatureVariant parse_method_name(std::string_view name);

// 5 weight layers of width 32 with batchnorm for token-level features;
// 2 layers of width 8 once embeddings are in the input.
nn::MlpConfig default_mlp_config(FeatureVariant v, std::size_t input_dim);

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  nn::AdamConfig adam;
  bool normalize = true;
};

struct PostHocModel {
  FeatureSpec spec;
  std::optional<Normalizer> normalizer;
  TargetKind target = TargetKind::kBinaryDefer;
  nn::MlpParams mlp;

  friend bool operator==(const PostHocModel&, const PostHocModel&) = default;
};

struct SeedReport {
  std::uint64_t seed = 0;
  bool trained = false;
  // 1-based epoch whose parameters were kept; nullopt without training.
  std::optional<std::size_t> best_epoch;
  std::string metric;  // "val_auc_roc", "val_logistic_loss" or "val_mse"
  bool higher_is_better = true;
  std::vector<double> val_metric;  // one entry per epoch
  std::vector<double> train_loss;  // mean minibatch loss per epoch
  std::optional<double> best_val_metric;
  std::optional<double> test_auc_df;
  std::vector<std::string> warnings;
  std::optional<std::string> error;
};

struct TrainReport {
  std::vector<std::uint64_t> seeds;
  std::vector<SeedReport> runs;
  std::optional<double> mean_test_auc_df;
  std::optional<double> std_test_auc_df;  // population std over seeds
};

struct TrainResult {
  PostHocModel model;
  SeedReport report;
};

// Trains on the train split, selects the best epoch on the validation
// split and reports the test-split AUC-DF when a test split exists.
TrainResult train(const Dataset& d, const FeatureSpec& spec, const nn::MlpConfig& config,
                  const TrainConfig& train_config, std::uint64_t seed);

struct MultiSeedResult {
  TrainReport report;
  std::vector<std::optional<PostHocModel>> models;  // aligned with seeds
};

// Independent runs per seed (in parallel); a failing seed is recorded in its
// SeedReport and does not stop the others.
MultiSeedResult train_multi_seed(const Dataset& d, const FeatureSpec& spec,
                                 const nn::MlpConfig& config, const TrainConfig& train_config,
                                 const std::vector<std::uint64_t>& seeds);

void aggregate(TrainReport& report);

// Deferral scores: minus the predicted defer benefit, so the examples the
// model most wants to defer come first.
ScoreVector predict_scores(const PostHocModel& model, const Dataset& d);

std::string model_to_json(const PostHocModel& model);
PostHocModel model_from_json(const std::string& text);
void save_model(const PostHocModel& model, const std::string& path);
PostHocModel load_model(const std::string& path);

std::string report_to_json(const TrainReport& report);

}  // namespace cascade
