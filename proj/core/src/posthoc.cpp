#include "cascade/posthoc.hpp"

#include <cmath>
#include <future>
#include <numeric>

#include <json.hpp>

#include "cascade/error.hpp"
#include "cascade/eval.hpp"
#include "cascade/io_util.hpp"
#include "cascade/rng.hpp"

namespace cascade {

using nlohmann::json;

std::string_view to_string(TargetKind kind) {
  return kind == TargetKind::kBinaryDefer ? "binary_defer" : "quality_gain";
}

namespace {

TargetKind parse_target_kind(std::string_view s) {
  if (s == "binary_defer") return TargetKind::kBinaryDefer;
  if (s == "quality_gain") return TargetKind::kQualityGain;
  throw ParseError("unknown target kind \"" + std::string(s) + "\"");
}

constexpr std::string_view kModelFormat = "cascade-posthoc-model";
constexpr int kModelVersion = 1;

}  // namespace

TrainTargets build_targets(const Dataset& d) {
  TrainTargets t;
  t.values.reserve(d.size());
  if (d.task_kind == TaskKind::kAccuracy) {
    t.kind = TargetKind::kBinaryDefer;
    for (const auto& e : d.examples)
      t.values.push_back(e.large_quality == 1.0 && e.small_quality == 0.0 ? 1.0 : 0.0);
  } else {
    t.kind = TargetKind::kQualityGain;
    for (const auto& e : d.examples) t.values.push_back(e.large_quality - e.small_quality);
  }
  return t;
}

std::string_view method_name(FeatureVariant v) {
  switch (v) {
    case FeatureVariant::kQuantile: return "post-hoc-quantile";
    case FeatureVariant::kEmbed1: return "post-hoc-embed-1";
    case FeatureVariant::kEmbed12: return "post-hoc-embed-1+2";
    case FeatureVariant::kPaddedProb: return "post-hoc-prob";
    case FeatureVariant::kSortedPaddedProb: return "post-hoc-sorted-prob";
  }
  return "post-hoc-quantile";
}

FeatureVariant parse_method_name(std::string_view name) {
  for (auto v : {FeatureVariant::kQuantile, FeatureVariant::kEmbed1, FeatureVariant::kEmbed12,
                 FeatureVariant::kPaddedProb, FeatureVariant::kSortedPaddedProb})
    if (name == method_name(v)) return v;
  throw InvalidArgument("unknown post-hoc method \"" + std::string(name) + "\"");
}

nn::MlpConfig default_mlp_config(FeatureVariant v, std::size_t input_dim) {
  nn::MlpConfig c;
  c.input_dim = input_dim;
  const bool embeds = v == FeatureVariant::kEmbed1 || v == FeatureVariant::kEmbed12;
  c.num_layers = embeds ? 2 : 5;
  c.hidden_units = embeds ? 8 : 32;
  c.use_batchnorm = true;
  return c;
}

namespace {

std::vector<std::size_t> indices_of(const Dataset& d, Split s) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d.examples[i].split == s) out.push_back(i);
  return out;
}

Matrix model_inputs(const PostHocModel& model, const Dataset& d) {
  FeatureMatrix fm = build_features(d, model.spec);
  if (model.normalizer) return apply_normalizer(fm.rows, *model.normalizer);
  return std::move(fm.rows);
}

struct Metric {
  std::string name;
  bool higher_is_better;
};

bool improves(double candidate, std::optional<double> best, bool higher_is_better) {
  if (!best) return true;
  return higher_is_better ? candidate > *best : candidate < *best;
}

}  // namespace

TrainResult train(const Dataset& d, const FeatureSpec& requested, const nn::MlpConfig& config,
                  const TrainConfig& tc, std::uint64_t seed) {
  const auto train_idx = indices_of(d, Split::kTrain);
  const auto val_idx = indices_of(d, Split::kValidation);
  if (train_idx.empty()) throw InvalidArgument("training needs a non-empty train split");
  if (val_idx.empty()) throw InvalidArgument("training needs a non-empty validation split");
  if (tc.batch_size == 0) throw InvalidArgument("batch size must be positive");

  PostHocModel model;
  model.spec = resolve_spec(requested, d);
  const FeatureMatrix features = build_features(d, model.spec);
  Matrix inputs = features.rows;
  if (tc.normalize) {
    std::vector<bool> mask(d.size(), false);
    for (auto i : train_idx) mask[i] = true;
    model.normalizer = fit_normalizer(features.rows, mask);
    inputs = apply_normalizer(features.rows, *model.normalizer);
  }
  const TrainTargets targets = build_targets(d);
  model.target = targets.kind;

  nn::MlpConfig mlp_config = config;
  mlp_config.input_dim = model.spec.width();
  mlp_config.output =
      targets.kind == TargetKind::kBinaryDefer ? nn::OutputKind::kLogit : nn::OutputKind::kScalar;
  mlp_config.seed = derive_seed(seed, 1);
  model.mlp = nn::init(mlp_config);

  const nn::LossKind loss_kind =
      targets.kind == TargetKind::kBinaryDefer ? nn::LossKind::kLogistic : nn::LossKind::kSquared;

  const Matrix val_inputs = inputs.select_rows(val_idx);
  std::vector<double> val_targets;
  std::vector<int> val_labels;
  for (auto i : val_idx) {
    val_targets.push_back(targets.values[i]);
    val_labels.push_back(targets.values[i] == 1.0);
  }

  SeedReport report;
  report.seed = seed;
  Metric metric{"val_mse", false};
  if (targets.kind == TargetKind::kBinaryDefer) {
    const auto positives = std::accumulate(val_labels.begin(), val_labels.end(), 0);
    if (positives == 0 || positives == static_cast<int>(val_labels.size())) {
      metric = {"val_logistic_loss", false};
      report.warnings.push_back(
          "validation labels are all identical; early stopping on validation loss");
    } else {
      metric = {"val_auc_roc", true};
    }
  }
  report.metric = metric.name;
  report.higher_is_better = metric.higher_is_better;

  auto evaluate = [&](const nn::MlpParams& params) {
    const auto out = nn::predict(params, val_inputs);
    if (metric.name == "val_auc_roc") return *auc_roc(val_labels, out);
    return nn::loss(out, val_targets, loss_kind).value;
  };

  const bool batchnorm = mlp_config.use_batchnorm && mlp_config.num_layers > 1;
  nn::MlpParams params = model.mlp;
  nn::AdamState adam = nn::adam_init(params, tc.adam);
  Rng shuffle_rng(derive_seed(seed, 2));
  std::vector<std::size_t> order(train_idx);

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::copy(train_idx.begin(), train_idx.end(), order.begin());
    shuffle_rng.shuffle(std::span(order));
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t stop = std::min(order.size(), start + tc.batch_size);
      // A singleton remainder cannot be batch-normalized; it rejoins next epoch.
      if (batchnorm && stop - start < 2) break;
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      const Matrix batch = inputs.select_rows(rows);
      std::vector<double> batch_targets;
      batch_targets.reserve(rows.size());
      for (auto i : rows) batch_targets.push_back(targets.values[i]);

      const auto pass = nn::forward_train(params, batch);
      const auto l = nn::loss(pass.outputs, batch_targets, loss_kind);
      const auto grads = nn::backward(params, pass, l.grad);
      nn::adam_step(params, grads, adam);
      loss_sum += l.value;
      ++batches;
    }
    report.trained = true;
    report.train_loss.push_back(batches ? loss_sum / static_cast<double>(batches) : 0.0);
    const double value = evaluate(params);
    report.val_metric.push_back(value);
    if (improves(value, report.best_val_metric, metric.higher_is_better)) {
      report.best_val_metric = value;
      report.best_epoch = epoch;
      model.mlp = params;
    }
  }
  if (!report.trained) report.warnings.push_back("no training epochs; model is the initialization");

  if (d.count(Split::kTest) > 0) {
    const Dataset test = d.subset(Split::kTest);
    report.test_auc_df = deferral_curve(test, predict_scores(model, test)).auc_df;
  }
  return {std::move(model), std::move(report)};
}

void aggregate(TrainReport& report) {
  std::vector<double> aucs;
  for (const auto& r : report.runs)
    if (r.test_auc_df) aucs.push_back(*r.test_auc_df);
  report.mean_test_auc_df.reset();
  report.std_test_auc_df.reset();
  if (aucs.empty()) return;
  const double n = static_cast<double>(aucs.size());
  // Shifted by the first value so identical runs give exactly zero spread.
  double shift = 0.0;
  for (double a : aucs) shift += a - aucs[0];
  const double mean = aucs[0] + shift / n;
  double sq = 0.0;
  for (double a : aucs) sq += (a - mean) * (a - mean);
  report.mean_test_auc_df = mean;
  report.std_test_auc_df = std::sqrt(sq / n);
}

MultiSeedResult train_multi_seed(const Dataset& d, const FeatureSpec& spec,
                                 const nn::MlpConfig& config, const TrainConfig& tc,
                                 const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw InvalidArgument("train_multi_seed needs at least one seed");
  std::vector<std::future<TrainResult>> jobs;
  jobs.reserve(seeds.size());
  for (auto s : seeds)
    jobs.push_back(std::async(std::launch::async, [&, s] { return train(d, spec, config, tc, s); }));

  MultiSeedResult out;
  out.report.seeds = seeds;
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    try {
      TrainResult r = jobs[k].get();
      out.report.runs.push_back(std::move(r.report));
      out.models.emplace_back(std::move(r.model));
    } catch (const std::exception& e) {
      SeedReport failed;
      failed.seed = seeds[k];
      failed.error = e.what();
      out.report.runs.push_back(std::move(failed));
      out.models.emplace_back(std::nullopt);
    }
  }
  aggregate(out.report);
  return out;
}

ScoreVector predict_scores(const PostHocModel& model, const Dataset& d) {
  ScoreVector s{std::string(method_name(model.spec.variant)), {}};
  if (d.empty()) return s;
  const auto out = nn::predict(model.mlp, model_inputs(model, d));
  s.values.reserve(out.size());
  for (double o : out) s.values.push_back(-o);
  return s;
}

namespace {

json matrix_json(const Matrix& m) {
  return {{"rows", m.rows()},
          {"cols", m.cols()},
          {"data", std::vector<double>(m.data().begin(), m.data().end())}};
}

Matrix matrix_from(const json& j) {
  Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != m.size()) throw ParseError("matrix data size mismatch in model file");
  std::copy(data.begin(), data.end(), m.data().begin());
  return m;
}

}  // namespace

std::string model_to_json(const PostHocModel& model) {
  const auto& c = model.mlp.config;
  json layers = json::array();
  for (const auto& l : model.mlp.layers) {
    json jl{{"weight", matrix_json(l.weight)}, {"bias", l.bias}};
    if (l.bn)
      jl["batchnorm"] = {{"gamma", l.bn->gamma},
                         {"beta", l.bn->beta},
                         {"running_mean", l.bn->running_mean},
                         {"running_var", l.bn->running_var}};
    else
      jl["batchnorm"] = nullptr;
    layers.push_back(std::move(jl));
  }
  json norm = nullptr;
  if (model.normalizer) {
    norm = json::array();
    for (const auto& col : model.normalizer->columns) norm.push_back({col.mean, col.std});
  }
  json j{
      {"format", kModelFormat},
      {"version", kModelVersion},
      {"method", method_name(model.spec.variant)},
      {"target", to_string(model.target)},
      {"feature_spec",
       {{"variant", to_string(model.spec.variant)},
        {"alphas", model.spec.alphas},
        {"pad_length", model.spec.pad_length},
        {"small_embed_dim", model.spec.small_embed_dim},
        {"large_embed_dim", model.spec.large_embed_dim}}},
      {"normalizer", norm},
      {"mlp",
       {{"config",
         {{"input_dim", c.input_dim},
          {"num_layers", c.num_layers},
          {"hidden_units", c.hidden_units},
          {"use_batchnorm", c.use_batchnorm},
          {"output", c.output == nn::OutputKind::kLogit ? "logit" : "scalar"},
          {"seed", c.seed},
          {"bn_epsilon", c.bn_epsilon},
          {"bn_momentum", c.bn_momentum}}},
        {"layers", layers}}},
  };
  return j.dump(1) + "\n";
}

PostHocModel model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed model file: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kModelFormat)
      throw ParseError("not a post-hoc model file");
    if (j.at("version").get<int>() != kModelVersion)
      throw ParseError("unsupported model file version " + std::to_string(j.at("version").get<int>()));
    PostHocModel m;
    const auto& fs = j.at("feature_spec");
    m.spec.variant = parse_feature_variant(fs.at("variant").get<std::string>());
    m.spec.alphas = fs.at("alphas").get<std::vector<double>>();
    m.spec.pad_length = fs.at("pad_length").get<std::size_t>();
    m.spec.small_embed_dim = fs.at("small_embed_dim").get<std::size_t>();
    m.spec.large_embed_dim = fs.at("large_embed_dim").get<std::size_t>();
    m.target = parse_target_kind(j.at("target").get<std::string>());
    if (!j.at("normalizer").is_null()) {
      Normalizer n;
      for (const auto& col : j.at("normalizer"))
        n.columns.push_back({col.at(0).get<double>(), col.at(1).get<double>()});
      m.normalizer = std::move(n);
    }
    const auto& jc = j.at("mlp").at("config");
    auto& c = m.mlp.config;
    c.input_dim = jc.at("input_dim").get<std::size_t>();
    c.num_layers = jc.at("num_layers").get<std::size_t>();
    c.hidden_units = jc.at("hidden_units").get<std::size_t>();
    c.use_batchnorm = jc.at("use_batchnorm").get<bool>();
    c.output = jc.at("output").get<std::string>() == "logit" ? nn::OutputKind::kLogit
                                                             : nn::OutputKind::kScalar;
    c.seed = jc.at("seed").get<std::uint64_t>();
    c.bn_epsilon = jc.at("bn_epsilon").get<double>();
    c.bn_momentum = jc.at("bn_momentum").get<double>();
    for (const auto& jl : j.at("mlp").at("layers")) {
      nn::DenseLayer l{matrix_from(jl.at("weight")), jl.at("bias").get<std::vector<double>>(),
                       std::nullopt};
      if (!jl.at("batchnorm").is_null()) {
        const auto& b = jl.at("batchnorm");
        l.bn = nn::BatchNorm{b.at("gamma").get<std::vector<double>>(),
                             b.at("beta").get<std::vector<double>>(),
                             b.at("running_mean").get<std::vector<double>>(),
                             b.at("running_var").get<std::vector<double>>()};
      }
      m.mlp.layers.push_back(std::move(l));
    }
    if (m.mlp.layers.size() != c.num_layers) throw ParseError("model layer count mismatch");
    if (c.input_dim != m.spec.width()) throw ParseError("model input_dim does not match feature spec");
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const PostHocModel& model, const std::string& path) {
  write_file_atomic(path, model_to_json(model));
}

PostHocModel load_model(const std::string& path) { return model_from_json(read_file(path)); }

std::string report_to_json(const TrainReport& report) {
  json runs = json::array();
  for (const auto& r : report.runs) {
    json jr{{"seed", r.seed},
            {"trained", r.trained},
            {"metric", r.metric},
            {"higher_is_better", r.higher_is_better},
            {"val_metric", r.val_metric},
            {"train_loss", r.train_loss},
            {"warnings", r.warnings}};
    jr["best_epoch"] = r.best_epoch ? json(*r.best_epoch) : json(nullptr);
    jr["best_val_metric"] = r.best_val_metric ? json(*r.best_val_metric) : json(nullptr);
    jr["test_auc_df"] = r.test_auc_df ? json(*r.test_auc_df) : json(nullptr);
    jr["error"] = r.error ? json(*r.error) : json(nullptr);
    if (!r.trained && !r.error) jr["note"] = "no training";
    runs.push_back(std::move(jr));
  }
  json j{{"seeds", report.seeds}, {"runs", runs}};
  j["mean_test_auc_df"] = report.mean_test_auc_df ? json(*report.mean_test_auc_df) : json(nullptr);
  j["std_test_auc_df"] = report.std_test_auc_df ? json(*report.std_test_auc_df) : json(nullptr);
  return j.dump(1) + "\n";
}

}  // namespace cascade
