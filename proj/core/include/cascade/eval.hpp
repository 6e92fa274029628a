#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cascade/scores.hpp"
#include "cascade/trace.hpp"

namespace cascade {

struct CurvePoint {
  double deferral_rate = 0.0;
  double cascade_quality = 0.0;

  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

// Cascade quality at each of the N+1 achievable deferral rates k/N.
struct DeferralCurve {
  std::vector<CurvePoint> points;
  double auc_df = 0.0;
};

struct CostPoint {
  double deferral_rate = 0.0;
  double expected_cost = 0.0;
};

// Defers the k lowest-scoring examples for k = 0..N (ties by dataset index).
// Throws InvalidArgument on a size mismatch or an empty dataset.
DeferralCurve deferral_curve(const Dataset& d, std::span<const double> scores);
inline DeferralCurve deferral_curve(const Dataset& d, const ScoreVector& s) {
  return deferral_curve(d, s.values);
}

// Trapezoidal area under the points, over the rate axis.
double trapezoid_auc(std::span<const CurvePoint> points);

// Scores -(large - small): largest quality gains are deferred first.
ScoreVector oracle_scores(const Dataset& d);
DeferralCurve oracle_curve(const Dataset& d);

// Area under the expected-quality line of uniformly random deferral.
double random_baseline_auc(const Dataset& d);
DeferralCurve random_curve(const Dataset& d);

// 100 * (auc - random) / random; nullopt when random is 0.
std::optional<double> percent_change(double auc, double random_auc);

// expected cost c1 + rate * c2 at every curve point.
std::vector<CostPoint> cost_curve(const Dataset& d, const DeferralCurve& c);

struct QuantileSelection {
  ScoreRule rule;
  double auc_df = 0.0;
};

// Best Chow-Quantile on a validation dataset; ties favor the smallest alpha.
QuantileSelection select_best_quantile(const Dataset& validation,
                                       std::span<const double> alphas);

// 1 iff the large model is correct and the small model is not.
std::vector<int> golden_labels(const Dataset& d);

// AUC-ROC of the predictor -s against binary labels, via midranks (ties
// count 1/2). nullopt when all labels are identical.
std::optional<double> auc_roc(std::span<const int> labels, std::span<const double> predictor);
std::optional<double> golden_label_auc_roc(const Dataset& d, std::span<const double> scores);
std::optional<double> golden_label_auc_roc(std::span<const int> labels,
                                           std::span<const double> scores);

// Pearson correlation; nullopt when either side has zero variance.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

struct LengthBiasRow {
  std::string rule;
  std::optional<double> score_length_correlation;
  // Mean output length in each score decile (scores converted to quantile
  // ranks, lowest scores first). Empty deciles report nullopt.
  std::vector<std::optional<double>> decile_mean_length;
};

struct LengthBiasReport {
  std::vector<LengthBiasRow> rows;
  std::optional<double> gain_length_correlation;
};

LengthBiasReport length_bias_report(const Dataset& d, std::span<const ScoreVector> scores);
LengthBiasReport length_bias_report(const Dataset& d, std::span<const ScoreRule> rules);

// For each token index i, mean exp(logprob_i) over examples longer than i.
std::vector<double> token_position_profile(const Dataset& d);

// CSV with header "deferral_rate,cascade_quality" and a "# auc_df=" footer.
std::string format_curve(const DeferralCurve& c);
DeferralCurve parse_curve(const std::string& text);
void export_curve(const DeferralCurve& c, const std::string& path);
DeferralCurve import_curve(const std::string& path);

}  // namespace cascade
