#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cascade/trace.hpp"

namespace cascade {

enum class ScoreKind { kChowSum, kChowAverage, kChowQuantile };

// A non-learned deferral score s(x). Lower scores defer first.
struct ScoreRule {
  ScoreKind kind = ScoreKind::kChowSum;
  double alpha = 0.0;  // meaningful for kChowQuantile only

  static ScoreRule chow_sum() { return {ScoreKind::kChowSum, 0.0}; }
  static ScoreRule chow_average() { return {ScoreKind::kChowAverage, 0.0}; }
  static ScoreRule chow_quantile(double alpha);

  // "chow-sum", "chow-average" or "chow-quantile@<alpha>".
  std::string name() const;

  friend bool operator==(const ScoreRule&, const ScoreRule&) = default;
};

// Inverse of ScoreRule::name(); throws InvalidArgument on unknown names.
ScoreRule parse_score_rule(std::string_view name);

struct ScoreVector {
  std::string name;
  std::vector<double> values;  // aligned with dataset order

  std::size_t size() const { return values.size(); }
};

double chow_sum(std::span<const double> logprobs);
double chow_average(std::span<const double> logprobs);

// Linear interpolation between order statistics: with v sorted ascending and
// h = alpha * (n - 1), returns v[floor(h)] + frac(h) * (v[floor(h)+1] - v[floor(h)]).
double chow_quantile(std::span<const double> logprobs, double alpha);

// Same, on an already ascending-sorted sequence.
double sorted_quantile(std::span<const double> sorted, double alpha);

inline double chow_sum(const ExampleTrace& t) { return chow_sum(t.token_logprobs); }
inline double chow_average(const ExampleTrace& t) { return chow_average(t.token_logprobs); }
inline double chow_quantile(const ExampleTrace& t, double alpha) {
  return chow_quantile(t.token_logprobs, alpha);
}

double score(const ExampleTrace& t, const ScoreRule& rule);
ScoreVector score_dataset(const Dataset& d, const ScoreRule& rule);

}  // namespace cascade
