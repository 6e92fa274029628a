#include "cascade/scores.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "cascade/error.hpp"
#include "cascade/io_util.hpp"

namespace cascade {

ScoreRule ScoreRule::chow_quantile(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw InvalidArgument("quantile alpha must lie in [0, 1]");
  return {ScoreKind::kChowQuantile, alpha};
}

std::string ScoreRule::name() const {
  switch (kind) {
    case ScoreKind::kChowSum: return "chow-sum";
    case ScoreKind::kChowAverage: return "chow-average";
    case ScoreKind::kChowQuantile: return "chow-quantile@" + format_double(alpha);
  }
  return {};
}

ScoreRule parse_score_rule(std::string_view name) {
  if (name == "chow-sum") return ScoreRule::chow_sum();
  if (name == "chow-average") return ScoreRule::chow_average();
  constexpr std::string_view kPrefix = "chow-quantile@";
  if (name.starts_with(kPrefix)) {
    const std::string_view num = name.substr(kPrefix.size());
    double alpha = 0.0;
    auto [end, ec] = std::from_chars(num.data(), num.data() + num.size(), alpha);
    if (ec == std::errc() && end == num.data() + num.size() && alpha >= 0.0 &&
        alpha <= 1.0)
      return ScoreRule::chow_quantile(alpha);
  }
  throw InvalidArgument("unknown rule \"" + std::string(name) + "\"");
}

double chow_sum(std::span<const double> logprobs) {
  double s = 0.0;
  for (double lp : logprobs) s += lp;
  return s;
}

double chow_average(std::span<const double> logprobs) {
  return chow_sum(logprobs) / static_cast<double>(logprobs.size());
}

double sorted_quantile(std::span<const double> v, double alpha) {
  const std::size_t n = v.size();
  if (n == 1) return v[0];
  const double h = alpha * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo >= n - 1) return v[n - 1];
  return v[lo] + (h - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
}

double chow_quantile(std::span<const double> logprobs, double alpha) {
  std::vector<double> v(logprobs.begin(), logprobs.end());
  std::sort(v.begin(), v.end());
  return sorted_quantile(v, alpha);
}

double score(const ExampleTrace& t, const ScoreRule& rule) {
  switch (rule.kind) {
    case ScoreKind::kChowSum: return chow_sum(t);
    case ScoreKind::kChowAverage: return chow_average(t);
    case ScoreKind::kChowQuantile: return chow_quantile(t, rule.alpha);
  }
  return 0.0;
}

ScoreVector score_dataset(const Dataset& d, const ScoreRule& rule) {
  ScoreVector out{rule.name(), {}};
  out.values.reserve(d.size());
  for (const auto& e : d.examples) out.values.push_back(score(e, rule));
  return out;
}

}  // namespace cascade
