#include "cascade/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cascade/error.hpp"
#include "cascade/io_util.hpp"

namespace cascade {

namespace {

// Dataset indices ordered by score ascending, ties by index ascending.
std::vector<std::size_t> deferral_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  return order;
}

double mean_of(const Dataset& d, double ExampleTrace::*field) {
  double s = 0.0;
  for (const auto& e : d.examples) s += e.*field;
  return s / static_cast<double>(d.size());
}

}  // namespace

double trapezoid_auc(std::span<const CurvePoint> points) {
  double area = 0.0;
  for (std::size_t k = 1; k < points.size(); ++k) {
    const double width = points[k].deferral_rate - points[k - 1].deferral_rate;
    area += 0.5 * width * (points[k].cascade_quality + points[k - 1].cascade_quality);
  }
  return area;
}

DeferralCurve deferral_curve(const Dataset& d, std::span<const double> scores) {
  if (d.empty()) throw InvalidArgument("deferral_curve of an empty dataset");
  if (scores.size() != d.size())
    throw InvalidArgument("score vector size " + std::to_string(scores.size()) +
                          " does not match dataset size " + std::to_string(d.size()));
  const std::size_t n = d.size();
  const auto order = deferral_order(scores);

  // quality_k = (L_k + S_N - S_k) / N with L, S prefix sums in deferral order.
  std::vector<double> large_prefix(n + 1, 0.0), small_prefix(n + 1, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& e = d.examples[order[k]];
    large_prefix[k + 1] = large_prefix[k] + e.large_quality;
    small_prefix[k + 1] = small_prefix[k] + e.small_quality;
  }
  const double small_total = small_prefix[n];

  DeferralCurve c;
  c.points.reserve(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    const double rate = static_cast<double>(k) / static_cast<double>(n);
    const double deferred = large_prefix[k];
    const double kept = k == n ? 0.0 : small_total - small_prefix[k];
    c.points.push_back({rate, (deferred + kept) / static_cast<double>(n)});
  }
  c.auc_df = trapezoid_auc(c.points);
  return c;
}

ScoreVector oracle_scores(const Dataset& d) {
  ScoreVector s{"oracle", {}};
  s.values.reserve(d.size());
  for (const auto& e : d.examples) s.values.push_back(-(e.large_quality - e.small_quality));
  return s;
}

DeferralCurve oracle_curve(const Dataset& d) { return deferral_curve(d, oracle_scores(d)); }

double random_baseline_auc(const Dataset& d) {
  if (d.empty()) throw InvalidArgument("random baseline of an empty dataset");
  return 0.5 * (mean_of(d, &ExampleTrace::small_quality) +
                mean_of(d, &ExampleTrace::large_quality));
}

DeferralCurve random_curve(const Dataset& d) {
  if (d.empty()) throw InvalidArgument("random curve of an empty dataset");
  const double q1 = mean_of(d, &ExampleTrace::small_quality);
  const double q2 = mean_of(d, &ExampleTrace::large_quality);
  const std::size_t n = d.size();
  DeferralCurve c;
  for (std::size_t k = 0; k <= n; ++k) {
    const double r = k == n ? 1.0 : static_cast<double>(k) / static_cast<double>(n);
    c.points.push_back({r, (1.0 - r) * q1 + r * q2});
  }
  c.auc_df = 0.5 * (q1 + q2);
  return c;
}

std::optional<double> percent_change(double auc, double random_auc) {
  if (random_auc == 0.0) return std::nullopt;
  return 100.0 * (auc - random_auc) / random_auc;
}

std::vector<CostPoint> cost_curve(const Dataset& d, const DeferralCurve& c) {
  std::vector<CostPoint> out;
  out.reserve(c.points.size());
  for (const auto& p : c.points)
    out.push_back({p.deferral_rate, d.costs.small + p.deferral_rate * d.costs.large});
  return out;
}

QuantileSelection select_best_quantile(const Dataset& validation,
                                       std::span<const double> alphas) {
  if (alphas.empty()) throw InvalidArgument("select_best_quantile needs candidate alphas");
  if (validation.empty()) throw InvalidArgument("empty validation split");
  std::vector<double> sorted(alphas.begin(), alphas.end());
  std::sort(sorted.begin(), sorted.end());
  std::optional<QuantileSelection> best;
  for (double a : sorted) {
    const auto rule = ScoreRule::chow_quantile(a);
    const double auc = deferral_curve(validation, score_dataset(validation, rule)).auc_df;
    if (!best || auc > best->auc_df) best = QuantileSelection{rule, auc};
  }
  return *best;
}

std::vector<int> golden_labels(const Dataset& d) {
  std::vector<int> z;
  z.reserve(d.size());
  for (const auto& e : d.examples) {
    if (d.task_kind == TaskKind::kAccuracy)
      z.push_back(e.large_quality == 1.0 && e.small_quality == 0.0);
    else
      z.push_back(e.large_quality > e.small_quality);
  }
  return z;
}

std::optional<double> auc_roc(std::span<const int> labels, std::span<const double> predictor) {
  if (labels.size() != predictor.size())
    throw InvalidArgument("label and predictor sizes differ");
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return predictor[a] < predictor[b]; });
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && predictor[order[j]] == predictor[order[i]]) ++j;
    // 1-based ranks i+1..j share the midrank.
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        pos_rank_sum += midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

std::optional<double> golden_label_auc_roc(std::span<const int> labels,
                                           std::span<const double> scores) {
  std::vector<double> predictor(scores.size());
  std::transform(scores.begin(), scores.end(), predictor.begin(),
                 [](double s) { return -s; });
  return auc_roc(labels, predictor);
}

std::optional<double> golden_label_auc_roc(const Dataset& d, std::span<const double> scores) {
  if (scores.size() != d.size()) throw InvalidArgument("score vector size mismatch");
  const auto z = golden_labels(d);
  return golden_label_auc_roc(z, scores);
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("pearson: size mismatch");
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

LengthBiasReport length_bias_report(const Dataset& d, std::span<const ScoreVector> scores) {
  constexpr std::size_t kDeciles = 10;
  std::vector<double> lengths, gains;
  for (const auto& e : d.examples) {
    lengths.push_back(static_cast<double>(e.length()));
    gains.push_back(e.quality_gain());
  }
  LengthBiasReport report;
  report.gain_length_correlation = pearson(gains, lengths);
  const std::size_t n = d.size();
  for (const auto& s : scores) {
    if (s.size() != n) throw InvalidArgument("score vector size mismatch");
    LengthBiasRow row;
    row.rule = s.name;
    row.score_length_correlation = pearson(s.values, lengths);
    std::vector<double> sum(kDeciles, 0.0);
    std::vector<std::size_t> cnt(kDeciles, 0);
    const auto order = deferral_order(s.values);
    for (std::size_t pos = 0; pos < n; ++pos) {
      const std::size_t decile = pos * kDeciles / n;
      sum[decile] += lengths[order[pos]];
      ++cnt[decile];
    }
    for (std::size_t b = 0; b < kDeciles; ++b) {
      if (cnt[b])
        row.decile_mean_length.emplace_back(sum[b] / static_cast<double>(cnt[b]));
      else
        row.decile_mean_length.emplace_back(std::nullopt);
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

LengthBiasReport length_bias_report(const Dataset& d, std::span<const ScoreRule> rules) {
  std::vector<ScoreVector> scores;
  for (const auto& r : rules) scores.push_back(score_dataset(d, r));
  return length_bias_report(d, scores);
}

std::vector<double> token_position_profile(const Dataset& d) {
  std::vector<double> sum;
  std::vector<std::size_t> cnt;
  for (const auto& e : d.examples) {
    if (e.length() > sum.size()) {
      sum.resize(e.length(), 0.0);
      cnt.resize(e.length(), 0);
    }
    for (std::size_t i = 0; i < e.length(); ++i) {
      sum[i] += std::exp(e.token_logprobs[i]);
      ++cnt[i];
    }
  }
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] /= static_cast<double>(cnt[i]);
  return sum;
}

std::string format_curve(const DeferralCurve& c) {
  std::string out = "deferral_rate,cascade_quality\n";
  for (const auto& p : c.points)
    out += format_double(p.deferral_rate) + "," + format_double(p.cascade_quality) + "\n";
  out += "# auc_df=" + format_double(c.auc_df) + "\n";
  return out;
}

DeferralCurve parse_curve(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "deferral_rate,cascade_quality")
    throw ParseError("curve file missing header", 1);
  DeferralCurve c;
  bool have_auc = false;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.starts_with("# auc_df=")) {
      c.auc_df = std::stod(line.substr(9));
      have_auc = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError("malformed curve row", lineno);
    try {
      c.points.push_back({std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
    } catch (const std::exception&) {
      throw ParseError("malformed curve row", lineno);
    }
  }
  if (!have_auc) throw ParseError("curve file missing auc_df footer");
  return c;
}

void export_curve(const DeferralCurve& c, const std::string& path) {
  write_file_atomic(path, format_curve(c));
}

DeferralCurve import_curve(const std::string& path) { return parse_curve(read_file(path)); }

}  // namespace cascade
