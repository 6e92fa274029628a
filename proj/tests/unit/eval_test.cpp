#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "cascade/error.hpp"
#include "cascade/eval.hpp"
#include "cascade/features.hpp"
#include "cascade/synth.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace cascade {
namespace {

using testing::make_trace;

Dataset two_example() {
  Dataset d;
  d.examples.push_back(make_trace("a", {-0.1}, 1, 1));
  d.examples.push_back(make_trace("b", {-2.0}, 0, 1));
  return d;
}

TEST(DeferralCurve, HandComputedTwoExamples) {
  const Dataset d = two_example();
  const std::vector<double> s{0.9, 0.1};
  const auto c = deferral_curve(d, s);
  ASSERT_EQ(c.points.size(), 3u);
  EXPECT_EQ(c.points[0], (CurvePoint{0.0, 0.5}));
  EXPECT_EQ(c.points[1], (CurvePoint{0.5, 1.0}));
  EXPECT_EQ(c.points[2], (CurvePoint{1.0, 1.0}));
  EXPECT_DOUBLE_EQ(c.auc_df, 0.875);
  const auto n = oracle::naive_curve(d, s);
  EXPECT_DOUBLE_EQ(oracle::naive_trapezoid(n), 0.875);
}

TEST(DeferralCurve, FlatWhenQualitiesMatch) {
  Dataset d;
  d.examples.push_back(make_trace("a", {-0.1}, 0.25, 0.25));
  d.examples.push_back(make_trace("b", {-0.3}, 0.75, 0.75));
  const auto c = deferral_curve(d, std::vector<double>{0.3, -1.0});
  for (const auto& p : c.points) EXPECT_DOUBLE_EQ(p.cascade_quality, 0.5);
  EXPECT_DOUBLE_EQ(c.auc_df, 0.5);
}

TEST(DeferralCurve, SingleExample) {
  Dataset d;
  d.examples.push_back(make_trace("a", {-0.1}, 0.2, 0.9));
  const auto c = deferral_curve(d, std::vector<double>{42.0});
  ASSERT_EQ(c.points.size(), 2u);
  EXPECT_EQ(c.points[0], (CurvePoint{0.0, 0.2}));
  EXPECT_EQ(c.points[1], (CurvePoint{1.0, 0.9}));
  EXPECT_DOUBLE_EQ(c.auc_df, 0.55);
}

TEST(DeferralCurve, SizeMismatchThrows) {
  EXPECT_THROW(deferral_curve(two_example(), std::vector<double>{1.0}), InvalidArgument);
  EXPECT_THROW(deferral_curve(Dataset{}, std::vector<double>{}), InvalidArgument);
}

TEST(DeferralCurve, TiesDeferInDatasetOrder) {
  Dataset d;
  d.examples.push_back(make_trace("a", {-0.1}, 0, 1));
  d.examples.push_back(make_trace("b", {-0.1}, 1, 0));
  const auto c = deferral_curve(d, std::vector<double>{0.0, 0.0});
  EXPECT_DOUBLE_EQ(c.points[1].cascade_quality, 1.0);  // "a" deferred first
}

TEST(DeferralCurve, MatchesNaiveImplementationAndEndpoints) {
  Rng rng(21);
  for (int t = 0; t < 100; ++t) {
    const Dataset d = testing::random_dataset(rng, 1 + rng.below(100),
                                              t % 2 ? TaskKind::kAccuracy : TaskKind::kScoreDiff);
    std::vector<double> s(d.size());
    for (double& v : s) v = rng.uniform() < 0.2 ? 0.5 : rng.normal();  // some ties
    const auto c = deferral_curve(d, s);
    const auto n = oracle::naive_curve(d, s);
    ASSERT_EQ(c.points.size(), n.size());
    for (std::size_t k = 0; k < n.size(); ++k) {
      EXPECT_EQ(c.points[k].deferral_rate, n[k].rate);
      EXPECT_EQ(c.points[k].cascade_quality, n[k].quality);
    }
    double q1 = 0, q2 = 0;
    for (const auto& e : d.examples) {
      q1 += e.small_quality;
      q2 += e.large_quality;
    }
    EXPECT_NEAR(c.points.front().cascade_quality, q1 / d.size(), 1e-12);
    EXPECT_NEAR(c.points.back().cascade_quality, q2 / d.size(), 1e-12);
    EXPECT_EQ(c.points.front().deferral_rate, 0.0);
    EXPECT_EQ(c.points.back().deferral_rate, 1.0);
    for (std::size_t k = 1; k < c.points.size(); ++k)
      EXPECT_LT(c.points[k - 1].deferral_rate, c.points[k].deferral_rate);
  }
}

TEST(DeferralCurve, RankInvariance) {
  Rng rng(22);
  const Dataset d = testing::random_dataset(rng, 60, TaskKind::kScoreDiff);
  std::vector<double> s(d.size());
  for (double& v : s) v = rng.normal();
  const auto base = deferral_curve(d, s);
  std::vector<double> t(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) t[i] = std::exp(3.0 * s[i]) - 7.0;
  const auto other = deferral_curve(d, t);
  EXPECT_EQ(base.points, other.points);
  EXPECT_EQ(base.auc_df, other.auc_df);
}

TEST(OracleCurve, DefersLargestGainFirst) {
  Dataset d;
  d.examples.push_back(make_trace("a", {-0.1}, 0, 1));
  d.examples.push_back(make_trace("b", {-0.1}, 1, 1));
  const auto c = oracle_curve(d);
  EXPECT_DOUBLE_EQ(c.points[1].cascade_quality, 1.0);
  EXPECT_DOUBLE_EQ(c.points[1].deferral_rate, 0.5);
}

TEST(OracleCurve, FlatWhenNoGain) {
  Dataset d;
  d.examples.push_back(make_trace("a", {-0.1}, 0.3, 0.3));
  d.examples.push_back(make_trace("b", {-0.1}, 0.6, 0.6));
  for (const auto& p : oracle_curve(d).points) EXPECT_DOUBLE_EQ(p.cascade_quality, 0.45);
}

TEST(OracleCurve, DominatesEveryRuleOnRandomData) {
  Rng rng(23);
  for (int t = 0; t < 50; ++t) {
    const Dataset d = testing::random_dataset(rng, 20, TaskKind::kScoreDiff, /*dyadic=*/true);
    const auto best = oracle_curve(d);
    std::vector<ScoreRule> rules{ScoreRule::chow_sum(), ScoreRule::chow_average()};
    for (double a : canonical_alphas()) rules.push_back(ScoreRule::chow_quantile(a));
    for (const auto& r : rules) {
      const auto c = deferral_curve(d, score_dataset(d, r));
      for (std::size_t k = 0; k < c.points.size(); ++k)
        EXPECT_GE(best.points[k].cascade_quality, c.points[k].cascade_quality) << r.name();
    }
  }
}

TEST(RandomBaseline, Midpoint) {
  Dataset d;
  d.examples.push_back(make_trace("a", {-0.1}, 0.4, 0.8));
  d.examples.push_back(make_trace("b", {-0.1}, 0.6, 1.0));
  EXPECT_DOUBLE_EQ(random_baseline_auc(d), 0.7);
  Dataset flat;
  flat.examples.push_back(make_trace("a", {-0.1}, 0.3, 0.3));
  EXPECT_DOUBLE_EQ(random_baseline_auc(flat), 0.3);
}

TEST(RandomBaseline, EqualsTrapezoidOfLine) {
  Rng rng(24);
  for (int t = 0; t < 30; ++t) {
    const Dataset d = testing::random_dataset(rng, 1 + rng.below(40), TaskKind::kScoreDiff);
    const auto line = random_curve(d);
    EXPECT_NEAR(trapezoid_auc(line.points), random_baseline_auc(d), 1e-15);
  }
}

TEST(CostCurve, LinearInRate) {
  Rng rng(25);
  const Dataset d = testing::random_dataset(rng, 13, TaskKind::kAccuracy);
  const auto c = deferral_curve(d, score_dataset(d, ScoreRule::chow_sum()));
  const auto cost = cost_curve(d, c);
  ASSERT_EQ(cost.size(), c.points.size());
  for (const auto& p : cost)
    EXPECT_EQ(p.expected_cost, d.costs.small + p.deferral_rate * d.costs.large);
  EXPECT_EQ(cost.front().expected_cost, d.costs.small);
}

TEST(SelectBestQuantile, SingleCandidate) {
  Rng rng(26);
  const Dataset d = testing::random_dataset(rng, 10, TaskKind::kAccuracy);
  const std::vector<double> alphas{0.0};
  EXPECT_EQ(select_best_quantile(d, alphas).rule, ScoreRule::chow_quantile(0.0));
}

TEST(SelectBestQuantile, TiesPickSmallestAlpha) {
  Dataset d;  // single-token traces: every quantile is the same score
  d.examples.push_back(make_trace("a", {-0.1}, 1, 1));
  d.examples.push_back(make_trace("b", {-0.9}, 0, 1));
  const std::vector<double> alphas{0.7, 0.3};
  EXPECT_EQ(select_best_quantile(d, alphas).rule, ScoreRule::chow_quantile(0.3));
}

TEST(SelectBestQuantile, PlantedMinTokenSignalSelectsZero) {
  SynthConfig c;
  c.n_examples = 800;
  c.signal = Signal::kMinToken;
  c.signal_strength = 1.0;
  c.noise = 0.0;
  c.large_error_rate = 0.0;
  c.seed = 4;
  const Dataset d = generate(c);
  const auto alphas = canonical_alphas();
  EXPECT_EQ(select_best_quantile(d, alphas).rule, ScoreRule::chow_quantile(0.0));
}

TEST(SelectBestQuantile, Errors) {
  const std::vector<double> none;
  const std::vector<double> one{0.5};
  EXPECT_THROW(select_best_quantile(two_example(), none), InvalidArgument);
  EXPECT_THROW(select_best_quantile(Dataset{}, one), InvalidArgument);
}

TEST(GoldenAuc, PerfectAndTied) {
  const std::vector<int> z{1, 0};
  EXPECT_DOUBLE_EQ(*golden_label_auc_roc(z, std::vector<double>{0.1, 0.9}), 1.0);
  EXPECT_DOUBLE_EQ(*golden_label_auc_roc(z, std::vector<double>{0.5, 0.5}), 0.5);
  EXPECT_FALSE(golden_label_auc_roc(std::vector<int>{1, 1}, std::vector<double>{0.1, 0.2}));
}

TEST(GoldenAuc, FromAccuracyDataset) {
  Dataset d;
  d.examples.push_back(make_trace("a", {-2.0}, 0, 1));  // z = 1
  d.examples.push_back(make_trace("b", {-0.1}, 1, 1));  // z = 0
  d.examples.push_back(make_trace("c", {-1.0}, 0, 0));  // z = 0
  EXPECT_EQ(golden_labels(d), (std::vector<int>{1, 0, 0}));
  EXPECT_DOUBLE_EQ(*golden_label_auc_roc(d, score_dataset(d, ScoreRule::chow_sum()).values), 1.0);
}

TEST(GoldenAuc, MatchesPairwiseOracle) {
  Rng rng(27);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng.below(199);
    std::vector<int> z(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      z[i] = static_cast<int>(rng.below(2));
      s[i] = static_cast<double>(rng.below(10)) / 3.0;  // heavy ties
    }
    const auto auc = golden_label_auc_roc(z, s);
    std::vector<double> pred(n);
    for (std::size_t i = 0; i < n; ++i) pred[i] = -s[i];
    if (!auc) continue;
    EXPECT_NEAR(*auc, oracle::pairwise_auc(z, pred), 1e-12);
  }
}

TEST(LengthBias, PerfectCorrelationAndDegenerate) {
  Dataset d;
  for (int i = 1; i <= 5; ++i)
    d.examples.push_back(make_trace("x" + std::to_string(i), std::vector<double>(i, -0.5), 0, i % 2));
  std::vector<ScoreVector> scores{{"len", {1, 2, 3, 4, 5}}, {"const", {2, 2, 2, 2, 2}}};
  const auto r = length_bias_report(d, scores);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_NEAR(*r.rows[0].score_length_correlation, 1.0, 1e-15);
  EXPECT_FALSE(r.rows[1].score_length_correlation.has_value());
  ASSERT_EQ(r.rows[0].decile_mean_length.size(), 10u);
}

TEST(LengthBias, MatchesRawMomentOracle) {
  Rng rng(28);
  const Dataset d = testing::random_dataset(rng, 300, TaskKind::kScoreDiff, false, 40);
  const std::vector<ScoreRule> rules{ScoreRule::chow_sum(), ScoreRule::chow_average(),
                                     ScoreRule::chow_quantile(0.8)};
  const auto r = length_bias_report(d, rules);
  std::vector<double> len, gain;
  for (const auto& e : d.examples) {
    len.push_back(static_cast<double>(e.length()));
    gain.push_back(e.quality_gain());
  }
  for (std::size_t k = 0; k < rules.size(); ++k)
    EXPECT_NEAR(*r.rows[k].score_length_correlation,
                oracle::pearson(score_dataset(d, rules[k]).values, len), 1e-12);
  EXPECT_NEAR(*r.gain_length_correlation, oracle::pearson(gain, len), 1e-12);
  // Deciles of 300 examples hold 30 each; the first holds the lowest scores.
  const auto s = score_dataset(d, rules[0]).values;
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return s[a] < s[b]; });
  double first = 0;
  for (std::size_t i = 0; i < 30; ++i) first += len[idx[i]];
  EXPECT_NEAR(*r.rows[0].decile_mean_length[0], first / 30.0, 1e-12);
}

TEST(TokenProfile, ConstantTraces) {
  Dataset d;
  for (int i = 0; i < 3; ++i)
    d.examples.push_back(make_trace("t" + std::to_string(i), {std::log(0.5), std::log(0.25)}, 1, 1));
  const auto p = token_position_profile(d);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_NEAR(p[0], 0.5, 1e-15);
  EXPECT_NEAR(p[1], 0.25, 1e-15);
}

TEST(TokenProfile, MembershipByLength) {
  Dataset d;
  d.examples.push_back(make_trace("a", {std::log(0.2)}, 1, 1));
  d.examples.push_back(make_trace("b", {std::log(0.4), std::log(0.8)}, 1, 1));
  const auto p = token_position_profile(d);
  EXPECT_NEAR(p[0], 0.3, 1e-15);
  EXPECT_NEAR(p[1], 0.8, 1e-15);
}

TEST(TokenProfile, MatchesBruteForce) {
  Rng rng(29);
  const Dataset d = testing::random_dataset(rng, 200, TaskKind::kAccuracy, false, 30);
  const auto p = token_position_profile(d);
  for (std::size_t i = 0; i < p.size(); ++i) {
    double sum = 0;
    int cnt = 0;
    for (const auto& e : d.examples)
      if (e.length() > i) {
        sum += std::exp(e.token_logprobs[i]);
        ++cnt;
      }
    EXPECT_NEAR(p[i], sum / cnt, 1e-12);
  }
}

TEST(ExportCurve, RowsAndRoundTrip) {
  const auto c = deferral_curve(two_example(), std::vector<double>{0.9, 0.1});
  const std::string text = format_curve(c);
  EXPECT_EQ(text.rfind("deferral_rate,cascade_quality\n", 0), 0u);
  EXPECT_NE(text.find("# auc_df=0.875"), std::string::npos);

  Rng rng(30);
  const Dataset big = testing::random_dataset(rng, 1000, TaskKind::kScoreDiff);
  const auto bc = deferral_curve(big, score_dataset(big, ScoreRule::chow_average()));
  const auto path = (std::filesystem::temp_directory_path() / "cascade_curve_test.csv").string();
  export_curve(bc, path);
  const auto back = import_curve(path);
  EXPECT_EQ(back.points.size(), 1001u);
  EXPECT_EQ(back.points, bc.points);
  EXPECT_EQ(back.auc_df, bc.auc_df);
  std::filesystem::remove(path);

  DeferralCurve two{{{0.0, 0.1}, {1.0, 0.3}}, 0.2};
  const auto parsed = parse_curve(format_curve(two));
  EXPECT_EQ(parsed.points.size(), 2u);
}

TEST(ExportCurve, UnwritablePathThrows) {
  DeferralCurve c{{{0.0, 0.1}, {1.0, 0.3}}, 0.2};
  EXPECT_THROW(export_curve(c, "/nonexistent-dir/x.csv"), IoError);
}

TEST(PercentChange, RelativeToRandom) {
  EXPECT_NEAR(*percent_change(0.55, 0.5), 10.0, 1e-12);
  EXPECT_FALSE(percent_change(0.5, 0.0));
}

}  // namespace
}  // namespace cascade
