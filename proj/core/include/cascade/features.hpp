#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cascade/matrix.hpp"
#include "cascade/trace.hpp"

namespace cascade {

enum class FeatureVariant { kQuantile, kEmbed1, kEmbed12, kPaddedProb, kSortedPaddedProb };

std::string_view to_string(FeatureVariant v);
FeatureVariant parse_feature_variant(std::string_view name);

// 0, 0.01, ..., 0.10, 0.2, ..., 1.0 (20 values).
std::vector<double> canonical_alphas();

struct FeatureSpec {
  FeatureVariant variant = FeatureVariant::kQuantile;
  std::vector<double> alphas = canonical_alphas();
  std::size_t pad_length = 0;      // padded variants only
  std::size_t small_embed_dim = 0;  // embed1, embed12
  std::size_t large_embed_dim = 0;  // embed12

  std::size_t width() const;

  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

// Completes a spec against a training dataset: fills embedding dims and,
// for padded variants with pad_length 0, the longest train-split output.
FeatureSpec resolve_spec(FeatureSpec spec, const Dataset& d);

struct ColumnStats {
  double mean = 0.0;
  double std = 1.0;

  friend bool operator==(const ColumnStats&, const ColumnStats&) = default;
};

struct Normalizer {
  std::vector<ColumnStats> columns;

  friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

struct FeatureMatrix {
  FeatureSpec spec;
  Matrix rows;  // one row per example, dataset order
  std::optional<Normalizer> normalization;
};

// [chow_sum, chow_average, quantiles...] for one trace.
std::vector<double> quantile_features(const ExampleTrace& t, std::span<const double> alphas);

// Throws MissingEmbeddingError for missing or mis-sized embeddings and
// InvalidArgument for traces longer than pad_length.
FeatureMatrix build_features(const Dataset& d, const FeatureSpec& spec);

// Columns with std below this are mean-centered but not scaled.
inline constexpr double kMinNormalizerStd = 1e-12;

// Per-column population mean/std over the rows whose mask entry is set
// (all rows when the mask is empty).
Normalizer fit_normalizer(const Matrix& m, const std::vector<bool>& row_mask = {});
Normalizer fit_normalizer(const FeatureMatrix& m);
Matrix apply_normalizer(const Matrix& m, const Normalizer& norm);
FeatureMatrix apply_normalizer(const FeatureMatrix& m, const Normalizer& norm);

}  // namespace cascade
