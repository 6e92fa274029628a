#include "cascade/features.hpp"

#include <algorithm>
#include <cmath>

#include "cascade/error.hpp"
#include "cascade/scores.hpp"

namespace cascade {

std::string_view to_string(FeatureVariant v) {
  switch (v) {
    case FeatureVariant::kQuantile: return "quantile";
    case FeatureVariant::kEmbed1: return "embed1";
    case FeatureVariant::kEmbed12: return "embed12";
    case FeatureVariant::kPaddedProb: return "padded-prob";
    case FeatureVariant::kSortedPaddedProb: return "sorted-padded-prob";
  }
  return "quantile";
}

FeatureVariant parse_feature_variant(std::string_view name) {
  for (auto v : {FeatureVariant::kQuantile, FeatureVariant::kEmbed1, FeatureVariant::kEmbed12,
                 FeatureVariant::kPaddedProb, FeatureVariant::kSortedPaddedProb})
    if (name == to_string(v)) return v;
  throw InvalidArgument("unknown feature variant \"" + std::string(name) + "\"");
}

std::vector<double> canonical_alphas() {
  std::vector<double> a;
  for (int k = 0; k <= 10; ++k) a.push_back(k / 100.0);
  for (int k = 2; k <= 10; ++k) a.push_back(k / 10.0);
  return a;
}

namespace {

bool is_padded(FeatureVariant v) {
  return v == FeatureVariant::kPaddedProb || v == FeatureVariant::kSortedPaddedProb;
}

}  // namespace

std::size_t FeatureSpec::width() const {
  const std::size_t base = 2 + alphas.size();
  switch (variant) {
    case FeatureVariant::kQuantile: return base;
    case FeatureVariant::kEmbed1: return base + small_embed_dim;
    case FeatureVariant::kEmbed12: return base + small_embed_dim + large_embed_dim;
    case FeatureVariant::kPaddedProb:
    case FeatureVariant::kSortedPaddedProb: return pad_length;
  }
  return base;
}

FeatureSpec resolve_spec(FeatureSpec spec, const Dataset& d) {
  if (spec.variant == FeatureVariant::kEmbed1 || spec.variant == FeatureVariant::kEmbed12) {
    spec.small_embed_dim = d.small_embedding_dim();
    if (spec.small_embed_dim == 0)
      throw MissingEmbeddingError("variant " + std::string(to_string(spec.variant)) +
                                  " needs small_embedding on every example");
  }
  if (spec.variant == FeatureVariant::kEmbed12) {
    spec.large_embed_dim = d.large_embedding_dim();
    if (spec.large_embed_dim == 0)
      throw MissingEmbeddingError(
          "variant embed12 needs large_intermediate_embedding on every example");
  }
  if (is_padded(spec.variant) && spec.pad_length == 0) {
    std::size_t longest = 0, longest_train = 0;
    for (const auto& e : d.examples) {
      longest = std::max(longest, e.length());
      if (e.split == Split::kTrain) longest_train = std::max(longest_train, e.length());
    }
    spec.pad_length = longest_train ? longest_train : longest;
  }
  return spec;
}

std::vector<double> quantile_features(const ExampleTrace& t, std::span<const double> alphas) {
  std::vector<double> out;
  out.reserve(2 + alphas.size());
  out.push_back(chow_sum(t));
  out.push_back(chow_average(t));
  std::vector<double> sorted = t.token_logprobs;
  std::sort(sorted.begin(), sorted.end());
  for (double a : alphas) out.push_back(sorted_quantile(sorted, a));
  return out;
}

FeatureMatrix build_features(const Dataset& d, const FeatureSpec& spec) {
  const std::size_t width = spec.width();
  if (width == 0) throw InvalidArgument("feature spec has zero width");
  FeatureMatrix fm{spec, Matrix(d.size(), width), std::nullopt};
  const bool need_small =
      spec.variant == FeatureVariant::kEmbed1 || spec.variant == FeatureVariant::kEmbed12;
  const bool need_large = spec.variant == FeatureVariant::kEmbed12;

  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& e = d.examples[i];
    auto row = fm.rows.row(i);
    if (is_padded(spec.variant)) {
      if (e.length() > spec.pad_length)
        throw InvalidArgument("trace \"" + e.id + "\" has " + std::to_string(e.length()) +
                              " tokens, longer than pad_length " +
                              std::to_string(spec.pad_length));
      std::copy(e.token_logprobs.begin(), e.token_logprobs.end(), row.begin());
      if (spec.variant == FeatureVariant::kSortedPaddedProb)
        std::sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(e.length()));
      continue;
    }
    const auto q = quantile_features(e, spec.alphas);
    auto out = std::copy(q.begin(), q.end(), row.begin());
    if (need_small) {
      if (!e.small_embedding || e.small_embedding->size() != spec.small_embed_dim)
        throw MissingEmbeddingError("example \"" + e.id + "\" lacks a small_embedding of dim " +
                                    std::to_string(spec.small_embed_dim));
      out = std::copy(e.small_embedding->begin(), e.small_embedding->end(), out);
    }
    if (need_large) {
      if (!e.large_intermediate_embedding ||
          e.large_intermediate_embedding->size() != spec.large_embed_dim)
        throw MissingEmbeddingError("example \"" + e.id +
                                    "\" lacks a large_intermediate_embedding of dim " +
                                    std::to_string(spec.large_embed_dim));
      std::copy(e.large_intermediate_embedding->begin(), e.large_intermediate_embedding->end(),
                out);
    }
  }
  return fm;
}

Normalizer fit_normalizer(const Matrix& m, const std::vector<bool>& row_mask) {
  if (!row_mask.empty() && row_mask.size() != m.rows())
    throw InvalidArgument("normalizer row mask size mismatch");
  std::size_t n = 0;
  for (std::size_t r = 0; r < m.rows(); ++r) n += row_mask.empty() || row_mask[r];
  if (n == 0 || m.cols() == 0) throw InvalidArgument("cannot fit a normalizer on an empty matrix");

  Normalizer norm;
  norm.columns.resize(m.cols());
  for (std::size_t c = 0; c < m.cols(); ++c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r)
      if (row_mask.empty() || row_mask[r]) sum += m(r, c);
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) {
      if (row_mask.empty() || row_mask[r]) {
        const double dev = m(r, c) - mean;
        sq += dev * dev;
      }
    }
    norm.columns[c] = {mean, std::sqrt(sq / static_cast<double>(n))};
  }
  return norm;
}

Normalizer fit_normalizer(const FeatureMatrix& m) { return fit_normalizer(m.rows); }

Matrix apply_normalizer(const Matrix& m, const Normalizer& norm) {
  if (norm.columns.size() != m.cols())
    throw InvalidArgument("normalizer width does not match feature width");
  Matrix out = m;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const auto& s = norm.columns[c];
      const double centered = m(r, c) - s.mean;
      out(r, c) = s.std < kMinNormalizerStd ? centered : centered / s.std;
    }
  }
  return out;
}

FeatureMatrix apply_normalizer(const FeatureMatrix& m, const Normalizer& norm) {
  return {m.spec, apply_normalizer(m.rows, norm), norm};
}

}  // namespace cascade
