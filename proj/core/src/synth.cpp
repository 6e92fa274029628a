#include "cascade/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "cascade/error.hpp"
#include "cascade/rng.hpp"

namespace cascade {

using nlohmann::json;

std::string_view to_string(Signal s) {
  switch (s) {
    case Signal::kMinToken: return "min_token";
    case Signal::kLength: return "length";
    case Signal::kShortUncertain: return "short_uncertain";
    case Signal::kNone: return "none";
  }
  return "none";
}

Signal parse_signal(std::string_view name) {
  for (auto s : {Signal::kMinToken, Signal::kLength, Signal::kShortUncertain, Signal::kNone})
    if (name == to_string(s)) return s;
  throw InvalidArgument("unknown signal \"" + std::string(name) + "\"");
}

void validate(const SynthConfig& c) {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (c.n_examples == 0) throw InvalidArgument("n_examples must be positive");
  if (c.length.min < 1) throw InvalidArgument("minimum length must be at least 1");
  if (c.length.min > c.length.max) throw InvalidArgument("minimum length exceeds maximum length");
  if (!(c.length.shape > 0.0)) throw InvalidArgument("length shape must be positive");
  if (!unit(c.repetition_rate)) throw InvalidArgument("repetition_rate must lie in [0, 1]");
  if (!unit(c.signal_strength)) throw InvalidArgument("signal_strength must lie in [0, 1]");
  if (!(c.noise >= 0.0)) throw InvalidArgument("noise must be non-negative");
  if (!unit(c.small_error_rate) || !unit(c.large_error_rate))
    throw InvalidArgument("error rates must lie in [0, 1]");
  if (!(c.test_fraction >= 0.0 && c.test_fraction < 1.0))
    throw InvalidArgument("test_fraction must lie in [0, 1)");
  if (!(c.early_surprisal > 0.0) || !(c.late_surprisal > 0.0) || !(c.surprisal_decay > 0.0) ||
      !(c.max_surprisal > 0.0))
    throw InvalidArgument("surprisal parameters must be positive");
  if (!(c.costs.small > 0.0) || !(c.costs.large > 0.0))
    throw InvalidArgument("costs must be positive");
}

namespace {

// Midranks scaled into (0, 1); tied values share a rank.
std::vector<double> rank_scores(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && v[order[j]] == v[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j - 1);
    for (std::size_t k = i; k < j; ++k) r[order[k]] = (mid + 0.5) / static_cast<double>(n);
    i = j;
  }
  return r;
}

// Value at position floor(q * n) of the ascending order (q in [0, 1]).
double cut_point(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const auto k = static_cast<std::size_t>(std::floor(q * static_cast<double>(v.size())));
  return k >= v.size() ? std::numeric_limits<double>::infinity() : v[k];
}

struct Draft {
  std::vector<double> logprobs;
  double uniform_mix = 0.0;
  double gaussian = 0.0;
  bool large_fails = false;
  std::vector<double> small_noise;
  std::vector<double> large_noise;
};

Draft draft_trace(const SynthConfig& c, std::size_t index) {
  Rng rng(derive_seed(c.seed, index));
  Draft d;
  const std::size_t span = c.length.max - c.length.min + 1;
  const auto extra = static_cast<std::size_t>(
      std::floor(static_cast<double>(span) * std::pow(rng.uniform(), c.length.shape)));
  const std::size_t n = std::min(c.length.max, c.length.min + extra);
  d.logprobs.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mean = c.late_surprisal + (c.early_surprisal - c.late_surprisal) *
                                               std::exp(-static_cast<double>(i) / c.surprisal_decay);
    d.logprobs[i] = -std::min(rng.exponential(mean), c.max_surprisal);
  }
  // Repetition-like outputs carry one to three rare, low-probability tokens.
  if (rng.uniform() < c.repetition_rate) {
    const std::size_t rare = 1 + static_cast<std::size_t>(rng.below(3));
    for (std::size_t k = 0; k < rare; ++k) {
      const auto pos = static_cast<std::size_t>(rng.below(n));
      d.logprobs[pos] = -std::min(c.rare_surprisal + rng.exponential(c.rare_surprisal),
                                  c.max_surprisal);
    }
  }
  for (double& lp : d.logprobs)
    if (lp == 0.0) lp = 0.0;  // normalize -0.0
  d.uniform_mix = rng.uniform();
  d.gaussian = rng.normal();
  d.large_fails = rng.uniform() < c.large_error_rate;
  for (std::size_t j = 0; j < c.small_embed_dim; ++j) d.small_noise.push_back(rng.normal());
  for (std::size_t j = 0; j < c.large_embed_dim; ++j) d.large_noise.push_back(rng.normal());
  return d;
}

double signal_feature(const SynthConfig& c, const Draft& d) {
  const double span = static_cast<double>(c.length.max - c.length.min);
  const double rel_len =
      span > 0.0 ? (static_cast<double>(d.logprobs.size() - c.length.min)) / span : 0.5;
  switch (c.signal) {
    case Signal::kMinToken:
      return *std::min_element(d.logprobs.begin(), d.logprobs.end());
    case Signal::kLength: return 1.0 - rel_len;
    case Signal::kShortUncertain: return rel_len;
    case Signal::kNone: return d.uniform_mix;
  }
  return 0.0;
}

}  // namespace

Dataset generate(const SynthConfig& c) {
  validate(c);
  const std::size_t n = c.n_examples;
  std::vector<Draft> drafts;
  drafts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) drafts.push_back(draft_trace(c, i));

  std::vector<double> feature(n);
  for (std::size_t i = 0; i < n; ++i) feature[i] = signal_feature(c, drafts[i]);
  const auto ranks = rank_scores(feature);

  std::vector<double> latent(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double strength = c.signal == Signal::kNone ? 1.0 : c.signal_strength;
    latent[i] = strength * ranks[i] + (1.0 - strength) * drafts[i].uniform_mix +
                c.noise * drafts[i].gaussian;
  }
  const double small_cut = cut_point(latent, c.small_error_rate);

  // Embedding loadings are shared across examples.
  Rng loading_rng(derive_seed(c.seed, 0xe11bedULL));
  std::vector<double> small_load(c.small_embed_dim), large_load(c.large_embed_dim);
  for (double& a : small_load) a = loading_rng.normal();
  for (double& a : large_load) a = loading_rng.normal();

  Dataset d;
  d.task_kind = c.task_kind;
  d.costs = c.costs;
  d.examples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& e = d.examples[i];
    char id[32];
    std::snprintf(id, sizeof(id), "ex-%06zu", i);
    e.id = id;
    e.token_logprobs = std::move(drafts[i].logprobs);
    const double z = latent[i];
    if (c.task_kind == TaskKind::kAccuracy) {
      e.small_quality = z < small_cut ? 0.0 : 1.0;
      e.large_quality = drafts[i].large_fails ? 0.0 : 1.0;
    } else {
      e.small_quality = std::clamp(0.8 * z, -1.0, 1.5);
      e.large_quality = drafts[i].large_fails ? std::clamp(0.8 * z - 0.2, -1.0, 1.5)
                                              : std::clamp(0.4 + 0.4 * z, -1.0, 1.5);
    }
    if (c.small_embed_dim) {
      std::vector<double> emb(c.small_embed_dim);
      for (std::size_t j = 0; j < emb.size(); ++j)
        emb[j] = small_load[j] * (2.0 * z - 1.0) + 0.5 * drafts[i].small_noise[j];
      e.small_embedding = std::move(emb);
    }
    if (c.large_embed_dim) {
      std::vector<double> emb(c.large_embed_dim);
      for (std::size_t j = 0; j < emb.size(); ++j)
        emb[j] = large_load[j] * (e.large_quality - e.small_quality) +
                 0.5 * drafts[i].large_noise[j];
      e.large_intermediate_embedding = std::move(emb);
    }
  }

  const auto n_test =
      static_cast<std::size_t>(std::llround(c.test_fraction * static_cast<double>(n)));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng split_rng(derive_seed(c.seed, 0x5b117ULL));
  split_rng.shuffle(std::span(perm));
  for (std::size_t k = 0; k < n_test; ++k) d.examples[perm[k]].split = Split::kTest;
  return d;
}

std::string synth_config_to_json(const SynthConfig& c) {
  json j{{"n_examples", c.n_examples},
         {"length_min", c.length.min},
         {"length_max", c.length.max},
         {"length_shape", c.length.shape},
         {"repetition_rate", c.repetition_rate},
         {"signal", to_string(c.signal)},
         {"signal_strength", c.signal_strength},
         {"noise", c.noise},
         {"seed", c.seed},
         {"task_kind", to_string(c.task_kind)},
         {"small_error_rate", c.small_error_rate},
         {"large_error_rate", c.large_error_rate},
         {"test_fraction", c.test_fraction},
         {"early_surprisal", c.early_surprisal},
         {"late_surprisal", c.late_surprisal},
         {"surprisal_decay", c.surprisal_decay},
         {"rare_surprisal", c.rare_surprisal},
         {"max_surprisal", c.max_surprisal},
         {"small_embed_dim", c.small_embed_dim},
         {"large_embed_dim", c.large_embed_dim},
         {"c1", c.costs.small},
         {"c2", c.costs.large}};
  return j.dump(1);
}

SynthConfig synth_config_from_json(const std::string& text, SynthConfig c) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed synth config: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("synth config must be an object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "n_examples") c.n_examples = v.get<std::size_t>();
      else if (key == "length_min") c.length.min = v.get<std::size_t>();
      else if (key == "length_max") c.length.max = v.get<std::size_t>();
      else if (key == "length_shape") c.length.shape = v.get<double>();
      else if (key == "repetition_rate") c.repetition_rate = v.get<double>();
      else if (key == "signal") c.signal = parse_signal(v.get<std::string>());
      else if (key == "signal_strength") c.signal_strength = v.get<double>();
      else if (key == "noise") c.noise = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "task_kind") c.task_kind = parse_task_kind(v.get<std::string>());
      else if (key == "small_error_rate") c.small_error_rate = v.get<double>();
      else if (key == "large_error_rate") c.large_error_rate = v.get<double>();
      else if (key == "test_fraction") c.test_fraction = v.get<double>();
      else if (key == "early_surprisal") c.early_surprisal = v.get<double>();
      else if (key == "late_surprisal") c.late_surprisal = v.get<double>();
      else if (key == "surprisal_decay") c.surprisal_decay = v.get<double>();
      else if (key == "rare_surprisal") c.rare_surprisal = v.get<double>();
      else if (key == "max_surprisal") c.max_surprisal = v.get<double>();
      else if (key == "small_embed_dim") c.small_embed_dim = v.get<std::size_t>();
      else if (key == "large_embed_dim") c.large_embed_dim = v.get<std::size_t>();
      else if (key == "c1") c.costs.small = v.get<double>();
      else if (key == "c2") c.costs.large = v.get<double>();
      else throw ParseError("unknown synth config field \"" + key + "\"");
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad synth config value: ") + e.what());
  }
  return c;
}

}  // namespace cascade
