#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cascade/rng.hpp"
#include "cascade/trace.hpp"

namespace cascade::testing {

inline ExampleTrace make_trace(std::string id, std::vector<double> logprobs, double small_q,
                               double large_q, Split split = Split::kTrain) {
  ExampleTrace t;
  t.id = std::move(id);
  t.token_logprobs = std::move(logprobs);
  t.small_quality = small_q;
  t.large_quality = large_q;
  t.split = split;
  return t;
}

// Random dataset with n examples. Accuracy tasks get 0/1 qualities; score
// tasks get uniform reals in [-1, 1.5), optionally quantized to 1/64.
inline Dataset random_dataset(Rng& rng, std::size_t n, TaskKind kind, bool dyadic = false,
                              std::size_t max_len = 12) {
  Dataset d;
  d.task_kind = kind;
  d.costs = {rng.uniform(0.5, 2.0), rng.uniform(2.0, 10.0)};
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> lp(1 + rng.below(max_len));
    for (double& v : lp) v = -rng.exponential(0.7);
    double s, l;
    if (kind == TaskKind::kAccuracy) {
      s = static_cast<double>(rng.below(2));
      l = static_cast<double>(rng.below(2));
    } else {
      s = rng.uniform(-1.0, 1.5);
      l = rng.uniform(-1.0, 1.5);
      if (dyadic) {
        s = std::round(s * 64.0) / 64.0;
        l = std::round(l * 64.0) / 64.0;
      }
    }
    d.examples.push_back(make_trace("r" + std::to_string(i), std::move(lp), s, l));
  }
  return d;
}

}  // namespace cascade::testing
