#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "cascade/trace.hpp"

namespace cascade {

enum class Signal {
  kMinToken,        // defer benefit tracks the least likely token
  kLength,          // defer benefit grows with output length
  kShortUncertain,  // defer benefit concentrates on short outputs
  kNone,            // defer benefit independent of the trace
};

std::string_view to_string(Signal s);
Signal parse_signal(std::string_view name);

struct LengthDistribution {
  std::size_t min = 4;
  std::size_t max = 40;
  // n = min + floor((max - min + 1) * u^shape); 1 is uniform, > 1 favors short.
  double shape = 1.0;
};

// Generator knobs.
//
// Token surprisal (-logprob) at position i is exponential with a mean that
// decays from early_surprisal to late_surprisal, so later tokens are more
// confident. With probability repetition_rate an output also carries one to
// three rare low-probability tokens (repetitions, unknown tokens).
//
// Qualities come from a latent
//   z = strength * rank(signal feature) + (1 - strength) * u + noise * e,
// u uniform and e standard normal, both independent of the trace. The small
// model is wrong on the lowest small_error_rate fraction of z; the large
// model fails independently of the trace with probability large_error_rate.
struct SynthConfig {
  std::size_t n_examples = 1000;
  LengthDistribution length;
  double repetition_rate = 0.3;
  Signal signal = Signal::kMinToken;
  double signal_strength = 0.9;
  double noise = 0.05;
  std::uint64_t seed = 0;

  TaskKind task_kind = TaskKind::kAccuracy;
  double small_error_rate = 0.4;
  double large_error_rate = 0.1;
  double test_fraction = 0.2;
  double early_surprisal = 1.2;
  double late_surprisal = 0.3;
  double surprisal_decay = 3.0;  // positions
  double rare_surprisal = 2.0;  // offset and mean of rare-token surprisal
  double max_surprisal = 12.0;
  std::size_t small_embed_dim = 0;
  std::size_t large_embed_dim = 0;
  Costs costs{1.0, 3.0};
};

// Throws InvalidArgument on infeasible settings (e.g. min > max length).
void validate(const SynthConfig& config);

Dataset generate(const SynthConfig& config);

std::string synth_config_to_json(const SynthConfig& config);
// Fields absent from the text keep the defaults of `base`.
SynthConfig synth_config_from_json(const std::string& text, SynthConfig base = {});

}  // namespace cascade
