#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cascade {

enum class Split { kTrain, kValidation, kTest };

enum class TaskKind {
  kAccuracy,   // qualities are 0/1 correctness
  kScoreDiff,  // qualities are real-valued scores (BLEURT-like)
};

std::string_view to_string(Split split);
std::string_view to_string(TaskKind kind);
Split parse_split(std::string_view name);
TaskKind parse_task_kind(std::string_view name);

// One prompt's recorded evidence from a two-model cascade.
struct ExampleTrace {
  std::string id;
  // Natural-log probabilities of the small model's greedy output tokens.
  std::vector<double> token_logprobs;
  double small_quality = 0.0;
  double large_quality = 0.0;
  // Final decoder embedding of the small model, averaged over output tokens.
  std::optional<std::vector<double>> small_embedding;
  // First-token embedding from the first decoder layer of the large model.
  std::optional<std::vector<double>> large_intermediate_embedding;
  Split split = Split::kTrain;

  std::size_t length() const { return token_logprobs.size(); }
  double quality_gain() const { return large_quality - small_quality; }

  friend bool operator==(const ExampleTrace&, const ExampleTrace&) = default;
};

struct Costs {
  double small = 1.0;  // c1
  double large = 1.0;  // c2

  friend bool operator==(const Costs&, const Costs&) = default;
};

struct Dataset {
  TaskKind task_kind = TaskKind::kAccuracy;
  Costs costs;
  std::vector<ExampleTrace> examples;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  std::size_t count(Split split) const;

  // Examples of one split, in dataset order, with the same metadata.
  Dataset subset(Split split) const;

  // Embedding dimensions, 0 when no example carries that embedding.
  std::size_t small_embedding_dim() const;
  std::size_t large_embedding_dim() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Checks every type invariant; throws ParseError (line 0) on violation.
void validate(const Dataset& d);

using WarningSink = std::function<void(std::string_view)>;

struct LoadOptions {
  // Keep only the first N records (head truncation).
  std::optional<std::size_t> max_examples;
  // Receives non-fatal diagnostics; defaults to stderr when empty.
  WarningSink warn;
};

// Reads a line-delimited trace file: one header object then one record per
// line. Either returns a fully validated Dataset or throws.
Dataset load_traces(const std::string& path, const LoadOptions& options = {});
Dataset read_traces(std::istream& in, const LoadOptions& options = {});

void save_traces(const Dataset& d, const std::string& path);
void write_traces(const Dataset& d, std::ostream& out);

// Reassigns examples currently marked train: a seeded Fisher-Yates shuffle,
// then the first round(train_fraction * N) stay train and the rest become
// validation. Test examples are untouched.
Dataset split_dataset(const Dataset& d, double train_fraction, std::uint64_t seed);

struct SplitCounts {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

struct SummaryStats {
  SplitCounts counts;
  double mean_length = 0.0;
  double std_length = 0.0;  // population
  double mean_small_quality = 0.0;
  double mean_large_quality = 0.0;
};

SummaryStats summary_stats(const Dataset& d);

}  // namespace cascade
