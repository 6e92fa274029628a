#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cascade/error.hpp"
#include "cascade/synth.hpp"

namespace cascade::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kUnknownRule = 3,
  kMissingEmbeddings = 4,
  kUnwritableOutput = 5,
  kBadInput = 6,
};

class UnknownRuleError : public Error {
 public:
  using Error::Error;
};

class OutputError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

// Shared by every command; argv is recorded verbatim in the manifest.
struct Invocation {
  std::vector<std::string> argv;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
};

struct SynthOptions {
  SynthConfig config;
  std::string output_dir;
};

struct EvalOptions {
  std::string input;
  std::string output_dir;
  std::vector<std::string> rules;  // empty: default grid
  std::string split = "auto";      // auto, train, validation, test, all
  std::optional<std::size_t> max_examples;
};

struct TrainOptions {
  std::string input;
  std::string output_dir;
  std::string variant = "quantile";
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;  // empty: just `seed`
  double train_fraction = 0.8;
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  double lr = 1e-5;
  bool normalize = true;
  std::optional<std::size_t> layers;
  std::optional<std::size_t> hidden_units;
  std::optional<std::size_t> max_examples;
};

struct CurveOptions {
  std::string input;
  std::string output_dir;
  std::string rule = "chow-sum";
  std::string split = "auto";
  std::optional<std::size_t> max_examples;
};

struct ReportOptions {
  std::string input;
  std::string output_dir;
  std::vector<std::string> rules;
  std::string split = "auto";
  std::optional<std::size_t> max_examples;
};

void cmd_synth(const SynthOptions& o, const Invocation& inv);
void cmd_eval(const EvalOptions& o, const Invocation& inv);
void cmd_train(const TrainOptions& o, const Invocation& inv);
void cmd_curve(const CurveOptions& o, const Invocation& inv);
void cmd_report(const ReportOptions& o, const Invocation& inv);

// Parses argv (argv[0] is the program name), runs the subcommand and maps
// failures to exit codes. Errors go to `err`.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

std::string tool_version();

}  // namespace cascade::cli
