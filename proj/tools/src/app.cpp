#include <CLI11.hpp>

#include <ostream>

#include "cascade/cli/commands.hpp"
#include "cascade/io_util.hpp"

namespace cascade::cli {

namespace {

template <typename T>
void set_if(const std::optional<T>& v, T& target) {
  if (v) target = *v;
}

struct SynthFlags {
  std::optional<std::string> config_file;
  std::optional<std::size_t> n_examples, length_min, length_max, small_embed_dim, large_embed_dim;
  std::optional<double> length_shape, repetition_rate, signal_strength, noise, small_error_rate,
      large_error_rate, test_fraction, c1, c2;
  std::optional<std::string> signal, task_kind;
  std::optional<std::uint64_t> seed;

  SynthConfig resolve() const {
    SynthConfig c;
    if (config_file) {
      try {
        c = synth_config_from_json(read_file(*config_file));
      } catch (const IoError& e) {
        throw InputError(e.what());
      }
    }
    set_if(n_examples, c.n_examples);
    set_if(length_min, c.length.min);
    set_if(length_max, c.length.max);
    set_if(length_shape, c.length.shape);
    set_if(repetition_rate, c.repetition_rate);
    if (signal) c.signal = parse_signal(*signal);
    set_if(signal_strength, c.signal_strength);
    set_if(noise, c.noise);
    set_if(seed, c.seed);
    if (task_kind) c.task_kind = parse_task_kind(*task_kind);
    set_if(small_error_rate, c.small_error_rate);
    set_if(large_error_rate, c.large_error_rate);
    set_if(test_fraction, c.test_fraction);
    set_if(small_embed_dim, c.small_embed_dim);
    set_if(large_embed_dim, c.large_embed_dim);
    set_if(c1, c.costs.small);
    set_if(c2, c.costs.large);
    return c;
  }
};

const char* const kSplitHelp = "Split to evaluate: auto (test if present, else all), train, validation, test, all";

}  // namespace

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deferral-rule evaluation for two-model language-model cascades", "cascade"};
  app.require_subcommand(1);
  app.set_version_flag("--version", tool_version());

  SynthFlags sf;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic trace file");
  synth->add_option("--output-dir", synth_out, "Directory for traces.jsonl and manifest.json")->required();
  synth->add_option("--config", sf.config_file, "JSON config file; flags override its fields");
  synth->add_option("--n-examples", sf.n_examples);
  synth->add_option("--length-min", sf.length_min);
  synth->add_option("--length-max", sf.length_max);
  synth->add_option("--length-shape", sf.length_shape);
  synth->add_option("--repetition-rate", sf.repetition_rate);
  synth->add_option("--signal", sf.signal, "min_token, length, short_uncertain or none");
  synth->add_option("--signal-strength", sf.signal_strength);
  synth->add_option("--noise", sf.noise);
  synth->add_option("--seed", sf.seed);
  synth->add_option("--task-kind", sf.task_kind, "accuracy or score_diff");
  synth->add_option("--small-error-rate", sf.small_error_rate);
  synth->add_option("--large-error-rate", sf.large_error_rate);
  synth->add_option("--test-fraction", sf.test_fraction);
  synth->add_option("--small-embed-dim", sf.small_embed_dim);
  synth->add_option("--large-embed-dim", sf.large_embed_dim);
  synth->add_option("--c1", sf.c1, "Small-model cost");
  synth->add_option("--c2", sf.c2, "Large-model cost");

  EvalOptions eo;
  auto* eval = app.add_subcommand("eval", "Deferral curves and the AUC-DF table");
  eval->add_option("--input", eo.input)->required();
  eval->add_option("--output-dir", eo.output_dir)->required();
  eval->add_option("--rules", eo.rules,
                   "Comma list: chow-sum, chow-average, chow-quantile@A, oracle, random, model:PATH")
      ->delimiter(',');
  eval->add_option("--split", eo.split, kSplitHelp);
  eval->add_option("--max-examples", eo.max_examples);

  TrainOptions to;
  bool no_normalize = false;
  auto* trn = app.add_subcommand("train", "Train a post-hoc deferral model");
  trn->add_option("--input", to.input)->required();
  trn->add_option("--output-dir", to.output_dir)->required();
  trn->add_option("--variant", to.variant,
                  "quantile, embed1, embed12, padded-prob, sorted-padded-prob (or a post-hoc-* name)");
  trn->add_option("--seed", to.seed, "Seed for the train/validation split and a single run");
  trn->add_option("--seeds", to.seeds, "Comma list of run seeds")->delimiter(',');
  trn->add_option("--train-fraction", to.train_fraction)->check(CLI::Range(0.0, 1.0));
  trn->add_option("--epochs", to.epochs);
  trn->add_option("--batch-size", to.batch_size)->check(CLI::PositiveNumber);
  trn->add_option("--lr", to.lr)->check(CLI::PositiveNumber);
  trn->add_flag("--no-normalize", no_normalize, "Feed raw features to the MLP");
  trn->add_option("--layers", to.layers, "Weight layers, output included");
  trn->add_option("--hidden-units", to.hidden_units);
  trn->add_option("--max-examples", to.max_examples);

  CurveOptions co;
  auto* curve = app.add_subcommand("curve", "Export one rule's deferral and cost curves");
  curve->add_option("--input", co.input)->required();
  curve->add_option("--output-dir", co.output_dir)->required();
  curve->add_option("--rule", co.rule);
  curve->add_option("--split", co.split, kSplitHelp);
  curve->add_option("--max-examples", co.max_examples);

  ReportOptions ro;
  auto* report = app.add_subcommand("report", "Length-bias, token-profile and golden-label report");
  report->add_option("--input", ro.input)->required();
  report->add_option("--output-dir", ro.output_dir)->required();
  report->add_option("--rules", ro.rules)->delimiter(',');
  report->add_option("--split", ro.split, kSplitHelp);
  report->add_option("--max-examples", ro.max_examples);

  std::vector<std::string> args(argv.begin() + (argv.empty() ? 0 : 1), argv.end());
  std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  const Invocation inv{argv, &out, &err};
  try {
    if (*synth) cmd_synth({sf.resolve(), synth_out}, inv);
    if (*eval) cmd_eval(eo, inv);
    if (*trn) {
      to.normalize = !no_normalize;
      cmd_train(to, inv);
    }
    if (*curve) cmd_curve(co, inv);
    if (*report) cmd_report(ro, inv);
  } catch (const UnknownRuleError& e) {
    err << "error: " << e.what() << "\n";
    return kUnknownRule;
  } catch (const MissingEmbeddingError& e) {
    err << "error: " << e.what() << "\n";
    return kMissingEmbeddings;
  } catch (const OutputError& e) {
    err << "error: " << e.what() << "\n";
    return kUnwritableOutput;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kBadInput;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kBadInput;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}

}  // namespace cascade::cli
