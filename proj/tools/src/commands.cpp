#include "cascade/cli/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "cascade/cli/manifest.hpp"
#include "cascade/eval.hpp"
#include "cascade/features.hpp"
#include "cascade/io_util.hpp"
#include "cascade/posthoc.hpp"
#include "cascade/trace.hpp"

namespace cascade::cli {

using nlohmann::json;
namespace fs = std::filesystem;

std::string tool_version() {
#ifdef CASCADE_VERSION
  return CASCADE_VERSION;
#else
  return "unknown";
#endif
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// Collects outputs under one directory and finishes with manifest.json.
class OutputDir {
 public:
  explicit OutputDir(std::string dir) : dir_(std::move(dir)) {
    if (dir_.empty()) throw InvalidArgument("--output-dir is required");
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec || !fs::is_directory(dir_))
      throw OutputError("cannot create output directory " + dir_);
    const std::string probe = (fs::path(dir_) / ".write-test").string();
    {
      std::ofstream f(probe);
      if (!f) throw OutputError("output directory " + dir_ + " is not writable");
    }
    fs::remove(probe, ec);
  }

  std::string write(const std::string& name, std::string_view contents) {
    const fs::path path = fs::path(dir_) / name;
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    try {
      write_file_atomic(path.string(), contents);
    } catch (const IoError& e) {
      throw OutputError(e.what());
    }
    manifest.outputs.push_back({path.string(), sha256_hex(contents), contents.size()});
    return path.string();
  }

  void finish(const Invocation& inv, const std::string& command) {
    manifest.command = command;
    manifest.argv = inv.argv;
    manifest.tool_version = tool_version();
    std::sort(manifest.outputs.begin(), manifest.outputs.end(),
              [](const FileDigest& a, const FileDigest& b) { return a.path < b.path; });
    const fs::path path = fs::path(dir_) / "manifest.json";
    try {
      write_file_atomic(path.string(), to_json(manifest).dump(1) + "\n");
    } catch (const IoError& e) {
      throw OutputError(e.what());
    }
  }

  RunManifest manifest;

 private:
  std::string dir_;
};

Dataset load_input(const std::string& path, std::optional<std::size_t> max_examples,
                   const Invocation& inv, RunManifest& manifest) {
  if (path.empty()) throw InvalidArgument("--input is required");
  LoadOptions opt;
  opt.max_examples = max_examples;
  opt.warn = [&](std::string_view msg) {
    if (inv.err) *inv.err << "warning: " << msg << "\n";
  };
  try {
    Dataset d = load_traces(path, opt);
    manifest.inputs.push_back(digest_file(path));
    return d;
  } catch (const IoError& e) {
    throw InputError(e.what());
  }
}

std::string resolve_split(const Dataset& d, const std::string& split) {
  if (split == "auto") return d.count(Split::kTest) > 0 ? "test" : "all";
  if (split == "all" || split == "train" || split == "validation" || split == "test") return split;
  throw InvalidArgument("unknown split \"" + split + "\"");
}

Dataset select_split(const Dataset& d, const std::string& resolved) {
  if (resolved == "all") return d;
  Dataset out = d.subset(parse_split(resolved));
  if (out.empty()) throw InvalidArgument("the " + resolved + " split is empty");
  return out;
}

// File-name-safe form of a rule name.
std::string slug(const std::string& name) {
  std::string s = name;
  for (char& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '@' || c == '+' ||
          c == '-' || c == '_'))
      c = '_';
  return s;
}

enum class RuleKind { kBuiltin, kOracle, kRandom, kModel };

struct Rule {
  RuleKind kind = RuleKind::kBuiltin;
  std::string token;  // as given on the command line
  std::string name;   // row label
  ScoreRule builtin;
  std::string model_path;
  std::optional<PostHocModel> model;
};

std::vector<std::string> default_rule_tokens() {
  std::vector<std::string> out{"chow-sum", "chow-average"};
  for (double a : canonical_alphas()) out.push_back(ScoreRule::chow_quantile(a).name());
  return out;
}

Rule parse_rule(const std::string& token, RunManifest& manifest) {
  Rule r;
  r.token = token;
  if (token == "oracle" || token == "random") {
    r.kind = token == "oracle" ? RuleKind::kOracle : RuleKind::kRandom;
    r.name = token;
    return r;
  }
  if (token.starts_with("model:")) {
    r.kind = RuleKind::kModel;
    r.model_path = token.substr(6);
    try {
      r.model = load_model(r.model_path);
    } catch (const IoError& e) {
      throw InputError(e.what());
    }
    manifest.inputs.push_back(digest_file(r.model_path));
    r.name = std::string(method_name(r.model->spec.variant));
    return r;
  }
  try {
    r.builtin = parse_score_rule(token);
  } catch (const InvalidArgument&) {
    throw UnknownRuleError("unknown rule \"" + token + "\"");
  }
  r.name = r.builtin.name();
  return r;
}

// Parses every token, drops exact duplicates and disambiguates model rows
// that share a method name.
std::vector<Rule> parse_rules(const std::vector<std::string>& tokens, RunManifest& manifest) {
  std::vector<Rule> rules;
  for (const auto& t : tokens) {
    if (std::any_of(rules.begin(), rules.end(), [&](const Rule& r) { return r.token == t; }))
      continue;
    rules.push_back(parse_rule(t, manifest));
  }
  std::map<std::string, int> uses;
  for (const auto& r : rules) ++uses[r.name];
  for (auto& r : rules)
    if (r.kind == RuleKind::kModel && uses[r.name] > 1)
      r.name += ":" + fs::path(r.model_path).stem().string();
  return rules;
}

std::optional<ScoreVector> rule_scores(const Rule& r, const Dataset& d) {
  switch (r.kind) {
    case RuleKind::kBuiltin: return score_dataset(d, r.builtin);
    case RuleKind::kOracle: return oracle_scores(d);
    case RuleKind::kModel: return predict_scores(*r.model, d);
    case RuleKind::kRandom: return std::nullopt;
  }
  return std::nullopt;
}

DeferralCurve rule_curve(const Rule& r, const Dataset& d) {
  if (r.kind == RuleKind::kRandom) return random_curve(d);
  if (r.kind == RuleKind::kOracle) return oracle_curve(d);
  return deferral_curve(d, *rule_scores(r, d));
}

std::string cost_csv(const std::vector<CostPoint>& pts) {
  std::string out = "deferral_rate,expected_cost\n";
  for (const auto& p : pts)
    out += format_double(p.deferral_rate) + "," + format_double(p.expected_cost) + "\n";
  return out;
}

}  // namespace

void cmd_synth(const SynthOptions& o, const Invocation& inv) {
  OutputDir out(o.output_dir);
  const Dataset d = generate(o.config);
  std::ostringstream text;
  write_traces(d, text);
  const std::string path = out.write("traces.jsonl", text.str());
  out.manifest.config = json::parse(synth_config_to_json(o.config));
  out.manifest.seeds = {o.config.seed};
  out.finish(inv, "synth");
  if (inv.out) *inv.out << "wrote " << d.size() << " examples to " << path << "\n";
}

void cmd_eval(const EvalOptions& o, const Invocation& inv) {
  OutputDir out(o.output_dir);
  const Dataset all = load_input(o.input, o.max_examples, inv, out.manifest);
  const std::string split = resolve_split(all, o.split);
  const Dataset d = select_split(all, split);

  std::vector<std::string> tokens = o.rules.empty() ? default_rule_tokens() : o.rules;
  tokens.push_back("oracle");
  tokens.push_back("random");
  const auto rules = parse_rules(tokens, out.manifest);

  struct Row {
    std::string name;
    double auc;
  };
  std::vector<Row> rows;
  const double random = random_baseline_auc(d);
  for (const auto& r : rules) {
    const auto curve = rule_curve(r, d);
    out.write("curves/" + slug(r.name) + ".csv", format_curve(curve));
    rows.push_back({r.name, curve.auc_df});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.auc != b.auc) return a.auc > b.auc;
    return a.name < b.name;
  });

  std::string csv = "rule,auc_df,percent_vs_random\n";
  json table = json::array();
  for (const auto& row : rows) {
    const auto pct = percent_change(row.auc, random);
    csv += row.name + "," + format_double(row.auc) + "," + (pct ? format_double(*pct) : "") + "\n";
    table.push_back({{"rule", row.name}, {"auc_df", row.auc}, {"percent_vs_random", optional_json(pct)}});
  }
  out.write("auc_table.csv", csv);

  std::vector<std::string> resolved;
  for (const auto& r : rules) resolved.push_back(r.token);
  out.manifest.config = {{"input", o.input},
                         {"split", split},
                         {"rules", resolved},
                         {"max_examples", o.max_examples ? json(*o.max_examples) : json(nullptr)},
                         {"examples_evaluated", d.size()}};
  out.finish(inv, "eval");

  if (inv.out) {
    auto& s = *inv.out;
    s << "split " << split << ", " << d.size() << " examples\n";
    for (const auto& row : rows) {
      const auto pct = percent_change(row.auc, random);
      char line[256];
      std::snprintf(line, sizeof(line), "%-32s %.6f  %+.2f%%\n", row.name.c_str(), row.auc,
                    pct.value_or(0.0));
      s << line;
    }
  }
}

namespace {

FeatureVariant parse_variant(const std::string& name) {
  try {
    return parse_feature_variant(name);
  } catch (const InvalidArgument&) {
    return parse_method_name(name);
  }
}

}  // namespace

void cmd_train(const TrainOptions& o, const Invocation& inv) {
  OutputDir out(o.output_dir);
  const FeatureVariant variant = parse_variant(o.variant);
  const Dataset loaded = load_input(o.input, o.max_examples, inv, out.manifest);
  const bool presplit = loaded.count(Split::kValidation) > 0;
  const Dataset d = presplit ? loaded : split_dataset(loaded, o.train_fraction, o.seed);

  FeatureSpec spec;
  spec.variant = variant;
  spec = resolve_spec(spec, d);
  build_features(d, spec);  // missing embeddings fail here, before any seed runs
  nn::MlpConfig mlp = default_mlp_config(variant, spec.width());
  if (o.layers) mlp.num_layers = *o.layers;
  if (o.hidden_units) mlp.hidden_units = *o.hidden_units;
  TrainConfig tc;
  tc.epochs = o.epochs;
  tc.batch_size = o.batch_size;
  tc.adam.lr = o.lr;
  tc.normalize = o.normalize;
  const std::vector<std::uint64_t> seeds = o.seeds.empty() ? std::vector{o.seed} : o.seeds;

  const auto result = train_multi_seed(d, spec, mlp, tc, seeds);
  json models = json::array();
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    if (!result.models[k]) continue;
    const std::string name =
        seeds.size() == 1 ? "model.json" : "model-seed-" + std::to_string(seeds[k]) + ".json";
    models.push_back(out.write(name, model_to_json(*result.models[k])));
  }
  out.write("train_report.json", report_to_json(result.report));

  const auto counts = summary_stats(d).counts;
  out.manifest.config = {
      {"input", o.input},
      {"variant", to_string(variant)},
      {"method", method_name(variant)},
      {"split_seed", o.seed},
      {"train_fraction", o.train_fraction},
      {"presplit", presplit},
      {"split_counts",
       {{"train", counts.train}, {"validation", counts.validation}, {"test", counts.test}}},
      {"epochs", o.epochs},
      {"batch_size", o.batch_size},
      {"lr", o.lr},
      {"adam", {{"beta1", tc.adam.beta1}, {"beta2", tc.adam.beta2}, {"epsilon", tc.adam.epsilon}}},
      {"normalize", o.normalize},
      {"num_layers", mlp.num_layers},
      {"hidden_units", mlp.hidden_units},
      {"use_batchnorm", mlp.use_batchnorm},
      {"max_examples", o.max_examples ? json(*o.max_examples) : json(nullptr)},
      {"models", models}};
  out.manifest.seeds = seeds;
  out.finish(inv, "train");

  std::size_t failed = 0;
  for (const auto& r : result.report.runs) {
    if (inv.out) {
      *inv.out << "seed " << r.seed << ": ";
      if (r.error)
        *inv.out << "failed: " << *r.error << "\n";
      else
        *inv.out << "best epoch " << (r.best_epoch ? std::to_string(*r.best_epoch) : "-") << ", "
                 << r.metric << " " << (r.best_val_metric ? format_double(*r.best_val_metric) : "-")
                 << ", test auc_df "
                 << (r.test_auc_df ? format_double(*r.test_auc_df) : "-") << "\n";
    }
    for (const auto& w : r.warnings)
      if (inv.err) *inv.err << "warning (seed " << r.seed << "): " << w << "\n";
    failed += r.error.has_value();
  }
  if (inv.out && result.report.mean_test_auc_df)
    *inv.out << "mean test auc_df " << format_double(*result.report.mean_test_auc_df) << " (std "
             << format_double(*result.report.std_test_auc_df) << ")\n";
  if (failed == seeds.size())
    throw Error("every seed failed; first error: " + *result.report.runs.front().error);
}

void cmd_curve(const CurveOptions& o, const Invocation& inv) {
  OutputDir out(o.output_dir);
  const Dataset all = load_input(o.input, o.max_examples, inv, out.manifest);
  const std::string split = resolve_split(all, o.split);
  const Dataset d = select_split(all, split);
  const auto rules = parse_rules({o.rule}, out.manifest);
  const auto curve = rule_curve(rules.front(), d);
  const std::string base = slug(rules.front().name);
  const std::string path = out.write(base + ".csv", format_curve(curve));
  out.write(base + ".cost.csv", cost_csv(cost_curve(d, curve)));
  out.manifest.config = {{"input", o.input},
                         {"split", split},
                         {"rule", o.rule},
                         {"max_examples", o.max_examples ? json(*o.max_examples) : json(nullptr)},
                         {"costs", {{"c1", d.costs.small}, {"c2", d.costs.large}}}};
  out.finish(inv, "curve");
  if (inv.out)
    *inv.out << rules.front().name << " auc_df " << format_double(curve.auc_df) << " -> " << path
             << "\n";
}

void cmd_report(const ReportOptions& o, const Invocation& inv) {
  OutputDir out(o.output_dir);
  const Dataset all = load_input(o.input, o.max_examples, inv, out.manifest);
  const std::string split = resolve_split(all, o.split);
  const Dataset d = select_split(all, split);
  const auto rules = parse_rules(o.rules.empty() ? default_rule_tokens() : o.rules, out.manifest);

  std::vector<ScoreVector> scores;
  for (const auto& r : rules) {
    auto s = rule_scores(r, d);
    if (!s) throw UnknownRuleError("rule \"" + r.token + "\" has no per-example scores");
    s->name = r.name;
    scores.push_back(std::move(*s));
  }
  const auto bias = length_bias_report(d, scores);
  const auto labels = golden_labels(d);

  json rows = json::array();
  for (std::size_t k = 0; k < scores.size(); ++k) {
    json deciles = json::array();
    for (const auto& m : bias.rows[k].decile_mean_length) deciles.push_back(optional_json(m));
    rows.push_back({{"rule", scores[k].name},
                    {"score_length_correlation", optional_json(bias.rows[k].score_length_correlation)},
                    {"decile_mean_length", deciles},
                    {"golden_auc_roc", optional_json(golden_label_auc_roc(labels, scores[k].values))}});
  }
  const auto stats = summary_stats(d);
  const auto profile = token_position_profile(d);
  std::size_t positives = 0;
  for (int z : labels) positives += z == 1;
  json report{{"split", split},
              {"examples", d.size()},
              {"mean_length", stats.mean_length},
              {"std_length", stats.std_length},
              {"mean_small_quality", stats.mean_small_quality},
              {"mean_large_quality", stats.mean_large_quality},
              {"golden_positive_fraction", static_cast<double>(positives) / d.size()},
              {"gain_length_correlation", optional_json(bias.gain_length_correlation)},
              {"rules", rows},
              {"token_position_profile", profile}};
  out.write("report.json", report.dump(1) + "\n");
  std::string csv = "position,mean_probability\n";
  for (std::size_t i = 0; i < profile.size(); ++i)
    csv += std::to_string(i) + "," + format_double(profile[i]) + "\n";
  out.write("token_profile.csv", csv);

  std::vector<std::string> resolved;
  for (const auto& r : rules) resolved.push_back(r.token);
  out.manifest.config = {{"input", o.input},
                         {"split", split},
                         {"rules", resolved},
                         {"max_examples", o.max_examples ? json(*o.max_examples) : json(nullptr)}};
  out.finish(inv, "report");

  if (inv.out) {
    *inv.out << "split " << split << ", " << d.size() << " examples\n";
    for (const auto& row : rows) {
      const auto& c = row["score_length_correlation"];
      const auto& a = row["golden_auc_roc"];
      char line[256];
      std::snprintf(line, sizeof(line), "%-32s corr(score,len) %s  golden auc-roc %s\n",
                    row["rule"].get<std::string>().c_str(),
                    c.is_null() ? "n/a" : format_double(c.get<double>()).c_str(),
                    a.is_null() ? "n/a" : format_double(a.get<double>()).c_str());
      *inv.out << line;
    }
  }
}

}  // namespace cascade::cli
