#include "cascade/trace.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "cascade/error.hpp"
#include "cascade/io_util.hpp"
#include "cascade/rng.hpp"

namespace cascade {

using nlohmann::json;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "train";
}

std::string_view to_string(TaskKind kind) {
  return kind == TaskKind::kAccuracy ? "accuracy" : "score_diff";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "validation") return Split::kValidation;
  if (name == "test") return Split::kTest;
  throw InvalidArgument("unknown split \"" + std::string(name) + "\"");
}

TaskKind parse_task_kind(std::string_view name) {
  if (name == "accuracy") return TaskKind::kAccuracy;
  if (name == "score_diff") return TaskKind::kScoreDiff;
  throw InvalidArgument("unknown task_kind \"" + std::string(name) + "\"");
}

std::size_t Dataset::count(Split split) const {
  std::size_t n = 0;
  for (const auto& e : examples) n += e.split == split;
  return n;
}

Dataset Dataset::subset(Split split) const {
  Dataset out{task_kind, costs, {}};
  for (const auto& e : examples)
    if (e.split == split) out.examples.push_back(e);
  return out;
}

std::size_t Dataset::small_embedding_dim() const {
  for (const auto& e : examples)
    if (e.small_embedding) return e.small_embedding->size();
  return 0;
}

std::size_t Dataset::large_embedding_dim() const {
  for (const auto& e : examples)
    if (e.large_intermediate_embedding) return e.large_intermediate_embedding->size();
  return 0;
}

namespace {

constexpr double kScoreMin = -1.0;
constexpr double kScoreMax = 1.5;

void default_warn(std::string_view msg) { std::cerr << "warning: " << msg << '\n'; }

std::string at_line(std::size_t line) {
  return line ? " at line " + std::to_string(line) : std::string();
}

// Incremental validator shared by the loader and validate().
class Validator {
 public:
  Validator(TaskKind kind, const WarningSink& warn) : kind_(kind), warn_(warn) {}

  void check(const ExampleTrace& e, std::size_t line) {
    if (e.id.empty()) throw ParseError("empty id" + at_line(line), line);
    if (!ids_.insert(e.id).second)
      throw ParseError("duplicate id \"" + e.id + "\"" + at_line(line), line);
    if (e.token_logprobs.empty())
      throw ParseError("empty token sequence" + at_line(line), line);
    for (double lp : e.token_logprobs) {
      if (!std::isfinite(lp))
        throw ParseError("non-finite token logprob" + at_line(line), line);
      if (lp > 0.0)
        throw ParseError("positive token logprob" + at_line(line), line);
    }
    check_quality(e.small_quality, "small_quality", line);
    check_quality(e.large_quality, "large_quality", line);
    check_embedding(e.small_embedding, small_dim_, "small_embedding", line);
    check_embedding(e.large_intermediate_embedding, large_dim_,
                    "large_intermediate_embedding", line);
  }

 private:
  void check_quality(double q, const char* field, std::size_t line) {
    if (!std::isfinite(q))
      throw ParseError(std::string("non-finite ") + field + at_line(line), line);
    if (kind_ == TaskKind::kAccuracy) {
      if (q != 0.0 && q != 1.0)
        throw ParseError(std::string(field) + " out of range for accuracy task" +
                             at_line(line),
                         line);
    } else if (q < kScoreMin || q > kScoreMax) {
      warn_(std::string(field) + " outside [-1, 1.5]" + at_line(line));
    }
  }

  static void check_embedding(const std::optional<std::vector<double>>& emb,
                              std::optional<std::size_t>& dim, const char* field,
                              std::size_t line) {
    if (!emb) return;
    for (double v : *emb)
      if (!std::isfinite(v))
        throw ParseError(std::string("non-finite value in ") + field + at_line(line),
                         line);
    if (!dim) {
      dim = emb->size();
    } else if (*dim != emb->size()) {
      throw ParseError("inconsistent embedding dimension for " + std::string(field) +
                           ": " + std::to_string(emb->size()) + " vs " +
                           std::to_string(*dim) + at_line(line),
                       line);
    }
  }

  TaskKind kind_;
  const WarningSink& warn_;
  std::unordered_set<std::string> ids_;
  std::optional<std::size_t> small_dim_;
  std::optional<std::size_t> large_dim_;
};

std::vector<double> number_array(const json& j, const char* field, std::size_t line) {
  if (!j.is_array())
    throw ParseError(std::string("field ") + field + " must be an array" + at_line(line),
                     line);
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number())
      throw ParseError(std::string("non-numeric entry in ") + field + at_line(line),
                       line);
    out.push_back(v.get<double>());
  }
  return out;
}

double number_field(const json& obj, const char* field, std::size_t line) {
  auto it = obj.find(field);
  if (it == obj.end())
    throw ParseError(std::string("missing field ") + field + at_line(line), line);
  if (!it->is_number())
    throw ParseError(std::string("field ") + field + " must be a number" + at_line(line),
                     line);
  return it->get<double>();
}

ExampleTrace parse_record(const json& obj, std::size_t line) {
  static const std::unordered_set<std::string> kKnown = {
      "id", "token_logprobs", "small_quality", "large_quality",
      "small_embedding", "large_intermediate_embedding", "split"};
  if (!obj.is_object()) throw ParseError("record is not an object" + at_line(line), line);
  for (const auto& [key, _] : obj.items())
    if (!kKnown.contains(key))
      throw ParseError("unknown field \"" + key + "\"" + at_line(line), line);

  ExampleTrace e;
  auto id = obj.find("id");
  if (id == obj.end() || !id->is_string())
    throw ParseError("missing or non-string id" + at_line(line), line);
  e.id = id->get<std::string>();
  auto lp = obj.find("token_logprobs");
  if (lp == obj.end()) throw ParseError("missing field token_logprobs" + at_line(line), line);
  e.token_logprobs = number_array(*lp, "token_logprobs", line);
  e.small_quality = number_field(obj, "small_quality", line);
  e.large_quality = number_field(obj, "large_quality", line);
  if (auto it = obj.find("small_embedding"); it != obj.end())
    e.small_embedding = number_array(*it, "small_embedding", line);
  if (auto it = obj.find("large_intermediate_embedding"); it != obj.end())
    e.large_intermediate_embedding =
        number_array(*it, "large_intermediate_embedding", line);
  if (auto it = obj.find("split"); it != obj.end()) {
    if (!it->is_string()) throw ParseError("split must be a string" + at_line(line), line);
    try {
      e.split = parse_split(it->get<std::string>());
    } catch (const InvalidArgument& err) {
      throw ParseError(err.what() + at_line(line), line);
    }
  }
  return e;
}

json record_json(const ExampleTrace& e) {
  json j;
  j["id"] = e.id;
  j["token_logprobs"] = e.token_logprobs;
  j["small_quality"] = e.small_quality;
  j["large_quality"] = e.large_quality;
  if (e.small_embedding) j["small_embedding"] = *e.small_embedding;
  if (e.large_intermediate_embedding)
    j["large_intermediate_embedding"] = *e.large_intermediate_embedding;
  j["split"] = std::string(to_string(e.split));
  return j;
}

bool blank(const std::string& s) {
  return s.find_first_not_of(" \t\r\n") == std::string::npos;
}

}  // namespace

void validate(const Dataset& d) {
  if (!(d.costs.small > 0.0) || !(d.costs.large > 0.0))
    throw ParseError("costs c1 and c2 must be positive");
  const WarningSink warn = default_warn;
  Validator v(d.task_kind, warn);
  for (const auto& e : d.examples) v.check(e, 0);
}

Dataset read_traces(std::istream& in, const LoadOptions& options) {
  const WarningSink warn = options.warn ? options.warn : WarningSink(default_warn);
  Dataset d;
  std::string text;
  std::size_t line = 0;
  bool have_header = false;
  std::optional<Validator> validator;

  while (std::getline(in, text)) {
    ++line;
    if (blank(text)) continue;
    json obj;
    try {
      obj = json::parse(text);
    } catch (const json::parse_error&) {
      throw ParseError("malformed record" + at_line(line), line);
    }
    if (!have_header) {
      if (!obj.is_object() || !obj.contains("task_kind"))
        throw ParseError("missing header line with task_kind, c1, c2" + at_line(line), line);
      for (const auto& [key, _] : obj.items())
        if (key != "task_kind" && key != "c1" && key != "c2")
          throw ParseError("unknown header field \"" + key + "\"" + at_line(line), line);
      if (!obj["task_kind"].is_string())
        throw ParseError("task_kind must be a string" + at_line(line), line);
      try {
        d.task_kind = parse_task_kind(obj["task_kind"].get<std::string>());
      } catch (const InvalidArgument& err) {
        throw ParseError(err.what() + at_line(line), line);
      }
      d.costs.small = number_field(obj, "c1", line);
      d.costs.large = number_field(obj, "c2", line);
      if (!(d.costs.small > 0.0) || !(d.costs.large > 0.0))
        throw ParseError("costs c1 and c2 must be positive" + at_line(line), line);
      validator.emplace(d.task_kind, warn);
      have_header = true;
      continue;
    }
    if (options.max_examples && d.examples.size() >= *options.max_examples) break;
    ExampleTrace e = parse_record(obj, line);
    validator->check(e, line);
    d.examples.push_back(std::move(e));
  }
  if (!have_header) throw ParseError("empty trace file");
  return d;
}

Dataset load_traces(const std::string& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace file " + path);
  return read_traces(in, options);
}

void write_traces(const Dataset& d, std::ostream& out) {
  json header;
  header["task_kind"] = std::string(to_string(d.task_kind));
  header["c1"] = d.costs.small;
  header["c2"] = d.costs.large;
  out << header.dump() << '\n';
  for (const auto& e : d.examples) out << record_json(e).dump() << '\n';
}

void save_traces(const Dataset& d, const std::string& path) {
  std::ostringstream buf;
  write_traces(d, buf);
  write_file_atomic(path, buf.str());
}

Dataset split_dataset(const Dataset& d, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw InvalidArgument("train_fraction must lie strictly between 0 and 1");
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d.examples[i].split == Split::kTrain) pool.push_back(i);
  if (pool.size() < 2)
    throw InvalidArgument("split_dataset needs at least 2 train examples");

  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(pool));
  const auto n_train = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(pool.size())));

  Dataset out = d;
  for (std::size_t k = 0; k < pool.size(); ++k)
    out.examples[pool[k]].split = k < n_train ? Split::kTrain : Split::kValidation;
  return out;
}

SummaryStats summary_stats(const Dataset& d) {
  if (d.empty()) throw InvalidArgument("summary_stats of an empty dataset");
  SummaryStats s;
  const double n = static_cast<double>(d.size());
  double len_sum = 0.0, small_sum = 0.0, large_sum = 0.0;
  for (const auto& e : d.examples) {
    switch (e.split) {
      case Split::kTrain: ++s.counts.train; break;
      case Split::kValidation: ++s.counts.validation; break;
      case Split::kTest: ++s.counts.test; break;
    }
    len_sum += static_cast<double>(e.length());
    small_sum += e.small_quality;
    large_sum += e.large_quality;
  }
  s.mean_length = len_sum / n;
  double sq = 0.0;
  for (const auto& e : d.examples) {
    const double dev = static_cast<double>(e.length()) - s.mean_length;
    sq += dev * dev;
  }
  s.std_length = std::sqrt(sq / n);
  s.mean_small_quality = small_sum / n;
  s.mean_large_quality = large_sum / n;
  return s;
}

}  // namespace cascade
