#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "archetype/core.hpp"
#include "archetype/errors.hpp"
#include "archetype/querier.hpp"
#include "archetype/rng.hpp"
#include "archetype/strings.hpp"

namespace archetype {

/// Canonicalization applied before any output/label comparison.
inline std::string normalize(std::string_view text) { return normalize_text(text); }

// ---------------------------------------------------------------------------
// Embedders
// ---------------------------------------------------------------------------

/// Maps text to a fixed-dimension vector.  Equal strings embed equally;
/// only the empty string may produce the zero vector.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<double> embed(const std::string& text) const = 0;
  virtual std::size_t dimension() const = 0;
  virtual const char* name() const = 0;
};

/// Deterministic default embedder: counts character trigrams of the
/// normalized, boundary-padded string ("^text$"), hashed into a fixed
/// number of buckets with FNV-1a.  No model dependence, stable across
/// platforms.
class CharTrigramEmbedder : public Embedder {
 public:
  explicit CharTrigramEmbedder(std::size_t dimension = 2048) : dimension_(dimension) {}

  std::vector<double> embed(const std::string& text) const override {
    std::vector<double> vec(dimension_, 0.0);
    std::string folded = normalize_text(text);
    if (folded.empty()) return vec;
    std::string padded = "^" + folded + "$";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
      std::uint64_t hash = fnv1a64(std::string_view(padded).substr(i, 3));
      vec[hash % dimension_] += 1.0;
    }
    return vec;
  }

  std::size_t dimension() const override { return dimension_; }
  const char* name() const override { return "char_trigram_default"; }

 private:
  std::size_t dimension_;
};

inline double cosine_similarity(const std::vector<double>& a,
                                const std::vector<double>& b) {
  double dot = 0.0;
  double norm_a = 0.0;
  double norm_b = 0.0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
    dot += a[i] * b[i];
    norm_a += a[i] * a[i];
    norm_b += b[i] * b[i];
  }
  if (norm_a == 0.0 || norm_b == 0.0) return 0.0;
  return dot / (std::sqrt(norm_a) * std::sqrt(norm_b));
}

// ---------------------------------------------------------------------------
// Contains and similarity remapping
// ---------------------------------------------------------------------------

/// The label whose normalized form equals the normalized output, if any.
inline std::optional<std::string> exact_label(const LabelSet& labels,
                                              const std::string& output) {
  std::string folded = normalize_text(output);
  if (folded.empty()) return std::nullopt;
  for (const std::string& label : labels.labels) {
    if (normalize_text(label) == folded) return label;
  }
  return std::nullopt;
}

/// Substring remapping: exact normalized matches win immediately;
/// otherwise any label where one normalized string contains the other is a
/// candidate and the longest label wins (earlier label-set order breaks
/// ties).  Empty output matches nothing — as a substring it would trivially
/// "match" every label.
inline std::optional<std::string> remap_contains(const std::string& output,
                                                 const LabelSet& labels) {
  std::string folded = normalize_text(output);
  if (folded.empty()) return std::nullopt;

  const std::string* best = nullptr;
  std::size_t best_length = 0;
  for (const std::string& label : labels.labels) {
    std::string folded_label = normalize_text(label);
    if (folded_label == folded) return label;
    bool related = folded.find(folded_label) != std::string::npos ||
                   folded_label.find(folded) != std::string::npos;
    if (related && folded_label.size() > best_length) {
      best = &label;
      best_length = folded_label.size();
    }
  }
  if (best == nullptr) return std::nullopt;
  return *best;
}

/// Nearest-label remapping: exact membership returns the label itself;
/// anything else maps to the label with the highest cosine similarity to
/// the output's embedding (earlier label-set order breaks ties), so a
/// non-empty output always lands on a real label.  Empty output falls back
/// to the null label — there is nothing to embed.
inline std::string remap_similarity(const std::string& output, const LabelSet& labels,
                                    const Embedder& embedder) {
  if (labels.labels.empty()) {
    throw Error(ErrorCode::config, "remap_similarity requires a nonempty label set");
  }
  if (normalize_text(output).empty()) return labels.null_label;
  if (std::optional<std::string> exact = exact_label(labels, output)) return *exact;

  std::vector<double> target = embedder.embed(output);
  const std::string* best = &labels.labels.front();
  double best_score = -2.0;
  for (const std::string& label : labels.labels) {
    double score = cosine_similarity(target, embedder.embed(label));
    if (score > best_score) {
      best_score = score;
      best = &label;
    }
  }
  return *best;
}

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

enum class RemapStrategy { none, contains, similarity, resample, contains_resample };

inline const char* remap_strategy_name(RemapStrategy strategy) {
  switch (strategy) {
    case RemapStrategy::none: return "none";
    case RemapStrategy::contains: return "contains";
    case RemapStrategy::similarity: return "similarity";
    case RemapStrategy::resample: return "resample";
    case RemapStrategy::contains_resample: return "contains_resample";
  }
  return "unknown";
}

inline RemapStrategy remap_strategy_from_name(const std::string& name) {
  if (name == "none") return RemapStrategy::none;
  if (name == "contains") return RemapStrategy::contains;
  if (name == "similarity") return RemapStrategy::similarity;
  if (name == "resample") return RemapStrategy::resample;
  if (name == "contains_resample") return RemapStrategy::contains_resample;
  throw Error(ErrorCode::config, "unknown remap strategy '" + name + "'");
}

struct RemapConfig {
  RemapStrategy strategy = RemapStrategy::contains_resample;
  int k = 3;  // retry budget for the resampling strategies
  std::string null_label = "unknown";
};

inline void validate_remap_config(const RemapConfig& cfg) {
  if ((cfg.strategy == RemapStrategy::resample ||
       cfg.strategy == RemapStrategy::contains_resample) &&
      cfg.k < 1) {
    throw Error(ErrorCode::config, "resampling strategies require k >= 1");
  }
}

struct ResampleOutcome {
  std::string label;
  std::string accepted_output;  // response behind `label`; last response on failure
  int extra_calls = 0;
  bool accepted = false;
};

/// Re-queries with progressively perturbed decoding parameters, up to k
/// extra calls.  Attempt i uses permute_params(base, i).  `resample`
/// accepts only exact label matches; `contains_resample` accepts substring
/// matches too.  Exhaustion yields the null label.  The caller must have
/// already rejected `first_output` (it failed exact match).
inline ResampleOutcome remap_resample(const DatasetRecord& record,
                                      const std::string& prompt,
                                      const std::string& first_output,
                                      const LabelSet& labels, const RemapConfig& cfg,
                                      Backend& backend, const GenParams& base_params,
                                      QueryLog* log = nullptr) {
  validate_remap_config(cfg);
  bool allow_contains = cfg.strategy == RemapStrategy::contains_resample;
  ResampleOutcome outcome;
  outcome.accepted_output = first_output;
  for (int i = 1; i <= cfg.k; ++i) {
    QueryRequest request{record.column_id, i, prompt, permute_params(base_params, i)};
    std::string output = generate(backend, request, log);
    ++outcome.extra_calls;
    outcome.accepted_output = output;
    std::optional<std::string> hit = exact_label(labels, output);
    if (!hit.has_value() && allow_contains) hit = remap_contains(output, labels);
    if (hit.has_value()) {
      outcome.label = *hit;
      outcome.accepted = true;
      return outcome;
    }
  }
  outcome.label = cfg.null_label;
  return outcome;
}

// ---------------------------------------------------------------------------
// Rules
// ---------------------------------------------------------------------------

enum class RuleStage { pre, post };
enum class RuleKind { regex_ratio, lookup_set };

/// A deterministic classifier that can bypass (pre) or override (post) the
/// model: fires when at least match_ratio of the sampled values match its
/// regex or belong to its value set.
struct Rule {
  std::string name;
  std::string label;
  RuleStage stage = RuleStage::pre;
  RuleKind kind = RuleKind::regex_ratio;
  std::string pattern;
  std::vector<std::string> values;
  double match_ratio = 0.8;
  std::shared_ptr<const std::regex> compiled;
  std::shared_ptr<const std::unordered_set<std::string>> value_set;
};

inline Rule rule_from_json(const json& doc, std::size_t index, const LabelSet& labels) {
  std::string fallback_name = "rule #" + std::to_string(index + 1);
  auto fail = [&](const std::string& name, const std::string& what) -> Error {
    return Error(ErrorCode::config, name + ": " + what);
  };
  if (!doc.is_object()) throw fail(fallback_name, "rule must be a JSON object");

  Rule rule;
  rule.name = doc.value("name", fallback_name);
  if (!doc.contains("label") || !doc["label"].is_string()) {
    throw fail(rule.name, "missing string key 'label'");
  }
  rule.label = doc["label"].get<std::string>();
  bool known = false;
  for (const std::string& label : labels.labels) {
    if (normalize_text(label) == normalize_text(rule.label)) {
      rule.label = label;
      known = true;
      break;
    }
  }
  if (!known) {
    throw fail(rule.name, "label '" + rule.label + "' is not in the active label set");
  }

  std::string stage = doc.value("stage", "pre");
  if (stage == "pre") {
    rule.stage = RuleStage::pre;
  } else if (stage == "post") {
    rule.stage = RuleStage::post;
  } else {
    throw fail(rule.name, "stage must be 'pre' or 'post'");
  }

  std::string kind = doc.value("kind", "");
  if (kind == "regex_ratio") {
    rule.kind = RuleKind::regex_ratio;
    if (!doc.contains("pattern") || !doc["pattern"].is_string() ||
        doc["pattern"].get<std::string>().empty()) {
      throw fail(rule.name, "regex_ratio rules need a nonempty 'pattern'");
    }
    rule.pattern = doc["pattern"].get<std::string>();
    try {
      rule.compiled = std::make_shared<const std::regex>(rule.pattern);
    } catch (const std::regex_error& err) {
      throw fail(rule.name,
                 "invalid regex '" + rule.pattern + "': " + err.what());
    }
  } else if (kind == "lookup_set") {
    rule.kind = RuleKind::lookup_set;
    if (!doc.contains("values") || !doc["values"].is_array() || doc["values"].empty()) {
      throw fail(rule.name, "lookup_set rules need a nonempty 'values' array");
    }
    auto set = std::make_shared<std::unordered_set<std::string>>();
    for (const json& value : doc["values"]) {
      if (!value.is_string()) throw fail(rule.name, "'values' must contain strings");
      rule.values.push_back(value.get<std::string>());
      set->insert(rule.values.back());
    }
    rule.value_set = std::move(set);
  } else {
    throw fail(rule.name, "kind must be 'regex_ratio' or 'lookup_set'");
  }

  if (doc.contains("match_ratio")) {
    if (!doc["match_ratio"].is_number()) {
      throw fail(rule.name, "'match_ratio' must be a number");
    }
    rule.match_ratio = doc["match_ratio"].get<double>();
  }
  if (!(rule.match_ratio > 0.0 && rule.match_ratio <= 1.0)) {
    throw fail(rule.name, "'match_ratio' must lie in (0, 1]");
  }
  return rule;
}

inline std::vector<Rule> rules_from_json(const json& doc, const LabelSet& labels) {
  if (!doc.is_array()) {
    throw Error(ErrorCode::parse, "rules file must hold a JSON array");
  }
  std::vector<Rule> rules;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    rules.push_back(rule_from_json(doc[i], i, labels));
  }
  return rules;
}

inline std::vector<Rule> load_rules(const std::string& path, const LabelSet& labels) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& err) {
    throw Error(ErrorCode::parse,
                "rules file " + path + " is not valid JSON: " + err.what());
  }
  return rules_from_json(doc, labels);
}

/// True when at least match_ratio of `values` satisfy the rule's test.
/// Empty input never fires.  The comparison divides rather than multiplies
/// (hits/n >= ratio) so exact boundary fractions like 4/5 vs 0.8 behave
/// correctly in floating point.
inline bool rule_fires(const Rule& rule, const std::vector<std::string>& values) {
  if (values.empty()) return false;
  std::size_t hits = 0;
  for (const std::string& value : values) {
    if (rule.kind == RuleKind::regex_ratio) {
      if (std::regex_search(value, *rule.compiled)) ++hits;
    } else {
      if (rule.value_set->count(value)) ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(values.size()) >=
         rule.match_ratio;
}

/// Runs the rules of one stage, in file order, against the sampled values.
/// The first firing rule decides.  When nothing fires: pre-stage yields
/// absent (the model proceeds), post-stage passes model_label through.
inline std::optional<std::string> apply_rules(
    const std::vector<std::string>& sampled_values, const std::vector<Rule>& rules,
    RuleStage stage, const std::optional<std::string>& model_label) {
  for (const Rule& rule : rules) {
    if (rule.stage != stage) continue;
    if (rule_fires(rule, sampled_values)) return rule.label;
  }
  return stage == RuleStage::pre ? std::nullopt : model_label;
}

/// Record-level variant for callers that have no sampled context.
inline std::optional<std::string> apply_rules(const DatasetRecord& record,
                                              const std::vector<Rule>& rules,
                                              RuleStage stage,
                                              const std::optional<std::string>& model_label) {
  return apply_rules(record.values, rules, stage, model_label);
}

// ---------------------------------------------------------------------------
// Full remap pipeline
// ---------------------------------------------------------------------------

enum class Provenance { pre_rule, exact, contains, resample, similarity, post_rule, null_fallback };

inline const char* provenance_name(Provenance provenance) {
  switch (provenance) {
    case Provenance::pre_rule: return "pre_rule";
    case Provenance::exact: return "exact";
    case Provenance::contains: return "contains";
    case Provenance::resample: return "resample";
    case Provenance::similarity: return "similarity";
    case Provenance::post_rule: return "post_rule";
    case Provenance::null_fallback: return "null";
  }
  return "unknown";
}

inline Provenance provenance_from_name(const std::string& name) {
  if (name == "pre_rule") return Provenance::pre_rule;
  if (name == "exact") return Provenance::exact;
  if (name == "contains") return Provenance::contains;
  if (name == "resample") return Provenance::resample;
  if (name == "similarity") return Provenance::similarity;
  if (name == "post_rule") return Provenance::post_rule;
  if (name == "null") return Provenance::null_fallback;
  throw Error(ErrorCode::parse, "unknown provenance '" + name + "'");
}

/// Final verdict for one column: the raw model output that produced the
/// label, the label itself, which stage decided it, and how many backend
/// calls were spent.  `error` is nonempty when the column failed and the
/// label fell back to null.
struct Prediction {
  std::string column_id;
  std::string raw_output;
  std::string label;
  Provenance provenance = Provenance::null_fallback;
  int attempts = 0;
  std::string error;
};

inline json prediction_to_json(const Prediction& prediction) {
  json doc{{"column_id", prediction.column_id},
           {"raw_output", prediction.raw_output},
           {"label", prediction.label},
           {"provenance", provenance_name(prediction.provenance)},
           {"attempts", prediction.attempts}};
  if (!prediction.error.empty()) doc["error"] = prediction.error;
  return doc;
}

inline Prediction prediction_from_json(const json& doc, std::size_t line_number) {
  auto fail = [&](const std::string& what) -> Error {
    return Error(ErrorCode::parse,
                 "predictions line " + std::to_string(line_number) + ": " + what);
  };
  if (!doc.is_object()) throw fail("prediction must be a JSON object");
  for (const char* key : {"column_id", "raw_output", "label", "provenance"}) {
    if (!doc.contains(key) || !doc[key].is_string()) {
      throw fail(std::string("missing string key '") + key + "'");
    }
  }
  if (!doc.contains("attempts") || !doc["attempts"].is_number_integer()) {
    throw fail("missing integer key 'attempts'");
  }
  Prediction prediction;
  prediction.column_id = doc["column_id"].get<std::string>();
  prediction.raw_output = doc["raw_output"].get<std::string>();
  prediction.label = doc["label"].get<std::string>();
  prediction.provenance = provenance_from_name(doc["provenance"].get<std::string>());
  prediction.attempts = doc["attempts"].get<int>();
  if (doc.contains("error") && doc["error"].is_string()) {
    prediction.error = doc["error"].get<std::string>();
  }
  return prediction;
}

inline std::string predictions_to_jsonl(const std::vector<Prediction>& predictions) {
  std::string out;
  for (const Prediction& prediction : predictions) {
    out += prediction_to_json(prediction).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<Prediction> predictions_from_jsonl(std::string_view text) {
  std::vector<Prediction> predictions;
  std::size_t line_number = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_number;
    if (trim_view(line).empty()) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error& err) {
      throw Error(ErrorCode::parse, "predictions line " + std::to_string(line_number) +
                                        ": invalid JSON: " + err.what());
    }
    predictions.push_back(prediction_from_json(doc, line_number));
  }
  return predictions;
}

inline std::vector<Prediction> load_predictions(const std::string& path) {
  return predictions_from_jsonl(read_file(path));
}

/// The complete remapping decision for one column, in stage order:
/// pre-rules (skip the model entirely), first model call, exact match,
/// the configured strategy, post-rules (override anything), null fallback.
/// `sampled_values` is the context the rules see — pass the sampled
/// context; `prompt` is the serialized prompt used for the first call and
/// any resampling.
inline Prediction remap_pipeline(const DatasetRecord& record,
                                 const std::vector<std::string>& sampled_values,
                                 const std::string& prompt, const LabelSet& labels,
                                 const RemapConfig& cfg, const std::vector<Rule>& rules,
                                 Backend& backend, const Embedder& embedder,
                                 const GenParams& base_params = {},
                                 QueryLog* log = nullptr) {
  validate_remap_config(cfg);
  Prediction prediction;
  prediction.column_id = record.column_id;

  if (std::optional<std::string> pre =
          apply_rules(sampled_values, rules, RuleStage::pre, std::nullopt)) {
    prediction.label = *pre;
    prediction.provenance = Provenance::pre_rule;
    return prediction;
  }

  QueryRequest first{record.column_id, 0, prompt, base_params};
  std::string output = generate(backend, first, log);
  prediction.raw_output = output;
  prediction.attempts = 1;

  std::optional<std::string> candidate;
  Provenance candidate_provenance = Provenance::null_fallback;
  if (std::optional<std::string> exact = exact_label(labels, output)) {
    candidate = exact;
    candidate_provenance = Provenance::exact;
  } else {
    switch (cfg.strategy) {
      case RemapStrategy::none:
        break;
      case RemapStrategy::contains:
        if (std::optional<std::string> hit = remap_contains(output, labels)) {
          candidate = hit;
          candidate_provenance = Provenance::contains;
        }
        break;
      case RemapStrategy::similarity: {
        std::string hit = remap_similarity(output, labels, embedder);
        if (hit != labels.null_label) {
          candidate = hit;
          candidate_provenance = Provenance::similarity;
        }
        break;
      }
      case RemapStrategy::contains_resample:
        if (std::optional<std::string> hit = remap_contains(output, labels)) {
          candidate = hit;
          candidate_provenance = Provenance::contains;
          break;
        }
        [[fallthrough]];
      case RemapStrategy::resample: {
        ResampleOutcome outcome = remap_resample(record, prompt, output, labels, cfg,
                                                 backend, base_params, log);
        prediction.attempts += outcome.extra_calls;
        if (outcome.accepted) {
          candidate = outcome.label;
          candidate_provenance = Provenance::resample;
          prediction.raw_output = outcome.accepted_output;
        }
        break;
      }
    }
  }

  if (std::optional<std::string> post =
          apply_rules(sampled_values, rules, RuleStage::post, std::nullopt)) {
    prediction.label = *post;
    prediction.provenance = Provenance::post_rule;
    return prediction;
  }
  if (candidate.has_value()) {
    prediction.label = *candidate;
    prediction.provenance = candidate_provenance;
    return prediction;
  }
  prediction.label = cfg.null_label;
  prediction.provenance = Provenance::null_fallback;
  return prediction;
}

}  // namespace archetype
