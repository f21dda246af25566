#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "archetype/core.hpp"
#include "archetype/errors.hpp"
#include "archetype/sampler.hpp"
#include "archetype/strings.hpp"

namespace archetype {

inline constexpr std::string_view kContextPlaceholder = "<CONTEXT>";
inline constexpr std::string_view kClassnamesPlaceholder = "<CLASSNAMES>";

/// A prompt skeleton.  The body must contain <CONTEXT> and <CLASSNAMES>
/// exactly once each; rendering substitutes both.
struct PromptTemplate {
  std::string id;
  std::string body;
};

inline std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t count = 0;
  std::size_t pos = text.find(needle);
  while (pos != std::string_view::npos) {
    ++count;
    pos = text.find(needle, pos + needle.size());
  }
  return count;
}

inline void validate_template(const PromptTemplate& tmpl) {
  if (tmpl.id.empty()) {
    throw Error(ErrorCode::config, "prompt template id must be nonempty");
  }
  for (std::string_view placeholder : {kContextPlaceholder, kClassnamesPlaceholder}) {
    std::size_t n = count_occurrences(tmpl.body, placeholder);
    if (n != 1) {
      throw Error(ErrorCode::config,
                  "template '" + tmpl.id + "' must contain " + std::string(placeholder) +
                      " exactly once (found " + std::to_string(n) + ")");
    }
  }
}

/// The six built-in prompt styles.  Bodies are frozen verbatim (line wraps
/// normalized to single spaces); note template I's wording and template K's
/// inner quotes are intentional, and template B carries no trailing space.
inline const std::vector<PromptTemplate>& standard_templates() {
  static const std::vector<PromptTemplate> kTemplates = {
      {"C",
       "For the following table column, select a schema.org type annotation from "
       "<CLASSNAMES>. Input column: <CONTEXT>. Output: "},
      {"K",
       "Answer the question based on the task below. If the question cannot be "
       "answered using the information provided, answer with \"I don't know\". "
       "Task: Classify the column given to you into only one of these types: "
       "<CLASSNAMES>. Input column: <CONTEXT>. Type: "},
      {"I",
       "Here is a column from a table: <CONTEXT>. Please select the class from "
       "that best describes the column, from the following options. Options: "
       "<CLASSNAMES> Response: "},
      {"S",
       "Pick the column's class. Column: <CONTEXT>. Classes: <CLASSNAMES>. "
       "Output: "},
      {"N",
       "Pick the column's class. I mean if you want to. It would be cool, I "
       "think. Anyway, give it a try, I guess? Here's the column itself! "
       "<CONTEXT>. And, um, here are some column names you could pick from ... "
       "<CLASSNAMES>. Ok, go ahead! "},
      {"B",
       "INSTRUCTION: Select the option which best describes the input. INPUT: "
       "<CONTEXT> OPTION: <CLASSNAMES> ANSWER:"},
  };
  return kTemplates;
}

inline const PromptTemplate& template_by_id(const std::string& id) {
  for (const PromptTemplate& tmpl : standard_templates()) {
    if (tmpl.id == id) return tmpl;
  }
  throw Error(ErrorCode::config, "unknown template id '" + id + "'");
}

/// Template override file: JSON map from template id to body string.
inline std::vector<PromptTemplate> templates_from_json(const json& doc) {
  if (!doc.is_object() || doc.empty()) {
    throw Error(ErrorCode::parse,
                "template file must hold a nonempty JSON object of id -> body");
  }
  std::vector<PromptTemplate> templates;
  for (const auto& [id, body] : doc.items()) {
    if (!body.is_string()) {
      throw Error(ErrorCode::parse, "template '" + id + "' body must be a string");
    }
    PromptTemplate tmpl{id, body.get<std::string>()};
    validate_template(tmpl);
    templates.push_back(std::move(tmpl));
  }
  return templates;
}

inline std::vector<PromptTemplate> load_templates(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& err) {
    throw Error(ErrorCode::parse,
                "template file " + path + " is not valid JSON: " + err.what());
  }
  return templates_from_json(doc);
}

/// Controls prompt rendering and overflow handling.  `context_window` is
/// the token budget W; `response_cue` is re-appended after truncation;
/// `numeric_filter` gates the numeric-label restriction.
struct SerializerConfig {
  PromptTemplate tmpl = template_by_id("B");
  std::size_t context_window = 2048;
  std::string response_cue = "ANSWER:";
  bool numeric_filter = true;
};

inline void validate_serializer_config(const SerializerConfig& cfg) {
  validate_template(cfg.tmpl);
  if (cfg.context_window < 64) {
    throw Error(ErrorCode::config, "context_window must be at least 64 tokens");
  }
}

// ---------------------------------------------------------------------------
// Numeric label filtering
// ---------------------------------------------------------------------------

/// Restricts the label set to its numeric sublist when every context sample
/// is numeric.  Identity when the context is non-numeric or when no numeric
/// sublist is configured (an empty label set would be unusable).
inline LabelSet filter_numeric_labels(const LabelSet& labels,
                                      const ContextSample& context) {
  if (labels.numeric_labels.empty()) return labels;
  if (!is_numeric_context(context.samples)) return labels;
  std::unordered_set<std::string> numeric;
  for (const std::string& label : labels.numeric_labels) {
    numeric.insert(normalize_text(label));
  }
  LabelSet out;
  out.null_label = labels.null_label;
  out.numeric_labels = labels.numeric_labels;
  for (const std::string& label : labels.labels) {
    if (numeric.count(normalize_text(label))) out.labels.push_back(label);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

/// Serializes the stats block, e.g. 'std: 4.76','mean: 27.52','mode: 25',
/// 'median: 25'.  Zero-shot prompts carry all six fields; the fine-tune
/// input carries the four shown (extended = false).
inline std::string stats_text(const SummaryStats& stats, bool extended) {
  std::vector<std::string> parts = {
      "'std: " + format_stat(stats.std_dev) + "'",
      "'mean: " + format_stat(stats.mean) + "'",
      "'mode: " + format_stat(stats.mode) + "'",
      "'median: " + format_stat(stats.median) + "'",
  };
  if (extended) {
    parts.push_back("'max: " + format_stat(stats.max) + "'");
    parts.push_back("'min: " + format_stat(stats.min) + "'");
  }
  return join(parts, ",");
}

/// The <CONTEXT> substitution: optional table name, stats block, and
/// OC-prefixed other-column samples, followed by the samples themselves,
/// all comma-separated.
inline std::string context_text(const ContextSample& context) {
  std::vector<std::string> parts;
  if (context.table_name.has_value()) {
    parts.push_back("'TABLE NAME: " + *context.table_name + "'");
  }
  if (context.stats.has_value()) {
    parts.push_back(stats_text(*context.stats, /*extended=*/true));
  }
  for (const auto& [origin, value] : context.other_column_samples) {
    parts.push_back("OC" + std::to_string(origin) + ": " + value);
  }
  for (const std::string& sample : context.samples) {
    parts.push_back(sample);
  }
  return join(parts, ", ");
}

inline std::string classnames_text(const LabelSet& labels) {
  return join(labels.labels, ", ");
}

inline std::string replace_once(std::string text, std::string_view placeholder,
                                std::string_view replacement) {
  std::size_t pos = text.find(placeholder);
  if (pos == std::string::npos) return text;
  text.replace(pos, placeholder.size(), replacement);
  return text;
}

inline std::string render_prompt(const PromptTemplate& tmpl,
                                 const ContextSample& context,
                                 const LabelSet& labels) {
  std::string out = replace_once(tmpl.body, kContextPlaceholder, context_text(context));
  return replace_once(std::move(out), kClassnamesPlaceholder, classnames_text(labels));
}

// ---------------------------------------------------------------------------
// Fine-tune export
// ---------------------------------------------------------------------------

inline constexpr std::string_view kFinetuneInstruction =
    "Select the category which best matches the input.";

/// Alpaca-style training example: {instruction, input, output}.
struct FinetuneRecord {
  std::string instruction;
  std::string input;
  std::string output;
};

/// Serializes the context in the training layout: table name, SAMPLES list
/// (other-column samples appended inside it with the OC prefix), then the
/// four-stat block.  No label list appears anywhere.
inline FinetuneRecord render_finetune_example(const ContextSample& context,
                                              const std::string& gold) {
  if (gold.empty()) {
    throw Error(ErrorCode::config, "fine-tune example requires a nonempty gold label");
  }
  std::string input;
  if (context.table_name.has_value()) {
    input += "'TABLE NAME: " + *context.table_name + "', ";
  }
  std::vector<std::string> samples = context.samples;
  for (const auto& [origin, value] : context.other_column_samples) {
    samples.push_back("OC" + std::to_string(origin) + ": " + value);
  }
  input += "SAMPLES: " + join(samples, ", ");
  if (context.stats.has_value()) {
    input += " " + stats_text(*context.stats, /*extended=*/false);
  }
  return FinetuneRecord{std::string(kFinetuneInstruction), input, gold};
}

inline json finetune_record_to_json(const FinetuneRecord& record) {
  return json{{"instruction", record.instruction},
              {"input", record.input},
              {"output", record.output}};
}

inline FinetuneRecord finetune_record_from_json(const json& doc,
                                                std::size_t line_number) {
  auto fail = [&](const std::string& what) -> Error {
    return Error(ErrorCode::parse,
                 "fine-tune line " + std::to_string(line_number) + ": " + what);
  };
  if (!doc.is_object()) throw fail("record must be a JSON object");
  for (const char* key : {"instruction", "input", "output"}) {
    if (!doc.contains(key) || !doc[key].is_string()) {
      throw fail(std::string("missing string key '") + key + "'");
    }
  }
  return FinetuneRecord{doc["instruction"].get<std::string>(),
                        doc["input"].get<std::string>(),
                        doc["output"].get<std::string>()};
}

inline std::string finetune_to_jsonl(const std::vector<FinetuneRecord>& records) {
  std::string out;
  for (const FinetuneRecord& record : records) {
    out += finetune_record_to_json(record).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<FinetuneRecord> finetune_from_jsonl(std::string_view text) {
  std::vector<FinetuneRecord> records;
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
      throw Error(ErrorCode::parse, "fine-tune line " + std::to_string(line_number) +
                                        ": invalid JSON: " + err.what());
    }
    records.push_back(finetune_record_from_json(doc, line_number));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Token estimation and truncation
// ---------------------------------------------------------------------------

/// Conservative token estimate: ASCII letters compress ~4 bytes per token,
/// everything else (digits, punctuation, non-ASCII) ~2 bytes per token.
/// Zero only for empty text; monotone nondecreasing under extension.
inline std::size_t estimate_tokens(std::string_view text) {
  std::size_t alpha = 0;
  std::size_t other = 0;
  for (unsigned char c : text) {
    if (is_ascii_alpha(c)) {
      ++alpha;
    } else {
      ++other;
    }
  }
  return (alpha + 3) / 4 + (other + 1) / 2;
}

inline std::size_t snap_to_utf8_boundary(std::string_view text, std::size_t length) {
  if (length >= text.size()) return text.size();
  // text[length] is the first dropped byte; back off while it is a UTF-8
  // continuation byte so multi-byte sequences are never cut in half.
  while (length > 0 &&
         (static_cast<unsigned char>(text[length]) & 0xC0) == 0x80) {
    --length;
  }
  return length;
}

/// Enforces the token budget.  A prompt within budget passes through
/// unchanged.  Otherwise the context region is cut from the end (later,
/// lower-importance samples go first) and the full class-name list plus the
/// response cue are re-appended verbatim, so the model always sees its
/// options.  The class list is never shortened; if it cannot fit on its
/// own, that is a configuration problem.
inline std::string truncate_overflow(const std::string& prompt, const LabelSet& labels,
                                     const SerializerConfig& cfg) {
  std::size_t budget = cfg.context_window;
  if (estimate_tokens(prompt) <= budget) return prompt;

  std::string tail = classnames_text(labels) + " " + cfg.response_cue;
  if (estimate_tokens(tail) > budget) {
    throw Error(ErrorCode::window_too_small,
                "class names and response cue alone need " +
                    std::to_string(estimate_tokens(tail)) + " tokens but the window is " +
                    std::to_string(budget));
  }

  // Identify the template text that follows the context region; everything
  // from there on is replaced by the canonical tail.  If the prompt was not
  // produced by this template, fall back to treating all of it as head.
  std::string_view head = prompt;
  std::size_t ctx_pos = cfg.tmpl.body.find(kContextPlaceholder);
  if (ctx_pos != std::string::npos) {
    std::string after_ctx = replace_once(
        cfg.tmpl.body.substr(ctx_pos + kContextPlaceholder.size()),
        kClassnamesPlaceholder, classnames_text(labels));
    std::string before_ctx = replace_once(cfg.tmpl.body.substr(0, ctx_pos),
                                          kClassnamesPlaceholder,
                                          classnames_text(labels));
    if (ends_with(prompt, after_ctx) && starts_with(prompt, before_ctx)) {
      head = std::string_view(prompt).substr(0, prompt.size() - after_ctx.size());
    }
  }

  auto fits = [&](std::size_t head_len) {
    std::size_t head_tokens = estimate_tokens(head.substr(0, head_len));
    std::size_t sep_tokens = head_len > 0 ? estimate_tokens(" ") : 0;
    return head_tokens + sep_tokens + estimate_tokens(tail) <= budget;
  };

  std::size_t lo = 0;
  std::size_t hi = head.size();
  while (lo < hi) {  // largest head_len with fits(head_len)
    std::size_t mid = lo + (hi - lo + 1) / 2;
    if (fits(mid)) {
      lo = mid;
    } else {
      hi = mid - 1;
    }
  }
  std::size_t keep = snap_to_utf8_boundary(head, lo);
  std::string result(head.substr(0, keep));
  if (!result.empty()) result += " ";
  result += tail;
  return result;
}

}  // namespace archetype
