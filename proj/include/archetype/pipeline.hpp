#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "archetype/benchgen.hpp"
#include "archetype/core.hpp"
#include "archetype/errors.hpp"
#include "archetype/evaluator.hpp"
#include "archetype/querier.hpp"
#include "archetype/remapper.hpp"
#include "archetype/sampler.hpp"
#include "archetype/serializer.hpp"
#include "archetype/version.hpp"

namespace archetype {

/// Everything the per-column flow needs besides the data itself.
struct AnnotateOptions {
  SamplerConfig sampler;
  SerializerConfig serializer;
  RemapConfig remap;
  GenParams generation;
  int jobs = 0;  // concurrent columns; 0 means backend max_concurrency
};

struct AnnotateOutcome {
  std::vector<Prediction> predictions;  // one per record, in record order
  std::size_t failed_columns = 0;
};

inline void validate_sampler_config(const SamplerConfig& cfg) {
  if (cfg.phi < 1) {
    throw Error(ErrorCode::config, "phi must be at least 1");
  }
}

/// The full single-column flow: sample context, restrict labels for
/// numeric columns, render, enforce the token budget, then query + remap.
inline Prediction annotate_column(const DatasetRecord& record, const LabelSet& labels,
                                  const std::vector<Rule>& rules, Backend& backend,
                                  const Embedder& embedder,
                                  const AnnotateOptions& opts,
                                  QueryLog* log = nullptr) {
  ContextSample context = build_context(record, opts.sampler, labels);
  LabelSet active =
      opts.serializer.numeric_filter ? filter_numeric_labels(labels, context) : labels;
  std::string prompt = render_prompt(opts.serializer.tmpl, context, active);
  prompt = truncate_overflow(prompt, active, opts.serializer);
  RemapConfig remap_cfg = opts.remap;
  remap_cfg.null_label = labels.null_label;
  return remap_pipeline(record, context.samples, prompt, active, remap_cfg, rules,
                        backend, embedder, opts.generation, log);
}

/// Annotates every record, fanning out across up to `jobs` worker threads.
/// Results land in record order regardless of scheduling, and per-column
/// seeding makes the bytes independent of the thread count.  A failing
/// column becomes a null prediction carrying the error text; the run
/// continues.
inline AnnotateOutcome annotate(const std::vector<DatasetRecord>& records,
                                const LabelSet& labels, const std::vector<Rule>& rules,
                                Backend& backend, const Embedder& embedder,
                                const AnnotateOptions& opts, QueryLog* log = nullptr) {
  validate_label_set(labels);
  validate_sampler_config(opts.sampler);
  validate_serializer_config(opts.serializer);
  validate_remap_config(opts.remap);

  AnnotateOutcome outcome;
  outcome.predictions.resize(records.size());
  if (records.empty()) return outcome;

  std::size_t jobs = opts.jobs > 0
                         ? static_cast<std::size_t>(opts.jobs)
                         : static_cast<std::size_t>(
                               std::max(1, backend.config().max_concurrency));
  jobs = std::min(jobs, records.size());

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> failures{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < records.size();
         i = next.fetch_add(1)) {
      try {
        outcome.predictions[i] =
            annotate_column(records[i], labels, rules, backend, embedder, opts, log);
      } catch (const Error& err) {
        Prediction failed;
        failed.column_id = records[i].column_id;
        failed.label = labels.null_label;
        failed.provenance = Provenance::null_fallback;
        failed.error = std::string(error_code_name(err.code())) + ": " + err.what();
        outcome.predictions[i] = std::move(failed);
        failures.fetch_add(1);
      } catch (const std::exception& err) {
        Prediction failed;
        failed.column_id = records[i].column_id;
        failed.label = labels.null_label;
        failed.provenance = Provenance::null_fallback;
        failed.error = std::string("unexpected: ") + err.what();
        outcome.predictions[i] = std::move(failed);
        failures.fetch_add(1);
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(jobs - 1);
  for (std::size_t t = 1; t < jobs; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& thread : pool) thread.join();

  outcome.failed_columns = failures.load();
  return outcome;
}

// ---------------------------------------------------------------------------
// Template sweep
// ---------------------------------------------------------------------------

struct SweepEntry {
  std::string template_id;
  EvalReport report;
  std::size_t failed_columns = 0;
  bool best = false;
};

/// Annotates and scores once per template, returning rows sorted by
/// descending weighted F1 (ties by template id) with the argmax flagged.
/// Requires a labeled dataset.
inline std::vector<SweepEntry> sweep(const std::vector<DatasetRecord>& records,
                                     const LabelSet& labels,
                                     const std::vector<Rule>& rules, Backend& backend,
                                     const Embedder& embedder,
                                     const AnnotateOptions& base_opts,
                                     const std::vector<PromptTemplate>& templates,
                                     QueryLog* log = nullptr) {
  if (templates.empty()) {
    throw Error(ErrorCode::config, "sweep needs at least one template");
  }
  std::vector<SweepEntry> entries;
  entries.reserve(templates.size());
  for (const PromptTemplate& tmpl : templates) {
    AnnotateOptions opts = base_opts;
    opts.serializer.tmpl = tmpl;
    AnnotateOutcome outcome =
        annotate(records, labels, rules, backend, embedder, opts, log);
    SweepEntry entry;
    entry.template_id = tmpl.id;
    entry.report = evaluate(outcome.predictions, records, labels);
    entry.failed_columns = outcome.failed_columns;
    entries.push_back(std::move(entry));
  }
  std::sort(entries.begin(), entries.end(), [](const SweepEntry& a, const SweepEntry& b) {
    if (a.report.weighted_f1 != b.report.weighted_f1) {
      return a.report.weighted_f1 > b.report.weighted_f1;
    }
    return a.template_id < b.template_id;
  });
  entries.front().best = true;
  return entries;
}

// ---------------------------------------------------------------------------
// Cost estimation
// ---------------------------------------------------------------------------

struct CostReport {
  std::size_t columns = 0;
  std::size_t total_tokens = 0;
  double pct_over_1k = 0.0;
  double pct_over_4k = 0.0;
  double pct_over_16k = 0.0;
  double pct_over_window = 0.0;
  std::size_t window = 0;
  double price_per_1k = 0.0;
  double approx_usd = 0.0;
};

/// Renders every prompt (before truncation) and reports how many would
/// overflow common window sizes plus the estimated input-token cost.
inline CostReport estimate_cost(const std::vector<DatasetRecord>& records,
                                const LabelSet& labels, const AnnotateOptions& opts,
                                double price_per_1k, std::size_t window) {
  validate_label_set(labels);
  validate_sampler_config(opts.sampler);
  validate_serializer_config(opts.serializer);

  CostReport report;
  report.columns = records.size();
  report.window = window;
  report.price_per_1k = price_per_1k;
  if (records.empty()) return report;

  std::size_t over_1k = 0;
  std::size_t over_4k = 0;
  std::size_t over_16k = 0;
  std::size_t over_window = 0;
  for (const DatasetRecord& record : records) {
    ContextSample context = build_context(record, opts.sampler, labels);
    LabelSet active = opts.serializer.numeric_filter
                          ? filter_numeric_labels(labels, context)
                          : labels;
    std::string prompt = render_prompt(opts.serializer.tmpl, context, active);
    std::size_t tokens = estimate_tokens(prompt);
    report.total_tokens += tokens;
    if (tokens > 1000) ++over_1k;
    if (tokens > 4000) ++over_4k;
    if (tokens > 16000) ++over_16k;
    if (tokens > window) ++over_window;
  }
  double n = static_cast<double>(records.size());
  report.pct_over_1k = 100.0 * static_cast<double>(over_1k) / n;
  report.pct_over_4k = 100.0 * static_cast<double>(over_4k) / n;
  report.pct_over_16k = 100.0 * static_cast<double>(over_16k) / n;
  report.pct_over_window = 100.0 * static_cast<double>(over_window) / n;
  report.approx_usd =
      static_cast<double>(report.total_tokens) / 1000.0 * price_per_1k;
  return report;
}

inline json cost_report_to_json(const CostReport& report) {
  return json{{"columns", report.columns},
              {"total_tokens", report.total_tokens},
              {"pct_over_1k", report.pct_over_1k},
              {"pct_over_4k", report.pct_over_4k},
              {"pct_over_16k", report.pct_over_16k},
              {"pct_over_window", report.pct_over_window},
              {"window", report.window},
              {"price_per_1k", report.price_per_1k},
              {"approx_usd", report.approx_usd}};
}

// ---------------------------------------------------------------------------
// Fine-tune export
// ---------------------------------------------------------------------------

/// Builds one training example per labeled record.  Gold labels must
/// belong to the label set; records without labels are an input error.
inline std::vector<FinetuneRecord> export_finetune(
    const std::vector<DatasetRecord>& records, const LabelSet& labels,
    const SamplerConfig& sampler) {
  validate_label_set(labels);
  validate_sampler_config(sampler);
  std::vector<FinetuneRecord> out;
  out.reserve(records.size());
  for (const DatasetRecord& record : records) {
    if (!record.label.has_value()) {
      throw Error(ErrorCode::config, "fine-tune export requires a label on column '" +
                                         record.column_id + "'");
    }
    std::optional<std::string> gold = exact_label(labels, *record.label);
    if (!gold.has_value()) {
      throw Error(ErrorCode::config, "column '" + record.column_id + "' label '" +
                                         *record.label +
                                         "' is outside the label set");
    }
    ContextSample context = build_context(record, sampler, labels);
    out.push_back(render_finetune_example(context, *gold));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run manifests
// ---------------------------------------------------------------------------

inline json sampler_config_to_json(const SamplerConfig& cfg) {
  return json{{"phi", cfg.phi},
              {"importance", importance_kind_name(cfg.importance)},
              {"include_table_name", cfg.include_table_name},
              {"include_summary_stats", cfg.include_summary_stats},
              {"include_other_columns", cfg.include_other_columns},
              {"seed", cfg.seed}};
}

inline json serializer_config_to_json(const SerializerConfig& cfg) {
  return json{{"template_id", cfg.tmpl.id},
              {"template_body", cfg.tmpl.body},
              {"context_window", cfg.context_window},
              {"response_cue", cfg.response_cue},
              {"numeric_filter", cfg.numeric_filter}};
}

inline json remap_config_to_json(const RemapConfig& cfg) {
  return json{{"strategy", remap_strategy_name(cfg.strategy)},
              {"k", cfg.k},
              {"null_label", cfg.null_label}};
}

inline json gen_params_to_json(const GenParams& params) {
  return json{{"temperature", params.temperature},
              {"top_p", params.top_p},
              {"repetition_penalty", params.repetition_penalty},
              {"max_tokens", params.max_tokens}};
}

/// Backend knobs as recorded in manifests.  Credentials never appear; only
/// the name of the environment variable that holds them.
inline json backend_config_to_json(const BackendConfig& cfg) {
  return json{{"kind", backend_kind_name(cfg.kind)},
              {"endpoint", cfg.endpoint},
              {"model_name", cfg.model_name},
              {"max_concurrency", cfg.max_concurrency},
              {"timeout_ms", cfg.timeout.count()},
              {"retries", cfg.retries},
              {"send_repetition_penalty", cfg.send_repetition_penalty},
              {"api_key_env", cfg.api_key_env},
              {"script_path", cfg.script_path}};
}

inline std::string utc_timestamp() {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm parts{};
  gmtime_r(&now, &parts);
  char buffer[32];
  std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &parts);
  return buffer;
}

/// Reproducibility sidecar written next to every output file: tool
/// version, inputs, and the complete configuration that produced it.
inline json make_manifest(const std::string& command, const json& inputs,
                          const json& configs) {
  return json{{"tool", kToolName},
              {"version", kToolVersion},
              {"created_utc", utc_timestamp()},
              {"command", command},
              {"inputs", inputs},
              {"configs", configs}};
}

inline std::string manifest_path_for(const std::string& out_path) {
  return out_path + ".manifest.json";
}

inline void write_manifest(const std::string& out_path, const json& manifest) {
  write_file(manifest_path_for(out_path), manifest.dump(2) + "\n");
}

}  // namespace archetype
