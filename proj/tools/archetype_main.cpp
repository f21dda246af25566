// Command-line front end for the archetype column-annotation library.
//
// Subcommands: annotate, evaluate, sweep, benchgen, export-finetune,
// estimate-cost.  Every file the tool writes gets a sidecar manifest
// (<out>.manifest.json) recording tool version, timestamp, inputs, and the
// full configuration, so a run can be replayed bit-exactly.
//
// Exit codes: 0 success, 1 configuration/input error, 2 when some columns
// failed during annotation (their errors are recorded in the output).

#include <cstdint>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "archetype/archetype.hpp"

namespace {

using namespace archetype;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Flag bundles shared across subcommands
// ---------------------------------------------------------------------------

struct IoFlags {
  std::string dataset;
  std::string labels;
  std::string rules;
  std::string out;
};

struct SamplerFlags {
  std::uint64_t phi = 5;
  std::string importance = "string_length";
  bool include_stats = false;
  bool include_table_name = false;
  bool include_other_columns = false;
  std::uint64_t seed = 0;
};

struct SerializerFlags {
  std::string template_spec = "B";
  std::uint64_t window = 2048;
  bool no_numeric_filter = false;
};

struct BackendFlags {
  std::string backend = "echo";
  std::string model = "generic";
  std::string api_key_env = "ARCHETYPE_API_KEY";
  int max_concurrency = 4;
  int retries = 2;
  std::uint64_t timeout_ms = 30000;
  bool send_repetition_penalty = false;
};

struct RemapFlags {
  std::string strategy = "contains_resample";
  int k = 3;
};

void add_dataset_flag(CLI::App* cmd, IoFlags& io) {
  cmd->add_option("--dataset", io.dataset, "Dataset (JSONL records or CSV table)")
      ->required();
}

void add_labels_flag(CLI::App* cmd, IoFlags& io) {
  cmd->add_option("--labels", io.labels, "Label-set JSON file")->required();
}

void add_out_flag(CLI::App* cmd, IoFlags& io, bool required = true) {
  CLI::Option* opt = cmd->add_option("--out", io.out, "Output file path");
  if (required) opt->required();
}

void add_sampler_flags(CLI::App* cmd, SamplerFlags& flags) {
  cmd->add_option("--phi", flags.phi, "Samples per column")
      ->capture_default_str();
  cmd->add_option("--importance", flags.importance,
                  "Sampling weight: uniform|string_length|classname_priority")
      ->capture_default_str();
  cmd->add_flag("--include-stats,!--no-include-stats", flags.include_stats,
                "Add the summary-statistics block to the context");
  cmd->add_flag("--include-table-name,!--no-include-table-name",
                flags.include_table_name, "Add the table name to the context");
  cmd->add_flag("--include-other-columns,!--no-include-other-columns",
                flags.include_other_columns,
                "Add samples from sibling columns to the context");
  cmd->add_option("--seed", flags.seed, "Base RNG seed")->capture_default_str();
}

void add_serializer_flags(CLI::App* cmd, SerializerFlags& flags) {
  cmd->add_option("--template", flags.template_spec,
                  "Prompt template: C|K|I|S|N|B or file:PATH[#ID]")
      ->capture_default_str();
  cmd->add_option("--window", flags.window, "Context window in estimated tokens")
      ->capture_default_str();
  cmd->add_flag("--no-numeric-filter", flags.no_numeric_filter,
                "Keep non-numeric labels even for numeric columns");
}

void add_backend_flags(CLI::App* cmd, BackendFlags& flags) {
  cmd->add_option("--backend", flags.backend,
                  "Model backend: mock:SCRIPT|echo|remote:URL")
      ->capture_default_str();
  cmd->add_option("--model", flags.model, "Model name sent to remote backends")
      ->capture_default_str();
  cmd->add_option("--api-key-env", flags.api_key_env,
                  "Environment variable holding the API key")
      ->capture_default_str();
  cmd->add_option("--max-concurrency", flags.max_concurrency,
                  "In-flight request cap for the backend")
      ->capture_default_str();
  cmd->add_option("--retries", flags.retries,
                  "Transport retries after the first attempt")
      ->capture_default_str();
  cmd->add_option("--timeout-ms", flags.timeout_ms, "Per-request timeout")
      ->capture_default_str();
  cmd->add_flag("--send-repetition-penalty", flags.send_repetition_penalty,
                "Include repetition_penalty in remote request bodies");
}

void add_remap_flags(CLI::App* cmd, RemapFlags& flags) {
  cmd->add_option("--remap", flags.strategy,
                  "Remap strategy: none|contains|similarity|resample|"
                  "contains_resample")
      ->capture_default_str();
  cmd->add_option("--k", flags.k, "Retry budget for resampling strategies")
      ->capture_default_str();
}

// ---------------------------------------------------------------------------
// Flag -> config translation
// ---------------------------------------------------------------------------

SamplerConfig to_sampler_config(const SamplerFlags& flags) {
  SamplerConfig cfg;
  cfg.phi = flags.phi;
  cfg.importance = importance_kind_from_name(flags.importance);
  cfg.include_summary_stats = flags.include_stats;
  cfg.include_table_name = flags.include_table_name;
  cfg.include_other_columns = flags.include_other_columns;
  cfg.seed = flags.seed;
  return cfg;
}

/// Resolves --template.  A bare id picks one of the built-in six; the
/// file:PATH form loads a template file (which must then hold exactly one
/// template), and file:PATH#ID picks one template out of a multi-template
/// file by id.
PromptTemplate resolve_template(const std::string& spec) {
  if (!starts_with(spec, "file:")) return template_by_id(spec);
  std::string rest = spec.substr(5);
  std::string wanted_id;
  if (std::size_t hash = rest.rfind('#'); hash != std::string::npos) {
    wanted_id = rest.substr(hash + 1);
    rest = rest.substr(0, hash);
  }
  std::vector<PromptTemplate> templates = load_templates(rest);
  if (wanted_id.empty()) {
    if (templates.size() != 1) {
      throw Error(ErrorCode::config,
                  "template file '" + rest + "' holds " +
                      std::to_string(templates.size()) +
                      " templates; pick one with file:PATH#ID");
    }
    return templates.front();
  }
  for (const PromptTemplate& tmpl : templates) {
    if (tmpl.id == wanted_id) return tmpl;
  }
  throw Error(ErrorCode::config, "template file '" + rest +
                                     "' has no template with id '" + wanted_id +
                                     "'");
}

/// Resolves --templates for sweep: a comma-separated list of built-in ids,
/// or file:PATH to use every template in the file.
std::vector<PromptTemplate> resolve_template_list(const std::string& spec) {
  if (starts_with(spec, "file:")) return load_templates(spec.substr(5));
  std::vector<PromptTemplate> out;
  std::stringstream stream(spec);
  std::string id;
  while (std::getline(stream, id, ',')) {
    std::string trimmed = trim(id);
    if (!trimmed.empty()) out.push_back(template_by_id(trimmed));
  }
  if (out.empty()) {
    throw Error(ErrorCode::config, "--templates named no templates: '" + spec + "'");
  }
  return out;
}

SerializerConfig to_serializer_config(const SerializerFlags& flags) {
  SerializerConfig cfg;
  cfg.tmpl = resolve_template(flags.template_spec);
  cfg.context_window = flags.window;
  cfg.numeric_filter = !flags.no_numeric_filter;
  return cfg;
}

BackendConfig to_backend_config(const BackendFlags& flags) {
  BackendConfig cfg;
  if (flags.backend == "echo") {
    cfg.kind = BackendKind::echo;
  } else if (starts_with(flags.backend, "mock:")) {
    cfg.kind = BackendKind::scripted_mock;
    cfg.script_path = flags.backend.substr(5);
  } else if (starts_with(flags.backend, "remote:")) {
    cfg.kind = BackendKind::remote_openai_compatible;
    cfg.endpoint = flags.backend.substr(7);
  } else {
    throw Error(ErrorCode::config,
                "unknown backend '" + flags.backend +
                    "'; expected mock:SCRIPT, echo, or remote:URL");
  }
  cfg.model_name = flags.model;
  cfg.api_key_env = flags.api_key_env;
  cfg.max_concurrency = flags.max_concurrency;
  cfg.retries = flags.retries;
  cfg.timeout = std::chrono::milliseconds(flags.timeout_ms);
  cfg.send_repetition_penalty = flags.send_repetition_penalty;
  return cfg;
}

RemapConfig to_remap_config(const RemapFlags& flags) {
  RemapConfig cfg;
  cfg.strategy = remap_strategy_from_name(flags.strategy);
  cfg.k = flags.k;
  return cfg;
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

std::string join_argv(int argc, char** argv) {
  std::string joined;
  for (int i = 0; i < argc; ++i) {
    if (i > 0) joined += ' ';
    joined += argv[i];
  }
  return joined;
}

json io_inputs(const IoFlags& io) {
  json inputs = json::object();
  if (!io.dataset.empty()) inputs["dataset"] = io.dataset;
  if (!io.labels.empty()) inputs["labels"] = io.labels;
  if (!io.rules.empty()) inputs["rules"] = io.rules;
  if (!io.out.empty()) inputs["out"] = io.out;
  return inputs;
}

json annotate_configs(const AnnotateOptions& opts, const BackendConfig& backend) {
  return json{{"sampler", sampler_config_to_json(opts.sampler)},
              {"serializer", serializer_config_to_json(opts.serializer)},
              {"remap", remap_config_to_json(opts.remap)},
              {"generation", gen_params_to_json(opts.generation)},
              {"backend", backend_config_to_json(backend)},
              {"jobs", opts.jobs}};
}

void emit_manifest(const std::string& out_path, const std::string& command,
                   json inputs, const json& configs, const std::string& argv_line) {
  inputs["argv"] = argv_line;
  write_manifest(out_path, make_manifest(command, inputs, configs));
}

std::vector<Rule> maybe_load_rules(const IoFlags& io, const LabelSet& labels) {
  if (io.rules.empty()) return {};
  return load_rules(io.rules, labels);
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int run_annotate(const IoFlags& io, const SamplerFlags& sampler,
                 const SerializerFlags& serializer, const BackendFlags& backend,
                 const RemapFlags& remap, int jobs, const std::string& argv_line) {
  std::vector<DatasetRecord> records = load_dataset(io.dataset);
  LabelSet labels = load_label_set(io.labels);
  std::vector<Rule> rules = maybe_load_rules(io, labels);

  AnnotateOptions opts;
  opts.sampler = to_sampler_config(sampler);
  opts.serializer = to_serializer_config(serializer);
  opts.remap = to_remap_config(remap);
  opts.jobs = jobs;
  BackendConfig backend_cfg = to_backend_config(backend);
  std::unique_ptr<Backend> model = make_backend(backend_cfg);
  CharTrigramEmbedder embedder;

  AnnotateOutcome outcome = annotate(records, labels, rules, *model, embedder, opts);
  write_file(io.out, predictions_to_jsonl(outcome.predictions));
  emit_manifest(io.out, "annotate", io_inputs(io),
                annotate_configs(opts, backend_cfg), argv_line);

  std::cout << "annotated " << outcome.predictions.size() << " columns ("
            << outcome.failed_columns << " failed) -> " << io.out << "\n";
  return outcome.failed_columns > 0 ? 2 : 0;
}

int run_evaluate(const IoFlags& io, const std::string& predictions_path,
                 const std::string& csv_path, const std::string& argv_line) {
  std::vector<Prediction> predictions = load_predictions(predictions_path);
  std::vector<DatasetRecord> records = load_dataset(io.dataset);
  LabelSet labels = load_label_set(io.labels);
  EvalReport report = evaluate(predictions, records, labels);

  json inputs = io_inputs(io);
  inputs["predictions"] = predictions_path;
  json report_json = report_to_json(report);
  if (io.out.empty()) {
    std::cout << report_json.dump(2) << "\n";
  } else {
    write_file(io.out, report_json.dump(2) + "\n");
    emit_manifest(io.out, "evaluate", inputs, json::object(), argv_line);
    std::cout << "weighted_f1 " << report.weighted_f1 << " +/- "
              << report.ci_half_width << " over " << report.n << " columns -> "
              << io.out << "\n";
  }
  if (!csv_path.empty()) {
    write_file(csv_path, report_to_csv(report));
    json csv_inputs = inputs;
    csv_inputs["out"] = csv_path;
    emit_manifest(csv_path, "evaluate", csv_inputs, json::object(), argv_line);
  }
  return 0;
}

int run_sweep(const IoFlags& io, const SamplerFlags& sampler,
              const SerializerFlags& serializer, const BackendFlags& backend,
              const RemapFlags& remap, int jobs, const std::string& templates_spec,
              const std::string& argv_line) {
  std::vector<DatasetRecord> records = load_dataset(io.dataset);
  LabelSet labels = load_label_set(io.labels);
  std::vector<Rule> rules = maybe_load_rules(io, labels);

  AnnotateOptions opts;
  opts.sampler = to_sampler_config(sampler);
  opts.serializer = to_serializer_config(serializer);
  opts.remap = to_remap_config(remap);
  opts.jobs = jobs;
  BackendConfig backend_cfg = to_backend_config(backend);
  std::unique_ptr<Backend> model = make_backend(backend_cfg);
  CharTrigramEmbedder embedder;
  std::vector<PromptTemplate> templates = resolve_template_list(templates_spec);

  std::vector<SweepEntry> entries =
      sweep(records, labels, rules, *model, embedder, opts, templates);

  json rows = json::array();
  for (const SweepEntry& entry : entries) {
    rows.push_back(json{{"template_id", entry.template_id},
                        {"best", entry.best},
                        {"failed_columns", entry.failed_columns},
                        {"report", report_to_json(entry.report)}});
    std::cout << (entry.best ? "* " : "  ") << entry.template_id
              << "  weighted_f1 " << entry.report.weighted_f1 << " +/- "
              << entry.report.ci_half_width << "  accuracy "
              << entry.report.accuracy << "  failed " << entry.failed_columns
              << "\n";
  }
  if (!io.out.empty()) {
    write_file(io.out, rows.dump(2) + "\n");
    json inputs = io_inputs(io);
    inputs["templates"] = templates_spec;
    emit_manifest(io.out, "sweep", inputs, annotate_configs(opts, backend_cfg),
                  argv_line);
  }
  return 0;
}

int run_benchgen(const std::string& pools_path, const BenchSpec& spec,
                 double degenerate_fraction, const std::string& out_path,
                 const std::string& labels_out, const std::string& argv_line) {
  std::vector<ClassPool> pools = load_pools(pools_path);
  std::vector<DatasetRecord> records = generate(pools, spec);
  if (degenerate_fraction > 0.0) {
    records = inject_degenerates(std::move(records), degenerate_fraction, spec.seed);
  }
  save_dataset(out_path, records);

  json inputs = json{{"pools", pools_path}, {"out", out_path}};
  json configs = json{{"n_columns", spec.n_columns},
                      {"length_min", spec.length_min},
                      {"length_max", spec.length_max},
                      {"seed", spec.seed},
                      {"degenerate_fraction", degenerate_fraction}};
  emit_manifest(out_path, "benchgen", inputs, configs, argv_line);

  if (!labels_out.empty()) {
    LabelSet labels = label_set_from_pools(pools);
    write_file(labels_out, label_set_to_json(labels).dump(2) + "\n");
    json label_inputs = inputs;
    label_inputs["out"] = labels_out;
    emit_manifest(labels_out, "benchgen", label_inputs, configs, argv_line);
  }
  std::cout << "generated " << records.size() << " columns -> " << out_path << "\n";
  return 0;
}

int run_export_finetune(const IoFlags& io, const SamplerFlags& sampler,
                        const std::string& argv_line) {
  std::vector<DatasetRecord> records = load_dataset(io.dataset);
  LabelSet labels = load_label_set(io.labels);
  SamplerConfig cfg = to_sampler_config(sampler);
  std::vector<FinetuneRecord> examples = export_finetune(records, labels, cfg);
  write_file(io.out, finetune_to_jsonl(examples));
  emit_manifest(io.out, "export-finetune", io_inputs(io),
                json{{"sampler", sampler_config_to_json(cfg)}}, argv_line);
  std::cout << "exported " << examples.size() << " training examples -> "
            << io.out << "\n";
  return 0;
}

int run_estimate_cost(const IoFlags& io, const SamplerFlags& sampler,
                      const SerializerFlags& serializer, double price_per_1k,
                      std::uint64_t window, const std::string& argv_line) {
  std::vector<DatasetRecord> records = load_dataset(io.dataset);
  LabelSet labels = load_label_set(io.labels);
  AnnotateOptions opts;
  opts.sampler = to_sampler_config(sampler);
  opts.serializer = to_serializer_config(serializer);
  CostReport report = estimate_cost(records, labels, opts, price_per_1k, window);
  json report_json = cost_report_to_json(report);
  if (io.out.empty()) {
    std::cout << report_json.dump(2) << "\n";
  } else {
    write_file(io.out, report_json.dump(2) + "\n");
    json configs = json{{"sampler", sampler_config_to_json(opts.sampler)},
                        {"serializer", serializer_config_to_json(opts.serializer)},
                        {"price_per_1k", price_per_1k},
                        {"window", window}};
    emit_manifest(io.out, "estimate-cost", io_inputs(io), configs, argv_line);
    std::cout << "estimated " << report.total_tokens << " tokens -> " << io.out
              << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Column type annotation: sample, serialize, query, remap"};
  app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);
  app.require_subcommand(1);
  std::string argv_line = join_argv(argc, argv);

  IoFlags io;
  SamplerFlags sampler;
  SerializerFlags serializer;
  BackendFlags backend;
  RemapFlags remap;
  int jobs = 0;

  // --- annotate
  CLI::App* annotate_cmd =
      app.add_subcommand("annotate", "Predict a type label for every column");
  add_dataset_flag(annotate_cmd, io);
  add_labels_flag(annotate_cmd, io);
  annotate_cmd->add_option("--rules", io.rules, "Deterministic rule file (JSON)");
  add_out_flag(annotate_cmd, io);
  add_sampler_flags(annotate_cmd, sampler);
  add_serializer_flags(annotate_cmd, serializer);
  add_backend_flags(annotate_cmd, backend);
  add_remap_flags(annotate_cmd, remap);
  annotate_cmd->add_option("--jobs", jobs,
                           "Concurrent columns (0 = backend max-concurrency)")
      ->capture_default_str();

  // --- evaluate
  std::string predictions_path;
  std::string csv_path;
  CLI::App* evaluate_cmd =
      app.add_subcommand("evaluate", "Score a prediction file against truth labels");
  evaluate_cmd->add_option("--predictions", predictions_path, "Prediction JSONL")
      ->required();
  add_dataset_flag(evaluate_cmd, io);
  add_labels_flag(evaluate_cmd, io);
  add_out_flag(evaluate_cmd, io, /*required=*/false);
  evaluate_cmd->add_option("--csv", csv_path, "Also write per-class CSV here");

  // --- sweep
  std::string templates_spec = "C,K,I,S,N,B";
  CLI::App* sweep_cmd = app.add_subcommand(
      "sweep", "Annotate+evaluate once per template and rank the templates");
  add_dataset_flag(sweep_cmd, io);
  add_labels_flag(sweep_cmd, io);
  sweep_cmd->add_option("--rules", io.rules, "Deterministic rule file (JSON)");
  add_out_flag(sweep_cmd, io, /*required=*/false);
  sweep_cmd->add_option("--templates", templates_spec,
                        "Comma-separated template ids, or file:PATH")
      ->capture_default_str();
  add_sampler_flags(sweep_cmd, sampler);
  sweep_cmd->add_option("--window", serializer.window,
                        "Context window in estimated tokens")
      ->capture_default_str();
  sweep_cmd->add_flag("--no-numeric-filter", serializer.no_numeric_filter,
                      "Keep non-numeric labels even for numeric columns");
  add_backend_flags(sweep_cmd, backend);
  add_remap_flags(sweep_cmd, remap);
  sweep_cmd->add_option("--jobs", jobs,
                        "Concurrent columns (0 = backend max-concurrency)")
      ->capture_default_str();

  // --- benchgen
  std::string pools_path;
  std::string labels_out;
  BenchSpec bench_spec;
  double degenerate_fraction = 0.0;
  CLI::App* benchgen_cmd =
      app.add_subcommand("benchgen", "Synthesize a labeled benchmark from class pools");
  benchgen_cmd->add_option("--pools", pools_path, "Class-pool JSON file")->required();
  benchgen_cmd->add_option("--columns", bench_spec.n_columns, "Columns to generate")
      ->capture_default_str();
  benchgen_cmd->add_option("--min-values", bench_spec.length_min,
                           "Minimum values per column")
      ->capture_default_str();
  benchgen_cmd->add_option("--max-values", bench_spec.length_max,
                           "Maximum values per column")
      ->capture_default_str();
  benchgen_cmd->add_option("--seed", bench_spec.seed, "Generator seed")
      ->capture_default_str();
  benchgen_cmd
      ->add_option("--degenerate-fraction", degenerate_fraction,
                   "Fraction of columns rewritten as constant columns")
      ->capture_default_str();
  add_out_flag(benchgen_cmd, io);
  benchgen_cmd->add_option("--labels-out", labels_out,
                           "Also write the pool-derived label set here");

  // --- export-finetune (training-data layout defaults: richer context)
  SamplerFlags finetune_sampler;
  finetune_sampler.phi = 15;
  finetune_sampler.include_stats = true;
  finetune_sampler.include_table_name = true;
  CLI::App* export_cmd = app.add_subcommand(
      "export-finetune", "Write instruction-tuning examples for labeled columns");
  add_dataset_flag(export_cmd, io);
  add_labels_flag(export_cmd, io);
  add_out_flag(export_cmd, io);
  add_sampler_flags(export_cmd, finetune_sampler);

  // --- estimate-cost
  double price_per_1k = 0.0;
  std::uint64_t cost_window = 2048;
  CLI::App* cost_cmd = app.add_subcommand(
      "estimate-cost", "Report prompt token totals and threshold overflow rates");
  add_dataset_flag(cost_cmd, io);
  add_labels_flag(cost_cmd, io);
  add_out_flag(cost_cmd, io, /*required=*/false);
  cost_cmd->add_option("--price-per-1k", price_per_1k,
                       "USD per 1000 input tokens")
      ->capture_default_str();
  cost_cmd->add_option("--window", cost_window, "Overflow threshold in tokens")
      ->capture_default_str();
  add_sampler_flags(cost_cmd, sampler);
  cost_cmd->add_option("--template", serializer.template_spec,
                       "Prompt template: C|K|I|S|N|B or file:PATH[#ID]")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(annotate_cmd)) {
      return run_annotate(io, sampler, serializer, backend, remap, jobs, argv_line);
    }
    if (app.got_subcommand(evaluate_cmd)) {
      return run_evaluate(io, predictions_path, csv_path, argv_line);
    }
    if (app.got_subcommand(sweep_cmd)) {
      return run_sweep(io, sampler, serializer, backend, remap, jobs,
                       templates_spec, argv_line);
    }
    if (app.got_subcommand(benchgen_cmd)) {
      return run_benchgen(pools_path, bench_spec, degenerate_fraction, io.out,
                          labels_out, argv_line);
    }
    if (app.got_subcommand(export_cmd)) {
      return run_export_finetune(io, finetune_sampler, argv_line);
    }
    if (app.got_subcommand(cost_cmd)) {
      return run_estimate_cost(io, sampler, serializer, price_per_1k, cost_window,
                               argv_line);
    }
    std::cerr << "error: no subcommand selected\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
