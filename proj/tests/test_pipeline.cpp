#include "archetype/pipeline.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace {

using namespace archetype;

LabelSet basic_labels() {
  LabelSet labels;
  labels.labels = {"telephone", "text", "number"};
  labels.null_label = "unknown";
  return labels;
}

DatasetRecord record_with(const std::string& column_id,
                          std::vector<std::string> values,
                          const std::string& label = "") {
  DatasetRecord record;
  record.column_id = column_id;
  record.values = std::move(values);
  if (!label.empty()) record.label = label;
  return record;
}

ScriptedMockBackend scripted(MockScript script, int max_concurrency = 4) {
  BackendConfig cfg;
  cfg.kind = BackendKind::scripted_mock;
  cfg.max_concurrency = max_concurrency;
  return ScriptedMockBackend(cfg, std::move(script));
}

AnnotateOptions default_opts(int jobs = 0) {
  AnnotateOptions opts;
  opts.jobs = jobs;
  return opts;
}

// --- annotate ----------------------------------------------------------------

TEST(Annotate, MapsEveryRecordInOrder) {
  std::vector<DatasetRecord> records = {
      record_with("c1", {"555-1234", "555-9999"}),
      record_with("c2", {"hello", "world"}),
      record_with("c3", {"one", "two"})};
  ScriptedMockBackend backend = scripted(
      {{"c1", {"telephone"}}, {"c2", {"text"}}, {"c3", {"garbage qqq"}}});
  CharTrigramEmbedder embedder;
  AnnotateOutcome outcome =
      annotate(records, basic_labels(), {}, backend, embedder, default_opts());

  ASSERT_EQ(outcome.predictions.size(), 3u);
  EXPECT_EQ(outcome.failed_columns, 0u);
  EXPECT_EQ(outcome.predictions[0].column_id, "c1");
  EXPECT_EQ(outcome.predictions[0].label, "telephone");
  EXPECT_EQ(outcome.predictions[0].provenance, Provenance::exact);
  EXPECT_EQ(outcome.predictions[1].label, "text");
  EXPECT_EQ(outcome.predictions[2].column_id, "c3");
  // Default strategy resamples then falls back to null.
  EXPECT_EQ(outcome.predictions[2].label, "unknown");
  EXPECT_EQ(outcome.predictions[2].provenance, Provenance::null_fallback);
}

TEST(Annotate, EmptyDatasetYieldsEmptyOutcome) {
  ScriptedMockBackend backend = scripted({{"*", {"x"}}});
  CharTrigramEmbedder embedder;
  AnnotateOutcome outcome =
      annotate({}, basic_labels(), {}, backend, embedder, default_opts());
  EXPECT_TRUE(outcome.predictions.empty());
  EXPECT_EQ(outcome.failed_columns, 0u);
}

TEST(Annotate, FailingColumnBecomesErrorPredictionAndRunContinues) {
  std::vector<DatasetRecord> records = {
      record_with("good", {"abc", "def"}),
      record_with("empty", {}),  // summary stats cannot be computed
      record_with("also-good", {"xyz"})};
  ScriptedMockBackend backend = scripted({{"*", {"text"}}});
  CharTrigramEmbedder embedder;
  AnnotateOptions opts = default_opts();
  opts.sampler.include_summary_stats = true;

  AnnotateOutcome outcome =
      annotate(records, basic_labels(), {}, backend, embedder, opts);
  ASSERT_EQ(outcome.predictions.size(), 3u);
  EXPECT_EQ(outcome.failed_columns, 1u);
  EXPECT_EQ(outcome.predictions[0].label, "text");
  EXPECT_EQ(outcome.predictions[0].error, "");

  const Prediction& failed = outcome.predictions[1];
  EXPECT_EQ(failed.column_id, "empty");
  EXPECT_EQ(failed.label, "unknown");
  EXPECT_EQ(failed.provenance, Provenance::null_fallback);
  EXPECT_NE(failed.error.find("degenerate_column"), std::string::npos);
  EXPECT_EQ(failed.attempts, 0);

  EXPECT_EQ(outcome.predictions[2].label, "text");
}

TEST(Annotate, ThreadCountNeverChangesTheBytes) {
  std::vector<DatasetRecord> records;
  for (int i = 0; i < 60; ++i) {
    records.push_back(record_with("col-" + std::to_string(i),
                                  {"v" + std::to_string(i), "w" + std::to_string(i)}));
  }
  MockScript script = {{"*", {"text"}}};
  for (int i = 0; i < 60; i += 3) script["col-" + std::to_string(i)] = {"telephone"};

  CharTrigramEmbedder embedder;
  ScriptedMockBackend backend_a = scripted(script);
  AnnotateOutcome serial =
      annotate(records, basic_labels(), {}, backend_a, embedder, default_opts(1));
  ScriptedMockBackend backend_b = scripted(script);
  AnnotateOutcome parallel =
      annotate(records, basic_labels(), {}, backend_b, embedder, default_opts(8));

  EXPECT_EQ(predictions_to_jsonl(serial.predictions),
            predictions_to_jsonl(parallel.predictions));
}

TEST(Annotate, RecordOrderDoesNotChangePerColumnResults) {
  std::vector<DatasetRecord> records;
  for (int i = 0; i < 40; ++i) {
    records.push_back(record_with(
        "col-" + std::to_string(i),
        {"a" + std::to_string(i), "b" + std::to_string(i), "c" + std::to_string(i)}));
  }
  CharTrigramEmbedder embedder;
  MockScript script = {{"*", {"number"}}};

  ScriptedMockBackend backend_a = scripted(script);
  AnnotateOutcome straight =
      annotate(records, basic_labels(), {}, backend_a, embedder, default_opts());
  std::map<std::string, std::string> by_column;
  for (const Prediction& prediction : straight.predictions) {
    by_column[prediction.column_id] = prediction_to_json(prediction).dump();
  }

  std::mt19937 rng(5);
  std::shuffle(records.begin(), records.end(), rng);
  ScriptedMockBackend backend_b = scripted(script);
  AnnotateOutcome shuffled =
      annotate(records, basic_labels(), {}, backend_b, embedder, default_opts());
  for (const Prediction& prediction : shuffled.predictions) {
    EXPECT_EQ(prediction_to_json(prediction).dump(), by_column[prediction.column_id]);
  }
}

TEST(Annotate, NullLabelFollowsTheLabelSet) {
  LabelSet labels = basic_labels();
  labels.null_label = "none of these";
  ScriptedMockBackend backend = scripted({{"*", {"gibberish qqq"}}});
  CharTrigramEmbedder embedder;
  AnnotateOptions opts = default_opts();
  opts.remap.strategy = RemapStrategy::none;
  AnnotateOutcome outcome =
      annotate({record_with("c", {"v"})}, labels, {}, backend, embedder, opts);
  EXPECT_EQ(outcome.predictions[0].label, "none of these");
}

TEST(Annotate, NumericColumnsSeeOnlyNumericLabels) {
  LabelSet labels = basic_labels();
  labels.numeric_labels = {"number"};
  // The backend answers with the full prompt's class list region; an exact
  // "number" reply plus a scripted check of the rendered label list.
  ScriptedMockBackend backend = scripted({{"*", {"number"}}});
  CharTrigramEmbedder embedder;
  QueryLog log;
  AnnotateOutcome outcome = annotate({record_with("nums", {"1", "2", "3"})}, labels,
                                     {}, backend, embedder, default_opts(), &log);
  EXPECT_EQ(outcome.predictions[0].label, "number");
  ASSERT_EQ(log.size(), 1u);
  std::string prompt = log.snapshot()[0].prompt;
  EXPECT_NE(prompt.find("OPTION: number ANSWER:"), std::string::npos);
  EXPECT_EQ(prompt.find("telephone"), std::string::npos);
}

TEST(Annotate, NumericFilterCanBeDisabled) {
  LabelSet labels = basic_labels();
  labels.numeric_labels = {"number"};
  ScriptedMockBackend backend = scripted({{"*", {"number"}}});
  CharTrigramEmbedder embedder;
  QueryLog log;
  AnnotateOptions opts = default_opts();
  opts.serializer.numeric_filter = false;
  annotate({record_with("nums", {"1", "2", "3"})}, labels, {}, backend, embedder,
           opts, &log);
  EXPECT_NE(log.snapshot()[0].prompt.find("telephone"), std::string::npos);
}

TEST(Annotate, RetryBudgetShowsUpInAttempts) {
  ScriptedMockBackend backend = scripted({{"*", {"junk"}}});
  CharTrigramEmbedder embedder;
  AnnotateOptions opts = default_opts();
  opts.remap.strategy = RemapStrategy::contains_resample;
  opts.remap.k = 2;
  AnnotateOutcome outcome = annotate({record_with("c", {"v"})}, basic_labels(), {},
                                     backend, embedder, opts);
  EXPECT_EQ(outcome.predictions[0].attempts, 3);
  EXPECT_EQ(backend.total_calls(), 3u);
}

TEST(Annotate, BadConfigRejectedUpFront) {
  ScriptedMockBackend backend = scripted({{"*", {"x"}}});
  CharTrigramEmbedder embedder;
  AnnotateOptions opts = default_opts();
  opts.serializer.context_window = 32;  // below the 64-token floor
  EXPECT_THROW(annotate({record_with("c", {"v"})}, basic_labels(), {}, backend,
                        embedder, opts),
               Error);
  opts = default_opts();
  opts.sampler.phi = 0;
  EXPECT_THROW(annotate({record_with("c", {"v"})}, basic_labels(), {}, backend,
                        embedder, opts),
               Error);
}

TEST(Annotate, PreRulesShortCircuitBeforeTheBackend) {
  std::vector<Rule> rules = rules_from_json(
      json::array({json{{"label", "telephone"},
                        {"kind", "regex_ratio"},
                        {"pattern", R"(^\d{3}-\d{4}$)"},
                        {"stage", "pre"},
                        {"match_ratio", 0.8}}}),
      basic_labels());
  ScriptedMockBackend backend = scripted({{"*", {"never"}}});
  CharTrigramEmbedder embedder;
  AnnotateOutcome outcome =
      annotate({record_with("phones", {"555-1234", "555-8765"})}, basic_labels(),
               rules, backend, embedder, default_opts());
  EXPECT_EQ(outcome.predictions[0].label, "telephone");
  EXPECT_EQ(outcome.predictions[0].provenance, Provenance::pre_rule);
  EXPECT_EQ(backend.total_calls(), 0u);
}

// --- sweep ------------------------------------------------------------------------

/// Answers correctly only when the prompt was rendered from the plain
/// "Pick the column's class. Column:" skeleton; everything else gets junk.
class ShapeSensitiveBackend : public Backend {
 public:
  explicit ShapeSensitiveBackend(std::map<std::string, std::string> truths)
      : truths_(std::move(truths)) {
    cfg_.kind = BackendKind::scripted_mock;
  }

  std::string complete(const QueryRequest& request) override {
    if (starts_with(request.prompt, "Pick the column's class. Column: ") &&
        request.prompt.find("Classes:") != std::string::npos) {
      return truths_.at(request.column_id);
    }
    return "zzz gibberish";
  }

  const BackendConfig& config() const override { return cfg_; }

 private:
  std::map<std::string, std::string> truths_;
  BackendConfig cfg_;
};

TEST(Sweep, FlagsTheWinningTemplateAndSortsTheRest) {
  std::vector<DatasetRecord> records;
  std::map<std::string, std::string> truths;
  const char* labels_cycle[] = {"telephone", "text", "number"};
  for (int i = 0; i < 12; ++i) {
    std::string id = "col-" + std::to_string(i);
    std::string truth = labels_cycle[i % 3];
    records.push_back(record_with(id, {"v" + std::to_string(i)}, truth));
    truths[id] = truth;
  }
  ShapeSensitiveBackend backend(truths);
  CharTrigramEmbedder embedder;
  AnnotateOptions opts = default_opts();
  opts.remap.strategy = RemapStrategy::none;

  std::vector<SweepEntry> entries = sweep(records, basic_labels(), {}, backend,
                                          embedder, opts, standard_templates());
  ASSERT_EQ(entries.size(), 6u);
  EXPECT_EQ(entries[0].template_id, "S");
  EXPECT_TRUE(entries[0].best);
  EXPECT_EQ(entries[0].report.weighted_f1, 1.0);
  // The other five all score zero and sort by template id.
  std::vector<std::string> rest;
  for (std::size_t i = 1; i < entries.size(); ++i) {
    EXPECT_FALSE(entries[i].best);
    EXPECT_EQ(entries[i].report.weighted_f1, 0.0);
    rest.push_back(entries[i].template_id);
  }
  EXPECT_EQ(rest, (std::vector<std::string>{"B", "C", "I", "K", "N"}));
}

TEST(Sweep, SingleTemplateStillFlagged) {
  std::vector<DatasetRecord> records = {record_with("c", {"v"}, "text")};
  ScriptedMockBackend backend = scripted({{"*", {"text"}}});
  CharTrigramEmbedder embedder;
  std::vector<SweepEntry> entries =
      sweep(records, basic_labels(), {}, backend, embedder, default_opts(),
            {template_by_id("B")});
  ASSERT_EQ(entries.size(), 1u);
  EXPECT_TRUE(entries[0].best);
  EXPECT_THROW(sweep(records, basic_labels(), {}, backend, embedder,
                     default_opts(), {}),
               Error);
}

// --- cost estimation ------------------------------------------------------------------

TEST(EstimateCost, EmptyDatasetIsAllZeros) {
  CostReport report =
      estimate_cost({}, basic_labels(), default_opts(), 0.002, 2048);
  EXPECT_EQ(report.columns, 0u);
  EXPECT_EQ(report.total_tokens, 0u);
  EXPECT_DOUBLE_EQ(report.approx_usd, 0.0);
}

TEST(EstimateCost, ShortPromptsStayUnderEveryThreshold) {
  std::vector<DatasetRecord> records = {record_with("a", {"x", "y"}),
                                        record_with("b", {"1", "2"})};
  CostReport report =
      estimate_cost(records, basic_labels(), default_opts(), 0.002, 2048);
  EXPECT_EQ(report.columns, 2u);
  EXPECT_GT(report.total_tokens, 0u);
  EXPECT_DOUBLE_EQ(report.pct_over_1k, 0.0);
  EXPECT_DOUBLE_EQ(report.pct_over_4k, 0.0);
  EXPECT_DOUBLE_EQ(report.pct_over_16k, 0.0);
  EXPECT_DOUBLE_EQ(report.pct_over_window, 0.0);
  EXPECT_NEAR(report.approx_usd,
              static_cast<double>(report.total_tokens) / 1000.0 * 0.002, 1e-12);
}

TEST(EstimateCost, HugeColumnsCrossThresholds) {
  std::vector<DatasetRecord> records = {
      record_with("short", {"tiny"}),
      record_with("huge", {std::string(50000, 'a'), std::string(50000, 'b')})};
  CostReport report =
      estimate_cost(records, basic_labels(), default_opts(), 0.01, 2048);
  EXPECT_DOUBLE_EQ(report.pct_over_1k, 50.0);
  EXPECT_DOUBLE_EQ(report.pct_over_4k, 50.0);
  EXPECT_DOUBLE_EQ(report.pct_over_16k, 50.0);
  EXPECT_DOUBLE_EQ(report.pct_over_window, 50.0);
}

TEST(EstimateCost, MeasuresBeforeTruncation) {
  // The window only affects pct_over_window, not the token total.
  std::vector<DatasetRecord> records = {
      record_with("huge", {std::string(20000, 'a')})};
  CostReport narrow =
      estimate_cost(records, basic_labels(), default_opts(), 0.0, 128);
  CostReport wide =
      estimate_cost(records, basic_labels(), default_opts(), 0.0, 1 << 20);
  EXPECT_EQ(narrow.total_tokens, wide.total_tokens);
  EXPECT_DOUBLE_EQ(narrow.pct_over_window, 100.0);
  EXPECT_DOUBLE_EQ(wide.pct_over_window, 0.0);
}

// --- fine-tune export -----------------------------------------------------------------------

TEST(ExportFinetune, BuildsOneExamplePerLabeledRecord) {
  std::vector<DatasetRecord> records = {
      record_with("c1", {"555-1234"}, "telephone"),
      record_with("c2", {"hello"}, " TEXT ")};  // canonicalized to label spelling
  SamplerConfig sampler;
  sampler.phi = 2;
  std::vector<FinetuneRecord> out =
      export_finetune(records, basic_labels(), sampler);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].instruction, "Select the category which best matches the input.");
  EXPECT_EQ(out[0].output, "telephone");
  EXPECT_EQ(out[1].output, "text");
  EXPECT_TRUE(starts_with(out[0].input, "SAMPLES: "));
}

TEST(ExportFinetune, UnlabeledRecordIsConfigError) {
  std::vector<DatasetRecord> records = {record_with("c1", {"v"})};
  try {
    export_finetune(records, basic_labels(), SamplerConfig{});
    FAIL() << "expected config error";
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::config);
    EXPECT_NE(std::string(err.what()).find("c1"), std::string::npos);
  }
}

TEST(ExportFinetune, LabelOutsideTheSetIsConfigError) {
  std::vector<DatasetRecord> records = {record_with("c1", {"v"}, "martian")};
  EXPECT_THROW(export_finetune(records, basic_labels(), SamplerConfig{}), Error);
}

// --- manifests -------------------------------------------------------------------------------

TEST(Manifests, CarryToolVersionTimeAndConfigs) {
  json manifest = make_manifest(
      "annotate", json{{"dataset", "d.jsonl"}},
      json{{"sampler", sampler_config_to_json(SamplerConfig{})}});
  EXPECT_EQ(manifest["tool"], "archetype");
  EXPECT_EQ(manifest["version"], "0.1.0");
  EXPECT_EQ(manifest["command"], "annotate");
  EXPECT_EQ(manifest["inputs"]["dataset"], "d.jsonl");
  EXPECT_EQ(manifest["configs"]["sampler"]["phi"], 5);

  std::string stamp = manifest["created_utc"].get<std::string>();
  ASSERT_EQ(stamp.size(), 20u);
  EXPECT_EQ(stamp[4], '-');
  EXPECT_EQ(stamp[10], 'T');
  EXPECT_EQ(stamp.back(), 'Z');
}

TEST(Manifests, ConfigSerializationCoversEveryKnob) {
  json sampler = sampler_config_to_json(SamplerConfig{});
  EXPECT_EQ(sampler["importance"], "string_length");
  json serializer = serializer_config_to_json(SerializerConfig{});
  EXPECT_EQ(serializer["template_id"], "B");
  EXPECT_EQ(serializer["context_window"], 2048);
  json remap = remap_config_to_json(RemapConfig{});
  EXPECT_EQ(remap["strategy"], "contains_resample");
  EXPECT_EQ(remap["k"], 3);
  json gen = gen_params_to_json(GenParams{});
  EXPECT_DOUBLE_EQ(gen["temperature"].get<double>(), 0.0);
  json backend = backend_config_to_json(BackendConfig{});
  EXPECT_EQ(backend["kind"], "echo");
  EXPECT_EQ(backend["api_key_env"], "ARCHETYPE_API_KEY");
  EXPECT_FALSE(backend.dump().find("Bearer") != std::string::npos);
}

TEST(Manifests, WrittenNextToTheOutput) {
  std::string out_path = "manifest_probe.jsonl";
  json manifest = make_manifest("evaluate", json::object(), json::object());
  write_manifest(out_path, manifest);
  std::string sidecar = manifest_path_for(out_path);
  EXPECT_EQ(sidecar, "manifest_probe.jsonl.manifest.json");
  json parsed = json::parse(read_file(sidecar));
  EXPECT_EQ(parsed["command"], "evaluate");
  std::remove(sidecar.c_str());
}

}  // namespace
