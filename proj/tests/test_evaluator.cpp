#include "archetype/evaluator.hpp"

#include <gtest/gtest.h>

#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"

namespace {

using namespace archetype;

// --- weighted F1 -------------------------------------------------------------

TEST(WeightedF1, PerfectPredictionsScoreExactlyOne) {
  std::vector<TruthPred> pairs;
  for (int i = 0; i < 97; ++i) {
    pairs.emplace_back("class" + std::to_string(i % 7), "class" + std::to_string(i % 7));
  }
  EXPECT_EQ(weighted_f1(pairs), 1.0);  // exact, not approximate
}

TEST(WeightedF1, AllWrongScoresZero) {
  std::vector<TruthPred> pairs = {{"a", "b"}, {"a", "b"}, {"b", "a"}};
  EXPECT_EQ(weighted_f1(pairs), 0.0);
}

TEST(WeightedF1, HandWorkedExample) {
  // a: tp=1 fn=1 -> F1 = 2/3;  b: tp=2 fp=1 -> F1 = 4/5.
  // weighted: (2/4)(2/3) + (2/4)(4/5) = 11/15.
  std::vector<TruthPred> pairs = {{"a", "a"}, {"a", "b"}, {"b", "b"}, {"b", "b"}};
  EXPECT_NEAR(weighted_f1(pairs), 11.0 / 15.0, 1e-12);
}

TEST(WeightedF1, PredictedOnlyClassesCarryNoWeight) {
  // "unknown" never appears as truth; its fp must not change the score's
  // weighting, only a's F1 via... a's F1 is unaffected by b's fp: verify value.
  std::vector<TruthPred> pairs = {{"a", "unknown"}, {"a", "a"}};
  // a: tp=1 fn=1 -> F1 = 2/3, weight 1.  unknown: support 0, skipped.
  EXPECT_NEAR(weighted_f1(pairs), 2.0 / 3.0, 1e-12);
}

TEST(WeightedF1, EmptyInputIsAnError) {
  try {
    weighted_f1({});
    FAIL() << "expected empty_eval";
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::empty_eval);
  }
}

TEST(WeightedF1, MatchesPrecisionRecallOracle) {
  std::mt19937 rng(41);
  const char* names[] = {"a", "b", "c", "d", "e", "f"};
  for (int round = 0; round < 1000; ++round) {
    std::size_t n = 1 + rng() % 60;
    std::vector<TruthPred> pairs;
    for (std::size_t i = 0; i < n; ++i) {
      std::string truth = names[rng() % 6];
      std::string pred = rng() % 3 == 0 ? truth : names[rng() % 6];
      pairs.emplace_back(truth, pred);
    }
    double mine = weighted_f1(pairs);
    double reference = oracles::weighted_f1_oracle(pairs);
    EXPECT_NEAR(mine, reference, 1e-9);
    EXPECT_GE(mine, 0.0);
    EXPECT_LE(mine, 1.0);
  }
}

// --- confidence interval ----------------------------------------------------------

TEST(NormalCi, PublishedReferencePoints) {
  EXPECT_NEAR(normal_ci(0.660, 15040), 0.00757, 0.0005);
  EXPECT_NEAR(normal_ci(0.873, 2000), 0.01459, 0.0005);
}

TEST(NormalCi, DegenerateProportionsHaveZeroWidth) {
  EXPECT_DOUBLE_EQ(normal_ci(0.0, 100), 0.0);
  EXPECT_DOUBLE_EQ(normal_ci(1.0, 100), 0.0);
}

TEST(NormalCi, ShrinksWithSampleSize) {
  EXPECT_GT(normal_ci(0.5, 100), normal_ci(0.5, 1000));
  EXPECT_GT(normal_ci(0.5, 1000), normal_ci(0.5, 100000));
}

TEST(NormalCi, WidestAtOneHalf) {
  for (double p : {0.1, 0.25, 0.4, 0.6, 0.9}) {
    EXPECT_LT(normal_ci(p, 500), normal_ci(0.5, 500));
  }
}

TEST(NormalCi, CustomZMultiplier) {
  EXPECT_NEAR(normal_ci(0.5, 400, 2.0), 2.0 * 0.025, 1e-12);
}

TEST(NormalCi, ZeroSampleIsAnError) {
  try {
    normal_ci(0.5, 0);
    FAIL() << "expected empty_eval";
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::empty_eval);
  }
}

// --- per-class accuracy and confusion ------------------------------------------------

TEST(PerClassAccuracy, HandWorkedExample) {
  std::vector<TruthPred> pairs = {{"a", "a"}, {"a", "b"}, {"b", "b"}};
  std::map<std::string, double> acc = per_class_accuracy(pairs);
  ASSERT_EQ(acc.size(), 2u);
  EXPECT_DOUBLE_EQ(acc["a"], 0.5);
  EXPECT_DOUBLE_EQ(acc["b"], 1.0);
}

TEST(Confusion, CountsSumToN) {
  std::mt19937 rng(47);
  const char* names[] = {"x", "y", "z"};
  std::vector<TruthPred> pairs;
  for (int i = 0; i < 300; ++i) {
    pairs.emplace_back(names[rng() % 3], names[rng() % 3]);
  }
  std::map<TruthPred, std::size_t> table = confusion(pairs);
  std::size_t total = 0;
  for (const auto& [key, count] : table) total += count;
  EXPECT_EQ(total, pairs.size());
  EXPECT_EQ((table[{"x", "x"}]),
            static_cast<std::size_t>(std::count(pairs.begin(), pairs.end(),
                                                TruthPred{"x", "x"})));
}

// --- evaluate() -------------------------------------------------------------------------

LabelSet eval_labels() {
  LabelSet labels;
  labels.labels = {"telephone", "text", "number"};
  labels.null_label = "unknown";
  return labels;
}

DatasetRecord labeled_record(const std::string& column_id, const std::string& label) {
  DatasetRecord record;
  record.column_id = column_id;
  record.values = {"v"};
  record.label = label;
  return record;
}

Prediction prediction_of(const std::string& column_id, const std::string& label,
                         Provenance provenance = Provenance::exact) {
  Prediction prediction;
  prediction.column_id = column_id;
  prediction.label = label;
  prediction.provenance = provenance;
  prediction.attempts = 1;
  return prediction;
}

TEST(Evaluate, JoinsAndScores) {
  std::vector<DatasetRecord> records = {labeled_record("c1", "telephone"),
                                        labeled_record("c2", "text"),
                                        labeled_record("c3", "text"),
                                        labeled_record("c4", "number")};
  std::vector<Prediction> predictions = {
      prediction_of("c1", "telephone", Provenance::exact),
      prediction_of("c2", "text", Provenance::contains),
      prediction_of("c3", "unknown", Provenance::null_fallback),
      prediction_of("c4", "number", Provenance::exact)};
  EvalReport report = evaluate(predictions, records, eval_labels());

  EXPECT_EQ(report.n, 4u);
  EXPECT_DOUBLE_EQ(report.accuracy, 0.75);
  // telephone: F1 1; text: tp1 fn1 -> 2/3; number: F1 1.
  EXPECT_NEAR(report.weighted_f1, 0.25 * 1.0 + 0.5 * (2.0 / 3.0) + 0.25 * 1.0, 1e-12);
  EXPECT_NEAR(report.ci_half_width, normal_ci(report.weighted_f1, 4), 1e-12);

  std::size_t support_total = 0;
  for (const auto& [label, score] : report.per_class) support_total += score.support;
  EXPECT_EQ(support_total, report.n);

  EXPECT_EQ(report.remap_provenance_counts["exact"], 2u);
  EXPECT_EQ(report.remap_provenance_counts["contains"], 1u);
  EXPECT_EQ(report.remap_provenance_counts["null"], 1u);
  EXPECT_EQ((report.confusion[{"text", "unknown"}]), 1u);
}

TEST(Evaluate, NormalizesBothSidesBeforeComparing) {
  std::vector<DatasetRecord> records = {labeled_record("c1", " Telephone ")};
  std::vector<Prediction> predictions = {prediction_of("c1", "TELEPHONE")};
  EvalReport report = evaluate(predictions, records, eval_labels());
  EXPECT_DOUBLE_EQ(report.accuracy, 1.0);
  EXPECT_EQ(report.weighted_f1, 1.0);
}

TEST(Evaluate, LabeledRecordsWithoutPredictionsAreIgnored) {
  std::vector<DatasetRecord> records = {labeled_record("c1", "text"),
                                        labeled_record("c-extra", "number")};
  std::vector<Prediction> predictions = {prediction_of("c1", "text")};
  EvalReport report = evaluate(predictions, records, eval_labels());
  EXPECT_EQ(report.n, 1u);
}

TEST(Evaluate, MissingTruthIsConfigError) {
  std::vector<DatasetRecord> records = {labeled_record("c1", "text")};
  DatasetRecord unlabeled;
  unlabeled.column_id = "c2";
  unlabeled.values = {"v"};
  records.push_back(unlabeled);
  std::vector<Prediction> predictions = {prediction_of("c2", "text")};
  try {
    evaluate(predictions, records, eval_labels());
    FAIL() << "expected config error";
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::config);
    EXPECT_NE(std::string(err.what()).find("c2"), std::string::npos);
  }
}

TEST(Evaluate, TruthOutsideLabelSetIsConfigError) {
  std::vector<DatasetRecord> records = {labeled_record("c1", "martian")};
  std::vector<Prediction> predictions = {prediction_of("c1", "text")};
  try {
    evaluate(predictions, records, eval_labels());
    FAIL() << "expected config error";
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::config);
    EXPECT_NE(std::string(err.what()).find("martian"), std::string::npos);
  }
}

TEST(Evaluate, EmptyPredictionsIsError) {
  EXPECT_THROW(evaluate({}, {}, eval_labels()), Error);
}

// --- report serialization -------------------------------------------------------------------

TEST(ReportIo, JsonCarriesAllSections) {
  std::vector<DatasetRecord> records = {labeled_record("c1", "text"),
                                        labeled_record("c2", "number")};
  std::vector<Prediction> predictions = {prediction_of("c1", "text"),
                                         prediction_of("c2", "text")};
  json doc = report_to_json(evaluate(predictions, records, eval_labels()));
  EXPECT_EQ(doc["n"], 2);
  EXPECT_TRUE(doc.contains("weighted_f1"));
  EXPECT_TRUE(doc.contains("ci_half_width"));
  EXPECT_TRUE(doc.contains("accuracy"));
  EXPECT_TRUE(doc["per_class"].contains("text"));
  EXPECT_TRUE(doc["confusion"].is_array());
  EXPECT_EQ(doc["remap_provenance_counts"]["exact"], 2);
}

TEST(ReportIo, CsvSortedByFrequencyThenName) {
  EvalReport report;
  report.per_class["rare"] = ClassScore{1, 1.0, 1.0};
  report.per_class["common"] = ClassScore{10, 0.5, 0.5};
  report.per_class["also10"] = ClassScore{10, 0.25, 0.3};
  std::string csv = report_to_csv(report);
  EXPECT_EQ(csv,
            "class,freq,accuracy\n"
            "also10,10,0.2500\n"
            "common,10,0.5000\n"
            "rare,1,1.0000\n");
}

TEST(ReportIo, CsvEscapesAwkwardClassNames) {
  EvalReport report;
  report.per_class["with, comma"] = ClassScore{2, 1.0, 1.0};
  std::string csv = report_to_csv(report);
  EXPECT_NE(csv.find("\"with, comma\",2,1.0000"), std::string::npos);
}

}  // namespace
