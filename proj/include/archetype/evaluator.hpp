#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "archetype/core.hpp"
#include "archetype/errors.hpp"
#include "archetype/remapper.hpp"
#include "archetype/strings.hpp"

namespace archetype {

/// One scored (ground truth, predicted label) pair.
using TruthPred = std::pair<std::string, std::string>;

struct ClassScore {
  std::size_t support = 0;
  double accuracy = 0.0;
  double f1 = 0.0;
};

/// Full scoring output.  `weighted_f1` is the support-weighted mean of
/// per-class F1 (the headline metric); `accuracy` is plain fraction-correct,
/// reported alongside for transparency since the two are often conflated.
struct EvalReport {
  double weighted_f1 = 0.0;
  double ci_half_width = 0.0;
  std::size_t n = 0;
  double accuracy = 0.0;
  std::map<std::string, ClassScore> per_class;
  std::map<TruthPred, std::size_t> confusion;
  std::map<std::string, std::size_t> remap_provenance_counts;
};

namespace detail {

struct ClassCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

inline std::map<std::string, ClassCounts> class_counts(
    const std::vector<TruthPred>& pairs) {
  std::map<std::string, ClassCounts> counts;
  for (const auto& [truth, pred] : pairs) {
    if (truth == pred) {
      ++counts[truth].tp;
    } else {
      ++counts[truth].fn;
      ++counts[pred].fp;  // may create null/absent-truth classes; support 0
    }
  }
  return counts;
}

inline double f1_from_counts(const ClassCounts& c) {
  std::size_t denominator = 2 * c.tp + c.fp + c.fn;
  if (denominator == 0) return 0.0;
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denominator);
}

}  // namespace detail

/// Support-weighted mean of per-class F1: sum over truth classes of
/// (support_c / n) * F1_c, with F1 defined as 0 when precision + recall
/// is 0.  Classes that never appear as truth carry weight 0.
inline double weighted_f1(const std::vector<TruthPred>& pairs) {
  if (pairs.empty()) {
    throw Error(ErrorCode::empty_eval, "cannot score an empty prediction set");
  }
  std::map<std::string, detail::ClassCounts> counts = detail::class_counts(pairs);
  // Accumulate support * F1 and divide once at the end: with per-class
  // division the perfect case would sum to 1.0 only approximately.
  double total = 0.0;
  for (const auto& [label, c] : counts) {
    std::size_t support = c.tp + c.fn;
    if (support == 0) continue;
    total += static_cast<double>(support) * detail::f1_from_counts(c);
  }
  return total / static_cast<double>(pairs.size());
}

/// Normal-approximation confidence half-width: z * sqrt(p(1-p)/n).
inline double normal_ci(double p, std::size_t n, double z = 1.96) {
  if (n == 0) {
    throw Error(ErrorCode::empty_eval, "confidence interval requires n >= 1");
  }
  return z * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

/// Per-class fraction correct; classes with zero support are omitted.
inline std::map<std::string, double> per_class_accuracy(
    const std::vector<TruthPred>& pairs) {
  if (pairs.empty()) {
    throw Error(ErrorCode::empty_eval, "cannot score an empty prediction set");
  }
  std::map<std::string, double> out;
  for (const auto& [label, c] : detail::class_counts(pairs)) {
    std::size_t support = c.tp + c.fn;
    if (support == 0) continue;
    out[label] = static_cast<double>(c.tp) / static_cast<double>(support);
  }
  return out;
}

/// Counts keyed (truth, predicted); null-label predictions show up as a
/// regular predicted column.
inline std::map<TruthPred, std::size_t> confusion(const std::vector<TruthPred>& pairs) {
  std::map<TruthPred, std::size_t> out;
  for (const TruthPred& pair : pairs) ++out[pair];
  return out;
}

/// Joins predictions with their ground truths and assembles the report.
/// Every prediction's column must carry a truth label; labeled records
/// without predictions are ignored (prediction files may be sharded).
inline EvalReport evaluate(const std::vector<Prediction>& predictions,
                           const std::vector<DatasetRecord>& records,
                           const LabelSet& labels) {
  if (predictions.empty()) {
    throw Error(ErrorCode::empty_eval, "cannot score an empty prediction set");
  }
  std::map<std::string, std::string> truth_by_column;
  for (const DatasetRecord& record : records) {
    if (record.label.has_value()) truth_by_column[record.column_id] = *record.label;
  }
  std::unordered_set<std::string> known;
  for (const std::string& label : labels.labels) known.insert(normalize_text(label));

  std::vector<TruthPred> pairs;
  pairs.reserve(predictions.size());
  EvalReport report;
  for (const Prediction& prediction : predictions) {
    auto it = truth_by_column.find(prediction.column_id);
    if (it == truth_by_column.end()) {
      throw Error(ErrorCode::config, "column '" + prediction.column_id +
                                         "' has no ground-truth label to score against");
    }
    if (!known.count(normalize_text(it->second))) {
      throw Error(ErrorCode::config, "column '" + prediction.column_id +
                                         "' has truth '" + it->second +
                                         "' outside the label set");
    }
    pairs.emplace_back(normalize_text(it->second), normalize_text(prediction.label));
    ++report.remap_provenance_counts[provenance_name(prediction.provenance)];
  }

  report.n = pairs.size();
  report.weighted_f1 = weighted_f1(pairs);
  report.ci_half_width = normal_ci(report.weighted_f1, report.n);
  std::size_t correct = 0;
  for (const auto& [truth, pred] : pairs) {
    if (truth == pred) ++correct;
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(report.n);
  report.confusion = confusion(pairs);

  std::map<std::string, detail::ClassCounts> counts = detail::class_counts(pairs);
  for (const auto& [label, c] : counts) {
    std::size_t support = c.tp + c.fn;
    if (support == 0) continue;
    ClassScore score;
    score.support = support;
    score.accuracy = static_cast<double>(c.tp) / static_cast<double>(support);
    score.f1 = detail::f1_from_counts(c);
    report.per_class[label] = score;
  }
  return report;
}

inline json report_to_json(const EvalReport& report) {
  json per_class = json::object();
  for (const auto& [label, score] : report.per_class) {
    per_class[label] = json{{"support", score.support},
                            {"accuracy", score.accuracy},
                            {"f1", score.f1}};
  }
  json confusion_rows = json::array();
  for (const auto& [pair, count] : report.confusion) {
    confusion_rows.push_back(
        json{{"truth", pair.first}, {"pred", pair.second}, {"count", count}});
  }
  return json{{"n", report.n},
              {"weighted_f1", report.weighted_f1},
              {"ci_half_width", report.ci_half_width},
              {"accuracy", report.accuracy},
              {"per_class", per_class},
              {"confusion", confusion_rows},
              {"remap_provenance_counts", report.remap_provenance_counts}};
}

inline std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

/// Per-class table: class, freq, accuracy — rows sorted by descending
/// frequency, then name.
inline std::string report_to_csv(const EvalReport& report) {
  std::vector<std::pair<std::string, ClassScore>> rows(report.per_class.begin(),
                                                       report.per_class.end());
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.second.support != b.second.support) {
      return a.second.support > b.second.support;
    }
    return a.first < b.first;
  });
  std::string out = "class,freq,accuracy\n";
  char buffer[64];
  for (const auto& [label, score] : rows) {
    std::snprintf(buffer, sizeof(buffer), "%zu,%.4f", score.support, score.accuracy);
    out += csv_escape(label) + "," + buffer + "\n";
  }
  return out;
}

}  // namespace archetype
