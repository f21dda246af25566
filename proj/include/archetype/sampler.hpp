#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "archetype/core.hpp"
#include "archetype/errors.hpp"
#include "archetype/rng.hpp"
#include "archetype/strings.hpp"

namespace archetype {

enum class ImportanceKind { uniform, string_length, classname_priority };

inline const char* importance_kind_name(ImportanceKind kind) {
  switch (kind) {
    case ImportanceKind::uniform: return "uniform";
    case ImportanceKind::string_length: return "string_length";
    case ImportanceKind::classname_priority: return "classname_priority";
  }
  return "unknown";
}

inline ImportanceKind importance_kind_from_name(const std::string& name) {
  if (name == "uniform") return ImportanceKind::uniform;
  if (name == "string_length") return ImportanceKind::string_length;
  if (name == "classname_priority") return ImportanceKind::classname_priority;
  throw Error(ErrorCode::config, "unknown importance function '" + name + "'");
}

/// Weight boost applied by classname_priority when a value mentions any
/// label.  Large enough to dominate the draw, small enough that
/// non-matching values stay selectable.
inline constexpr double kClassnameBoost = 100.0;

/// Controls context construction for one run.  `phi` is the number of
/// samples shown to the model per column; the three include_* switches add
/// the extended-context features.
struct SamplerConfig {
  std::size_t phi = 5;
  ImportanceKind importance = ImportanceKind::string_length;
  bool include_table_name = false;
  bool include_summary_stats = false;
  bool include_other_columns = false;
  std::uint64_t seed = 0;
};

enum class StatsBasis { values, value_lengths };

/// Center/spread sketch of a column.  Computed over the parsed numbers when
/// every cell is numeric, otherwise over cell byte lengths.  All fields are
/// pre-rounded to two decimal places.
struct SummaryStats {
  double std_dev = 0.0;
  double mean = 0.0;
  double mode = 0.0;
  double median = 0.0;
  double max = 0.0;
  double min = 0.0;
  StatsBasis basis = StatsBasis::value_lengths;
};

/// The per-column evidence handed to the serializer: exactly `phi` samples
/// plus the optional extended-context features.
struct ContextSample {
  std::vector<std::string> samples;
  std::optional<std::string> table_name;
  std::optional<SummaryStats> stats;
  std::vector<std::pair<std::size_t, std::string>> other_column_samples;
};

// ---------------------------------------------------------------------------
// Importance functions and weighted sampling
// ---------------------------------------------------------------------------

inline double importance_weight(const std::string& value, const LabelSet& labels,
                                ImportanceKind kind) {
  switch (kind) {
    case ImportanceKind::uniform:
      return 1.0;
    case ImportanceKind::string_length:
      // Zero-length cells keep weight 1 so degenerate columns stay sampleable.
      return value.empty() ? 1.0 : static_cast<double>(value.size());
    case ImportanceKind::classname_priority: {
      std::string folded = normalize_text(value);
      for (const std::string& label : labels.labels) {
        if (folded.find(normalize_text(label)) != std::string::npos) {
          return 1.0 + kClassnameBoost;
        }
      }
      return 1.0;
    }
  }
  return 1.0;
}

/// Draws min(cfg.phi, |uniques|) elements without replacement.  Each draw
/// picks element sigma with probability f(sigma) / sum of remaining f, then
/// removes it; selection order is preserved in the output.  Deterministic
/// for a fixed generator state.
inline std::vector<std::string> weighted_sample(const std::vector<std::string>& uniques,
                                                const SamplerConfig& cfg,
                                                const LabelSet& labels, Rng& rng) {
  std::size_t want = std::min(cfg.phi, uniques.size());
  std::vector<std::string> out;
  out.reserve(want);

  std::vector<std::size_t> remaining(uniques.size());
  std::iota(remaining.begin(), remaining.end(), std::size_t{0});
  std::vector<double> weights;
  weights.reserve(uniques.size());
  for (const std::string& value : uniques) {
    weights.push_back(importance_weight(value, labels, cfg.importance));
  }

  for (std::size_t draw = 0; draw < want; ++draw) {
    double total = 0.0;
    for (std::size_t idx : remaining) total += weights[idx];
    double target = uniform01(rng) * total;
    std::size_t chosen_pos = remaining.size() - 1;  // guards FP edge at 1.0
    double cumulative = 0.0;
    for (std::size_t pos = 0; pos < remaining.size(); ++pos) {
      cumulative += weights[remaining[pos]];
      if (target < cumulative) {
        chosen_pos = pos;
        break;
      }
    }
    out.push_back(uniques[remaining[chosen_pos]]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(chosen_pos));
  }
  return out;
}

/// Pads `samples` to exactly `phi` entries by cycling through the input in
/// order.  An empty input (degenerate-empty column) pads with empty strings.
inline std::vector<std::string> pad_context(const std::vector<std::string>& samples,
                                            std::size_t phi) {
  std::vector<std::string> out = samples;
  if (out.size() >= phi) return out;
  out.reserve(phi);
  if (samples.empty()) {
    out.assign(phi, std::string());
    return out;
  }
  std::size_t cycle = samples.size();
  for (std::size_t i = out.size(); i < phi; ++i) {
    out.push_back(samples[i % cycle]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Summary statistics
// ---------------------------------------------------------------------------

inline double round2(double x) { return std::round(x * 100.0) / 100.0; }

inline SummaryStats summary_stats(const std::vector<std::string>& values) {
  if (values.empty()) {
    throw Error(ErrorCode::degenerate_column,
                "summary statistics require a nonempty column");
  }
  SummaryStats stats;
  std::vector<double> xs;
  xs.reserve(values.size());
  if (is_numeric_context(values)) {
    stats.basis = StatsBasis::values;
    for (const std::string& v : values) xs.push_back(*parse_decimal(v));
  } else {
    stats.basis = StatsBasis::value_lengths;
    for (const std::string& v : values) xs.push_back(static_cast<double>(v.size()));
  }

  double n = static_cast<double>(xs.size());
  double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double sq_dev = 0.0;
  for (double x : xs) sq_dev += (x - mean) * (x - mean);
  double std_dev = std::sqrt(sq_dev / n);  // population form

  std::vector<double> sorted = xs;
  std::sort(sorted.begin(), sorted.end());
  double median = sorted.size() % 2 == 1
                      ? sorted[sorted.size() / 2]
                      : (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]) / 2.0;

  // Mode: highest count, ties broken by smallest value (map iterates sorted).
  std::map<double, std::size_t> counts;
  for (double x : xs) ++counts[x];
  double mode = sorted.front();
  std::size_t best_count = 0;
  for (const auto& [value, count] : counts) {
    if (count > best_count) {
      best_count = count;
      mode = value;
    }
  }

  stats.mean = round2(mean);
  stats.std_dev = round2(std_dev);
  stats.median = round2(median);
  stats.mode = round2(mode);
  stats.max = round2(sorted.back());
  stats.min = round2(sorted.front());
  return stats;
}

/// Renders one statistic value: integers print without a decimal point,
/// everything else with at most two decimals (trailing zeros dropped).
inline std::string format_stat(double value) {
  double rounded = round2(value);
  if (rounded == 0.0) rounded = 0.0;  // normalize -0
  if (rounded == std::floor(rounded) && std::abs(rounded) < 1e15) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.0f", rounded);
    return buffer;
  }
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.2f", rounded);
  std::string out = buffer;
  while (out.back() == '0') out.pop_back();
  if (out.back() == '.') out.pop_back();
  return out;
}

// ---------------------------------------------------------------------------
// Other-column samples
// ---------------------------------------------------------------------------

/// Total context budget when other-column borrowing is on: the target
/// column may fill up to phi slots, siblings fill the rest up to 2*phi.
inline std::size_t total_context_budget(std::size_t phi) { return 2 * phi; }

/// Splits the leftover context budget equally across the sibling columns,
/// round-robin ascending by origin index (lower indices receive the
/// remainder first), taking each column's first distinct values.  Output is
/// grouped by ascending origin index and tagged with it.
inline std::vector<std::pair<std::size_t, std::string>> other_column_samples(
    const std::vector<std::vector<std::string>>& others,
    const std::vector<std::size_t>& origin_indices, std::size_t taken,
    std::size_t phi) {
  std::vector<std::pair<std::size_t, std::string>> out;
  if (others.empty()) return out;
  std::size_t budget_total = total_context_budget(phi);
  if (taken >= budget_total) return out;
  std::size_t budget = budget_total - taken;
  std::size_t m = others.size();
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t quota = budget / m + (i < budget % m ? 1 : 0);
    std::vector<std::string> uniques = unique_values(others[i]);
    std::size_t take = std::min(quota, uniques.size());
    for (std::size_t j = 0; j < take; ++j) {
      out.emplace_back(origin_indices[i], uniques[j]);
    }
  }
  return out;
}

/// Table-level variant: siblings of `target_index`, tagged with their table
/// column index.  A single-column table yields no entries.
inline std::vector<std::pair<std::size_t, std::string>> other_columns_feature(
    const Table& table, std::size_t target_index, const SamplerConfig& cfg) {
  std::vector<std::vector<std::string>> others;
  std::vector<std::size_t> origins;
  for (std::size_t k = 0; k < table.columns.size(); ++k) {
    if (k == target_index) continue;
    others.push_back(table.columns[k].values);
    origins.push_back(k);
  }
  std::size_t taken =
      std::min(cfg.phi, unique_values(table.columns[target_index].values).size());
  return other_column_samples(others, origins, taken, cfg.phi);
}

// ---------------------------------------------------------------------------
// Context assembly
// ---------------------------------------------------------------------------

/// Builds the full context for one record.  The RNG stream is seeded from
/// (cfg.seed, record.column_id) only, so the result does not depend on
/// record order, thread interleaving, or the rest of the dataset.
inline ContextSample build_context(const DatasetRecord& record,
                                   const SamplerConfig& cfg, const LabelSet& labels) {
  Rng rng(mix_seed(cfg.seed, record.column_id));
  std::vector<std::string> uniques = unique_values(record.values);
  std::vector<std::string> drawn = weighted_sample(uniques, cfg, labels, rng);

  ContextSample context;
  context.samples = pad_context(drawn, cfg.phi);
  if (cfg.include_table_name && !record.table_name.empty()) {
    context.table_name = record.table_name;
  }
  if (cfg.include_summary_stats) {
    context.stats = summary_stats(record.values);
  }
  if (cfg.include_other_columns && !record.other_columns.empty()) {
    std::vector<std::size_t> origins(record.other_columns.size());
    std::iota(origins.begin(), origins.end(), std::size_t{0});
    context.other_column_samples = other_column_samples(
        record.other_columns, origins, std::min(cfg.phi, uniques.size()), cfg.phi);
  }
  return context;
}

}  // namespace archetype
