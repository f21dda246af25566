#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "archetype/core.hpp"
#include "archetype/errors.hpp"
#include "archetype/rng.hpp"

namespace archetype {

/// A class of data that synthetic columns get drawn from.
struct ClassPool {
  std::string label;
  std::vector<std::string> values;
};

/// Shape of a synthetic benchmark: how many columns, their length range,
/// and the seed that fully determines the output.
struct BenchSpec {
  std::size_t n_columns = 2000;
  std::size_t length_min = 1;
  std::size_t length_max = 50;
  std::uint64_t seed = 0;
};

inline void validate_pools(const std::vector<ClassPool>& pools) {
  std::unordered_set<std::string> seen;
  for (const ClassPool& pool : pools) {
    if (trim_view(pool.label).empty()) {
      throw Error(ErrorCode::config, "class pool with a blank label");
    }
    if (pool.values.empty()) {
      throw Error(ErrorCode::config,
                  "class pool '" + pool.label + "' has no values");
    }
    if (!seen.insert(normalize_text(pool.label)).second) {
      throw Error(ErrorCode::config,
                  "duplicate class pool label '" + pool.label + "'");
    }
  }
}

inline void validate_bench_spec(const BenchSpec& spec) {
  if (spec.n_columns < 1) {
    throw Error(ErrorCode::config, "benchmark needs at least one column");
  }
  if (spec.length_min < 1 || spec.length_min > spec.length_max) {
    throw Error(ErrorCode::config,
                "benchmark column length range must satisfy 1 <= min <= max");
  }
}

inline std::vector<ClassPool> pools_from_json(const json& doc) {
  if (!doc.is_array()) {
    throw Error(ErrorCode::parse, "pool file must hold a JSON array");
  }
  std::vector<ClassPool> pools;
  for (const json& item : doc) {
    if (!item.is_object() || !item.contains("label") || !item["label"].is_string() ||
        !item.contains("values") || !item["values"].is_array()) {
      throw Error(ErrorCode::parse,
                  "each pool needs a string 'label' and an array 'values'");
    }
    ClassPool pool;
    pool.label = item["label"].get<std::string>();
    for (const json& value : item["values"]) {
      if (!value.is_string()) {
        throw Error(ErrorCode::parse,
                    "pool '" + pool.label + "' values must be strings");
      }
      pool.values.push_back(value.get<std::string>());
    }
    pools.push_back(std::move(pool));
  }
  validate_pools(pools);
  return pools;
}

inline std::vector<ClassPool> load_pools(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& err) {
    throw Error(ErrorCode::parse,
                "pool file " + path + " is not valid JSON: " + err.what());
  }
  return pools_from_json(doc);
}

/// Builds a label set covering the pools (labels in pool order, fallback
/// class "unknown"), for the common generate-then-annotate loop.
inline LabelSet label_set_from_pools(const std::vector<ClassPool>& pools,
                                     const std::string& null_label = "unknown") {
  LabelSet labels;
  for (const ClassPool& pool : pools) labels.labels.push_back(pool.label);
  labels.null_label = null_label;
  validate_label_set(labels);
  return labels;
}

/// Synthesizes labeled columns: per column, a uniformly random class, a
/// uniformly random length in [length_min, length_max], and values drawn
/// with replacement from that class's pool.  Single-threaded on purpose —
/// one generator stream keeps the output a pure function of the seed.
inline std::vector<DatasetRecord> generate(const std::vector<ClassPool>& pools,
                                           const BenchSpec& spec) {
  if (pools.size() < 2) {
    throw Error(ErrorCode::config, "benchmark generation needs at least two pools");
  }
  validate_pools(pools);
  validate_bench_spec(spec);

  Rng rng(splitmix64(spec.seed));
  std::vector<DatasetRecord> records;
  records.reserve(spec.n_columns);
  for (std::size_t i = 0; i < spec.n_columns; ++i) {
    const ClassPool& pool = pools[uniform_index(rng, pools.size())];
    std::size_t length =
        spec.length_min + uniform_index(rng, spec.length_max - spec.length_min + 1);
    DatasetRecord record;
    record.column_id = "col-" + std::to_string(i);
    record.label = pool.label;
    record.values.reserve(length);
    for (std::size_t j = 0; j < length; ++j) {
      record.values.push_back(pool.values[uniform_index(rng, pool.values.size())]);
    }
    records.push_back(std::move(record));
  }
  return records;
}

/// Turns round(fraction * n) columns into degenerate ones: every value
/// replaced by a single value picked uniformly from that column.  Column
/// choice is a seeded partial Fisher-Yates, so the result is deterministic.
inline std::vector<DatasetRecord> inject_degenerates(std::vector<DatasetRecord> records,
                                                     double fraction,
                                                     std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw Error(ErrorCode::config, "degenerate fraction must lie in [0, 1]");
  }
  std::size_t n = records.size();
  std::size_t k = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(n)));
  if (k == 0) return records;

  Rng rng(splitmix64(seed ^ 0x9E3779B97F4A7C15ULL));
  std::vector<std::size_t> indices(n);
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + uniform_index(rng, n - i);
    std::swap(indices[i], indices[j]);
  }
  for (std::size_t i = 0; i < k; ++i) {
    DatasetRecord& record = records[indices[i]];
    if (record.values.empty()) continue;
    std::string constant = record.values[uniform_index(rng, record.values.size())];
    std::fill(record.values.begin(), record.values.end(), constant);
  }
  return records;
}

}  // namespace archetype
