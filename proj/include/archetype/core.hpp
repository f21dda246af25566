#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "archetype/errors.hpp"
#include "archetype/strings.hpp"

namespace archetype {

using json = nlohmann::json;

/// One column of a source table: the raw cell values in row order.
struct Column {
  std::string name;
  std::vector<std::string> values;
};

/// A source table; the unit a CSV file is parsed into.
struct Table {
  std::string name;
  std::vector<Column> columns;
  std::size_t row_count = 0;
};

/// One annotation task: a target column plus the table context it came
/// from.  `other_columns` holds the sibling columns' values (in table
/// order) so context building can borrow evidence from the rest of the row.
struct DatasetRecord {
  std::string column_id;
  std::string table_name;
  std::vector<std::string> values;
  std::optional<std::string> label;  // ground truth when known
  std::vector<std::vector<std::string>> other_columns;
};

/// The closed annotation vocabulary.  `numeric_labels` is the subset that
/// may be assigned to numeric-looking columns; `null_label` is the
/// out-of-band fallback emitted when nothing can be mapped.
struct LabelSet {
  std::vector<std::string> labels;
  std::vector<std::string> numeric_labels;
  std::string null_label = "unknown";
};

// ---------------------------------------------------------------------------
// Value-level helpers
// ---------------------------------------------------------------------------

/// Distinct values in first-occurrence order, compared by exact bytes.
inline std::vector<std::string> unique_values(const std::vector<std::string>& values) {
  std::vector<std::string> out;
  std::unordered_set<std::string_view> seen;
  out.reserve(values.size());
  for (const std::string& v : values) {
    if (seen.insert(v).second) out.push_back(v);
  }
  // `seen` holds views into `values`, not `out`, so no dangling occurs.
  return out;
}

/// True when every value parses as a plain decimal number.  An empty list
/// is not numeric: there is no evidence either way, and the callers that
/// branch on this must not restrict the label space without evidence.
inline bool is_numeric_context(const std::vector<std::string>& values) {
  if (values.empty()) return false;
  for (const std::string& v : values) {
    if (!parse_decimal(v).has_value()) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Label sets
// ---------------------------------------------------------------------------

inline void validate_label_set(const LabelSet& set) {
  if (set.labels.empty()) {
    throw Error(ErrorCode::config, "label set must contain at least one label");
  }
  std::unordered_set<std::string> seen;
  for (const std::string& label : set.labels) {
    if (trim_view(label).empty()) {
      throw Error(ErrorCode::config, "label set contains a blank label");
    }
    if (!seen.insert(normalize_text(label)).second) {
      throw Error(ErrorCode::config,
                  "label set contains duplicate label '" + label + "'");
    }
  }
  for (const std::string& numeric : set.numeric_labels) {
    if (!seen.count(normalize_text(numeric))) {
      throw Error(ErrorCode::config, "numeric label '" + numeric +
                                         "' is not in the label set");
    }
  }
  if (trim_view(set.null_label).empty()) {
    throw Error(ErrorCode::config, "null label must be nonempty");
  }
  if (seen.count(normalize_text(set.null_label))) {
    throw Error(ErrorCode::config, "null label '" + set.null_label +
                                       "' must not collide with a real label");
  }
}

inline LabelSet label_set_from_json(const json& doc) {
  if (!doc.is_object()) {
    throw Error(ErrorCode::parse, "label set file must hold a JSON object");
  }
  LabelSet set;
  if (!doc.contains("labels") || !doc["labels"].is_array()) {
    throw Error(ErrorCode::parse, "label set needs a 'labels' array");
  }
  for (const json& item : doc["labels"]) {
    if (!item.is_string()) {
      throw Error(ErrorCode::parse, "label set 'labels' must contain strings");
    }
    set.labels.push_back(item.get<std::string>());
  }
  if (doc.contains("numeric_labels")) {
    if (!doc["numeric_labels"].is_array()) {
      throw Error(ErrorCode::parse, "'numeric_labels' must be an array");
    }
    for (const json& item : doc["numeric_labels"]) {
      if (!item.is_string()) {
        throw Error(ErrorCode::parse, "'numeric_labels' must contain strings");
      }
      set.numeric_labels.push_back(item.get<std::string>());
    }
  }
  if (doc.contains("null_label")) {
    if (!doc["null_label"].is_string()) {
      throw Error(ErrorCode::parse, "'null_label' must be a string");
    }
    set.null_label = doc["null_label"].get<std::string>();
  }
  validate_label_set(set);
  return set;
}

inline json label_set_to_json(const LabelSet& set) {
  return json{{"labels", set.labels},
              {"numeric_labels", set.numeric_labels},
              {"null_label", set.null_label}};
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::config, "cannot open file: " + path);
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorCode::config, "cannot write file: " + path);
  }
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) {
    throw Error(ErrorCode::config, "short write to file: " + path);
  }
}

inline LabelSet load_label_set(const std::string& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& err) {
    throw Error(ErrorCode::parse,
                "label set " + path + " is not valid JSON: " + err.what());
  }
  return label_set_from_json(doc);
}

// ---------------------------------------------------------------------------
// CSV parsing
// ---------------------------------------------------------------------------

/// Parses RFC 4180-style CSV text: comma separators, LF or CRLF row ends,
/// double-quoted fields with "" escapes.  Blank lines are skipped, short
/// rows are padded with empty cells, and an unterminated quote is an error.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  std::size_t quote_open_at = 0;
  bool field_started = false;  // distinguishes blank lines from "" cells

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    if (field_started || !field.empty() || !row.empty()) {
      end_field();
      rows.push_back(std::move(row));
      row.clear();
    }
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        quote_open_at = i;
        field_started = true;
        break;
      case ',':
        field_started = true;  // a separator proves the row has content
        end_field();
        field_started = true;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_row();
        break;
      case '\n':
        end_row();
        break;
      default:
        field.push_back(c);
        field_started = true;
        break;
    }
  }
  if (in_quotes) {
    throw Error(ErrorCode::parse, "CSV ends inside a quoted field opened at byte " +
                                      std::to_string(quote_open_at));
  }
  end_row();

  std::size_t width = 0;
  for (const auto& r : rows) width = std::max(width, r.size());
  for (auto& r : rows) r.resize(width);
  return rows;
}

inline Table table_from_csv(const std::string& name, std::string_view text) {
  Table table;
  table.name = name;
  std::vector<std::vector<std::string>> rows = parse_csv(text);
  table.row_count = rows.size();
  std::size_t width = rows.empty() ? 0 : rows.front().size();
  table.columns.resize(width);
  for (std::size_t j = 0; j < width; ++j) {
    table.columns[j].name = name + "-" + std::to_string(j);
    table.columns[j].values.reserve(rows.size());
  }
  for (const auto& row : rows) {
    for (std::size_t j = 0; j < width; ++j) {
      table.columns[j].values.push_back(row[j]);
    }
  }
  return table;
}

/// Expands a table into one record per column; each record sees the other
/// columns of the same table as context.
inline std::vector<DatasetRecord> table_to_records(const Table& table) {
  std::vector<DatasetRecord> records;
  records.reserve(table.columns.size());
  for (std::size_t j = 0; j < table.columns.size(); ++j) {
    DatasetRecord record;
    record.column_id = table.columns[j].name;
    record.table_name = table.name;
    record.values = table.columns[j].values;
    for (std::size_t k = 0; k < table.columns.size(); ++k) {
      if (k != j) record.other_columns.push_back(table.columns[k].values);
    }
    records.push_back(std::move(record));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Dataset loading and saving
// ---------------------------------------------------------------------------

enum class DatasetFormat { jsonl, csv };

inline DatasetRecord record_from_json(const json& doc, std::size_t line_number) {
  auto fail = [&](const std::string& what) -> Error {
    return Error(ErrorCode::parse,
                 "dataset line " + std::to_string(line_number) + ": " + what);
  };
  if (!doc.is_object()) throw fail("record must be a JSON object");
  if (!doc.contains("column_id") || !doc["column_id"].is_string()) {
    throw fail("missing string key 'column_id'");
  }
  if (!doc.contains("values") || !doc["values"].is_array()) {
    throw fail("missing array key 'values'");
  }
  DatasetRecord record;
  record.column_id = doc["column_id"].get<std::string>();
  if (record.column_id.empty()) throw fail("'column_id' must be nonempty");
  for (const json& value : doc["values"]) {
    if (!value.is_string()) throw fail("'values' must contain strings");
    record.values.push_back(value.get<std::string>());
  }
  if (doc.contains("table_name") && !doc["table_name"].is_null()) {
    if (!doc["table_name"].is_string()) throw fail("'table_name' must be a string");
    record.table_name = doc["table_name"].get<std::string>();
  }
  if (doc.contains("label") && !doc["label"].is_null()) {
    if (!doc["label"].is_string()) throw fail("'label' must be a string");
    record.label = doc["label"].get<std::string>();
  }
  if (doc.contains("other_columns") && !doc["other_columns"].is_null()) {
    if (!doc["other_columns"].is_array()) {
      throw fail("'other_columns' must be an array of arrays");
    }
    for (const json& column : doc["other_columns"]) {
      if (!column.is_array()) throw fail("'other_columns' must be an array of arrays");
      std::vector<std::string> values;
      for (const json& value : column) {
        if (!value.is_string()) throw fail("'other_columns' must contain strings");
        values.push_back(value.get<std::string>());
      }
      record.other_columns.push_back(std::move(values));
    }
  }
  return record;
}

inline json record_to_json(const DatasetRecord& record) {
  json doc{{"column_id", record.column_id},
           {"table_name", record.table_name},
           {"values", record.values},
           {"other_columns", record.other_columns}};
  if (record.label.has_value()) doc["label"] = *record.label;
  return doc;
}

inline std::vector<DatasetRecord> dataset_from_jsonl(std::string_view text) {
  std::vector<DatasetRecord> records;
  std::unordered_set<std::string> seen_ids;
  std::size_t line_number = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_number;
    if (trim_view(line).empty()) {
      if (start > text.size()) break;
      continue;
    }
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error& err) {
      throw Error(ErrorCode::parse, "dataset line " + std::to_string(line_number) +
                                        ": invalid JSON: " + err.what());
    }
    DatasetRecord record = record_from_json(doc, line_number);
    if (!seen_ids.insert(record.column_id).second) {
      throw Error(ErrorCode::parse, "dataset line " + std::to_string(line_number) +
                                        ": duplicate column_id '" +
                                        record.column_id + "'");
    }
    records.push_back(std::move(record));
    if (start > text.size()) break;
  }
  return records;
}

inline DatasetFormat guess_dataset_format(const std::string& path) {
  std::string ext = std::filesystem::path(path).extension().string();
  for (char& c : ext) c = ascii_lower(c);
  return ext == ".csv" ? DatasetFormat::csv : DatasetFormat::jsonl;
}

inline std::vector<DatasetRecord> load_dataset(const std::string& path,
                                               DatasetFormat format) {
  std::string text = read_file(path);
  if (format == DatasetFormat::csv) {
    std::string stem = std::filesystem::path(path).stem().string();
    return table_to_records(table_from_csv(stem, text));
  }
  return dataset_from_jsonl(text);
}

inline std::vector<DatasetRecord> load_dataset(const std::string& path) {
  return load_dataset(path, guess_dataset_format(path));
}

inline std::string dataset_to_jsonl(const std::vector<DatasetRecord>& records) {
  std::string out;
  for (const DatasetRecord& record : records) {
    out += record_to_json(record).dump();
    out += '\n';
  }
  return out;
}

inline void save_dataset(const std::string& path,
                         const std::vector<DatasetRecord>& records) {
  write_file(path, dataset_to_jsonl(records));
}

}  // namespace archetype
