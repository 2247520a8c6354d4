#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace tlf::corpus {

namespace fs = std::filesystem;

using FieldList = std::vector<std::pair<std::string, std::string>>;

const std::string* find_field(const FieldList& fields, const std::string& name);
std::string* find_field(FieldList& fields, const std::string& name);

// One dataset row. Field order follows the schema that produced it.
struct Record {
  std::string id;
  FieldList text_fields;
  FieldList passthrough;
  // Passthrough fields whose string holds a JSON literal (number, bool, null)
  // rather than a JSON string; only produced by the jsonl reader.
  std::set<std::string> json_literals;

  bool operator==(const Record&) const = default;
};

enum class TableFormat { kTsv, kJsonl, kText };

struct TaskSchema {
  TableFormat format = TableFormat::kTsv;
  std::vector<std::string> text_columns;
  std::optional<std::string> id_column;
  std::vector<std::string> passthrough_columns;
  // TSV only: whether the first line names the columns. Without a header the
  // column order is `columns`, or id, text, passthrough when that is empty.
  bool header = false;
  std::vector<std::string> columns;

  void validate() const;
  std::vector<std::string> column_order() const;

  // A single-column schema for plain text corpora (one record per line).
  static TaskSchema plain_text(std::string column = "text");
};

TaskSchema schema_from_json_text(const std::string& json_text);
TaskSchema load_schema(const fs::path& path);
std::string schema_to_json_text(const TaskSchema& schema);

// Sequential reader; ids are explicit (id_column) or the 0-based data row index.
class TaskTableReader {
 public:
  TaskTableReader(const fs::path& path, TaskSchema schema);

  std::optional<Record> next();

 private:
  std::optional<Record> parse_tsv(const std::string& line);
  std::optional<Record> parse_jsonl(const std::string& line);
  void check_id(const std::string& id);

  fs::path path_;
  TaskSchema schema_;
  std::ifstream in_;
  std::vector<std::string> columns_;
  size_t line_no_ = 0;
  size_t row_index_ = 0;
  std::unordered_set<std::string> seen_ids_;
};

std::vector<Record> read_task_table(const fs::path& path, const TaskSchema& schema);
std::string serialize_task_table(const std::vector<Record>& records, const TaskSchema& schema);
void write_task_table(const std::vector<Record>& records, const fs::path& path,
                      const TaskSchema& schema);

// ---------------------------------------------------------------------------
// CoNLL-U

inline constexpr int kRoot = -1;

struct ParsedToken {
  std::string form;
  std::string upos;
  int head = kRoot;  // 0-based token index, or kRoot
  std::string deprel;

  bool operator==(const ParsedToken&) const = default;
};

struct ParsedSentence {
  std::string sent_id;
  std::vector<ParsedToken> tokens;

  std::vector<std::string> forms() const;
  bool operator==(const ParsedSentence&) const = default;
};

// Exactly one root, heads in range, no self-heads. Throws tlf::Error.
void validate_sentence(const ParsedSentence& sentence);

class ConlluReader {
 public:
  ConlluReader(std::istream& in, std::string source_name);

  std::optional<ParsedSentence> next();

 private:
  std::istream& in_;
  std::string source_;
  size_t line_no_ = 0;
  size_t block_index_ = 0;
};

std::vector<ParsedSentence> parse_conllu(const fs::path& path);
std::vector<ParsedSentence> parse_conllu_text(const std::string& text,
                                              const std::string& source_name = "<memory>");
std::string format_conllu(const std::vector<ParsedSentence>& sentences);

// sent_id convention linking a parse to one text field of a record.
std::string parse_key(const std::string& record_id, const std::string& field);

struct JoinedPair {
  size_t record_index;
  ParsedSentence parse;
  // Parse forms joined with single spaces differ from the record text.
  bool text_mismatch;
};

struct JoinResult {
  std::vector<JoinedPair> pairs;
  std::vector<std::string> missing;  // record ids without a parse (lenient only)
  size_t flagged() const;
};

// Strict mode throws when any record lacks a parse for `field`.
JoinResult join_parses(const std::vector<Record>& records,
                       const std::vector<ParsedSentence>& parses, const std::string& field,
                       bool lenient = false);

}  // namespace tlf::corpus
