#include "tlf/corpus_io.h"

#include <charconv>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "tlf/common.h"
#include "tlf/io_util.h"

namespace tlf::corpus {

using json = nlohmann::ordered_json;

const std::string* find_field(const FieldList& fields, const std::string& name) {
  for (const auto& [k, v] : fields)
    if (k == name) return &v;
  return nullptr;
}

std::string* find_field(FieldList& fields, const std::string& name) {
  for (auto& [k, v] : fields)
    if (k == name) return &v;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Schema

void TaskSchema::validate() const {
  if (text_columns.empty()) throw Error("schema: text_columns must be non-empty");
  std::set<std::string> names;
  auto add = [&](const std::string& n) {
    if (n.empty()) throw Error("schema: empty column name");
    if (!names.insert(n).second) throw Error("schema: column '" + n + "' declared twice");
  };
  if (id_column) add(*id_column);
  for (const auto& c : text_columns) add(c);
  for (const auto& c : passthrough_columns) add(c);
  if (format == TableFormat::kText &&
      (text_columns.size() != 1 || id_column || !passthrough_columns.empty()))
    throw Error("schema: text format takes exactly one text column and nothing else");
  if (!columns.empty()) {
    std::set<std::string> listed(columns.begin(), columns.end());
    if (listed != names || listed.size() != columns.size())
      throw Error("schema: 'columns' must list every declared column exactly once");
  }
}

std::vector<std::string> TaskSchema::column_order() const {
  if (!columns.empty()) return columns;
  std::vector<std::string> out;
  if (id_column) out.push_back(*id_column);
  out.insert(out.end(), text_columns.begin(), text_columns.end());
  out.insert(out.end(), passthrough_columns.begin(), passthrough_columns.end());
  return out;
}

TaskSchema TaskSchema::plain_text(std::string column) {
  TaskSchema s;
  s.format = TableFormat::kText;
  s.text_columns = {std::move(column)};
  return s;
}

TaskSchema schema_from_json_text(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("schema: ") + e.what());
  }
  if (!doc.is_object()) throw Error("schema: expected a JSON object");
  TaskSchema s;
  try {
    std::string fmt = doc.value("format", "tsv");
    if (fmt == "tsv") s.format = TableFormat::kTsv;
    else if (fmt == "jsonl") s.format = TableFormat::kJsonl;
    else if (fmt == "txt" || fmt == "text") s.format = TableFormat::kText;
    else throw Error("schema: unknown format '" + fmt + "'");
    s.text_columns = doc.value("text_columns", std::vector<std::string>{});
    s.passthrough_columns = doc.value("passthrough_columns", std::vector<std::string>{});
    if (doc.contains("id_column") && !doc["id_column"].is_null())
      s.id_column = doc["id_column"].get<std::string>();
    s.header = doc.value("header", false);
    s.columns = doc.value("columns", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw Error(std::string("schema: ") + e.what());
  }
  s.validate();
  return s;
}

TaskSchema load_schema(const fs::path& path) { return schema_from_json_text(read_file(path)); }

std::string schema_to_json_text(const TaskSchema& s) {
  json doc;
  doc["format"] = s.format == TableFormat::kTsv ? "tsv" : s.format == TableFormat::kJsonl ? "jsonl" : "txt";
  doc["text_columns"] = s.text_columns;
  doc["passthrough_columns"] = s.passthrough_columns;
  doc["id_column"] = s.id_column ? json(*s.id_column) : json(nullptr);
  doc["header"] = s.header;
  if (!s.columns.empty()) doc["columns"] = s.columns;
  return doc.dump();
}

// ---------------------------------------------------------------------------
// Task tables

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

}  // namespace

TaskTableReader::TaskTableReader(const fs::path& path, TaskSchema schema)
    : path_(path), schema_(std::move(schema)), in_(path, std::ios::binary) {
  schema_.validate();
  if (!in_) throw Error("cannot open " + path.string(), ErrorKind::kIo);
  columns_ = schema_.column_order();
}

void TaskTableReader::check_id(const std::string& id) {
  if (id.empty())
    throw Error(path_.string() + ":" + std::to_string(line_no_) + ": empty record id");
  if (!seen_ids_.insert(id).second)
    throw Error(path_.string() + ":" + std::to_string(line_no_) + ": duplicate id '" + id + "'");
}

std::optional<Record> TaskTableReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    if (schema_.format == TableFormat::kText) {
      Record r;
      r.id = std::to_string(row_index_++);
      r.text_fields.emplace_back(schema_.text_columns[0], line);
      return r;
    }
    if (schema_.format == TableFormat::kTsv) {
      if (schema_.header && line_no_ == 1) {
        auto names = split_tabs(line);
        std::set<std::string> declared(columns_.begin(), columns_.end());
        std::set<std::string> found(names.begin(), names.end());
        if (declared != found || found.size() != names.size())
          throw Error(path_.string() + ":1: header columns do not match the schema");
        columns_ = names;
        continue;
      }
      return parse_tsv(line);
    }
    if (line.empty()) continue;
    return parse_jsonl(line);
  }
  if (in_.bad()) throw Error("read failed: " + path_.string(), ErrorKind::kIo);
  return std::nullopt;
}

std::optional<Record> TaskTableReader::parse_tsv(const std::string& line) {
  auto cells = split_tabs(line);
  if (cells.size() != columns_.size())
    throw Error(path_.string() + ":" + std::to_string(line_no_) + ": expected " +
                std::to_string(columns_.size()) + " columns, found " + std::to_string(cells.size()));
  std::unordered_map<std::string, std::string> by_name;
  for (size_t i = 0; i < cells.size(); ++i) by_name[columns_[i]] = std::move(cells[i]);
  Record r;
  r.id = schema_.id_column ? by_name[*schema_.id_column] : std::to_string(row_index_);
  ++row_index_;
  check_id(r.id);
  for (const auto& c : schema_.text_columns) r.text_fields.emplace_back(c, by_name[c]);
  for (const auto& c : schema_.passthrough_columns) r.passthrough.emplace_back(c, by_name[c]);
  return r;
}

std::optional<Record> TaskTableReader::parse_jsonl(const std::string& line) {
  const std::string where = path_.string() + ":" + std::to_string(line_no_) + ": ";
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(where + "malformed JSON: " + e.what());
  }
  if (!obj.is_object()) throw Error(where + "expected a JSON object");
  std::set<std::string> declared(columns_.begin(), columns_.end());
  for (const auto& [k, v] : obj.items())
    if (!declared.count(k)) throw Error(where + "key '" + k + "' not declared in schema");

  Record r;
  auto get = [&](const std::string& key) -> const json& {
    auto it = obj.find(key);
    if (it == obj.end()) throw Error(where + "missing key '" + key + "'");
    return *it;
  };
  if (schema_.id_column) {
    const json& v = get(*schema_.id_column);
    if (v.is_string()) r.id = v.get<std::string>();
    else if (v.is_number_integer()) r.id = v.dump();
    else throw Error(where + "id must be a string or integer");
  } else {
    r.id = std::to_string(row_index_);
  }
  ++row_index_;
  check_id(r.id);
  for (const auto& c : schema_.text_columns) {
    const json& v = get(c);
    if (!v.is_string()) throw Error(where + "text column '" + c + "' must be a string");
    r.text_fields.emplace_back(c, v.get<std::string>());
  }
  for (const auto& c : schema_.passthrough_columns) {
    const json& v = get(c);
    if (v.is_string()) {
      r.passthrough.emplace_back(c, v.get<std::string>());
    } else {
      r.passthrough.emplace_back(c, v.dump());
      r.json_literals.insert(c);
    }
  }
  return r;
}

std::vector<Record> read_task_table(const fs::path& path, const TaskSchema& schema) {
  TaskTableReader reader(path, schema);
  std::vector<Record> out;
  while (auto r = reader.next()) out.push_back(std::move(*r));
  return out;
}

namespace {

const std::string& require_field(const Record& r, const std::string& column, const TaskSchema& s) {
  if (s.id_column && column == *s.id_column) return r.id;
  const std::string* v = find_field(r.text_fields, column);
  if (!v) v = find_field(r.passthrough, column);
  if (!v) throw Error("record '" + r.id + "' lacks field '" + column + "'");
  return *v;
}

}  // namespace

std::string serialize_task_table(const std::vector<Record>& records, const TaskSchema& schema) {
  schema.validate();
  std::string out;
  const auto columns = schema.column_order();
  if (schema.format == TableFormat::kTsv && schema.header) {
    out += join(columns, "\t");
    out += '\n';
  }
  for (const auto& r : records) {
    switch (schema.format) {
      case TableFormat::kText: {
        const std::string& v = require_field(r, schema.text_columns[0], schema);
        if (v.find('\n') != std::string::npos)
          throw Error("record '" + r.id + "': newline cannot be represented in a text corpus");
        out += v;
        out += '\n';
        break;
      }
      case TableFormat::kTsv: {
        for (size_t i = 0; i < columns.size(); ++i) {
          const std::string& v = require_field(r, columns[i], schema);
          if (v.find_first_of("\t\n") != std::string::npos)
            throw Error("record '" + r.id + "': field '" + columns[i] +
                        "' contains a tab or newline, which TSV cannot represent");
          if (i) out += '\t';
          out += v;
        }
        out += '\n';
        break;
      }
      case TableFormat::kJsonl: {
        json obj = json::object();
        for (const auto& c : columns) {
          const std::string& v = require_field(r, c, schema);
          if (r.json_literals.count(c)) {
            try {
              obj[c] = json::parse(v);
            } catch (const json::parse_error&) {
              throw Error("record '" + r.id + "': field '" + c + "' is not a JSON literal");
            }
          } else {
            obj[c] = v;
          }
        }
        try {
          out += obj.dump();
        } catch (const json::type_error& e) {
          throw Error("record '" + r.id + "': " + e.what());
        }
        out += '\n';
        break;
      }
    }
  }
  return out;
}

void write_task_table(const std::vector<Record>& records, const fs::path& path,
                      const TaskSchema& schema) {
  write_file_atomic(path, serialize_task_table(records, schema));
}

// ---------------------------------------------------------------------------
// CoNLL-U

std::vector<std::string> ParsedSentence::forms() const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.form);
  return out;
}

void validate_sentence(const ParsedSentence& s) {
  const std::string where = "sentence " + s.sent_id + ": ";
  if (s.tokens.empty()) throw Error(where + "no tokens");
  int roots = 0;
  const int n = static_cast<int>(s.tokens.size());
  for (int i = 0; i < n; ++i) {
    int h = s.tokens[i].head;
    if (h == kRoot) {
      ++roots;
    } else if (h < 0 || h >= n) {
      throw Error(where + "head of token " + std::to_string(i + 1) + " out of range");
    } else if (h == i) {
      throw Error(where + "token " + std::to_string(i + 1) + " is its own head");
    }
  }
  if (roots == 0) throw Error(where + "no root");
  if (roots > 1) throw Error(where + "multiple roots");
}

ConlluReader::ConlluReader(std::istream& in, std::string source_name)
    : in_(in), source_(std::move(source_name)) {}

namespace {

bool parse_int(const std::string& s, int& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

}  // namespace

std::optional<ParsedSentence> ConlluReader::next() {
  ParsedSentence sent;
  std::vector<int> raw_heads;
  bool in_block = false;
  size_t block_line = 0;
  std::optional<std::string> sent_id;
  std::string line;

  auto fail = [&](size_t line_no, const std::string& msg) -> Error {
    std::string id = sent_id ? *sent_id : std::to_string(block_index_);
    return Error(source_ + ":" + std::to_string(line_no) + ": sentence " + id + ": " + msg);
  };

  auto finish = [&]() -> std::optional<ParsedSentence> {
    sent.sent_id = sent_id ? *sent_id : std::to_string(block_index_);
    ++block_index_;
    const int n = static_cast<int>(raw_heads.size());
    for (int i = 0; i < n; ++i) {
      int h = raw_heads[i];
      if (h < 0 || h > n) throw fail(block_line, "head of token " + std::to_string(i + 1) + " out of range");
      sent.tokens[i].head = h == 0 ? kRoot : h - 1;
    }
    try {
      validate_sentence(sent);
    } catch (const Error& e) {
      throw Error(source_ + ":" + std::to_string(block_line) + ": " + e.what());
    }
    return sent;
  };

  while (std::getline(in_, line)) {
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (!in_block) continue;
      if (sent.tokens.empty()) throw fail(block_line, "block has no word lines");
      return finish();
    }
    if (!in_block) {
      in_block = true;
      block_line = line_no_;
    }
    if (line[0] == '#') {
      static const std::string kKey = "# sent_id";
      if (line.compare(0, kKey.size(), kKey) == 0) {
        auto eq = line.find('=');
        if (eq != std::string::npos) {
          std::string v = line.substr(eq + 1);
          size_t b = v.find_first_not_of(' ');
          size_t e = v.find_last_not_of(' ');
          sent_id = b == std::string::npos ? "" : v.substr(b, e - b + 1);
        }
      }
      continue;
    }
    std::vector<std::string> cols;
    {
      size_t start = 0;
      while (true) {
        size_t tab = line.find('\t', start);
        cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
      }
    }
    if (cols.size() != 10)
      throw fail(line_no_, "expected 10 columns, found " + std::to_string(cols.size()));
    const std::string& id = cols[0];
    if (id.find('-') != std::string::npos || id.find('.') != std::string::npos) continue;
    int idx = 0;
    if (!parse_int(id, idx)) throw fail(line_no_, "non-integer token id '" + id + "'");
    if (idx != static_cast<int>(sent.tokens.size()) + 1)
      throw fail(line_no_, "token id " + id + " out of sequence");
    int head = 0;
    if (!parse_int(cols[6], head)) throw fail(line_no_, "non-integer head '" + cols[6] + "'");
    if (head < 0) throw fail(line_no_, "head out of range");
    sent.tokens.push_back(ParsedToken{cols[1], cols[3], kRoot, cols[7]});
    raw_heads.push_back(head);
  }
  if (in_.bad()) throw Error("read failed: " + source_, ErrorKind::kIo);
  if (in_block) {
    if (sent.tokens.empty()) throw fail(block_line, "block has no word lines");
    return finish();
  }
  return std::nullopt;
}

std::vector<ParsedSentence> parse_conllu(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string(), ErrorKind::kIo);
  ConlluReader reader(in, path.string());
  std::vector<ParsedSentence> out;
  while (auto s = reader.next()) out.push_back(std::move(*s));
  return out;
}

std::vector<ParsedSentence> parse_conllu_text(const std::string& text, const std::string& source_name) {
  std::istringstream in(text);
  ConlluReader reader(in, source_name);
  std::vector<ParsedSentence> out;
  while (auto s = reader.next()) out.push_back(std::move(*s));
  return out;
}

std::string format_conllu(const std::vector<ParsedSentence>& sentences) {
  std::string out;
  for (const auto& s : sentences) {
    out += "# sent_id = " + s.sent_id + "\n";
    for (size_t i = 0; i < s.tokens.size(); ++i) {
      const auto& t = s.tokens[i];
      out += std::to_string(i + 1) + "\t" + t.form + "\t_\t" + t.upos + "\t_\t_\t" +
             std::to_string(t.head == kRoot ? 0 : t.head + 1) + "\t" + t.deprel + "\t_\t_\n";
    }
    out += "\n";
  }
  return out;
}

std::string parse_key(const std::string& record_id, const std::string& field) {
  return record_id + "#" + field;
}

size_t JoinResult::flagged() const {
  size_t n = 0;
  for (const auto& p : pairs) n += p.text_mismatch;
  return n;
}

JoinResult join_parses(const std::vector<Record>& records, const std::vector<ParsedSentence>& parses,
                       const std::string& field, bool lenient) {
  std::unordered_map<std::string, const ParsedSentence*> by_id;
  for (const auto& p : parses)
    if (!by_id.emplace(p.sent_id, &p).second) throw Error("duplicate parse sent_id '" + p.sent_id + "'");

  JoinResult result;
  for (size_t i = 0; i < records.size(); ++i) {
    const Record& r = records[i];
    const std::string* text = find_field(r.text_fields, field);
    if (!text) throw Error("record '" + r.id + "' has no text field '" + field + "'");
    auto it = by_id.find(parse_key(r.id, field));
    if (it == by_id.end()) {
      result.missing.push_back(r.id);
      continue;
    }
    bool mismatch = join(it->second->forms(), " ") != join(split_whitespace(*text), " ");
    result.pairs.push_back(JoinedPair{i, *it->second, mismatch});
  }
  if (!lenient && !result.missing.empty()) {
    std::string msg = "missing parses for field '" + field + "': ";
    for (size_t i = 0; i < result.missing.size() && i < 10; ++i) msg += (i ? ", " : "") + result.missing[i];
    if (result.missing.size() > 10) msg += " (+" + std::to_string(result.missing.size() - 10) + " more)";
    throw Error(msg);
  }
  return result;
}

}  // namespace tlf::corpus
