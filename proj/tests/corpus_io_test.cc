#include <gtest/gtest.h>

#include <functional>
#include <sstream>

#include "test_support.h"
#include "tlf/common.h"
#include "tlf/corpus_io.h"

namespace tlf::corpus {
namespace {

using tlf::testing::TempDir;
using tlf::testing::data_dir;

TaskSchema pair_schema(TableFormat format) {
  TaskSchema s;
  s.format = format;
  s.id_column = "idx";
  s.text_columns = {"sentence1", "sentence2"};
  s.passthrough_columns = {"label"};
  return s;
}

std::string what_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

TEST(TaskTable, TsvWithHeaderRoundTrips) {
  TempDir tmp;
  TaskSchema s = pair_schema(TableFormat::kTsv);
  s.header = true;
  auto p = tmp.write("t.tsv", "label\tidx\tsentence1\tsentence2\n1\ta\tthe cat\tthe dog\n0\tb\tx y\tz\n");
  auto records = read_task_table(p, s);
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0].id, "a");
  EXPECT_EQ(*find_field(records[0].text_fields, "sentence2"), "the dog");
  EXPECT_EQ(*find_field(records[1].passthrough, "label"), "0");

  // Header order of the input is not preserved; the schema decides.
  auto again = tmp / "u.tsv";
  write_task_table(records, again, s);
  EXPECT_EQ(read_task_table(again, s), records);
}

TEST(TaskTable, TsvWithoutHeaderUsesSchemaOrder) {
  TempDir tmp;
  TaskSchema s = pair_schema(TableFormat::kTsv);
  EXPECT_EQ(s.column_order(), (std::vector<std::string>{"idx", "sentence1", "sentence2", "label"}));
  auto p = tmp.write("t.tsv", "7\tone two\tthree\tpos\n");
  auto records = read_task_table(p, s);
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(serialize_task_table(records, s), "7\tone two\tthree\tpos\n");
}

TEST(TaskTable, JsonlKeepsLiteralTypes) {
  TempDir tmp;
  TaskSchema s = pair_schema(TableFormat::kJsonl);
  std::string line = R"({"idx":"q1","sentence1":"a \"quoted\" word","sentence2":"tab\there","label":1})";
  auto p = tmp.write("t.jsonl", line + "\n");
  auto records = read_task_table(p, s);
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(*find_field(records[0].text_fields, "sentence1"), "a \"quoted\" word");
  EXPECT_EQ(*find_field(records[0].passthrough, "label"), "1");
  EXPECT_TRUE(records[0].json_literals.count("label"));
  EXPECT_EQ(serialize_task_table(records, s), line + "\n");
}

TEST(TaskTable, SynthesizedIdsAreRowIndices) {
  TempDir tmp;
  auto p = tmp.write("c.txt", "first line\nsecond line\n");
  auto records = read_task_table(p, TaskSchema::plain_text());
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0].id, "0");
  EXPECT_EQ(records[1].id, "1");
}

TEST(TaskTable, ErrorsNameFileAndLine) {
  TempDir tmp;
  TaskSchema s = pair_schema(TableFormat::kTsv);
  auto p = tmp.write("bad.tsv", "1\ta\tb\tc\n2\tonly-two\n");
  std::string msg = what_of([&] { read_task_table(p, s); });
  EXPECT_NE(msg.find("bad.tsv:2"), std::string::npos) << msg;
}

TEST(TaskTable, DuplicateIdsRejected) {
  TempDir tmp;
  auto p = tmp.write("d.tsv", "1\ta\tb\tc\n1\td\te\tf\n");
  EXPECT_THROW(read_task_table(p, pair_schema(TableFormat::kTsv)), Error);
}

TEST(TaskTable, TsvCannotHoldTabs) {
  TaskSchema s = pair_schema(TableFormat::kTsv);
  Record r{"x", {{"sentence1", "a\tb"}, {"sentence2", "c"}}, {{"label", "0"}}, {}};
  EXPECT_THROW(serialize_task_table({r}, s), Error);
}

TEST(Schema, JsonRoundTrip) {
  TaskSchema s = pair_schema(TableFormat::kJsonl);
  TaskSchema back = schema_from_json_text(schema_to_json_text(s));
  EXPECT_EQ(back.text_columns, s.text_columns);
  EXPECT_EQ(back.id_column, s.id_column);
  EXPECT_EQ(back.passthrough_columns, s.passthrough_columns);
  EXPECT_EQ(back.format, s.format);
}

TEST(Schema, RejectsEmptyTextColumns) {
  TaskSchema s;
  EXPECT_THROW(s.validate(), Error);
}

TEST(Conllu, ParsesFixture) {
  auto sents = parse_conllu(data_dir() / "film_en.conllu");
  ASSERT_EQ(sents.size(), 1u);
  EXPECT_EQ(sents[0].sent_id, "0#text");
  ASSERT_EQ(sents[0].tokens.size(), 23u);
  EXPECT_EQ(sents[0].tokens[2].head, kRoot);
  EXPECT_EQ(sents[0].tokens[0].head, 1);
  EXPECT_EQ(sents[0].tokens[4].deprel, "det:predet");
}

TEST(Conllu, SkipsMultiwordRangesAndEmptyNodes) {
  auto sents = parse_conllu(data_dir() / "ud_sample.conllu");
  ASSERT_EQ(sents.size(), 2u);
  EXPECT_EQ(sents[0].forms(), (std::vector<std::string>{"vamos", "a", "la", "playa", "de", "el", "pueblo"}));
  EXPECT_EQ(sents[1].tokens.size(), 6u);
  for (const auto& s : sents) EXPECT_NO_THROW(validate_sentence(s));
}

TEST(Conllu, FormatRoundTrips) {
  auto sents = parse_conllu(data_dir() / "fr_sample.conllu");
  EXPECT_EQ(parse_conllu_text(format_conllu(sents)), sents);
}

TEST(Conllu, StructuralErrors) {
  const std::string two_roots = "1\ta\ta\tX\t_\t_\t0\troot\t_\t_\n2\tb\tb\tX\t_\t_\t0\troot\t_\t_\n\n";
  EXPECT_NE(what_of([&] { parse_conllu_text(two_roots); }).find("multiple roots"), std::string::npos);
  const std::string no_root = "1\ta\ta\tX\t_\t_\t2\tdep\t_\t_\n2\tb\tb\tX\t_\t_\t1\tdep\t_\t_\n\n";
  EXPECT_NE(what_of([&] { parse_conllu_text(no_root); }).find("no root"), std::string::npos);
  const std::string self = "1\ta\ta\tX\t_\t_\t1\tdep\t_\t_\n2\tb\tb\tX\t_\t_\t0\troot\t_\t_\n\n";
  EXPECT_NE(what_of([&] { parse_conllu_text(self); }).find("own head"), std::string::npos);
  const std::string range = "1\ta\ta\tX\t_\t_\t5\tdep\t_\t_\n2\tb\tb\tX\t_\t_\t0\troot\t_\t_\n\n";
  EXPECT_NE(what_of([&] { parse_conllu_text(range); }).find("out of range"), std::string::npos);
  const std::string cols = "1\ta\ta\tX\t_\t_\t0\troot\n\n";
  EXPECT_THROW(parse_conllu_text(cols), Error);
  const std::string gap = "1\ta\ta\tX\t_\t_\t0\troot\t_\t_\n3\tb\tb\tX\t_\t_\t1\tdep\t_\t_\n\n";
  EXPECT_THROW(parse_conllu_text(gap), Error);
}

TEST(Conllu, SentIdFallsBackToBlockIndex) {
  const std::string text = "1\ta\ta\tX\t_\t_\t0\troot\t_\t_\n\n1\tb\tb\tX\t_\t_\t0\troot\t_\t_\n\n";
  auto sents = parse_conllu_text(text);
  ASSERT_EQ(sents.size(), 2u);
  EXPECT_EQ(sents[0].sent_id, "0");
  EXPECT_EQ(sents[1].sent_id, "1");
}

TEST(Join, StrictListsMissingIds) {
  std::vector<Record> records{{"r1", {{"s", "a b"}}, {}, {}}, {"r2", {{"s", "c"}}, {}, {}}};
  auto parses = parse_conllu_text("# sent_id = r1#s\n1\ta\ta\tX\t_\t_\t0\troot\t_\t_\n2\tb\tb\tX\t_\t_\t1\tdep\t_\t_\n\n");
  std::string msg = what_of([&] { join_parses(records, parses, "s"); });
  EXPECT_NE(msg.find("r2"), std::string::npos) << msg;

  auto lenient = join_parses(records, parses, "s", true);
  ASSERT_EQ(lenient.pairs.size(), 1u);
  EXPECT_EQ(lenient.missing, (std::vector<std::string>{"r2"}));
  EXPECT_EQ(lenient.flagged(), 0u);
}

TEST(Join, FlagsTextMismatch) {
  std::vector<Record> records{{"r1", {{"s", "a  c"}}, {}, {}}};
  auto parses = parse_conllu_text("# sent_id = r1#s\n1\ta\ta\tX\t_\t_\t0\troot\t_\t_\n2\tb\tb\tX\t_\t_\t1\tdep\t_\t_\n\n");
  auto res = join_parses(records, parses, "s");
  ASSERT_EQ(res.pairs.size(), 1u);
  EXPECT_TRUE(res.pairs[0].text_mismatch);
  EXPECT_EQ(res.flagged(), 1u);
}

}  // namespace
}  // namespace tlf::corpus
