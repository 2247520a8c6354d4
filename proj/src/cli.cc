#include "tlf/cli.h"

#include <cerrno>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "tlf/common.h"
#include "tlf/corpus_io.h"
#include "tlf/embed.h"
#include "tlf/io_util.h"
#include "tlf/parallel.h"
#include "tlf/reorder.h"
#include "tlf/stats.h"
#include "tlf/subword.h"

#ifndef TLF_VERSION
#define TLF_VERSION "0.0.0"
#endif

namespace tlf::cli {

using ojson = nlohmann::ordered_json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string created_at_now() {
  std::time_t t;
  if (const char* sde = std::getenv("SOURCE_DATE_EPOCH"); sde && *sde) {
    char* end = nullptr;
    errno = 0;
    long long v = std::strtoll(sde, &end, 10);
    if (errno || *end) throw Error("SOURCE_DATE_EPOCH is not an integer: " + std::string(sde));
    t = static_cast<std::time_t>(v);
  } else {
    t = std::time(nullptr);
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Options every subcommand accepts.
struct Common {
  std::string config_path;
  std::string seed;
  unsigned workers = 1;
  std::string out;
  ojson config = ojson::object();

  CLI::Option* seed_opt = nullptr;
  CLI::Option* workers_opt = nullptr;
  CLI::Option* out_opt = nullptr;
};

void add_common(CLI::App* sub, Common& c, const std::string& out_help) {
  sub->add_option("--config", c.config_path, "JSON file of option values; flags take precedence");
  c.seed_opt = sub->add_option("--seed", c.seed, "64-bit seed (falls back to TLF_SEED)");
  c.workers_opt = sub->add_option("--workers", c.workers, "worker threads (0 = all cores)");
  c.out_opt = sub->add_option("--out", c.out, out_help);
}

void load_config(Common& c) {
  if (c.config_path.empty()) return;
  try {
    c.config = ojson::parse(read_file(c.config_path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(c.config_path + ": invalid JSON config: " + e.what());
  }
  if (!c.config.is_object()) throw Error(c.config_path + ": config must be a JSON object");
}

template <class T>
void fill(const Common& c, const char* key, const CLI::Option* opt, T& var) {
  if ((opt && opt->count() > 0) || !c.config.contains(key)) return;
  try {
    var = c.config.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(c.config_path + ": bad value for \"" + key + "\": " + e.what());
  }
}

void fill_common(Common& c) {
  load_config(c);
  if (c.seed_opt->count() == 0 && c.config.contains("seed")) {
    const auto& v = c.config["seed"];
    if (v.is_number_unsigned()) c.seed = std::to_string(v.get<uint64_t>());
    else if (v.is_string()) c.seed = v.get<std::string>();
    else throw Error(c.config_path + ": seed must be an unsigned integer or string");
  }
  fill(c, "workers", c.workers_opt, c.workers);
  fill(c, "out", c.out_opt, c.out);
  if (c.workers == 0) c.workers = std::max(1u, std::thread::hardware_concurrency());
}

std::optional<uint64_t> resolve_seed(const Common& c) {
  std::string text = c.seed;
  if (text.empty()) {
    const char* env = std::getenv("TLF_SEED");
    if (!env || !*env) return std::nullopt;
    text = env;
  }
  auto seed = parse_seed(text);
  if (!seed) throw UsageError("invalid seed: " + text);
  return seed;
}

uint64_t require_seed(const Common& c, const std::string& why) {
  auto seed = resolve_seed(c);
  if (!seed) throw UsageError(why + " needs a seed (--seed or TLF_SEED)");
  return *seed;
}

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw UsageError("missing required option " + flag);
}

FileDigest input_digest(const fs::path& p, const std::string& kind) {
  if (!fs::exists(p)) throw Error(p.string() + ": no such file");
  return {p.string(), sha256_file(p), kind};
}

FileDigest output_digest(const fs::path& dir, const fs::path& p, const std::string& kind) {
  return {fs::relative(p, dir).generic_string(), sha256_file(p), kind};
}

void write_manifest(const fs::path& path, const Manifest& m) {
  write_file_atomic(path, build_manifest(m).dump(2) + "\n");
}

corpus::TaskSchema schema_or_text(const std::string& schema_path) {
  if (schema_path.empty()) return corpus::TaskSchema::plain_text();
  return corpus::load_schema(schema_path);
}

std::string format_id_list(const std::vector<std::string>& ids, size_t limit = 10) {
  std::string out;
  for (size_t i = 0; i < ids.size() && i < limit; ++i) out += (i ? ", " : "") + ids[i];
  if (ids.size() > limit) out += ", ... (" + std::to_string(ids.size()) + " total)";
  return out;
}

ojson json_strings(const std::vector<std::string>& v) {
  ojson a = ojson::array();
  for (const auto& s : v) a.push_back(s);
  return a;
}

// Order-model paths named by a transform spec, for input digests.
std::vector<fs::path> spec_model_paths(const fs::path& spec_path) {
  std::vector<fs::path> out;
  auto j = ojson::parse(read_file(spec_path), nullptr, false);
  if (j.is_discarded() || !j.contains("pos_map") || !j["pos_map"].is_object()) return out;
  for (const auto& [k, v] : j["pos_map"].items()) {
    if (!v.is_string()) continue;
    fs::path p = v.get<std::string>();
    out.push_back(p.is_absolute() ? p : spec_path.parent_path() / p);
  }
  return out;
}

void add_tokenizer_inputs(const fs::path& spec_path, std::vector<FileDigest>& inputs) {
  inputs.push_back(input_digest(spec_path, "tokenizer_spec"));
  auto spec = subword::load_tokenizer_spec(spec_path);
  for (const fs::path& p : {spec.vocab, spec.merges, spec.table})
    if (!p.empty()) inputs.push_back(input_digest(p, "tokenizer_asset"));
}

// ---------------------------------------------------------------------------

struct TransformOpts {
  std::string mode, in, schema, parses, spec;
  bool lenient = false;
  CLI::Option *mode_opt, *in_opt, *schema_opt, *parses_opt, *spec_opt, *lenient_opt;
};

int cmd_transform(Common& c, TransformOpts& o, std::ostream& out, std::ostream& err) {
  fill_common(c);
  fill(c, "mode", o.mode_opt, o.mode);
  fill(c, "in", o.in_opt, o.in);
  fill(c, "schema", o.schema_opt, o.schema);
  fill(c, "parses", o.parses_opt, o.parses);
  fill(c, "spec", o.spec_opt, o.spec);
  fill(c, "lenient", o.lenient_opt, o.lenient);
  require(o.mode, "--mode");
  require(o.in, "--in");
  require(c.out, "--out");

  auto kind = reorder::parse_transform_kind(o.mode);
  if (!kind) throw UsageError("unknown --mode '" + o.mode + "' (random, reverse, model)");

  Manifest m;
  m.command = "transform";
  corpus::TaskSchema schema = schema_or_text(o.schema);
  m.inputs.push_back(input_digest(o.in, "task_table"));
  if (!o.schema.empty()) m.inputs.push_back(input_digest(o.schema, "schema"));

  std::optional<reorder::TransformSpec> spec;
  std::vector<corpus::ParsedSentence> parses;
  reorder::SeedPlan seeds;
  std::optional<uint64_t> seed = resolve_seed(c);
  if (*kind == reorder::TransformKind::kRandom) seed = require_seed(c, "--mode random");

  if (*kind == reorder::TransformKind::kModel) {
    require(o.spec, "--spec");
    require(o.parses, "--parses");
    spec = reorder::load_transform_spec(o.spec);
    if (spec->mode == reorder::OrderMode::kSampled) seed = require_seed(c, "sampled model mode");
    m.inputs.push_back(input_digest(o.spec, "transform_spec"));
    for (const auto& p : spec_model_paths(o.spec)) m.inputs.push_back(input_digest(p, "order_model"));
    m.inputs.push_back(input_digest(o.parses, "conllu"));
    parses = corpus::parse_conllu(o.parses);
  }
  seeds.global_seed = seed.value_or(0);

  std::vector<corpus::Record> records = corpus::read_task_table(o.in, schema);

  // Per record, the parse of each text field (model mode only).
  std::vector<std::vector<const corpus::ParsedSentence*>> record_parses(records.size());
  std::vector<corpus::JoinResult> joins;
  std::set<size_t> skip;
  std::vector<std::string> skipped_ids, mismatch_ids;
  if (*kind == reorder::TransformKind::kModel) {
    for (const auto& field : schema.text_columns) joins.push_back(corpus::join_parses(records, parses, field, o.lenient));
    for (auto& r : record_parses) r.assign(schema.text_columns.size(), nullptr);
    std::set<std::string> mismatched;
    for (size_t f = 0; f < joins.size(); ++f)
      for (const auto& pair : joins[f].pairs) {
        record_parses[pair.record_index][f] = &pair.parse;
        if (pair.text_mismatch) mismatched.insert(records[pair.record_index].id);
      }
    for (size_t i = 0; i < records.size(); ++i) {
      for (auto* p : record_parses[i])
        if (!p) {
          skip.insert(i);
          skipped_ids.push_back(records[i].id);
          break;
        }
      if (mismatched.count(records[i].id)) mismatch_ids.push_back(records[i].id);
    }
    if (!skipped_ids.empty())
      err << "warning: skipping " << skipped_ids.size() << " record(s) without parses: "
          << format_id_list(skipped_ids) << "\n";
    if (!mismatch_ids.empty())
      err << "warning: " << mismatch_ids.size() << " record(s) whose parse text differs from the record: "
          << format_id_list(mismatch_ids) << "\n";
  }

  std::vector<size_t> todo;
  for (size_t i = 0; i < records.size(); ++i)
    if (!skip.count(i)) todo.push_back(i);

  reorder::Transform transform{*kind, spec ? &*spec : nullptr};
  std::vector<reorder::TransformOutcome> outcomes = parallel_map(todo, c.workers, [&](size_t i) {
    return reorder::transform_record(records[i], transform, record_parses[i], seeds);
  });

  std::vector<corpus::Record> out_records;
  size_t nonprojective = 0;
  out_records.reserve(outcomes.size());
  for (auto& oc : outcomes) {
    nonprojective += oc.was_nonprojective;
    out_records.push_back(std::move(oc.record));
  }

  fs::path out_dir = c.out;
  fs::create_directories(out_dir);
  fs::path table_path = out_dir / fs::path(o.in).filename();
  corpus::write_task_table(out_records, table_path, schema);

  m.config = ojson{{"command", "transform"}, {"mode", o.mode}, {"in", o.in}, {"schema", o.schema},
                   {"parses", o.parses}, {"spec", o.spec}, {"lenient", o.lenient},
                   {"seed", seed ? ojson(*seed) : ojson(nullptr)}};
  if (spec) m.config["transform"] = spec->describe();
  m.outputs.push_back(output_digest(out_dir, table_path, "task_table"));
  m.report = ojson{{"records_in", records.size()},
                   {"records_out", out_records.size()},
                   {"skipped_missing_parse", json_strings(skipped_ids)},
                   {"text_mismatch_flagged", json_strings(mismatch_ids)},
                   {"nonprojective_sentences", nonprojective},
                   {"output_schema", ojson::parse(corpus::schema_to_json_text(schema))}};
  m.created_at = created_at_now();
  write_manifest(out_dir / "manifest.json", m);
  out << "wrote " << out_records.size() << " record(s) to " << table_path.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct LearnOpts {
  std::string treebank, tag;
  CLI::Option *treebank_opt, *tag_opt;
};

int cmd_learn_order(Common& c, LearnOpts& o, std::ostream& out, std::ostream&) {
  fill_common(c);
  fill(c, "treebank", o.treebank_opt, o.treebank);
  fill(c, "tag", o.tag_opt, o.tag);
  require(o.treebank, "--treebank");
  require(c.out, "--out");
  if (o.tag.empty()) o.tag = fs::path(o.treebank).stem().string();

  auto sentences = corpus::parse_conllu(o.treebank);
  auto model = reorder::estimate_order_model(sentences, o.tag);
  fs::path model_path = c.out;
  fs::path dir = model_path.parent_path().empty() ? fs::path(".") : model_path.parent_path();
  fs::create_directories(dir);
  reorder::save_order_model(model, model_path);

  Manifest m;
  m.command = "learn-order";
  m.config = ojson{{"command", "learn-order"}, {"treebank", o.treebank}, {"tag", o.tag}};
  m.inputs.push_back(input_digest(o.treebank, "conllu"));
  m.outputs.push_back(output_digest(dir, model_path, "order_model"));
  m.report = ojson{{"sentences", sentences.size()}, {"entries", model.entries().size()}};
  m.created_at = created_at_now();
  write_manifest(fs::path(model_path.string() + ".manifest.json"), m);
  out << "learned " << model.entries().size() << " ordering entries from " << sentences.size()
      << " sentence(s)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TokenizeOpts {
  std::string tokenizer, in, schema, text;
  CLI::Option *tokenizer_opt, *in_opt, *schema_opt, *text_opt;
};

int cmd_tokenize(Common& c, TokenizeOpts& o, std::ostream& out, std::ostream&) {
  fill_common(c);
  fill(c, "tokenizer", o.tokenizer_opt, o.tokenizer);
  fill(c, "in", o.in_opt, o.in);
  fill(c, "schema", o.schema_opt, o.schema);
  require(o.tokenizer, "--tokenizer");
  auto tok = subword::load_tokenizer(fs::path(o.tokenizer));

  if (o.text_opt->count() > 0) {
    auto res = tok->tokenize(o.text);
    out << join(tok->display(res.pieces), " ") << "\n";
    for (size_t i = 0; i < res.ids.size(); ++i) out << (i ? " " : "") << res.ids[i];
    out << "\n";
    return kExitOk;
  }
  require(o.in, "--in");
  require(c.out, "--out");

  Manifest m;
  m.command = "tokenize";
  add_tokenizer_inputs(o.tokenizer, m.inputs);
  m.inputs.push_back(input_digest(o.in, "task_table"));
  if (!o.schema.empty()) m.inputs.push_back(input_digest(o.schema, "schema"));

  auto records = corpus::read_task_table(o.in, schema_or_text(o.schema));
  auto tokens = subword::retokenize_corpus(*tok, records, c.workers);
  fs::path out_dir = c.out;
  fs::create_directories(out_dir);
  fs::path tokens_path = out_dir / "tokens.jsonl";
  write_file_atomic(tokens_path, subword::format_tokens_jsonl(tokens));

  uint64_t total = 0;
  for (const auto& t : tokens) total += t.length();
  m.config = ojson{{"command", "tokenize"}, {"tokenizer", o.tokenizer}, {"in", o.in}, {"schema", o.schema}};
  m.outputs.push_back(output_digest(out_dir, tokens_path, "tokens_jsonl"));
  m.report = ojson{{"records", records.size()}, {"pieces", total}, {"tokenizer", tok->name()},
                   {"algorithm", subword::algorithm_name(tok->algorithm())}};
  m.created_at = created_at_now();
  write_manifest(out_dir / "manifest.json", m);
  out << "tokenized " << records.size() << " record(s) into " << total << " piece(s)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EmbedOpts {
  std::string op, in, map, init = "standard", format = "native";
  std::vector<std::string> protect;
  bool no_protect = false;
  double mean = 0.0, std = 0.02;
  CLI::Option *op_opt, *in_opt, *map_opt, *init_opt, *format_opt, *protect_opt, *no_protect_opt, *mean_opt,
      *std_opt;
};

int cmd_embed(Common& c, EmbedOpts& o, std::ostream& out, std::ostream&) {
  fill_common(c);
  fill(c, "op", o.op_opt, o.op);
  fill(c, "in", o.in_opt, o.in);
  fill(c, "map", o.map_opt, o.map);
  fill(c, "init", o.init_opt, o.init);
  fill(c, "format", o.format_opt, o.format);
  fill(c, "protect", o.protect_opt, o.protect);
  fill(c, "no_protect", o.no_protect_opt, o.no_protect);
  fill(c, "mean", o.mean_opt, o.mean);
  fill(c, "std", o.std_opt, o.std);
  require(o.op, "--op");
  require(o.in, "--in");
  require(c.out, "--out");
  if (o.format != "native" && o.format != "text") throw UsageError("--format must be native or text");

  Manifest m;
  m.command = "embed";
  m.inputs.push_back(input_digest(o.in, "embeddings"));
  auto matrix = embed::read_embeddings(o.in);
  fs::path out_dir = c.out;
  fs::create_directories(out_dir);
  fs::path matrix_path = out_dir / (o.format == "native" ? "embeddings.tlfe" : "embeddings.txt");
  m.config = ojson{{"command", "embed"}, {"op", o.op}, {"in", o.in}, {"format", o.format}};

  auto emit_matrix = [&](const embed::EmbeddingMatrix& result) {
    if (o.format == "native") embed::write_embeddings(result, matrix_path);
    else write_file_atomic(matrix_path, embed::serialize_embeddings_text(result));
    m.outputs.push_back(output_digest(out_dir, matrix_path, "embeddings"));
  };

  if (o.op == "shuffle") {
    uint64_t seed = require_seed(c, "embed --op shuffle");
    std::vector<std::string> prot;
    if (!o.no_protect) prot = o.protect_opt->count() || c.config.contains("protect") ? o.protect
                                                                                    : embed::default_protected_tokens(matrix);
    auto res = embed::shuffle_rows(matrix, seed, prot);
    emit_matrix(res.matrix);
    fs::path map_path = out_dir / "permutation.json";
    write_file_atomic(map_path, res.map.to_json());
    m.outputs.push_back(output_digest(out_dir, map_path, "permutation_map"));
    m.config["seed"] = seed;
    m.config["protected"] = json_strings(prot);
    m.report = ojson{{"rows", matrix.rows()}, {"dims", matrix.dims()}, {"protected_rows", res.map.protected_rows.size()}};
  } else if (o.op == "unshuffle") {
    require(o.map, "--map");
    m.inputs.push_back(input_digest(o.map, "permutation_map"));
    auto map = embed::PermutationMap::from_json(read_file(o.map));
    emit_matrix(embed::apply_map(matrix, embed::invert_map(map)));
    m.config["map"] = o.map;
    m.report = ojson{{"rows", matrix.rows()}, {"dims", matrix.dims()}};
  } else if (o.op == "reinit") {
    embed::InitSpec spec;
    if (o.init == "standard") spec.mode = embed::InitMode::kStandard;
    else if (o.init == "matched") spec.mode = embed::InitMode::kMatched;
    else throw UsageError("--init must be standard or matched");
    spec.mean = o.mean;
    spec.std = o.std;
    spec.seed = require_seed(c, "embed --op reinit");
    auto result = embed::reinit(matrix, spec, c.workers);
    emit_matrix(result);
    auto got = embed::measure_moments(result);
    m.config["init"] = o.init;
    m.config["seed"] = spec.seed;
    if (spec.mode == embed::InitMode::kStandard) {
      m.config["mean"] = spec.mean;
      m.config["std"] = spec.std;
    }
    m.report = ojson{{"rows", matrix.rows()}, {"dims", matrix.dims()},
                     {"measured_mean", got.mean}, {"measured_std", got.std}};
  } else {
    throw UsageError("unknown --op '" + o.op + "' (shuffle, unshuffle, reinit)");
  }
  m.created_at = created_at_now();
  write_manifest(out_dir / "manifest.json", m);
  out << o.op << ": wrote " << matrix_path.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct StatsOpts {
  std::vector<std::string> tokenizers;
  std::string in, schema;
  size_t bucket_width = stats::kDefaultBucketWidth;
  CLI::Option *tokenizers_opt, *in_opt, *schema_opt, *bucket_opt;
};

std::string safe_name(const std::string& name) {
  std::string s;
  for (char ch : name) s += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.') ? ch : '_';
  return s.empty() ? "tokenizer" : s;
}

int cmd_stats(Common& c, StatsOpts& o, std::ostream& out, std::ostream&) {
  fill_common(c);
  fill(c, "tokenizer", o.tokenizers_opt, o.tokenizers);
  fill(c, "in", o.in_opt, o.in);
  fill(c, "schema", o.schema_opt, o.schema);
  fill(c, "bucket_width", o.bucket_opt, o.bucket_width);
  if (o.tokenizers.empty()) throw UsageError("missing required option --tokenizer");
  require(o.in, "--in");
  require(c.out, "--out");

  Manifest m;
  m.command = "stats";
  for (const auto& t : o.tokenizers) add_tokenizer_inputs(t, m.inputs);
  m.inputs.push_back(input_digest(o.in, "task_table"));
  if (!o.schema.empty()) m.inputs.push_back(input_digest(o.schema, "schema"));

  auto records = corpus::read_task_table(o.in, schema_or_text(o.schema));
  fs::path out_dir = c.out;
  fs::create_directories(out_dir);

  std::vector<std::pair<std::string, stats::Histogram>> hists;
  std::set<std::string> names;
  for (const auto& t : o.tokenizers) {
    auto tok = subword::load_tokenizer(fs::path(t));
    std::string name = tok->name().empty() ? fs::path(t).stem().string() : tok->name();
    if (!names.insert(name).second) throw Error("two tokenizers share the name '" + name + "'");
    hists.emplace_back(name, stats::length_distribution(*tok, records, o.bucket_width, c.workers));
    fs::path hist_path = out_dir / (safe_name(name) + ".hist.csv");
    stats::emit_csv(hists.back().second, hist_path);
    m.outputs.push_back(output_digest(out_dir, hist_path, "csv"));
  }
  auto rows = stats::compare(hists);
  fs::path cmp_path = out_dir / "comparison.csv";
  stats::emit_csv(rows, cmp_path);
  m.outputs.push_back(output_digest(out_dir, cmp_path, "csv"));

  m.config = ojson{{"command", "stats"}, {"tokenizer", json_strings(o.tokenizers)}, {"in", o.in},
                   {"schema", o.schema}, {"bucket_width", o.bucket_width}};
  ojson changes = ojson::object();
  for (const auto& r : rows) changes[r.tokenizer] = r.pct_change;
  m.report = ojson{{"records", records.size()}, {"baseline", rows.front().tokenizer}, {"pct_change", changes}};
  m.created_at = created_at_now();
  write_manifest(out_dir / "manifest.json", m);
  out << stats::comparison_csv(rows);
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_manifest(const std::string& verify, std::ostream& out, std::ostream& err) {
  if (verify.empty()) throw UsageError("manifest needs --verify FILE");
  auto problems = verify_manifest(verify);
  if (problems.empty()) {
    out << verify << ": ok\n";
    return kExitOk;
  }
  for (const auto& p : problems) err << verify << ": " << p << "\n";
  return kExitValidation;
}

void self_check(const fs::path& path, const std::string& kind, const ojson& manifest) {
  if (kind == "task_table") {
    const auto& report = manifest.at("report");
    auto schema = corpus::schema_from_json_text(report.at("output_schema").dump());
    auto records = corpus::read_task_table(path, schema);
    if (report.contains("records_out") && records.size() != report["records_out"].get<size_t>())
      throw Error("record count " + std::to_string(records.size()) + " differs from the report");
  } else if (kind == "tokens_jsonl") {
    std::istringstream in(read_file(path));
    std::string line;
    size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      auto j = nlohmann::json::parse(line);
      if (j.at("pieces").size() != j.at("ids").size())
        throw Error("line " + std::to_string(n) + ": pieces and ids differ in length");
    }
  } else if (kind == "order_model") {
    reorder::load_order_model(path);
  } else if (kind == "embeddings") {
    embed::read_embeddings(path);
  } else if (kind == "permutation_map") {
    embed::PermutationMap::from_json(read_file(path)).validate();
  } else if (kind == "csv") {
    std::istringstream in(read_file(path));
    std::string line;
    long cols = -1;
    size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      long k = static_cast<long>(std::count(line.begin(), line.end(), ','));
      if (cols >= 0 && k != cols) throw Error("line " + std::to_string(n) + ": column count differs from header");
      cols = k;
    }
    if (n == 0) throw Error("empty csv");
  } else {
    throw Error("unknown output kind '" + kind + "'");
  }
}

}  // namespace

std::optional<uint64_t> parse_seed(const std::string& text) {
  if (text.empty() || text[0] == '-' || text[0] == '+') return std::nullopt;
  errno = 0;
  char* end = nullptr;
  unsigned long long v = std::strtoull(text.c_str(), &end, 0);
  if (errno || *end) return std::nullopt;
  return static_cast<uint64_t>(v);
}

std::string config_digest(const ojson& config) { return sha256_hex(config.dump()); }

ojson build_manifest(const Manifest& m) {
  ojson j;
  j["schema"] = kManifestSchema;
  j["toolkit_version"] = TLF_VERSION;
  j["command"] = m.command;
  j["created_at"] = m.created_at;
  j["config"] = m.config;
  j["config_digest"] = config_digest(m.config);
  auto files = [](const std::vector<FileDigest>& v) {
    ojson a = ojson::array();
    for (const auto& f : v) a.push_back(ojson{{"path", f.path}, {"sha256", f.sha256}, {"kind", f.kind}});
    return a;
  };
  j["inputs"] = files(m.inputs);
  j["outputs"] = files(m.outputs);
  j["report"] = m.report;
  j["experiment_arms"] = ojson{
      {"direct_finetune", {{"description", "fine-tune the pretrained model on the transformed task data"}}},
      {"continued_pretraining",
       {{"objective", "masked_lm"},
        {"corpus", "WikiText-103, transformed with this configuration"},
        {"token_budget", kContinuedPretrainingTokens},
        {"budget_note", "about 0.45% of the 3.3B-token RoBERTa pretraining corpus"}}}};
  j["finetune_grid"] = ojson{{"learning_rates", {2e-5, 4e-5}},
                             {"epochs_small", 5},
                             {"small_tasks", {"WNLI", "MRPC"}},
                             {"epochs_large", 3},
                             {"seeds", 3},
                             {"selection", "best learning rate by mean dev score over seeds"}};
  return j;
}

std::vector<std::string> verify_manifest(const fs::path& manifest_path) {
  std::vector<std::string> problems;
  ojson j;
  try {
    j = ojson::parse(read_file(manifest_path));
  } catch (const std::exception& e) {
    return {std::string("unreadable manifest: ") + e.what()};
  }
  try {
    if (j.value("schema", "") != kManifestSchema) problems.push_back("unknown schema");
    if (config_digest(j.at("config")) != j.at("config_digest").get<std::string>())
      problems.push_back("config digest mismatch");
    if (j.at("experiment_arms").at("continued_pretraining").at("token_budget").get<long long>() !=
        kContinuedPretrainingTokens)
      problems.push_back("continued-pretraining token budget is not 15M");
    fs::path dir = manifest_path.parent_path();
    for (const auto& f : j.at("outputs")) {
      fs::path p = dir / f.at("path").get<std::string>();
      std::string name = f.at("path").get<std::string>();
      if (!fs::exists(p)) {
        problems.push_back(name + ": missing");
        continue;
      }
      if (sha256_file(p) != f.at("sha256").get<std::string>()) problems.push_back(name + ": sha256 mismatch");
      try {
        self_check(p, f.at("kind").get<std::string>(), j);
      } catch (const std::exception& e) {
        problems.push_back(name + ": " + e.what());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    problems.push_back(std::string("malformed manifest: ") + e.what());
  }
  return problems;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Typological language-feature transforms for NLP corpora", "tlf"};
  app.set_version_flag("--version", TLF_VERSION);
  app.require_subcommand(1);

  Common common;

  TransformOpts t;
  auto* transform = app.add_subcommand("transform", "reorder a task dataset (random, reverse, model)");
  add_common(transform, common, "output directory");
  t.mode_opt = transform->add_option("--mode", t.mode, "random, reverse or model");
  t.in_opt = transform->add_option("--in", t.in, "task table");
  t.schema_opt = transform->add_option("--schema", t.schema, "task schema JSON (default: plain text)");
  t.parses_opt = transform->add_option("--parses", t.parses, "CoNLL-U parses (model mode)");
  t.spec_opt = transform->add_option("--spec", t.spec, "transform spec JSON (model mode)");
  t.lenient_opt = transform->add_flag("--lenient", t.lenient, "skip records without parses");

  LearnOpts l;
  auto* learn = app.add_subcommand("learn-order", "estimate an ordering model from a treebank");
  add_common(learn, common, "output model file");
  l.treebank_opt = learn->add_option("--treebank", l.treebank, "CoNLL-U treebank");
  l.tag_opt = learn->add_option("--tag", l.tag, "language tag (default: file stem)");

  TokenizeOpts k;
  auto* tokenize = app.add_subcommand("tokenize", "retokenize a corpus with a subword tokenizer");
  add_common(tokenize, common, "output directory");
  k.tokenizer_opt = tokenize->add_option("--tokenizer", k.tokenizer, "tokenizer spec JSON");
  k.in_opt = tokenize->add_option("--in", k.in, "task table");
  k.schema_opt = tokenize->add_option("--schema", k.schema, "task schema JSON (default: plain text)");
  k.text_opt = tokenize->add_option("--text", k.text, "tokenize one string and print the pieces");

  EmbedOpts e;
  auto* embedc = app.add_subcommand("embed", "perturb an embedding matrix");
  add_common(embedc, common, "output directory");
  e.op_opt = embedc->add_option("--op", e.op, "shuffle, unshuffle or reinit");
  e.in_opt = embedc->add_option("--in", e.in, "embedding matrix (native or text)");
  e.map_opt = embedc->add_option("--map", e.map, "permutation map (unshuffle)");
  e.init_opt = embedc->add_option("--init", e.init, "standard or matched (reinit)");
  e.format_opt = embedc->add_option("--format", e.format, "output format: native or text");
  e.protect_opt = embedc->add_option("--protect", e.protect, "tokens kept in place (shuffle)")->delimiter(',');
  e.no_protect_opt = embedc->add_flag("--no-protect", e.no_protect, "shuffle every row");
  e.mean_opt = embedc->add_option("--mean", e.mean, "target mean (standard reinit)");
  e.std_opt = embedc->add_option("--std", e.std, "target std (standard reinit)");

  StatsOpts s;
  auto* statsc = app.add_subcommand("stats", "compare tokenized length distributions");
  add_common(statsc, common, "output directory");
  s.tokenizers_opt = statsc->add_option("--tokenizer", s.tokenizers, "tokenizer spec JSON; the first is the baseline");
  s.in_opt = statsc->add_option("--in", s.in, "task table");
  s.schema_opt = statsc->add_option("--schema", s.schema, "task schema JSON (default: plain text)");
  s.bucket_opt = statsc->add_option("--bucket-width", s.bucket_width, "histogram bucket width");

  std::string verify;
  auto* manifest = app.add_subcommand("manifest", "check a run manifest");
  manifest->add_option("--verify", verify, "manifest.json to verify");

  std::vector<std::string> argv_store(args);
  if (argv_store.empty()) argv_store.push_back("tlf");
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& pe) {
    int code = app.exit(pe, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (transform->parsed()) return cmd_transform(common, t, out, err);
    if (learn->parsed()) return cmd_learn_order(common, l, out, err);
    if (tokenize->parsed()) return cmd_tokenize(common, k, out, err);
    if (embedc->parsed()) return cmd_embed(common, e, out, err);
    if (statsc->parsed()) return cmd_stats(common, s, out, err);
    if (manifest->parsed()) return cmd_manifest(verify, out, err);
  } catch (const UsageError& ue) {
    err << "usage error: " << ue.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitValidation;
  }
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace tlf::cli
