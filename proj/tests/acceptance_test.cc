// Acceptance suite: one [PASS]/[FAIL]/[SKIP] line per criterion. Exits 1 when
// any criterion fails. Criteria that need downloaded tokenizer assets read them
// from $TLF_ASSETS_DIR and are skipped when it is unset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unistd.h>
#include <vector>

#include "json.hpp"
#include "tlf/cli.h"
#include "tlf/common.h"
#include "tlf/corpus_io.h"
#include "tlf/dep_tree.h"
#include "tlf/embed.h"
#include "tlf/io_util.h"
#include "tlf/reorder.h"
#include "tlf/stats.h"
#include "tlf/subword.h"

namespace fs = std::filesystem;
using namespace tlf;

namespace {

// Pinned limits.
constexpr double kReverseLimitSec = 1.0;
constexpr double kLengthAnchorLimitSec = 300.0;
constexpr double kLengthAnchorLowPct = 10.0;
constexpr double kLengthAnchorHighPct = 35.0;
constexpr size_t kLengthAnchorMinTokens = 1'000'000;
constexpr size_t kUnigramWords = 200;
constexpr size_t kUnigramMaxChars = 10;
constexpr size_t kUnigramPieces = 30;
constexpr double kScoreTolerance = 1e-9;
constexpr size_t kEmbedRows = 50'000;
constexpr size_t kEmbedDims = 64;
constexpr double kTargetStd = 0.02;
constexpr double kStdRelTolerance = 0.05;
constexpr size_t kMinReinitSamples = 100'000;
constexpr double kEmbedLimitSec = 10.0;
constexpr size_t kDeterminismRecords = 10'000;
constexpr double kDeterminismLimitSec = 120.0;
constexpr size_t kThroughputTokens = 15'000'000;
constexpr double kThroughputLimitSec = 300.0;

const std::string kFilmSentence =
    "the film unfolds with all the mounting tension of an expert thriller , until the tragedy beneath it all "
    "gradually reveals itself .";
const std::string kFilmReverse =
    ". itself reveals gradually all it beneath tragedy the until , thriller expert an of tension mounting the all "
    "with unfolds film the";

enum class Outcome { kPass, kFail, kSkip };

struct Verdict {
  Outcome outcome;
  std::string detail;
};

Verdict pass(std::string d) { return {Outcome::kPass, std::move(d)}; }
Verdict fail(std::string d) { return {Outcome::kFail, std::move(d)}; }
Verdict skip(std::string d) { return {Outcome::kSkip, std::move(d)}; }

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::vector<std::string> sorted(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  return v;
}

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    path_ = fs::temp_directory_path() / ("tlf-accept-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

int cli(std::vector<std::string> args, std::string* err_out = nullptr) {
  args.insert(args.begin(), "tlf");
  std::ostringstream out, err;
  int code = cli::run(args, out, err);
  if (err_out) *err_out = err.str();
  return code;
}

fs::path data_dir() { return fs::path(TLF_TEST_DATA_DIR); }

std::optional<fs::path> assets_dir() {
  const char* d = std::getenv("TLF_ASSETS_DIR");
  if (!d || !*d) return std::nullopt;
  return fs::path(d);
}

// ---------------------------------------------------------------------------

Verdict film_reverse() {
  auto t0 = Clock::now();
  corpus::Record r{"0", {{"text", kFilmSentence}}, {}, {}};
  auto out = reorder::transform_record(r, {reorder::TransformKind::kReverse, nullptr}, {}, {});
  double dt = seconds_since(t0);
  if (out.record.text_fields[0].second != kFilmReverse) return fail("got: " + out.record.text_fields[0].second);
  if (dt >= kReverseLimitSec) return fail("took " + fmt("%.3f s", dt));
  return pass("exact match in " + fmt("%.6f s", dt));
}

Verdict film_random() {
  const auto original = sorted(split_whitespace(kFilmSentence));
  size_t changed = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    corpus::Record r{"0", {{"text", kFilmSentence}}, {}, {}};
    auto out = reorder::transform_record(r, {reorder::TransformKind::kRandom, nullptr}, {}, {seed});
    auto toks = split_whitespace(out.record.text_fields[0].second);
    if (sorted(toks) != original) return fail("seed " + std::to_string(seed) + " changed the token multiset");
    changed += out.record.text_fields[0].second != kFilmSentence;
  }
  if (changed == 0) return fail("no seed changed the order");
  return pass("100 seeds, multiset preserved, " + std::to_string(changed) + " reordered");
}

Verdict film_sentence_model_orders() {
  auto parse = corpus::parse_conllu(data_dir() / "film_en.conllu").at(0);
  auto t = tree::build_tree(parse);
  std::map<std::string, std::shared_ptr<const reorder::OrderingModel>> models;
  for (const char* tag : {"fr", "ja"})
    models[tag] = std::make_shared<const reorder::OrderingModel>(
        reorder::estimate_order_model(corpus::parse_conllu(data_dir() / (std::string(tag) + "_sample.conllu")), tag));
  const auto original = sorted(parse.forms());
  std::string detail;
  for (const auto& [n, v] : std::vector<std::pair<std::string, std::string>>{{"fr", "fr"}, {"ja", "ja"}, {"fr", "ja"}}) {
    reorder::TransformSpec spec;
    spec.pos_map[reorder::PosClass::kNoun] = models[n];
    spec.pos_map[reorder::PosClass::kVerb] = models[v];
    const std::string row = "{N" + n + ",V" + v + "}";
    for (auto mode : {reorder::OrderMode::kDeterministic, reorder::OrderMode::kSampled}) {
      spec.mode = mode;
      for (uint64_t seed = 0; seed < 20; ++seed) {
        auto r1 = reorder::reorder_tree(t, spec, seed);
        auto r2 = reorder::reorder_tree(t, spec, seed);
        auto w1 = tree::linearize(r1);
        if (w1 != tree::linearize(r2)) return fail(row + ": rerun differs");
        if (sorted(w1) != original) return fail(row + ": token multiset changed");
        auto emission = tree::linearize_nodes(r1);
        if (!tree::is_projective(r1, tree::positions_of(emission))) return fail(row + ": a subtree is split");
      }
    }
    detail += (detail.empty() ? "" : ", ") + row;
  }
  return pass(detail + ": multiset kept, deterministic, subtrees contiguous");
}

Verdict optional_tokenizer_rows() {
  auto dir = assets_dir();
  if (!dir) return skip("TLF_ASSETS_DIR not set");
  fs::path bert = *dir / "bert-base-uncased" / "vocab.txt";
  fs::path fv = *dir / "flaubert_base_uncased" / "vocab.json";
  fs::path fm = *dir / "flaubert_base_uncased" / "merges.txt";
  if (!fs::exists(bert) || !fs::exists(fv) || !fs::exists(fm)) return skip("bert/flaubert assets missing under " + dir->string());
  auto wp_opts = subword::default_options(subword::Algorithm::kWordPiece);
  wp_opts.lowercase = true;
  subword::WordPieceTokenizer wp(subword::Vocab::load(bert), wp_opts);
  auto pieces = wp.segment_word("unfolds");
  if (pieces != std::vector<std::string>{"un", "##fold", "##s"}) return fail("unfolds -> " + join(pieces, " "));
  auto cb_opts = subword::default_options(subword::Algorithm::kCharBpeEow);
  cb_opts.lowercase = true;
  subword::CharBpeTokenizer flau(subword::Vocab::load(fv), subword::BpeMerges::load(fm), cb_opts);
  auto mounting = flau.tokenize("mounting").pieces;
  if (mounting.size() < 3) return fail("mounting -> " + join(mounting, " "));
  return pass("unfolds -> un ##fold ##s; mounting -> " + join(mounting, " "));
}

Verdict length_increase_anchor() {
  auto dir = assets_dir();
  if (!dir) return skip("TLF_ASSETS_DIR not set");
  fs::path sample = *dir / "english_sample.txt";
  fs::path rv = *dir / "roberta-base" / "vocab.json";
  fs::path rm = *dir / "roberta-base" / "merges.txt";
  fs::path fv = *dir / "flaubert_base_uncased" / "vocab.json";
  fs::path fm = *dir / "flaubert_base_uncased" / "merges.txt";
  for (const auto& p : {sample, rv, rm, fv, fm})
    if (!fs::exists(p)) return skip(p.string() + " missing");
  auto t0 = Clock::now();
  auto records = corpus::read_task_table(sample, corpus::TaskSchema::plain_text());
  size_t words = 0;
  for (const auto& r : records) words += split_whitespace(r.text_fields[0].second).size();
  if (words < kLengthAnchorMinTokens) return skip("sample has " + std::to_string(words) + " tokens, need 1M");
  subword::ByteBpeTokenizer base(subword::Vocab::load(rv), subword::BpeMerges::load(rm));
  auto cb_opts = subword::default_options(subword::Algorithm::kCharBpeEow);
  cb_opts.lowercase = true;
  subword::CharBpeTokenizer flau(subword::Vocab::load(fv), subword::BpeMerges::load(fm), cb_opts);
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  auto hb = stats::length_distribution(base, records, stats::kDefaultBucketWidth, workers);
  auto hf = stats::length_distribution(flau, records, stats::kDefaultBucketWidth, workers);
  double pct = stats::relative_length_change(hb, hf);
  double dt = seconds_since(t0);
  std::string detail = fmt("%+.2f%%", pct) + " on " + std::to_string(words) + " tokens in " + fmt("%.1f s", dt);
  if (pct < kLengthAnchorLowPct || pct > kLengthAnchorHighPct || dt >= kLengthAnchorLimitSec) return fail(detail);
  return pass(detail);
}

// Exhaustive maximum over all segmentations, using the same scoring rules:
// known pieces score their log-probability, a single character that is not a
// piece scores the unk penalty.
double exhaustive_best(const subword::UnigramTokenizer& tok, const std::string& word) {
  const size_t m = word.size();  // ASCII words only
  double best = -std::numeric_limits<double>::infinity();
  for (uint64_t mask = 0; mask < (1ULL << (m - 1)); ++mask) {
    double score = 0.0;
    size_t start = 0;
    bool ok = true;
    for (size_t i = 1; i <= m && ok; ++i) {
      if (i < m && !(mask & (1ULL << (i - 1)))) continue;
      std::string seg = word.substr(start, i - start);
      if (auto lp = tok.log_prob(seg)) score += *lp;
      else if (seg.size() == 1) score += tok.unk_score();
      else ok = false;
      start = i;
    }
    if (ok) best = std::max(best, score);
  }
  return best;
}

Verdict unigram_oracle() {
  SplitMix64 rng(20240601);
  const std::string alphabet = "abcdef";  // 'f' has no piece, so unk paths are exercised
  std::vector<subword::UnigramPiece> pieces{{"<unk>", 0.0}};
  std::set<std::string> seen;
  for (char c : std::string("abcde")) {
    pieces.push_back({std::string(1, c), -1.0 - 4.0 * rng.next_unit()});
    seen.insert(std::string(1, c));
  }
  while (pieces.size() < kUnigramPieces + 1) {
    size_t len = 2 + rng.next() % 3;
    std::string p;
    for (size_t i = 0; i < len; ++i) p += alphabet[rng.next() % 5];
    if (!seen.insert(p).second) continue;
    pieces.push_back({p, -2.0 - 8.0 * rng.next_unit()});
  }
  auto opts = subword::default_options(subword::Algorithm::kUnigram);
  subword::UnigramTokenizer tok(pieces, opts);
  size_t agree = 0;
  for (size_t w = 0; w < kUnigramWords; ++w) {
    size_t len = 1 + rng.next() % kUnigramMaxChars;
    std::string word;
    for (size_t i = 0; i < len; ++i) word += alphabet[rng.next() % alphabet.size()];
    auto seg = tok.segment_word(word);
    double want = exhaustive_best(tok, word);
    // The decoded pieces must spell the word; each unk stands for a run of
    // characters that have no piece (only 'f' here).
    size_t pos = 0;
    bool structure_ok = true;
    for (const auto& p : seg.pieces) {
      if (p == opts.unk) {
        if (pos >= word.size() || word[pos] != 'f') structure_ok = false;
        while (pos < word.size() && word[pos] == 'f') ++pos;
      } else if (word.compare(pos, p.size(), p) == 0) {
        pos += p.size();
      } else {
        structure_ok = false;
      }
    }
    structure_ok = structure_ok && pos == word.size();
    if (std::abs(seg.score - want) <= kScoreTolerance * std::max(1.0, std::abs(want)) && structure_ok) ++agree;
    else std::cerr << "  unigram mismatch on '" << word << "': viterbi " << seg.score << " exhaustive " << want << "\n";
  }
  std::string detail = std::to_string(agree) + "/" + std::to_string(kUnigramWords) + " words agree with exhaustive search";
  return agree == kUnigramWords ? pass(detail) : fail(detail);
}

Verdict embedding_roundtrips() {
  auto t0 = Clock::now();
  std::vector<std::string> tokens{"<s>", "<pad>", "</s>", "<unk>"};
  tokens.reserve(kEmbedRows);
  while (tokens.size() < kEmbedRows) tokens.push_back("w" + std::to_string(tokens.size()));
  std::vector<float> values(kEmbedRows * kEmbedDims);
  SplitMix64 rng(1);
  for (auto& v : values) v = static_cast<float>(rng.next_unit() - 0.5);
  embed::EmbeddingMatrix m(tokens, kEmbedDims, std::move(values));

  auto prot = embed::default_protected_tokens(m);
  auto a = embed::shuffle_rows(m, 123, prot);
  auto b = embed::shuffle_rows(m, 123, prot);
  if (!(a.map == b.map) || !a.matrix.bit_equal(b.matrix)) return fail("shuffle not deterministic per seed");
  if (a.matrix.bit_equal(m)) return fail("shuffle left the matrix unchanged");
  auto restored = embed::apply_map(a.matrix, embed::invert_map(a.map));
  if (!restored.bit_equal(m)) return fail("inverse map does not restore the matrix bit for bit");
  auto reloaded = embed::parse_embeddings(embed::serialize_embeddings(a.matrix));
  if (!reloaded.bit_equal(a.matrix)) return fail("serialization round trip changed bits");

  embed::InitSpec spec;
  spec.std = kTargetStd;
  spec.seed = 99;
  unsigned workers = std::max(2u, std::thread::hardware_concurrency());
  auto r1 = embed::reinit(m, spec, 1);
  auto r2 = embed::reinit(m, spec, workers);
  if (!r1.bit_equal(r2)) return fail("reinit differs between worker counts");
  size_t n = r1.values().size();
  if (n < kMinReinitSamples) return fail("too few samples");
  auto mom = embed::measure_moments(r1);
  double rel = std::abs(mom.std - kTargetStd) / kTargetStd;
  double dt = seconds_since(t0);
  std::string detail = "50000x64; inverse bit-identical; reinit std " + fmt("%.6f", mom.std) + " (" +
                       fmt("%.2f%%", 100 * rel) + " off, n=" + std::to_string(n) + "); " + fmt("%.2f s", dt);
  if (rel > kStdRelTolerance) return fail(detail);
  if (dt >= kEmbedLimitSec) return fail(detail);
  return pass(detail);
}

// Synthetic pair corpus with words drawn from a fixed pseudo-random lexicon.
std::string synthetic_pairs(size_t records, uint64_t seed, std::vector<std::string>& lexicon) {
  SplitMix64 rng(seed);
  lexicon.clear();
  std::set<std::string> seen;
  while (lexicon.size() < 3000) {
    std::string w;
    for (size_t k = 0, len = 2 + rng.next() % 8; k < len; ++k) w += static_cast<char>('a' + rng.next() % 26);
    if (seen.insert(w).second) lexicon.push_back(w);
  }
  std::string out;
  for (size_t r = 0; r < records; ++r) {
    out += "r" + std::to_string(r);
    for (int f = 0; f < 2; ++f) {
      out += '\t';
      for (size_t k = 0, len = 3 + rng.next() % 25; k < len; ++k) {
        if (k) out += ' ';
        out += lexicon[rng.next() % lexicon.size()];
      }
    }
    out += '\t' + std::to_string(rng.next() % 3) + '\n';
  }
  return out;
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::string body = read_file(e.path());
    if (e.path().filename() == "manifest.json") {
      auto j = nlohmann::ordered_json::parse(body);
      j.erase("created_at");
      body = j.dump();
    }
    out[fs::relative(e.path(), root).generic_string()] = body;
  }
  return out;
}

Verdict determinism_suite() {
  auto t0 = Clock::now();
  ScratchDir tmp("det");
  std::vector<std::string> lexicon;
  write_file_atomic(tmp / "pairs.tsv", synthetic_pairs(kDeterminismRecords, 7, lexicon));
  write_file_atomic(tmp / "schema.json",
                    R"({"format": "tsv", "id_column": "id", "text_columns": ["s1", "s2"], "passthrough_columns": ["label"]})");
  // Whole-word vocabulary for the first 1000 lexicon entries, character pieces for the rest.
  std::string wp = "[UNK]\n";
  for (size_t i = 0; i < 1000; ++i) wp += lexicon[i] + "\n";
  for (char c = 'a'; c <= 'z'; ++c) wp += std::string(1, c) + "\n##" + std::string(1, c) + "\n";
  write_file_atomic(tmp / "wp.txt", wp);
  write_file_atomic(tmp / "wp.json", R"({"algorithm": "wordpiece", "vocab": "wp.txt", "name": "wp"})");
  std::string uni = "<unk>\t0\n\xE2\x96\x81\t-2\n";
  for (char c = 'a'; c <= 'z'; ++c) uni += std::string(1, c) + "\t-3\n";
  for (size_t i = 0; i < 500; ++i) uni += lexicon[i] + "\t" + fmt("%.3f", -4.0 - (i % 7)) + "\n";
  write_file_atomic(tmp / "uni.tsv", uni);
  write_file_atomic(tmp / "uni.json", R"({"algorithm": "unigram", "table": "uni.tsv", "name": "uni"})");

  auto pipeline = [&](const std::string& run, const std::string& workers) -> std::string {
    fs::path out = tmp / run;
    std::string err;
    if (cli({"transform", "--mode", "random", "--seed", "2024", "--workers", workers, "--in",
             (tmp / "pairs.tsv").string(), "--schema", (tmp / "schema.json").string(), "--out",
             (out / "transform").string()}, &err) != 0)
      return "transform: " + err;
    fs::path transformed = out / "transform" / "pairs.tsv";
    if (cli({"tokenize", "--tokenizer", (tmp / "wp.json").string(), "--workers", workers, "--in", transformed.string(),
             "--schema", (tmp / "schema.json").string(), "--out", (out / "tokenize").string()}, &err) != 0)
      return "tokenize: " + err;
    if (cli({"stats", "--tokenizer", (tmp / "wp.json").string(), "--tokenizer", (tmp / "uni.json").string(),
             "--workers", workers, "--in", transformed.string(), "--schema", (tmp / "schema.json").string(), "--out",
             (out / "stats").string()}, &err) != 0)
      return "stats: " + err;
    for (const char* stage : {"transform", "tokenize", "stats"})
      if (cli({"manifest", "--verify", (out / stage / "manifest.json").string()}, &err) != 0)
        return std::string("verify ") + stage + ": " + err;
    return "";
  };
  // Identical command lines each time; only the worker count changes.
  std::vector<std::map<std::string, std::string>> snapshots;
  for (const std::string workers : {"1", "1", "4"}) {
    fs::remove_all(tmp / "run");
    if (auto e = pipeline("run", workers); !e.empty()) return fail("workers " + workers + ": " + e);
    snapshots.push_back(tree_contents(tmp / "run"));
  }
  const auto& a = snapshots.front();
  for (size_t k = 1; k < snapshots.size(); ++k) {
    const auto& o = snapshots[k];
    if (o.size() != a.size()) return fail("run " + std::to_string(k + 1) + " produced a different file set");
    for (const auto& [name, body] : a) {
      auto it = o.find(name);
      if (it == o.end() || it->second != body) return fail("run " + std::to_string(k + 1) + " differs in " + name);
    }
  }
  double dt = seconds_since(t0);
  std::string detail = "10000 records, 3 runs (workers 1, 1, 4), " + std::to_string(a.size()) +
                       " files byte-identical modulo timestamp; " + fmt("%.1f s", dt);
  return dt < kDeterminismLimitSec ? pass(detail) : fail(detail);
}

Verdict throughput() {
  ScratchDir tmp("tput");
  const size_t per_line = 25;
  const size_t lines = kThroughputTokens / per_line;
  {
    std::vector<std::string> lexicon;
    SplitMix64 rng(3);
    for (int i = 0; i < 5000; ++i) {
      std::string w;
      for (size_t k = 0, len = 1 + rng.next() % 8; k < len; ++k) w += static_cast<char>('a' + rng.next() % 26);
      lexicon.push_back(w);
    }
    AtomicWriter w(tmp / "big.txt");
    std::string line;
    for (size_t l = 0; l < lines; ++l) {
      line.clear();
      for (size_t k = 0; k < per_line; ++k) {
        if (k) line += ' ';
        line += lexicon[rng.next() % lexicon.size()];
      }
      line += '\n';
      w.write(line);
    }
    w.commit();
  }
  const std::string workers = std::to_string(std::max(1u, std::thread::hardware_concurrency()));
  std::string detail;
  for (const char* mode : {"reverse", "random"}) {
    auto t0 = Clock::now();
    std::string err;
    int code = cli({"transform", "--mode", mode, "--seed", "1", "--workers", workers, "--in",
                    (tmp / "big.txt").string(), "--out", (tmp / mode).string()}, &err);
    double dt = seconds_since(t0);
    if (code != 0) return fail(std::string(mode) + ": " + err);
    std::string part = std::string(mode) + " " + fmt("%.1f s", dt) + " (" +
                       fmt("%.1f", static_cast<double>(kThroughputTokens) / dt / 1e6) + "M tok/s)";
    if (dt >= kThroughputLimitSec) return fail(part);
    detail += (detail.empty() ? "" : ", ") + part;
  }
  return pass("15M tokens end to end: " + detail + ", workers=" + workers);
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Verdict()> fn;
  };
  const std::vector<Criterion> criteria = {
      {"film_sentence_reverse", film_reverse},
      {"film_sentence_random", film_random},
      {"film_sentence_model_orders", film_sentence_model_orders},
      {"optional_tokenizer_rows", optional_tokenizer_rows},
      {"optional_length_increase_anchor", length_increase_anchor},
      {"unigram_viterbi_oracle", unigram_oracle},
      {"embedding_roundtrips", embedding_roundtrips},
      {"pipeline_determinism", determinism_suite},
      {"token_transform_throughput", throughput},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Verdict v;
    try {
      v = c.fn();
    } catch (const std::exception& e) {
      v = fail(std::string("exception: ") + e.what());
    }
    const char* tag = v.outcome == Outcome::kPass ? "[PASS]" : v.outcome == Outcome::kFail ? "[FAIL]" : "[SKIP]";
    failures += v.outcome == Outcome::kFail;
    std::cout << tag << " " << c.name << ": " << v.detail << std::endl;
  }
  std::cout << (failures ? "acceptance: FAILED" : "acceptance: all criteria passed or skipped") << std::endl;
  return failures ? 1 : 0;
}
