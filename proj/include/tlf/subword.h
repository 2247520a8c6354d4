#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tlf/corpus_io.h"

namespace tlf::subword {

namespace fs = std::filesystem;

enum class Algorithm { kByteBpe, kCharBpeEow, kWordPiece, kUnigram };

std::optional<Algorithm> parse_algorithm(const std::string& name);
std::string algorithm_name(Algorithm a);

struct TokenizationResult {
  std::vector<std::string> pieces;
  std::vector<int64_t> ids;

  size_t length() const { return pieces.size(); }
  bool operator==(const TokenizationResult&) const = default;
};

struct TokenizerOptions {
  std::string name;
  bool lowercase = false;  // ASCII lowercasing before segmentation
  size_t max_word_chars = 100;
  std::string continuation_prefix = "##";  // wordpiece
  std::string word_start_prefix;           // unigram, e.g. U+2581
  std::string end_of_word_suffix = "</w>"; // char_bpe_eow
  std::string unk;                         // empty: no unk piece
};

// Defaults matching the model family conventions (BERT, SentencePiece, XLM).
TokenizerOptions default_options(Algorithm a);

class Vocab {
 public:
  Vocab() = default;

  // Pieces get ids 0..n-1 in order.
  static Vocab from_pieces(const std::vector<std::string>& pieces);
  // JSON object {piece: id} or one piece per line, detected from content.
  static Vocab from_text(const std::string& text, const std::string& source = "<vocab>");
  static Vocab load(const fs::path& path);

  void add(const std::string& piece, int64_t id);
  std::optional<int64_t> id_of(std::string_view piece) const;
  bool contains(std::string_view piece) const { return id_of(piece).has_value(); }
  const std::string* piece_of(int64_t id) const;
  size_t size() const { return ids_.size(); }

 private:
  std::unordered_map<std::string, int64_t> ids_;
  std::unordered_map<int64_t, std::string> pieces_;
};

// GPT-2 word splitting (contractions, letter/number/other runs, spaces).
std::vector<std::string> gpt2_pretokenize(std::string_view text);
// Printable code point standing for byte b (GPT-2 byte table).
const std::string& byte_symbol(unsigned char b);

// Rank-ordered merge pairs; rank = line order.
class BpeMerges {
 public:
  BpeMerges() = default;

  static BpeMerges from_pairs(const std::vector<std::pair<std::string, std::string>>& pairs);
  static BpeMerges from_text(const std::string& text, const std::string& source = "<merges>");
  static BpeMerges load(const fs::path& path);

  std::optional<size_t> rank(std::string_view left, std::string_view right) const;
  size_t size() const { return ranks_.size(); }

  // Lowest-rank merge loop; each round merges every occurrence of the best
  // pair, scanning left to right.
  std::vector<std::string> apply(std::vector<std::string> symbols) const;

 private:
  std::unordered_map<std::string, size_t> ranks_;  // key: left + ' ' + right
};

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;

  virtual Algorithm algorithm() const = 0;
  virtual TokenizationResult tokenize(std::string_view text) const = 0;
  // Throws tlf::Error for pieces outside the vocabulary.
  virtual std::string detokenize(const std::vector<std::string>& pieces) const = 0;
  // Pieces with their markers removed, as shown to humans.
  virtual std::vector<std::string> display(const std::vector<std::string>& pieces) const = 0;

  const Vocab& vocab() const { return vocab_; }
  size_t vocab_size() const { return vocab_.size(); }
  const TokenizerOptions& options() const { return options_; }
  const std::string& name() const { return options_.name; }

 protected:
  Tokenizer(Vocab vocab, TokenizerOptions options)
      : vocab_(std::move(vocab)), options_(std::move(options)) {}

  int64_t id_or_unk(const std::string& piece, std::string& out_piece) const;
  void check_pieces(const std::vector<std::string>& pieces) const;

  Vocab vocab_;
  TokenizerOptions options_;
};

// GPT-2/RoBERTa style: bytes mapped to printable code points, GPT-2 word
// splitting (a leading space joins the word and becomes the word-start
// marker), then the merge loop.
class ByteBpeTokenizer : public Tokenizer {
 public:
  ByteBpeTokenizer(Vocab vocab, BpeMerges merges, TokenizerOptions options = default_options(Algorithm::kByteBpe));

  Algorithm algorithm() const override { return Algorithm::kByteBpe; }
  TokenizationResult tokenize(std::string_view text) const override;
  std::string detokenize(const std::vector<std::string>& pieces) const override;
  std::vector<std::string> display(const std::vector<std::string>& pieces) const override;
  size_t merge_count() const { return merges_.size(); }

 private:
  BpeMerges merges_;
};

// XLM/FlauBERT style: character symbols, end-of-word suffix on the last one.
class CharBpeTokenizer : public Tokenizer {
 public:
  CharBpeTokenizer(Vocab vocab, BpeMerges merges, TokenizerOptions options = default_options(Algorithm::kCharBpeEow));

  Algorithm algorithm() const override { return Algorithm::kCharBpeEow; }
  TokenizationResult tokenize(std::string_view text) const override;
  std::string detokenize(const std::vector<std::string>& pieces) const override;
  std::vector<std::string> display(const std::vector<std::string>& pieces) const override;
  size_t merge_count() const { return merges_.size(); }

 private:
  BpeMerges merges_;
};

// BERT style greedy longest-match-first.
class WordPieceTokenizer : public Tokenizer {
 public:
  WordPieceTokenizer(Vocab vocab, TokenizerOptions options = default_options(Algorithm::kWordPiece));

  Algorithm algorithm() const override { return Algorithm::kWordPiece; }
  TokenizationResult tokenize(std::string_view text) const override;
  std::string detokenize(const std::vector<std::string>& pieces) const override;
  std::vector<std::string> display(const std::vector<std::string>& pieces) const override;

  // Pieces for one pre-tokenized word.
  std::vector<std::string> segment_word(std::string_view word) const;
};

struct UnigramPiece {
  std::string piece;
  double log_prob;
};

// SentencePiece-style unigram model decoded with Viterbi.
class UnigramTokenizer : public Tokenizer {
 public:
  UnigramTokenizer(std::vector<UnigramPiece> pieces, TokenizerOptions options = default_options(Algorithm::kUnigram));

  // piece<TAB>log_prob per line; ids follow line order.
  static std::vector<UnigramPiece> parse_table(const std::string& text, const std::string& source = "<unigram>");

  Algorithm algorithm() const override { return Algorithm::kUnigram; }
  TokenizationResult tokenize(std::string_view text) const override;
  std::string detokenize(const std::vector<std::string>& pieces) const override;
  std::vector<std::string> display(const std::vector<std::string>& pieces) const override;

  struct Segmentation {
    std::vector<std::string> pieces;
    double score = 0.0;
  };
  // Best segmentation of one pre-tokenized word (marker already applied).
  Segmentation segment_word(std::string_view word) const;
  std::optional<double> log_prob(std::string_view piece) const;
  // Score charged per character that no single-character piece covers.
  double unk_score() const { return unk_score_; }

 private:
  std::unordered_map<std::string, double> scores_;
  size_t max_piece_chars_ = 1;
  double unk_score_ = -10.0;
};

struct TokenizerSpec {
  Algorithm algorithm = Algorithm::kWordPiece;
  fs::path vocab;    // byte_bpe, char_bpe_eow, wordpiece
  fs::path merges;   // byte_bpe, char_bpe_eow
  fs::path table;    // unigram
  TokenizerOptions options;
};

// JSON descriptor; relative paths resolve against the descriptor directory.
TokenizerSpec load_tokenizer_spec(const fs::path& path);
std::unique_ptr<Tokenizer> load_tokenizer(const TokenizerSpec& spec);
std::unique_ptr<Tokenizer> load_tokenizer(const fs::path& spec_path);

struct FieldTokens {
  std::string field;
  TokenizationResult result;
};

struct RecordTokens {
  std::string id;
  std::vector<FieldTokens> fields;

  size_t length() const;
};

// Order-preserving; identical output for any worker count.
std::vector<RecordTokens> retokenize_corpus(const Tokenizer& tok,
                                            const std::vector<corpus::Record>& records,
                                            unsigned workers = 1);

// One JSON object per (record, field): {"id","field","pieces","ids"}.
std::string format_tokens_jsonl(const std::vector<RecordTokens>& tokens);

}  // namespace tlf::subword
