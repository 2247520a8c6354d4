#include "tlf/subword.h"

#include <algorithm>
#include <array>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "tlf/common.h"
#include "tlf/io_util.h"
#include "tlf/parallel.h"

namespace tlf::subword {

using json = nlohmann::ordered_json;

std::optional<Algorithm> parse_algorithm(const std::string& name) {
  if (name == "byte_bpe") return Algorithm::kByteBpe;
  if (name == "char_bpe_eow") return Algorithm::kCharBpeEow;
  if (name == "wordpiece") return Algorithm::kWordPiece;
  if (name == "unigram") return Algorithm::kUnigram;
  return std::nullopt;
}

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kByteBpe: return "byte_bpe";
    case Algorithm::kCharBpeEow: return "char_bpe_eow";
    case Algorithm::kWordPiece: return "wordpiece";
    case Algorithm::kUnigram: return "unigram";
  }
  return "?";
}

TokenizerOptions default_options(Algorithm a) {
  TokenizerOptions o;
  switch (a) {
    case Algorithm::kByteBpe:
      o.unk = "<unk>";
      break;
    case Algorithm::kCharBpeEow:
      o.unk = "<unk>";
      break;
    case Algorithm::kWordPiece:
      o.unk = "[UNK]";
      break;
    case Algorithm::kUnigram:
      o.unk = "<unk>";
      o.word_start_prefix = "\xE2\x96\x81";  // U+2581
      break;
  }
  return o;
}

namespace {

// ---------------------------------------------------------------------------
// UTF-8 and character classes

struct CodePoint {
  char32_t value;
  size_t length;
};

CodePoint decode_at(std::string_view s, size_t i) {
  auto cont = [&](size_t k) { return k < s.size() && (static_cast<unsigned char>(s[k]) & 0xC0) == 0x80; };
  unsigned char b = static_cast<unsigned char>(s[i]);
  if (b < 0x80) return {b, 1};
  if ((b >> 5) == 0x6 && cont(i + 1))
    return {static_cast<char32_t>(((b & 0x1F) << 6) | (s[i + 1] & 0x3F)), 2};
  if ((b >> 4) == 0xE && cont(i + 1) && cont(i + 2))
    return {static_cast<char32_t>(((b & 0x0F) << 12) | ((s[i + 1] & 0x3F) << 6) | (s[i + 2] & 0x3F)), 3};
  if ((b >> 3) == 0x1E && cont(i + 1) && cont(i + 2) && cont(i + 3))
    return {static_cast<char32_t>(((b & 0x07) << 18) | ((s[i + 1] & 0x3F) << 12) |
                                  ((s[i + 2] & 0x3F) << 6) | (s[i + 3] & 0x3F)),
            4};
  // Stray byte: a lone surrogate value keeps it out of every letter class.
  return {0xDC00u | b, 1};
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// Byte offsets of code point boundaries, including s.size().
std::vector<size_t> boundaries(std::string_view s) {
  std::vector<size_t> out;
  out.reserve(s.size() + 1);
  for (size_t i = 0; i < s.size(); i += decode_at(s, i).length) out.push_back(i);
  out.push_back(s.size());
  return out;
}

bool is_space(char32_t c) {
  switch (c) {
    case ' ': case '\t': case '\n': case '\r': case '\v': case '\f':
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029: case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200A;
  }
}

bool is_punct(char32_t c) {
  if ((c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126))
    return true;
  switch (c) {
    case 0xA1: case 0xA7: case 0xAB: case 0xB6: case 0xB7: case 0xBB: case 0xBF:
      return true;
    default:
      break;
  }
  return (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x205E) ||
         (c >= 0x3001 && c <= 0x3003) || (c >= 0x3008 && c <= 0x3011) ||
         (c >= 0x3014 && c <= 0x301F) || (c >= 0xFF01 && c <= 0xFF0F);
}

bool is_surrogate(char32_t c) { return c >= 0xD800 && c <= 0xDFFF; }

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

struct Word {
  std::string text;
  bool after_space;
};

// Whitespace split, then every punctuation character becomes its own word.
std::vector<Word> split_words(std::string_view text) {
  std::vector<Word> words;
  std::string cur;
  bool cur_after_space = true;
  bool pending_space = true;
  auto flush = [&] {
    if (!cur.empty()) words.push_back({std::move(cur), cur_after_space});
    cur.clear();
  };
  for (size_t i = 0; i < text.size();) {
    CodePoint cp = decode_at(text, i);
    std::string_view raw = text.substr(i, cp.length);
    i += cp.length;
    if (is_space(cp.value)) {
      flush();
      pending_space = true;
    } else if (is_punct(cp.value)) {
      flush();
      words.push_back({std::string(raw), pending_space});
      pending_space = false;
    } else {
      if (cur.empty()) cur_after_space = pending_space;
      pending_space = false;
      cur.append(raw);
    }
  }
  flush();
  return words;
}

// ---------------------------------------------------------------------------
// GPT-2 byte encoding and word splitting

struct ByteTable {
  std::array<std::string, 256> to_piece;
  std::unordered_map<char32_t, unsigned char> to_byte;

  ByteTable() {
    int extra = 0;
    for (int b = 0; b < 256; ++b) {
      bool printable = (b >= 33 && b <= 126) || (b >= 161 && b <= 172) || (b >= 174 && b <= 255);
      char32_t cp = printable ? static_cast<char32_t>(b) : static_cast<char32_t>(256 + extra++);
      append_utf8(to_piece[b], cp);
      to_byte[cp] = static_cast<unsigned char>(b);
    }
  }
};

const ByteTable& byte_table() {
  static const ByteTable table;
  return table;
}

enum class CharClass { kLetter, kNumber, kSpace, kOther };

CharClass classify(char32_t c) {
  if (is_space(c)) return CharClass::kSpace;
  if (c < 0x80) {
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) return CharClass::kLetter;
    if (c >= '0' && c <= '9') return CharClass::kNumber;
    return CharClass::kOther;
  }
  if (is_punct(c) || is_surrogate(c)) return CharClass::kOther;
  return CharClass::kLetter;
}

// Mirrors 's|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+
// with non-ASCII code points outside the punctuation table counted as letters.
std::vector<std::string_view> gpt2_chunks(std::string_view s) {
  std::vector<std::string_view> out;
  const std::vector<size_t> b = boundaries(s);
  const size_t m = b.size() - 1;
  std::vector<char32_t> cps(m);
  std::vector<CharClass> cls(m);
  for (size_t k = 0; k < m; ++k) {
    cps[k] = decode_at(s, b[k]).value;
    cls[k] = classify(cps[k]);
  }
  auto emit = [&](size_t from, size_t to) { out.push_back(s.substr(b[from], b[to] - b[from])); };
  auto run_end = [&](size_t k, CharClass c) {
    while (k < m && cls[k] == c) ++k;
    return k;
  };
  size_t k = 0;
  while (k < m) {
    if (cps[k] == '\'' && k + 1 < m) {
      auto is = [&](size_t off, char ch) { return k + off < m && cps[k + off] == static_cast<char32_t>(ch); };
      size_t len = 0;
      if (is(1, 's') || is(1, 't') || is(1, 'm') || is(1, 'd')) len = 2;
      else if ((is(1, 'r') && is(2, 'e')) || (is(1, 'v') && is(2, 'e')) || (is(1, 'l') && is(2, 'l'))) len = 3;
      if (len) {
        emit(k, k + len);
        k += len;
        continue;
      }
    }
    if (cps[k] == ' ' && k + 1 < m && cls[k + 1] != CharClass::kSpace) {
      size_t end = run_end(k + 1, cls[k + 1]);
      emit(k, end);
      k = end;
      continue;
    }
    if (cls[k] != CharClass::kSpace) {
      size_t end = run_end(k, cls[k]);
      emit(k, end);
      k = end;
      continue;
    }
    size_t end = run_end(k, CharClass::kSpace);
    if (end == m || end - k == 1) {
      emit(k, end);
      k = end;
    } else {
      emit(k, end - 1);
      k = end - 1;
    }
  }
  return out;
}

std::vector<std::string> split_code_points(std::string_view s) {
  std::vector<std::string> out;
  for (size_t i = 0; i < s.size();) {
    size_t len = decode_at(s, i).length;
    out.emplace_back(s.substr(i, len));
    i += len;
  }
  return out;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

size_t line_of_offset(const std::string& text, size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<size_t>(std::count(text.begin(), text.begin() + static_cast<long>(offset), '\n'));
}

}  // namespace

std::vector<std::string> gpt2_pretokenize(std::string_view text) {
  std::vector<std::string> out;
  for (std::string_view chunk : gpt2_chunks(text)) out.emplace_back(chunk);
  return out;
}

const std::string& byte_symbol(unsigned char b) { return byte_table().to_piece[b]; }

// ---------------------------------------------------------------------------
// Vocab

Vocab Vocab::from_pieces(const std::vector<std::string>& pieces) {
  Vocab v;
  for (size_t i = 0; i < pieces.size(); ++i) v.add(pieces[i], static_cast<int64_t>(i));
  return v;
}

void Vocab::add(const std::string& piece, int64_t id) {
  if (!ids_.emplace(piece, id).second) throw Error("vocab: duplicate piece '" + piece + "'");
  if (!pieces_.emplace(id, piece).second) throw Error("vocab: id " + std::to_string(id) + " reused");
}

std::optional<int64_t> Vocab::id_of(std::string_view piece) const {
  auto it = ids_.find(std::string(piece));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

const std::string* Vocab::piece_of(int64_t id) const {
  auto it = pieces_.find(id);
  return it == pieces_.end() ? nullptr : &it->second;
}

Vocab Vocab::from_text(const std::string& text, const std::string& source) {
  size_t first = text.find_first_not_of(" \t\r\n");
  bool is_json = false;
  if (first != std::string::npos && text[first] == '{') {
    size_t second = text.find_first_not_of(" \t\r\n", first + 1);
    is_json = second != std::string::npos && (text[second] == '"' || text[second] == '}');
  }
  Vocab v;
  if (is_json) {
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw Error(source + ":" + std::to_string(line_of_offset(text, e.byte)) + ": malformed vocab JSON");
    }
    if (!doc.is_object()) throw Error(source + ": vocab JSON must be an object");
    for (const auto& [piece, id] : doc.items()) {
      if (!id.is_number_integer()) throw Error(source + ": id of '" + piece + "' is not an integer");
      try {
        v.add(piece, id.get<int64_t>());
      } catch (const Error& e) {
        throw Error(source + ": " + e.what());
      }
    }
    return v;
  }
  auto lines = split_lines(text);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) throw Error(source + ":" + std::to_string(i + 1) + ": empty vocab entry");
    try {
      v.add(lines[i], static_cast<int64_t>(i));
    } catch (const Error& e) {
      throw Error(source + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return v;
}

Vocab Vocab::load(const fs::path& path) { return from_text(read_file(path), path.string()); }

// ---------------------------------------------------------------------------
// Merges

BpeMerges BpeMerges::from_pairs(const std::vector<std::pair<std::string, std::string>>& pairs) {
  BpeMerges m;
  for (const auto& [l, r] : pairs)
    if (!m.ranks_.emplace(l + " " + r, m.ranks_.size()).second)
      throw Error("merges: duplicate pair '" + l + " " + r + "'");
  return m;
}

BpeMerges BpeMerges::from_text(const std::string& text, const std::string& source) {
  BpeMerges m;
  auto lines = split_lines(text);
  for (size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.empty()) continue;
    if (i == 0 && line.rfind("#version", 0) == 0) continue;
    const std::string where = source + ":" + std::to_string(i + 1) + ": ";
    std::vector<std::string> parts;
    size_t start = 0;
    while (true) {
      size_t sp = line.find(' ', start);
      parts.push_back(line.substr(start, sp == std::string::npos ? std::string::npos : sp - start));
      if (sp == std::string::npos) break;
      start = sp + 1;
    }
    bool counted = parts.size() == 3 && !parts[2].empty() &&
                   std::all_of(parts[2].begin(), parts[2].end(), [](char c) { return c >= '0' && c <= '9'; });
    if ((parts.size() != 2 && !counted) || parts[0].empty() || parts[1].empty())
      throw Error(where + "expected 'LEFT RIGHT'");
    if (!m.ranks_.emplace(parts[0] + " " + parts[1], m.ranks_.size()).second)
      throw Error(where + "duplicate merge '" + parts[0] + " " + parts[1] + "'");
  }
  return m;
}

BpeMerges BpeMerges::load(const fs::path& path) { return from_text(read_file(path), path.string()); }

std::optional<size_t> BpeMerges::rank(std::string_view left, std::string_view right) const {
  std::string key;
  key.reserve(left.size() + right.size() + 1);
  key.append(left);
  key.push_back(' ');
  key.append(right);
  auto it = ranks_.find(key);
  if (it == ranks_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> BpeMerges::apply(std::vector<std::string> symbols) const {
  while (symbols.size() > 1) {
    size_t best = std::numeric_limits<size_t>::max();
    size_t best_at = 0;
    for (size_t i = 0; i + 1 < symbols.size(); ++i) {
      if (auto r = rank(symbols[i], symbols[i + 1]); r && *r < best) {
        best = *r;
        best_at = i;
      }
    }
    if (best == std::numeric_limits<size_t>::max()) break;
    const std::string left = symbols[best_at];
    const std::string right = symbols[best_at + 1];
    std::vector<std::string> merged;
    merged.reserve(symbols.size());
    for (size_t i = 0; i < symbols.size();) {
      if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
        merged.push_back(left + right);
        i += 2;
      } else {
        merged.push_back(std::move(symbols[i]));
        ++i;
      }
    }
    symbols = std::move(merged);
  }
  return symbols;
}

// ---------------------------------------------------------------------------
// Tokenizer base

int64_t Tokenizer::id_or_unk(const std::string& piece, std::string& out_piece) const {
  if (auto id = vocab_.id_of(piece)) {
    out_piece = piece;
    return *id;
  }
  if (!options_.unk.empty()) {
    if (auto unk = vocab_.id_of(options_.unk)) {
      out_piece = options_.unk;
      return *unk;
    }
  }
  throw Error("piece '" + piece + "' is not in the vocabulary and no unk piece is configured");
}

void Tokenizer::check_pieces(const std::vector<std::string>& pieces) const {
  for (const auto& p : pieces)
    if (!vocab_.contains(p)) throw Error("detokenize: piece '" + p + "' is not in the vocabulary");
}

// ---------------------------------------------------------------------------
// byte_bpe

ByteBpeTokenizer::ByteBpeTokenizer(Vocab vocab, BpeMerges merges, TokenizerOptions options)
    : Tokenizer(std::move(vocab), std::move(options)), merges_(std::move(merges)) {}

TokenizationResult ByteBpeTokenizer::tokenize(std::string_view text) const {
  const std::string prepared = options_.lowercase ? ascii_lower(text) : std::string(text);
  const ByteTable& table = byte_table();
  TokenizationResult out;
  std::string mapped;
  for (std::string_view chunk : gpt2_chunks(prepared)) {
    std::vector<std::string> symbols;
    symbols.reserve(chunk.size());
    for (unsigned char c : chunk) symbols.push_back(table.to_piece[c]);
    for (auto& piece : merges_.apply(std::move(symbols))) {
      int64_t id = id_or_unk(piece, mapped);
      out.pieces.push_back(mapped);
      out.ids.push_back(id);
    }
  }
  return out;
}

std::string ByteBpeTokenizer::detokenize(const std::vector<std::string>& pieces) const {
  check_pieces(pieces);
  const ByteTable& table = byte_table();
  std::string out;
  for (const auto& piece : pieces) {
    for (size_t i = 0; i < piece.size();) {
      CodePoint cp = decode_at(piece, i);
      auto it = table.to_byte.find(cp.value);
      if (it == table.to_byte.end()) throw Error("detokenize: piece '" + piece + "' is not byte-encoded");
      out.push_back(static_cast<char>(it->second));
      i += cp.length;
    }
  }
  return out;
}

std::vector<std::string> ByteBpeTokenizer::display(const std::vector<std::string>& pieces) const {
  const ByteTable& table = byte_table();
  std::vector<std::string> out;
  for (const auto& piece : pieces) {
    std::string bytes;
    for (size_t i = 0; i < piece.size();) {
      CodePoint cp = decode_at(piece, i);
      auto it = table.to_byte.find(cp.value);
      if (it != table.to_byte.end()) bytes.push_back(static_cast<char>(it->second));
      else bytes.append(piece.substr(i, cp.length));
      i += cp.length;
    }
    size_t start = bytes.find_first_not_of(' ');
    out.push_back(start == std::string::npos ? std::string() : bytes.substr(start));
  }
  return out;
}

// ---------------------------------------------------------------------------
// char_bpe_eow

CharBpeTokenizer::CharBpeTokenizer(Vocab vocab, BpeMerges merges, TokenizerOptions options)
    : Tokenizer(std::move(vocab), std::move(options)), merges_(std::move(merges)) {
  if (options_.end_of_word_suffix.empty()) throw Error("char_bpe_eow requires an end-of-word suffix");
}

TokenizationResult CharBpeTokenizer::tokenize(std::string_view text) const {
  const std::string prepared = options_.lowercase ? ascii_lower(text) : std::string(text);
  TokenizationResult out;
  std::string mapped;
  for (const Word& w : split_words(prepared)) {
    std::vector<std::string> symbols = split_code_points(w.text);
    symbols.back() += options_.end_of_word_suffix;
    for (auto& piece : merges_.apply(std::move(symbols))) {
      int64_t id = id_or_unk(piece, mapped);
      out.pieces.push_back(mapped);
      out.ids.push_back(id);
    }
  }
  return out;
}

std::string CharBpeTokenizer::detokenize(const std::vector<std::string>& pieces) const {
  check_pieces(pieces);
  const std::string& suffix = options_.end_of_word_suffix;
  std::string out;
  for (const auto& piece : pieces) {
    if (piece.size() >= suffix.size() && piece.compare(piece.size() - suffix.size(), suffix.size(), suffix) == 0) {
      out.append(piece, 0, piece.size() - suffix.size());
      out.push_back(' ');
    } else {
      out.append(piece);
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::vector<std::string> CharBpeTokenizer::display(const std::vector<std::string>& pieces) const {
  const std::string& suffix = options_.end_of_word_suffix;
  std::vector<std::string> out;
  for (const auto& piece : pieces) {
    bool ends = piece.size() >= suffix.size() &&
                piece.compare(piece.size() - suffix.size(), suffix.size(), suffix) == 0;
    out.push_back(ends ? piece.substr(0, piece.size() - suffix.size()) : piece);
  }
  return out;
}

// ---------------------------------------------------------------------------
// wordpiece

WordPieceTokenizer::WordPieceTokenizer(Vocab vocab, TokenizerOptions options)
    : Tokenizer(std::move(vocab), std::move(options)) {
  if (options_.unk.empty() || !vocab_.contains(options_.unk))
    throw Error("wordpiece: unk piece '" + options_.unk + "' missing from vocabulary");
}

std::vector<std::string> WordPieceTokenizer::segment_word(std::string_view word) const {
  const std::vector<size_t> b = boundaries(word);
  const size_t m = b.size() - 1;
  if (m > options_.max_word_chars) return {options_.unk};
  std::vector<std::string> pieces;
  size_t start = 0;
  std::string candidate;
  while (start < m) {
    size_t end = m;
    bool found = false;
    while (end > start) {
      candidate.clear();
      if (start > 0) candidate = options_.continuation_prefix;
      candidate.append(word.substr(b[start], b[end] - b[start]));
      if (vocab_.contains(candidate)) {
        found = true;
        break;
      }
      --end;
    }
    if (!found) return {options_.unk};
    pieces.push_back(candidate);
    start = end;
  }
  return pieces;
}

TokenizationResult WordPieceTokenizer::tokenize(std::string_view text) const {
  const std::string prepared = options_.lowercase ? ascii_lower(text) : std::string(text);
  TokenizationResult out;
  for (const Word& w : split_words(prepared)) {
    for (auto& piece : segment_word(w.text)) {
      out.ids.push_back(*vocab_.id_of(piece));
      out.pieces.push_back(std::move(piece));
    }
  }
  return out;
}

std::string WordPieceTokenizer::detokenize(const std::vector<std::string>& pieces) const {
  check_pieces(pieces);
  const std::string& prefix = options_.continuation_prefix;
  std::string out;
  for (const auto& piece : pieces) {
    if (!prefix.empty() && piece.size() > prefix.size() && piece.rfind(prefix, 0) == 0) {
      out.append(piece, prefix.size());
    } else {
      if (!out.empty()) out.push_back(' ');
      out.append(piece);
    }
  }
  return out;
}

std::vector<std::string> WordPieceTokenizer::display(const std::vector<std::string>& pieces) const {
  const std::string& prefix = options_.continuation_prefix;
  std::vector<std::string> out;
  for (const auto& piece : pieces) {
    bool cont = !prefix.empty() && piece.size() > prefix.size() && piece.rfind(prefix, 0) == 0;
    out.push_back(cont ? piece.substr(prefix.size()) : piece);
  }
  return out;
}

// ---------------------------------------------------------------------------
// unigram

std::vector<UnigramPiece> UnigramTokenizer::parse_table(const std::string& text, const std::string& source) {
  std::vector<UnigramPiece> out;
  auto lines = split_lines(text);
  for (size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    const std::string where = source + ":" + std::to_string(i + 1) + ": ";
    if (line.empty()) {
      if (i + 1 == lines.size()) continue;
      throw Error(where + "empty line");
    }
    size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) throw Error(where + "expected 'piece<TAB>log_prob'");
    std::string score_text = line.substr(tab + 1);
    char* end = nullptr;
    errno = 0;
    double score = std::strtod(score_text.c_str(), &end);
    if (score_text.empty() || end != score_text.c_str() + score_text.size() || errno == ERANGE ||
        !std::isfinite(score))
      throw Error(where + "bad log probability '" + score_text + "'");
    out.push_back({line.substr(0, tab), score});
  }
  return out;
}

namespace {

Vocab vocab_of(const std::vector<UnigramPiece>& pieces) {
  Vocab v;
  for (size_t i = 0; i < pieces.size(); ++i) v.add(pieces[i].piece, static_cast<int64_t>(i));
  return v;
}

}  // namespace

UnigramTokenizer::UnigramTokenizer(std::vector<UnigramPiece> pieces, TokenizerOptions options)
    : Tokenizer(vocab_of(pieces), std::move(options)) {
  if (options_.unk.empty() || !vocab_.contains(options_.unk))
    throw Error("unigram: unk piece '" + options_.unk + "' missing from table");
  double min_score = std::numeric_limits<double>::infinity();
  for (const auto& p : pieces) {
    if (p.piece == options_.unk) continue;
    scores_.emplace(p.piece, p.log_prob);
    min_score = std::min(min_score, p.log_prob);
    max_piece_chars_ = std::max(max_piece_chars_, boundaries(p.piece).size() - 1);
  }
  unk_score_ = (std::isfinite(min_score) ? min_score : 0.0) - 10.0;
}

std::optional<double> UnigramTokenizer::log_prob(std::string_view piece) const {
  auto it = scores_.find(std::string(piece));
  if (it == scores_.end()) return std::nullopt;
  return it->second;
}

UnigramTokenizer::Segmentation UnigramTokenizer::segment_word(std::string_view word) const {
  const std::vector<size_t> b = boundaries(word);
  const size_t m = b.size() - 1;
  constexpr double kNone = -std::numeric_limits<double>::infinity();
  std::vector<double> best(m + 1, kNone);
  std::vector<size_t> from(m + 1, 0);
  std::vector<bool> via_unk(m + 1, false);
  best[0] = 0.0;
  for (size_t e = 1; e <= m; ++e) {
    size_t lo = e > max_piece_chars_ ? e - max_piece_chars_ : 0;
    for (size_t s = lo; s < e; ++s) {
      if (best[s] == kNone) continue;
      auto lp = log_prob(word.substr(b[s], b[e] - b[s]));
      if (lp && best[s] + *lp > best[e]) {
        best[e] = best[s] + *lp;
        from[e] = s;
        via_unk[e] = false;
      }
    }
    if (!log_prob(word.substr(b[e - 1], b[e] - b[e - 1])) && best[e - 1] + unk_score_ > best[e]) {
      best[e] = best[e - 1] + unk_score_;
      from[e] = e - 1;
      via_unk[e] = true;
    }
  }
  Segmentation seg;
  seg.score = best[m];
  std::vector<std::pair<std::string, bool>> rev;
  for (size_t e = m; e > 0; e = from[e]) rev.emplace_back(std::string(word.substr(b[from[e]], b[e] - b[from[e]])), via_unk[e]);
  bool last_unk = false;
  for (auto it = rev.rbegin(); it != rev.rend(); ++it) {
    if (it->second) {
      if (!last_unk) seg.pieces.push_back(options_.unk);
    } else {
      seg.pieces.push_back(it->first);
    }
    last_unk = it->second;
  }
  return seg;
}

TokenizationResult UnigramTokenizer::tokenize(std::string_view text) const {
  const std::string prepared = options_.lowercase ? ascii_lower(text) : std::string(text);
  TokenizationResult out;
  for (const Word& w : split_words(prepared)) {
    std::string word = w.after_space ? options_.word_start_prefix + w.text : w.text;
    for (auto& piece : segment_word(word).pieces) {
      out.ids.push_back(*vocab_.id_of(piece));
      out.pieces.push_back(std::move(piece));
    }
  }
  return out;
}

std::string UnigramTokenizer::detokenize(const std::vector<std::string>& pieces) const {
  check_pieces(pieces);
  std::string joined;
  for (const auto& p : pieces) joined += p;
  const std::string& marker = options_.word_start_prefix;
  if (marker.empty()) return joined;
  std::string out;
  for (size_t i = 0; i < joined.size();) {
    if (joined.compare(i, marker.size(), marker) == 0) {
      out.push_back(' ');
      i += marker.size();
    } else {
      out.push_back(joined[i++]);
    }
  }
  if (!out.empty() && out.front() == ' ') out.erase(0, 1);
  return out;
}

std::vector<std::string> UnigramTokenizer::display(const std::vector<std::string>& pieces) const {
  const std::string& marker = options_.word_start_prefix;
  std::vector<std::string> out;
  for (const auto& p : pieces)
    out.push_back(!marker.empty() && p.rfind(marker, 0) == 0 ? p.substr(marker.size()) : p);
  return out;
}

// ---------------------------------------------------------------------------
// Loading

TokenizerSpec load_tokenizer_spec(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(path.string() + ": " + e.what());
  }
  TokenizerSpec spec;
  try {
    auto alg = parse_algorithm(doc.at("algorithm").get<std::string>());
    if (!alg) throw Error(path.string() + ": unknown algorithm '" + doc.at("algorithm").get<std::string>() + "'");
    spec.algorithm = *alg;
    spec.options = default_options(*alg);
    auto resolve = [&](const char* key) -> fs::path {
      if (!doc.contains(key)) return {};
      fs::path p = doc[key].get<std::string>();
      return p.is_relative() ? path.parent_path() / p : p;
    };
    spec.vocab = resolve("vocab");
    spec.merges = resolve("merges");
    spec.table = resolve("table");
    TokenizerOptions& o = spec.options;
    o.name = doc.value("name", path.stem().string());
    o.lowercase = doc.value("lowercase", o.lowercase);
    o.max_word_chars = doc.value("max_word_chars", o.max_word_chars);
    o.continuation_prefix = doc.value("continuation_prefix", o.continuation_prefix);
    o.word_start_prefix = doc.value("word_start_prefix", o.word_start_prefix);
    o.end_of_word_suffix = doc.value("end_of_word_suffix", o.end_of_word_suffix);
    o.unk = doc.value("unk", o.unk);
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  return spec;
}

std::unique_ptr<Tokenizer> load_tokenizer(const TokenizerSpec& spec) {
  auto need = [&](const fs::path& p, const char* what) {
    if (p.empty()) throw Error(algorithm_name(spec.algorithm) + " tokenizer needs a " + what + " file");
  };
  switch (spec.algorithm) {
    case Algorithm::kByteBpe:
      need(spec.vocab, "vocab");
      need(spec.merges, "merges");
      return std::make_unique<ByteBpeTokenizer>(Vocab::load(spec.vocab), BpeMerges::load(spec.merges), spec.options);
    case Algorithm::kCharBpeEow:
      need(spec.vocab, "vocab");
      need(spec.merges, "merges");
      return std::make_unique<CharBpeTokenizer>(Vocab::load(spec.vocab), BpeMerges::load(spec.merges), spec.options);
    case Algorithm::kWordPiece:
      need(spec.vocab, "vocab");
      return std::make_unique<WordPieceTokenizer>(Vocab::load(spec.vocab), spec.options);
    case Algorithm::kUnigram:
      need(spec.table, "table");
      return std::make_unique<UnigramTokenizer>(
          UnigramTokenizer::parse_table(read_file(spec.table), spec.table.string()), spec.options);
  }
  throw Error("unknown tokenizer algorithm");
}

std::unique_ptr<Tokenizer> load_tokenizer(const fs::path& spec_path) {
  return load_tokenizer(load_tokenizer_spec(spec_path));
}

// ---------------------------------------------------------------------------
// Corpora

size_t RecordTokens::length() const {
  size_t n = 0;
  for (const auto& f : fields) n += f.result.length();
  return n;
}

std::vector<RecordTokens> retokenize_corpus(const Tokenizer& tok, const std::vector<corpus::Record>& records,
                                            unsigned workers) {
  return parallel_map(records, workers, [&](const corpus::Record& r) {
    RecordTokens out;
    out.id = r.id;
    for (const auto& [field, text] : r.text_fields) out.fields.push_back({field, tok.tokenize(text)});
    return out;
  });
}

std::string format_tokens_jsonl(const std::vector<RecordTokens>& tokens) {
  std::string out;
  for (const auto& r : tokens) {
    for (const auto& f : r.fields) {
      json line;
      line["id"] = r.id;
      line["field"] = f.field;
      line["pieces"] = f.result.pieces;
      line["ids"] = f.result.ids;
      try {
        out += line.dump();
      } catch (const json::type_error& e) {
        throw Error("record '" + r.id + "': " + e.what());
      }
      out += '\n';
    }
  }
  return out;
}

}  // namespace tlf::subword
