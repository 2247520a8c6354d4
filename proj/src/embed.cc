#include "tlf/embed.h"

#include <bit>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <numbers>
#include <optional>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "tlf/common.h"
#include "tlf/io_util.h"
#include "tlf/parallel.h"

namespace tlf::embed {

using json = nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little, "native format I/O assumes little-endian hosts");

EmbeddingMatrix::EmbeddingMatrix(std::vector<std::string> tokens, size_t dims, std::vector<float> values)
    : tokens_(std::move(tokens)), dims_(dims), values_(std::move(values)) {
  if (values_.size() != tokens_.size() * dims_)
    throw Error("embedding matrix: " + std::to_string(values_.size()) + " values for " +
                std::to_string(tokens_.size()) + " x " + std::to_string(dims_));
  std::unordered_set<std::string> seen;
  for (const auto& t : tokens_)
    if (!seen.insert(t).second) throw Error("embedding matrix: duplicate token '" + t + "'");
  for (size_t i = 0; i < values_.size(); ++i)
    if (!std::isfinite(values_[i]))
      throw Error("embedding matrix: non-finite value in row " + std::to_string(i / std::max<size_t>(dims_, 1)));
}

bool EmbeddingMatrix::bit_equal(const EmbeddingMatrix& other) const {
  return tokens_ == other.tokens_ && dims_ == other.dims_ && values_.size() == other.values_.size() &&
         std::memcmp(values_.data(), other.values_.data(), values_.size() * sizeof(float)) == 0;
}

// ---------------------------------------------------------------------------
// Permutation maps

void PermutationMap::validate() const {
  std::vector<bool> hit(perm.size(), false);
  for (size_t src : perm) {
    if (src >= perm.size() || hit[src]) throw Error("permutation map is not a bijection");
    hit[src] = true;
  }
  for (size_t p : protected_rows) {
    if (p >= perm.size()) throw Error("protected row " + std::to_string(p) + " out of range");
    if (perm[p] != p) throw Error("protected row " + std::to_string(p) + " is not a fixed point");
  }
}

std::string PermutationMap::to_json() const {
  json doc;
  doc["perm"] = perm;
  doc["protected"] = std::vector<size_t>(protected_rows.begin(), protected_rows.end());
  return doc.dump() + "\n";
}

PermutationMap PermutationMap::from_json(const std::string& text) {
  PermutationMap m;
  try {
    json doc = json::parse(text);
    m.perm = doc.at("perm").get<std::vector<size_t>>();
    auto prot = doc.value("protected", std::vector<size_t>{});
    m.protected_rows = std::set<size_t>(prot.begin(), prot.end());
  } catch (const json::exception& e) {
    throw Error(std::string("permutation map: ") + e.what());
  }
  m.validate();
  return m;
}

PermutationMap invert_map(const PermutationMap& map) {
  map.validate();
  PermutationMap inv;
  inv.perm.resize(map.perm.size());
  for (size_t i = 0; i < map.perm.size(); ++i) inv.perm[map.perm[i]] = i;
  inv.protected_rows = map.protected_rows;
  return inv;
}

EmbeddingMatrix apply_map(const EmbeddingMatrix& matrix, const PermutationMap& map) {
  map.validate();
  if (map.perm.size() != matrix.rows())
    throw Error("permutation map has " + std::to_string(map.perm.size()) + " rows, matrix has " +
                std::to_string(matrix.rows()));
  const size_t d = matrix.dims();
  std::vector<float> values(matrix.values().size());
  for (size_t i = 0; i < map.perm.size(); ++i)
    std::memcpy(values.data() + i * d, matrix.values().data() + map.perm[i] * d, d * sizeof(float));
  return EmbeddingMatrix(matrix.tokens(), d, std::move(values));
}

// ---------------------------------------------------------------------------
// I/O

namespace {

constexpr char kMagic[4] = {'T', 'L', 'F', 'E'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Cursor {
 public:
  Cursor(const std::string& bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  template <typename T>
  T take(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  const char* span(size_t n, const char* what) {
    need(n, what);
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw Error(source_ + ": truncated while reading " + what);
  }
  const std::string& bytes_;
  const std::string& source_;
  size_t pos_ = 4;
};

EmbeddingMatrix parse_native(const std::string& bytes, const std::string& source) {
  Cursor c(bytes, source);
  uint32_t version = c.take<uint32_t>("version");
  if (version != kVersion) throw Error(source + ": unsupported version " + std::to_string(version));
  uint64_t rows = c.take<uint64_t>("rows");
  uint64_t dims = c.take<uint64_t>("dims");
  constexpr uint64_t kMaxElems = uint64_t{1} << 40;
  if (dims != 0 && rows > kMaxElems / dims) throw Error(source + ": header dimensions overflow");
  if ((bytes.size() - 24) / sizeof(float) < rows * dims)
    throw Error(source + ": header says " + std::to_string(rows) + " x " + std::to_string(dims) +
                " but payload is shorter");
  std::vector<float> values(rows * dims);
  std::memcpy(values.data(), c.span(values.size() * sizeof(float), "values"), values.size() * sizeof(float));
  std::vector<std::string> tokens;
  tokens.reserve(rows);
  for (uint64_t i = 0; i < rows; ++i) {
    uint32_t len = c.take<uint32_t>("token length");
    tokens.emplace_back(c.span(len, "token"), len);
  }
  if (!c.done()) throw Error(source + ": trailing bytes after token list");
  try {
    return EmbeddingMatrix(std::move(tokens), dims, std::move(values));
  } catch (const Error& e) {
    throw Error(source + ": " + e.what());
  }
}

EmbeddingMatrix parse_text(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  std::optional<std::pair<size_t, size_t>> header;
  std::vector<std::string> tokens;
  std::vector<float> values;
  size_t dims = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto fields = split_whitespace(line);
    if (fields.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (line_no == 1 && fields.size() == 2) {
      char* e1 = nullptr;
      char* e2 = nullptr;
      unsigned long long r = std::strtoull(fields[0].c_str(), &e1, 10);
      unsigned long long d = std::strtoull(fields[1].c_str(), &e2, 10);
      if (*e1 == '\0' && *e2 == '\0') {
        header = {{static_cast<size_t>(r), static_cast<size_t>(d)}};
        dims = static_cast<size_t>(d);
        continue;
      }
    }
    size_t row_dims = fields.size() - 1;
    if (tokens.empty() && !header) dims = row_dims;
    if (row_dims != dims || dims == 0)
      throw Error(where + "expected " + std::to_string(dims) + " values, found " + std::to_string(row_dims));
    tokens.push_back(fields[0]);
    for (size_t k = 1; k < fields.size(); ++k) {
      char* end = nullptr;
      errno = 0;
      float v = std::strtof(fields[k].c_str(), &end);
      if (*end != '\0' || errno == ERANGE) throw Error(where + "bad value '" + fields[k] + "'");
      values.push_back(v);
    }
  }
  if (header && header->first != tokens.size())
    throw Error(source + ": header says " + std::to_string(header->first) + " rows, payload has " +
                std::to_string(tokens.size()));
  try {
    return EmbeddingMatrix(std::move(tokens), dims, std::move(values));
  } catch (const Error& e) {
    throw Error(source + ": " + e.what());
  }
}

}  // namespace

EmbeddingMatrix parse_embeddings(const std::string& bytes, const std::string& source) {
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) == 0) return parse_native(bytes, source);
  return parse_text(bytes, source);
}

EmbeddingMatrix read_embeddings(const fs::path& path) { return parse_embeddings(read_file(path), path.string()); }

std::string serialize_embeddings(const EmbeddingMatrix& m) {
  std::string out(kMagic, 4);
  put<uint32_t>(out, kVersion);
  put<uint64_t>(out, m.rows());
  put<uint64_t>(out, m.dims());
  out.append(reinterpret_cast<const char*>(m.values().data()), m.values().size() * sizeof(float));
  for (const auto& t : m.tokens()) {
    put<uint32_t>(out, static_cast<uint32_t>(t.size()));
    out.append(t);
  }
  return out;
}

std::string serialize_embeddings_text(const EmbeddingMatrix& m) {
  std::string out = std::to_string(m.rows()) + " " + std::to_string(m.dims()) + "\n";
  char buf[32];
  for (size_t i = 0; i < m.rows(); ++i) {
    out += m.tokens()[i];
    for (float v : m.row(i)) {
      std::snprintf(buf, sizeof(buf), " %.9g", static_cast<double>(v));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void write_embeddings(const EmbeddingMatrix& matrix, const fs::path& path) {
  write_file_atomic(path, serialize_embeddings(matrix));
}

// ---------------------------------------------------------------------------
// Perturbations

std::vector<std::string> default_protected_tokens(const EmbeddingMatrix& matrix) {
  static const std::set<std::string> kSpecial = {"<s>",   "</s>",  "<pad>", "<unk>", "<mask>", "[PAD]",
                                                 "[UNK]", "[CLS]", "[SEP]", "[MASK]", "<cls>", "<sep>"};
  std::vector<std::string> out;
  for (const auto& t : matrix.tokens())
    if (kSpecial.count(t)) out.push_back(t);
  return out;
}

ShuffleResult shuffle_rows(const EmbeddingMatrix& matrix, uint64_t seed,
                           const std::vector<std::string>& protected_tokens) {
  std::unordered_map<std::string, size_t> row_of;
  for (size_t i = 0; i < matrix.rows(); ++i) row_of.emplace(matrix.tokens()[i], i);
  PermutationMap map;
  for (const auto& t : protected_tokens) {
    auto it = row_of.find(t);
    if (it == row_of.end()) throw Error("protected token '" + t + "' is not in the matrix");
    map.protected_rows.insert(it->second);
  }
  std::vector<size_t> free_rows;
  free_rows.reserve(matrix.rows());
  for (size_t i = 0; i < matrix.rows(); ++i)
    if (!map.protected_rows.count(i)) free_rows.push_back(i);
  std::vector<size_t> sources = free_rows;
  SplitMix64 rng(seed);
  fisher_yates(sources, rng);
  map.perm.resize(matrix.rows());
  for (size_t i = 0; i < matrix.rows(); ++i) map.perm[i] = i;
  for (size_t k = 0; k < free_rows.size(); ++k) map.perm[free_rows[k]] = sources[k];
  return {apply_map(matrix, map), std::move(map)};
}

Moments measure_moments(const EmbeddingMatrix& matrix) {
  const auto& v = matrix.values();
  if (v.empty()) throw Error("cannot measure moments of an empty matrix");
  double sum = 0.0;
  for (float x : v) sum += x;
  double mean = sum / static_cast<double>(v.size());
  double sq = 0.0;
  for (float x : v) sq += (x - mean) * (x - mean);
  return {mean, std::sqrt(sq / static_cast<double>(v.size()))};
}

EmbeddingMatrix reinit(const EmbeddingMatrix& matrix, const InitSpec& spec, unsigned workers) {
  double mean = spec.mean;
  double stddev = spec.std;
  if (spec.mode == InitMode::kMatched) {
    Moments m = measure_moments(matrix);
    mean = m.mean;
    stddev = m.std;
  }
  if (!(stddev > 0.0) || !std::isfinite(stddev) || !std::isfinite(mean))
    throw Error("reinit: standard deviation must be positive and finite");

  const size_t n = matrix.values().size();
  std::vector<float> values(n);
  const size_t pairs = (n + 1) / 2;
  const size_t chunks = std::max<size_t>(1, std::min<size_t>(pairs, 4096));
  parallel_for(chunks, workers, [&](size_t c) {
    const size_t begin = pairs * c / chunks;
    const size_t end = pairs * (c + 1) / chunks;
    for (size_t p = begin; p < end; ++p) {
      // u1 in (0, 1] keeps the logarithm finite.
      double u1 = (static_cast<double>(SplitMix64::at(spec.seed, 2 * p) >> 11) + 1.0) * 0x1.0p-53;
      double u2 = static_cast<double>(SplitMix64::at(spec.seed, 2 * p + 1) >> 11) * 0x1.0p-53;
      double r = std::sqrt(-2.0 * std::log(u1));
      double theta = 2.0 * std::numbers::pi * u2;
      values[2 * p] = static_cast<float>(mean + stddev * r * std::cos(theta));
      if (2 * p + 1 < n) values[2 * p + 1] = static_cast<float>(mean + stddev * r * std::sin(theta));
    }
  });
  return EmbeddingMatrix(matrix.tokens(), matrix.dims(), std::move(values));
}

}  // namespace tlf::embed
