#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace tlf::embed {

namespace fs = std::filesystem;

// Row-major rows x dims table; row i is the vector of tokens[i].
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::vector<std::string> tokens, size_t dims, std::vector<float> values);

  size_t rows() const { return tokens_.size(); }
  size_t dims() const { return dims_; }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<float>& values() const { return values_; }
  std::span<const float> row(size_t i) const { return {values_.data() + i * dims_, dims_}; }

  // Compares float bit patterns; -0.0 differs from 0.0.
  bool bit_equal(const EmbeddingMatrix& other) const;

 private:
  std::vector<std::string> tokens_;
  size_t dims_ = 0;
  std::vector<float> values_;
};

// Output row i is taken from input row perm[i].
struct PermutationMap {
  std::vector<size_t> perm;
  std::set<size_t> protected_rows;

  void validate() const;  // bijection, protected rows fixed
  std::string to_json() const;
  static PermutationMap from_json(const std::string& text);
  bool operator==(const PermutationMap&) const = default;
};

enum class InitMode { kStandard, kMatched };

struct InitSpec {
  InitMode mode = InitMode::kStandard;
  double mean = 0.0;  // standard mode only
  double std = 0.02;  // standard mode only
  uint64_t seed = 0;
};

// Native binary ("TLFE") or word2vec-style text, detected by the magic.
EmbeddingMatrix read_embeddings(const fs::path& path);
EmbeddingMatrix parse_embeddings(const std::string& bytes, const std::string& source = "<embeddings>");
void write_embeddings(const EmbeddingMatrix& matrix, const fs::path& path);
std::string serialize_embeddings(const EmbeddingMatrix& matrix);
std::string serialize_embeddings_text(const EmbeddingMatrix& matrix);

// Pad/unk/cls/sep/mask-style tokens present in the matrix.
std::vector<std::string> default_protected_tokens(const EmbeddingMatrix& matrix);

struct ShuffleResult {
  EmbeddingMatrix matrix;
  PermutationMap map;
};

// Uniform Fisher-Yates permutation of the unprotected rows; token list unchanged.
ShuffleResult shuffle_rows(const EmbeddingMatrix& matrix, uint64_t seed,
                           const std::vector<std::string>& protected_tokens);

PermutationMap invert_map(const PermutationMap& map);
EmbeddingMatrix apply_map(const EmbeddingMatrix& matrix, const PermutationMap& map);

struct Moments {
  double mean;
  double std;
};
Moments measure_moments(const EmbeddingMatrix& matrix);

// I.i.d. Normal draws via Box-Muller; element k uses stream outputs 2*(k/2)
// and 2*(k/2)+1, so results do not depend on `workers`.
EmbeddingMatrix reinit(const EmbeddingMatrix& matrix, const InitSpec& spec, unsigned workers = 1);

}  // namespace tlf::embed
