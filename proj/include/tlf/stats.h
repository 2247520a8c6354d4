#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tlf/corpus_io.h"
#include "tlf/subword.h"

namespace tlf::stats {

namespace fs = std::filesystem;

inline constexpr size_t kDefaultBucketWidth = 8;

// Exact per-length counts; buckets are derived on demand. Merging two
// histograms is associative and commutative.
class Histogram {
 public:
  explicit Histogram(size_t bucket_width = kDefaultBucketWidth);

  void add(size_t length, uint64_t times = 1);
  void merge(const Histogram& other);

  size_t bucket_width() const { return bucket_width_; }
  uint64_t n() const { return n_; }
  uint64_t total_tokens() const { return total_; }
  const std::map<size_t, uint64_t>& exact_counts() const { return exact_; }
  // bucket lower bound -> count
  std::map<size_t, uint64_t> counts() const;

  double mean() const;
  double median() const;  // mean of the two middle values for even n
  double p95() const;     // nearest-rank percentile

  bool operator==(const Histogram&) const = default;

 private:
  size_t nth(uint64_t k) const;  // k-th smallest length, 0-based

  size_t bucket_width_;
  std::map<size_t, uint64_t> exact_;
  uint64_t n_ = 0;
  uint64_t total_ = 0;
};

// Per record, the piece count summed over its text fields.
Histogram length_distribution(const subword::Tokenizer& tok, const std::vector<corpus::Record>& corpus,
                              size_t bucket_width = kDefaultBucketWidth, unsigned workers = 1);

// 100 * (other.total_tokens / base.total_tokens - 1).
double relative_length_change(const Histogram& base, const Histogram& other);

struct ComparisonRow {
  std::string tokenizer;
  Histogram histogram;
  double pct_change;
};

// First histogram is the baseline.
std::vector<ComparisonRow> compare(const std::vector<std::pair<std::string, Histogram>>& histograms);

std::string histogram_csv(const Histogram& h);
std::string comparison_csv(const std::vector<ComparisonRow>& rows);
void emit_csv(const Histogram& h, const fs::path& path);
void emit_csv(const std::vector<ComparisonRow>& rows, const fs::path& path);

}  // namespace tlf::stats
