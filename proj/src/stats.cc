#include "tlf/stats.h"

#include <cstdio>

#include "tlf/common.h"
#include "tlf/io_util.h"
#include "tlf/parallel.h"

namespace tlf::stats {

Histogram::Histogram(size_t bucket_width) : bucket_width_(bucket_width) {
  if (bucket_width_ == 0) throw Error("histogram bucket width must be positive");
}

void Histogram::add(size_t length, uint64_t times) {
  if (times == 0) return;
  exact_[length] += times;
  n_ += times;
  total_ += static_cast<uint64_t>(length) * times;
}

void Histogram::merge(const Histogram& other) {
  if (other.bucket_width_ != bucket_width_) throw Error("cannot merge histograms with different bucket widths");
  for (const auto& [len, c] : other.exact_) add(len, c);
}

std::map<size_t, uint64_t> Histogram::counts() const {
  std::map<size_t, uint64_t> out;
  for (const auto& [len, c] : exact_) out[len / bucket_width_ * bucket_width_] += c;
  return out;
}

double Histogram::mean() const {
  return n_ ? static_cast<double>(total_) / static_cast<double>(n_) : 0.0;
}

size_t Histogram::nth(uint64_t k) const {
  uint64_t seen = 0;
  for (const auto& [len, c] : exact_) {
    seen += c;
    if (k < seen) return len;
  }
  return exact_.empty() ? 0 : exact_.rbegin()->first;
}

double Histogram::median() const {
  if (n_ == 0) return 0.0;
  if (n_ % 2) return static_cast<double>(nth(n_ / 2));
  return (static_cast<double>(nth(n_ / 2 - 1)) + static_cast<double>(nth(n_ / 2))) / 2.0;
}

double Histogram::p95() const {
  if (n_ == 0) return 0.0;
  // Nearest rank: ceil(0.95 n), computed in integers.
  uint64_t rank = (95 * n_ + 99) / 100;
  return static_cast<double>(nth(rank - 1));
}

Histogram length_distribution(const subword::Tokenizer& tok, const std::vector<corpus::Record>& corpus,
                              size_t bucket_width, unsigned workers) {
  if (corpus.empty()) throw Error("length_distribution: empty corpus");
  std::vector<size_t> lengths = parallel_map(corpus, workers, [&](const corpus::Record& r) {
    size_t n = 0;
    for (const auto& [field, text] : r.text_fields) n += tok.tokenize(text).length();
    return n;
  });
  Histogram h(bucket_width);
  for (size_t len : lengths) h.add(len);
  return h;
}

double relative_length_change(const Histogram& base, const Histogram& other) {
  if (base.n() != other.n())
    throw Error("relative_length_change: record counts differ (" + std::to_string(base.n()) + " vs " +
                std::to_string(other.n()) + ")");
  if (base.total_tokens() == 0) throw Error("relative_length_change: baseline has no tokens");
  if (base.total_tokens() == other.total_tokens()) return 0.0;
  return 100.0 * (static_cast<double>(other.total_tokens()) / static_cast<double>(base.total_tokens()) - 1.0);
}

std::vector<ComparisonRow> compare(const std::vector<std::pair<std::string, Histogram>>& histograms) {
  std::vector<ComparisonRow> rows;
  if (histograms.empty()) return rows;
  const Histogram& base = histograms.front().second;
  for (const auto& [name, h] : histograms) rows.push_back({name, h, relative_length_change(base, h)});
  return rows;
}

namespace {

std::string fixed(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::string histogram_csv(const Histogram& h) {
  std::string out = "bucket,count\n";
  for (const auto& [bucket, c] : h.counts()) out += std::to_string(bucket) + "," + std::to_string(c) + "\n";
  return out;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::string out = "tokenizer,mean,median,p95,pct_change\n";
  for (const auto& r : rows)
    out += r.tokenizer + "," + fixed(r.histogram.mean()) + "," + fixed(r.histogram.median()) + "," +
           fixed(r.histogram.p95()) + "," + fixed(r.pct_change) + "\n";
  return out;
}

void emit_csv(const Histogram& h, const fs::path& path) { write_file_atomic(path, histogram_csv(h)); }

void emit_csv(const std::vector<ComparisonRow>& rows, const fs::path& path) {
  write_file_atomic(path, comparison_csv(rows));
}

}  // namespace tlf::stats
