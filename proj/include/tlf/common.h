#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tlf {

enum class ErrorKind {
  kInvalidInput,  // malformed data or violated precondition
  kIo,            // filesystem failure
};

// All toolkit failures are reported with this exception; the CLI maps it to
// exit code 1.
class Error : public std::runtime_error {
 public:
  explicit Error(std::string message, ErrorKind kind = ErrorKind::kInvalidInput)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// SplitMix64 stream. State after k draws is seed + k * kGolden, so the k-th
// output can also be computed directly with `at`.
class SplitMix64 {
 public:
  static constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    state_ += kGolden;
    return mix(state_);
  }

  // Uniform double in [0, 1) from the top 53 bits.
  double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Output number `index` (0-based) of a stream seeded with `seed`.
  static uint64_t at(uint64_t seed, uint64_t index) {
    return mix(seed + (index + 1) * kGolden);
  }

  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  uint64_t state_;
};

// First output of a SplitMix64 stream seeded with x.
inline uint64_t splitmix64(uint64_t x) { return SplitMix64::mix(x + SplitMix64::kGolden); }

uint64_t fnv1a64(std::string_view bytes);

// splitmix64(global_seed ^ fnv1a64(record_id + "#" + field)).
uint64_t derive_record_seed(uint64_t global_seed, std::string_view record_id,
                            std::string_view field);

// In-place Fisher-Yates: for i = n-1 .. 1, j = next() % (i + 1), swap(i, j).
template <typename T>
void fisher_yates(std::vector<T>& items, SplitMix64& rng) {
  for (size_t i = items.size(); i-- > 1;) {
    size_t j = static_cast<size_t>(rng.next() % (i + 1));
    std::swap(items[i], items[j]);
  }
}

// ASCII-whitespace split; runs of whitespace collapse.
std::vector<std::string> split_whitespace(std::string_view text);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Lossless "%.17g" rendering so doubles reload bit-exactly.
std::string format_double(double value);

}  // namespace tlf
