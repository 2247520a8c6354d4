#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "test_support.h"
#include "tlf/common.h"
#include "tlf/io_util.h"
#include "tlf/parallel.h"

namespace tlf {
namespace {

// Reference values computed with an independent Python implementation.
TEST(SplitMix64, MatchesReferenceStream) {
  SplitMix64 rng(1234567);
  const uint64_t expected[] = {6457827717110365317ULL, 3203168211198807973ULL, 9817491932198370423ULL,
                               4593380528125082431ULL, 16408922859458223821ULL};
  for (uint64_t e : expected) EXPECT_EQ(rng.next(), e);
}

TEST(SplitMix64, RandomAccessAgreesWithStream) {
  for (uint64_t seed : {0ULL, 1ULL, 42ULL, 0xffffffffffffffffULL}) {
    SplitMix64 rng(seed);
    for (uint64_t k = 0; k < 64; ++k) EXPECT_EQ(SplitMix64::at(seed, k), rng.next()) << seed << " " << k;
  }
  EXPECT_EQ(splitmix64(1234567), 6457827717110365317ULL);
}

TEST(SplitMix64, UnitIntervalIsHalfOpen) {
  SplitMix64 rng(99);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.next_unit();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Fnv1a64, KnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(DeriveRecordSeed, ReferenceValues) {
  EXPECT_EQ(derive_record_seed(7, "0", "s"), 8797047378090312271ULL);
  EXPECT_EQ(derive_record_seed(42, "rec-1", "sentence"), 14442203131791209512ULL);
}

TEST(DeriveRecordSeed, SeparatesIdsAndFields) {
  EXPECT_NE(derive_record_seed(1, "a", "b"), derive_record_seed(1, "b", "a"));
  EXPECT_NE(derive_record_seed(1, "a", "s1"), derive_record_seed(1, "a", "s2"));
  EXPECT_NE(derive_record_seed(1, "a", "s"), derive_record_seed(2, "a", "s"));
}

TEST(FisherYates, ReferenceShuffle) {
  std::vector<std::string> v{"a", "b", "c", "d"};
  SplitMix64 rng(42);
  fisher_yates(v, rng);
  EXPECT_EQ(v, (std::vector<std::string>{"c", "a", "d", "b"}));
}

TEST(FisherYates, IsAPermutation) {
  for (uint64_t seed = 0; seed < 50; ++seed) {
    std::vector<int> v(37);
    for (int i = 0; i < 37; ++i) v[i] = i;
    SplitMix64 rng(seed);
    fisher_yates(v, rng);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 37; ++i) ASSERT_EQ(sorted[i], i);
  }
}

TEST(FisherYates, RoughlyUniformOverThreeItems) {
  std::map<std::vector<int>, int> counts;
  SplitMix64 rng(5);
  const int trials = 60000;
  for (int t = 0; t < trials; ++t) {
    std::vector<int> v{0, 1, 2};
    fisher_yates(v, rng);
    counts[v]++;
  }
  ASSERT_EQ(counts.size(), 6u);
  for (const auto& [perm, c] : counts) EXPECT_NEAR(c, trials / 6.0, 500) << perm[0] << perm[1] << perm[2];
}

TEST(Strings, SplitAndJoin) {
  EXPECT_EQ(split_whitespace("  a \t b\n c  "), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_TRUE(split_whitespace("   ").empty());
  EXPECT_EQ(join({"x", "y", "z"}, " "), "x y z");
  EXPECT_EQ(join({}, ","), "");
}

TEST(Strings, FormatDoubleRoundTrips) {
  for (double d : {0.1, 1.0 / 3.0, 2e-5, -0.0, 1e300, 0.5}) {
    std::string s = format_double(d);
    EXPECT_EQ(std::stod(s), d) << s;
  }
}

TEST(IoUtil, AtomicWriteAndSha256) {
  testing::TempDir tmp;
  fs::path p = tmp / "out.txt";
  write_file_atomic(p, "abc");
  EXPECT_EQ(read_file(p), "abc");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_file(p), sha256_hex("abc"));
}

TEST(IoUtil, UncommittedWriterLeavesNothing) {
  testing::TempDir tmp;
  fs::path p = tmp / "partial.txt";
  {
    AtomicWriter w(p);
    w.write("half");
  }
  EXPECT_FALSE(fs::exists(p));
  EXPECT_TRUE(fs::is_empty(tmp.path()));
}

TEST(IoUtil, CommitReplacesExistingFile) {
  testing::TempDir tmp;
  fs::path p = tmp.write("f.txt", "old");
  AtomicWriter w(p);
  w.write("new");
  EXPECT_EQ(read_file(p), "old");
  w.commit();
  EXPECT_EQ(read_file(p), "new");
}

TEST(IoUtil, MissingFileIsIoError) {
  try {
    read_file("/nonexistent/definitely/missing");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
  }
}

TEST(Parallel, MapPreservesOrderForAnyWorkerCount) {
  std::vector<int> in(1001);
  for (int i = 0; i < 1001; ++i) in[i] = i;
  auto ref = parallel_map(in, 1, [](int x) { return x * x; });
  for (unsigned w : {2u, 3u, 8u, 2000u}) EXPECT_EQ(parallel_map(in, w, [](int x) { return x * x; }), ref);
}

TEST(Parallel, RethrowsWorkerException) {
  EXPECT_THROW(parallel_for(100, 4, [](size_t i) { if (i == 57) throw Error("boom"); }), Error);
}

}  // namespace
}  // namespace tlf
