#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "scanhd/embedding.hpp"
#include "scanhd/hdc.hpp"
#include "scanhd/random.hpp"

using namespace scanhd;

namespace {

std::vector<double> gaussian(std::size_t n, std::uint64_t seed) {
  Rng rng(seed, "test/gaussian");
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// Entry (row, col) straight from the documented hash rule.
int reference_entry(std::uint64_t seed, std::size_t row, std::size_t col) {
  const std::uint64_t bits = hash_combine(hash_combine(seed, row), col / 64);
  return ((bits >> (col % 64)) & 1U) ? 1 : -1;
}

void expect_error(ErrorCode code, auto&& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected error " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

}  // namespace

TEST(Encoder, MatrixFollowsHashRule) {
  const ProjectionEncoder enc(130, 40, 99);
  for (std::size_t r = 0; r < 40; ++r) {
    for (std::size_t c = 0; c < 130; ++c) ASSERT_EQ(enc.entry(r, c), reference_entry(99, r, c)) << r << "," << c;
  }
}

TEST(Encoder, SameSeedSameMatrix) {
  const ProjectionEncoder a(4, 8, 7);
  const ProjectionEncoder b(4, 8, 7);
  EXPECT_TRUE(std::ranges::equal(a.packed(), b.packed()));
}

TEST(Encoder, OtherSeedOtherMatrix) {
  const ProjectionEncoder a(4, 8, 7);
  const ProjectionEncoder b(4, 8, 8);
  bool differs = false;
  for (std::size_t r = 0; r < 8; ++r) {
    for (std::size_t c = 0; c < 4; ++c) differs = differs || a.entry(r, c) != b.entry(r, c);
  }
  EXPECT_TRUE(differs);
}

TEST(Encoder, ZeroDimensionsRejected) {
  expect_error(ErrorCode::invalid_argument, [] { ProjectionEncoder(0, 8, 1); });
  expect_error(ErrorCode::invalid_argument, [] { ProjectionEncoder(4, 0, 1); });
}

TEST(Encoder, EntriesAreFair) {
  const ProjectionEncoder enc(512, 2000, 3);
  long sum = 0;
  for (std::size_t r = 0; r < 2000; ++r) {
    for (std::size_t c = 0; c < 512; ++c) sum += enc.entry(r, c);
  }
  // 1,024,000 fair signs: standard deviation 1012.
  EXPECT_LT(std::abs(sum), 5000);
}

// Small-integer inputs make every partial sum exact, so the sign must match
// a brute-force matrix product row for row.
TEST(Encoder, MatchesBruteForceOnIntegerInputs) {
  for (std::size_t dim : {1UL, 3UL, 8UL, 13UL, 64UL, 100UL}) {
    const ProjectionEncoder enc(dim, 333, 17 + dim);
    Rng rng(dim, "test/int");
    std::vector<double> x(dim);
    for (auto& v : x) v = static_cast<double>(static_cast<int>(rng.below(9)) - 4);
    std::vector<double> projected(333);
    enc.project(x, projected);
    const auto h = enc.encode(x);
    for (std::size_t r = 0; r < 333; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < dim; ++c) sum += reference_entry(17 + dim, r, c) * x[c];
      ASSERT_EQ(projected[r], sum) << "dim " << dim << " row " << r;
      ASSERT_EQ(h[r], sum >= 0.0 ? 1 : -1);
    }
  }
}

TEST(Encoder, ProjectionCloseToDoubleProduct) {
  const ProjectionEncoder enc(512, 1000, 5);
  const auto x = l2_normalized(gaussian(512, 1));
  std::vector<double> projected(1000);
  enc.project(x, projected);
  for (std::size_t r = 0; r < 1000; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 512; ++c) sum += enc.entry(r, c) * x[c];
    ASSERT_NEAR(projected[r], sum, 1e-5);
  }
}

TEST(Encoder, VectorAndPortablePathsAgreeBitwise) {
  for (std::size_t hyper : {1UL, 15UL, 16UL, 17UL, 1000UL, 10000UL}) {
    const ProjectionEncoder enc(512, hyper, 11);
    const auto x = gaussian(512, hyper);
    std::vector<double> fast(hyper), portable(hyper);
    enc.project(x, fast);
    enc.project_portable(x, portable);
    ASSERT_EQ(fast, portable) << hyper;
  }
}

TEST(Encoder, ScaleInvariant) {
  const ProjectionEncoder enc(64, 2000, 2);
  const auto x = gaussian(64, 9);
  auto x2 = x;
  for (auto& v : x2) v *= 2.0;
  EXPECT_EQ(enc.encode(x), enc.encode(x2));
}

TEST(Encoder, NegationFlipsSign) {
  const ProjectionEncoder enc(64, 2000, 2);
  const auto x = gaussian(64, 10);
  auto neg = x;
  for (auto& v : neg) v = -v;
  std::vector<double> projected(2000);
  enc.project(x, projected);
  ASSERT_TRUE(std::ranges::none_of(projected, [](double p) { return p == 0.0; }));
  EXPECT_EQ(enc.encode(neg), -enc.encode(x));
}

TEST(Encoder, ZeroInputIsAllPlusAndFlagged) {
  const ProjectionEncoder enc(16, 100, 4);
  const auto out = enc.encode_checked(std::vector<double>(16, 0.0));
  EXPECT_TRUE(out.zero_input);
  EXPECT_EQ(out.hv, Hypervector::ones(100));
  EXPECT_FALSE(enc.encode_checked(gaussian(16, 1)).zero_input);
}

TEST(Encoder, BadInputsRejected) {
  const ProjectionEncoder enc(8, 16, 1);
  expect_error(ErrorCode::invalid_argument, [&] { (void)enc.encode(std::vector<double>(7, 1.0)); });
  auto x = std::vector<double>(8, 1.0);
  x[3] = std::nan("");
  expect_error(ErrorCode::invalid_argument, [&] { (void)enc.encode(x); });
  x[3] = INFINITY;
  expect_error(ErrorCode::invalid_argument, [&] { (void)enc.encode(x); });
}

TEST(Encoder, IndependentInputsFollowSignProjectionLaw) {
  // For sign random projection E[cos(h(a), h(b))] = 1 - 2*angle(a, b)/pi.
  const ProjectionEncoder enc(512, 10000, 21);
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto x = gaussian(512, 2 * s + 1);
    const auto y = gaussian(512, 2 * s + 2);
    const double expected = 1.0 - 2.0 * std::acos(cosine(x, y)) / std::numbers::pi;
    worst = std::max(worst, std::abs(cosine(enc.encode(x), enc.encode(y)) - expected));
  }
  EXPECT_LT(worst, 0.05);
}

TEST(Hypervector, RejectsNonBipolar) {
  expect_error(ErrorCode::invalid_argument, [] { Hypervector(std::vector<std::int8_t>{1, 0, -1}); });
  expect_error(ErrorCode::invalid_argument, [] { Hypervector(std::vector<std::int8_t>{}); });
}

TEST(Bundle, SingleAndCancel) {
  const auto h = random_hypervector(1000, 1);
  const auto one = bundle({h});
  for (std::size_t i = 0; i < h.dim(); ++i) ASSERT_EQ(one[i], h[i]);
  const auto zero = bundle({h, -h});
  EXPECT_TRUE(std::ranges::all_of(zero.values(), [](std::int32_t v) { return v == 0; }));
  EXPECT_EQ(zero.count(), 2U);
}

TEST(Bundle, Errors) {
  expect_error(ErrorCode::invalid_argument, [] { (void)bundle(std::span<const Hypervector>()); });
  expect_error(ErrorCode::invalid_argument, [] { (void)bundle({random_hypervector(10, 1), random_hypervector(11, 1)}); });
}

TEST(Bundle, MemberSimilarityOfThree) {
  std::vector<double> sims;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto a = random_hypervector(10000, 3 * s);
    const auto b = random_hypervector(10000, 3 * s + 1);
    const auto c = random_hypervector(10000, 3 * s + 2);
    const auto sum = bundle({a, b, c});
    for (const auto* h : {&a, &b, &c}) sims.push_back(cosine(sum, *h));
  }
  for (double v : sims) ASSERT_NEAR(v, 1.0 / std::sqrt(3.0), 0.03);
}

TEST(Bind, SelfInverseAndUnbinding) {
  const auto a = random_hypervector(4096, 5);
  const auto b = random_hypervector(4096, 6);
  EXPECT_EQ(bind(a, a), Hypervector::ones(4096));
  EXPECT_EQ(bind(bind(a, b), b), a);
  EXPECT_EQ(bind(a, b), bind(b, a));
  expect_error(ErrorCode::invalid_argument, [&] { (void)bind(a, random_hypervector(10, 1)); });
}

TEST(Bind, QuasiOrthogonal) {
  double total = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto a = random_hypervector(10000, 1000 + 2 * s);
    const auto b = random_hypervector(10000, 1001 + 2 * s);
    const double d = cosine(bind(a, b), a);
    ASSERT_LT(std::abs(d), 0.1);
    total += d;
  }
  EXPECT_LT(std::abs(total / 100.0), 0.01);
}

TEST(Cosine, BoundsAndSymmetry) {
  const auto h = random_hypervector(2048, 9);
  EXPECT_DOUBLE_EQ(cosine(h, h), 1.0);
  EXPECT_DOUBLE_EQ(cosine(h, -h), -1.0);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto x = gaussian(300, s);
    const auto y = gaussian(300, s + 100);
    const double xy = cosine(x, y);
    EXPECT_EQ(xy, cosine(y, x));
    EXPECT_GE(xy, -1.0);
    EXPECT_LE(xy, 1.0);
  }
}

TEST(Cosine, ZeroVectorUndefined) {
  const std::vector<double> zero(4, 0.0);
  const std::vector<double> one(4, 1.0);
  expect_error(ErrorCode::undefined_similarity, [&] { (void)cosine(zero, one); });
  expect_error(ErrorCode::invalid_argument, [&] { (void)cosine(one, std::vector<double>(3, 1.0)); });
}

TEST(RandomHypervector, DeterministicPerSeed) {
  EXPECT_EQ(random_hypervector(777, 3), random_hypervector(777, 3));
  EXPECT_NE(random_hypervector(777, 3), random_hypervector(777, 4));
}
