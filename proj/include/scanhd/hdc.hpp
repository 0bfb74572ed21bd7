#pragma once

// Bipolar hypervector algebra: random-projection sign encoding, bundling,
// binding and cosine similarity.
//
// Hypervectors are stored one signed byte per component. Projection matrices
// are bit-packed; entry (row, col) of the matrix for `seed` is
//
//   E[row][col] = +1  iff  bit (col % 64) of hash_combine(hash_combine(seed, row), col / 64) is set
//
// (hash_combine from random.hpp), otherwise -1. Only (input_dim, hyper_dim,
// seed) needs to be persisted to rebuild an encoder.

#include <algorithm>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "scanhd/error.hpp"
#include "scanhd/random.hpp"

#if defined(__x86_64__) && defined(__GNUC__)
#include <immintrin.h>
#endif

namespace scanhd {

namespace detail {

#if defined(__x86_64__) && defined(__GNUC__)
inline bool has_avx512() {
  static const bool yes = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx512f") != 0;
  }();
  return yes;
}
#endif

}  // namespace detail

inline constexpr std::size_t kDefaultHyperDim = 10000;

class Hypervector {
 public:
  Hypervector() = default;

  // Throws invalid_argument unless every element is -1 or +1.
  explicit Hypervector(std::vector<std::int8_t> values) : values_(std::move(values)) {
    require(!values_.empty(), ErrorCode::invalid_argument, "hypervector dimension must be positive");
    for (auto v : values_) {
      require(v == 1 || v == -1, ErrorCode::invalid_argument, "hypervector elements must be -1 or +1");
    }
  }

  static Hypervector ones(std::size_t dim) {
    return Hypervector(std::vector<std::int8_t>(dim, 1));
  }

  [[nodiscard]] std::size_t dim() const noexcept { return values_.size(); }
  [[nodiscard]] std::span<const std::int8_t> values() const noexcept { return values_; }
  [[nodiscard]] std::int8_t operator[](std::size_t i) const noexcept { return values_[i]; }

  [[nodiscard]] Hypervector operator-() const {
    Hypervector out = *this;
    for (auto& v : out.values_) v = static_cast<std::int8_t>(-v);
    return out;
  }

  friend bool operator==(const Hypervector&, const Hypervector&) = default;

 private:
  struct Unchecked {};
  Hypervector(Unchecked, std::vector<std::int8_t> values) : values_(std::move(values)) {}

  std::vector<std::int8_t> values_;

  friend class ProjectionEncoder;
  friend Hypervector bind(const Hypervector&, const Hypervector&);
  friend Hypervector random_hypervector(std::size_t, std::uint64_t);
};

// Component-wise sum of bipolar hypervectors.
class BundleVector {
 public:
  BundleVector() = default;
  BundleVector(std::vector<std::int32_t> values, std::size_t count)
      : values_(std::move(values)), count_(count) {}

  [[nodiscard]] std::size_t dim() const noexcept { return values_.size(); }
  [[nodiscard]] std::size_t count() const noexcept { return count_; }
  [[nodiscard]] std::span<const std::int32_t> values() const noexcept { return values_; }
  [[nodiscard]] std::int32_t operator[](std::size_t i) const noexcept { return values_[i]; }

 private:
  std::vector<std::int32_t> values_;
  std::size_t count_ = 0;
};

// Uniform random bipolar vector from the "hypervector" substream of `seed`.
inline Hypervector random_hypervector(std::size_t dim, std::uint64_t seed) {
  require(dim > 0, ErrorCode::invalid_argument, "hypervector dimension must be positive");
  Rng rng(seed, "hypervector");
  std::vector<std::int8_t> values(dim);
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < dim; ++i) {
    if (i % 64 == 0) word = rng.next();
    values[i] = ((word >> (i % 64)) & 1U) ? 1 : -1;
  }
  return Hypervector(Hypervector::Unchecked{}, std::move(values));
}

struct EncodeOutcome {
  Hypervector hv;
  bool zero_input = false;  // every projection was 0, so every element is the sgn(0) tie
};

// Fixed random bipolar projection followed by an element-wise sign.
class ProjectionEncoder {
 public:
  ProjectionEncoder(std::size_t input_dim, std::size_t hyper_dim, std::uint64_t seed)
      : input_dim_(input_dim), hyper_dim_(hyper_dim), seed_(seed) {
    require(input_dim > 0 && hyper_dim > 0, ErrorCode::invalid_argument,
            "encoder dimensions must be positive (input_dim=" + std::to_string(input_dim) +
                ", hyper_dim=" + std::to_string(hyper_dim) + ")");
    groups_ = (input_dim_ + 7) / 8;
    cols_.resize(hyper_dim_ * groups_);
    const std::size_t words = (input_dim_ + 63) / 64;
    for (std::size_t r = 0; r < hyper_dim_; ++r) {
      const std::uint64_t row_key = hash_combine(seed_, r);
      for (std::size_t w = 0; w < words; ++w) {
        const std::uint64_t bits = hash_combine(row_key, w);
        for (std::size_t b = 0; b < 8 && w * 8 + b < groups_; ++b) {
          cols_[(w * 8 + b) * hyper_dim_ + r] = static_cast<std::uint8_t>(bits >> (8 * b));
        }
      }
    }
  }

  [[nodiscard]] std::size_t input_dim() const noexcept { return input_dim_; }
  [[nodiscard]] std::size_t hyper_dim() const noexcept { return hyper_dim_; }
  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }

  // Matrix entry as +1/-1.
  [[nodiscard]] int entry(std::size_t row, std::size_t col) const noexcept {
    const std::uint8_t byte = cols_[(col / 8) * hyper_dim_ + row];
    return ((byte >> (col % 8)) & 1U) ? 1 : -1;
  }

  // Packed matrix bytes, group-major: byte g * hyper_dim + row holds columns
  // 8g..8g+7 of that row, lowest bit first.
  [[nodiscard]] std::span<const std::uint8_t> packed() const noexcept { return cols_; }

  // Projection E x before the sign. Columns are taken four at a time; each
  // 4-column signed sum is computed in double and rounded to float, the two
  // nibble sums of a byte are added in float, and byte g is accumulated into
  // float lane g % 4. The result is ((l0 + l1) + (l2 + l3)). Every code path
  // performs exactly these operations, so output is bit-identical across CPUs.
  void project(std::span<const double> x, std::span<double> out) const { project_impl(x, out, true); }

  // Same result without vector instructions.
  void project_portable(std::span<const double> x, std::span<double> out) const { project_impl(x, out, false); }

  // sgn(E x) with sgn(0) := +1.
  [[nodiscard]] EncodeOutcome encode_checked(std::span<const double> x) const {
    thread_local std::vector<double> projected;
    projected.resize(hyper_dim_);
    project(x, projected);
    std::vector<std::int8_t> values(hyper_dim_);
    bool all_zero = true;
    for (std::size_t r = 0; r < hyper_dim_; ++r) {
      values[r] = projected[r] >= 0.0 ? 1 : -1;
      all_zero = all_zero && projected[r] == 0.0;
    }
    return {Hypervector(Hypervector::Unchecked{}, std::move(values)), all_zero};
  }

  [[nodiscard]] Hypervector encode(std::span<const double> x) const {
    return encode_checked(x).hv;
  }

 private:
  void check_input(std::span<const double> x) const {
    require(x.size() == input_dim_, ErrorCode::invalid_argument,
            "input length " + std::to_string(x.size()) + " does not match encoder input_dim " +
                std::to_string(input_dim_));
    for (double v : x) {
      require(std::isfinite(v), ErrorCode::invalid_argument, "encoder input contains a non-finite value");
    }
  }

  void project_impl(std::span<const double> x, std::span<double> out, bool simd) const {
    check_input(x);
    require(out.size() == hyper_dim_, ErrorCode::invalid_argument, "projection output size mismatch");
    thread_local std::vector<float> table;
    table.resize(groups_ * 32);
    for (std::size_t q = 0; q < 2 * groups_; ++q) {
      double xs[4];
      for (std::size_t i = 0; i < 4; ++i) {
        const std::size_t col = q * 4 + i;
        xs[i] = col < input_dim_ ? x[col] : 0.0;
      }
      for (unsigned v = 0; v < 16; ++v) {
        double sum = 0.0;
        for (unsigned i = 0; i < 4; ++i) sum += ((v >> i) & 1U) ? xs[i] : -xs[i];
        table[q * 16 + v] = static_cast<float>(sum);
      }
    }
    std::size_t done = 0;
#if defined(__x86_64__) && defined(__GNUC__)
    if (simd && detail::has_avx512()) done = project_avx512(table.data(), out);
#endif
    project_scalar(table.data(), done, out);
  }

  void project_scalar(const float* table, std::size_t first, std::span<double> out) const {
    constexpr std::size_t kBlock = 16;
    for (std::size_t r0 = first; r0 < hyper_dim_; r0 += kBlock) {
      const std::size_t n = std::min(kBlock, hyper_dim_ - r0);
      float acc[kBlock][4] = {};
      for (std::size_t g = 0; g < groups_; ++g) {
        const std::uint8_t* col = cols_.data() + g * hyper_dim_ + r0;
        const float* lo = table + 32 * g;
        const float* hi = lo + 16;
        for (std::size_t j = 0; j < n; ++j) {
          const float pair = lo[col[j] & 15U] + hi[col[j] >> 4];
          acc[j][g % 4] += pair;
        }
      }
      for (std::size_t j = 0; j < n; ++j) {
        out[r0 + j] = static_cast<double>((acc[j][0] + acc[j][1]) + (acc[j][2] + acc[j][3]));
      }
    }
  }

#if defined(__x86_64__) && defined(__GNUC__)
  // Sixteen rows per step; a 16-entry nibble table fits one register, so the
  // lookup is a lane permute. Returns the number of rows written.
  __attribute__((target("avx512f"))) std::size_t project_avx512(const float* table, std::span<double> out) const {
    const __m512i low_mask = _mm512_set1_epi32(15);
    std::size_t r = 0;
    for (; r + 16 <= hyper_dim_; r += 16) {
      __m512 acc[4] = {_mm512_setzero_ps(), _mm512_setzero_ps(), _mm512_setzero_ps(), _mm512_setzero_ps()};
      for (std::size_t g = 0; g < groups_; ++g) {
        const auto* col = reinterpret_cast<const __m128i*>(cols_.data() + g * hyper_dim_ + r);
        const __m512i b = _mm512_cvtepu8_epi32(_mm_loadu_si128(col));
        const __m512 lo = _mm512_permutexvar_ps(_mm512_and_si512(b, low_mask), _mm512_loadu_ps(table + 32 * g));
        const __m512 hi = _mm512_permutexvar_ps(_mm512_srli_epi32(b, 4), _mm512_loadu_ps(table + 32 * g + 16));
        acc[g % 4] = _mm512_add_ps(acc[g % 4], _mm512_add_ps(lo, hi));
      }
      const __m512 sum = _mm512_add_ps(_mm512_add_ps(acc[0], acc[1]), _mm512_add_ps(acc[2], acc[3]));
      alignas(64) float lanes[16];
      _mm512_store_ps(lanes, sum);
      for (std::size_t j = 0; j < 16; ++j) out[r + j] = static_cast<double>(lanes[j]);
    }
    return r;
  }
#endif

  std::size_t input_dim_;
  std::size_t hyper_dim_;
  std::uint64_t seed_;
  std::size_t groups_ = 0;
  std::vector<std::uint8_t> cols_;
};

inline Hypervector encode(const ProjectionEncoder& enc, std::span<const double> x) {
  return enc.encode(x);
}

inline BundleVector bundle(std::span<const Hypervector> hvs) {
  require(!hvs.empty(), ErrorCode::invalid_argument, "bundle of an empty sequence");
  const std::size_t dim = hvs.front().dim();
  std::vector<std::int32_t> sum(dim, 0);
  for (const auto& hv : hvs) {
    require(hv.dim() == dim, ErrorCode::invalid_argument, "bundle dimension mismatch");
    const auto v = hv.values();
    for (std::size_t i = 0; i < dim; ++i) sum[i] += v[i];
  }
  return BundleVector(std::move(sum), hvs.size());
}

inline BundleVector bundle(std::initializer_list<Hypervector> hvs) {
  return bundle(std::span<const Hypervector>(hvs.begin(), hvs.size()));
}

inline Hypervector bind(const Hypervector& a, const Hypervector& b) {
  require(a.dim() == b.dim(), ErrorCode::invalid_argument, "bind dimension mismatch");
  std::vector<std::int8_t> out(a.dim());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::int8_t>(a.values_[i] * b.values_[i]);
  }
  return Hypervector(Hypervector::Unchecked{}, std::move(out));
}

namespace detail {

template <class T>
concept Arithmetic = std::integral<T> || std::floating_point<T>;

template <class V>
auto as_span(const V& v) {
  if constexpr (requires { v.values(); }) {
    return v.values();
  } else {
    return std::span(v);
  }
}

}  // namespace detail

template <detail::Arithmetic A, detail::Arithmetic B>
double dot(std::span<const A> a, std::span<const B> b) noexcept {
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  const std::size_t n = a.size();
  for (; i + 4 <= n; i += 4) {
    acc[0] += static_cast<double>(a[i + 0]) * static_cast<double>(b[i + 0]);
    acc[1] += static_cast<double>(a[i + 1]) * static_cast<double>(b[i + 1]);
    acc[2] += static_cast<double>(a[i + 2]) * static_cast<double>(b[i + 2]);
    acc[3] += static_cast<double>(a[i + 3]) * static_cast<double>(b[i + 3]);
  }
  for (; i < n; ++i) acc[0] += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

template <detail::Arithmetic A>
double squared_norm(std::span<const A> a) noexcept {
  return dot(a, a);
}

template <detail::Arithmetic A, detail::Arithmetic B>
double cosine(std::span<const A> a, std::span<const B> b) {
  require(a.size() == b.size(), ErrorCode::invalid_argument, "cosine dimension mismatch");
  const double na = squared_norm(a);
  const double nb = squared_norm(b);
  require(na > 0.0 && nb > 0.0, ErrorCode::undefined_similarity, "cosine of a zero vector");
  const double c = dot(a, b) / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

// Accepts Hypervector, BundleVector, or any contiguous range of numbers.
template <class VA, class VB>
double cosine(const VA& a, const VB& b) {
  return cosine(std::span(detail::as_span(a)), std::span(detail::as_span(b)));
}

}  // namespace scanhd
