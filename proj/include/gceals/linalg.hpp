#pragma once

// Dense row-major matrices of doubles and the seeded generator that feeds
// every stochastic step in the toolkit.

#include <Eigen/Core>
#include <dlfcn.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "gceals/error.hpp"

namespace gceals {

class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("DenseMatrix: data length " + std::to_string(data_.size()) +
                       " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ShapeError("DenseMatrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

namespace detail {
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

inline ConstMap view(const DenseMatrix& m) {
  return {m.values().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}
inline MutMap view(DenseMatrix& m) {
  return {m.values().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

inline void require_shape(bool ok, const char* op, const DenseMatrix& a, const DenseMatrix& b) {
  if (!ok) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " and " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

// Products go to OpenBLAS when it can be loaded at runtime and to Eigen
// otherwise. Loading is deferred so the kernel choice can still be steered
// through the environment: on AVX-512 hosts the SkylakeX kernels are
// requested (OpenBLAS often misdetects virtualised CPUs), always with one
// thread. GCEALS_BLAS=eigen forces the Eigen path.
struct GemmBackend {
  using Dgemm = void (*)(int, int, int, int, int, int, double, const double*, int, const double*, int, double,
                         double*, int);
  Dgemm dgemm = nullptr;
  std::string name = "eigen";
};

inline const GemmBackend& gemm_backend() {
  static const GemmBackend backend = [] {
    GemmBackend b;
    const char* pref = std::getenv("GCEALS_BLAS");
    if (pref && std::string(pref) == "eigen") return b;
#if defined(__x86_64__)
    if (__builtin_cpu_supports("avx512f")) setenv("OPENBLAS_CORETYPE", "SkylakeX", 0);
#endif
    setenv("OPENBLAS_NUM_THREADS", "1", 0);
    void* h = nullptr;
    for (const char* lib : {"libopenblas.so.0", "libopenblas.so"})
      if ((h = dlopen(lib, RTLD_NOW | RTLD_LOCAL))) break;
    if (!h) return b;
    b.dgemm = reinterpret_cast<GemmBackend::Dgemm>(dlsym(h, "cblas_dgemm"));
    if (!b.dgemm) return b;
    if (auto set_threads = reinterpret_cast<void (*)(int)>(dlsym(h, "openblas_set_num_threads"))) set_threads(1);
    b.name = "openblas";
    if (auto core = reinterpret_cast<char* (*)()>(dlsym(h, "openblas_get_corename"))) b.name += std::string(" ") + core();
    return b;
  }();
  return backend;
}

// C = op(A)·op(B) for row-major operands; A is stored ar×ac, B br×bc.
inline void gemm(bool ta, bool tb, const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& out) {
  const auto& be = gemm_backend();
  if (be.dgemm) {
    constexpr int kRowMajor = 101, kNoTrans = 111, kTrans = 112;
    const int m = static_cast<int>(out.rows()), n = static_cast<int>(out.cols());
    const int k = static_cast<int>(ta ? a.rows() : a.cols());
    be.dgemm(kRowMajor, ta ? kTrans : kNoTrans, tb ? kTrans : kNoTrans, m, n, k, 1.0, a.values().data(),
             std::max<int>(1, static_cast<int>(a.cols())), b.values().data(),
             std::max<int>(1, static_cast<int>(b.cols())), 0.0, out.values().data(), std::max(1, n));
    return;
  }
  auto o = view(out);
  if (!ta && !tb) o.noalias() = view(a) * view(b);
  else if (ta && !tb) o.noalias() = view(a).transpose() * view(b);
  else if (!ta && tb) o.noalias() = view(a) * view(b).transpose();
  else o.noalias() = view(a).transpose() * view(b).transpose();
}
}  // namespace detail

// a * b
inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  detail::require_shape(a.cols() == b.rows(), "matmul", a, b);
  DenseMatrix out(a.rows(), b.cols());
  if (a.cols() == 0 || out.values().empty()) return out;
  detail::gemm(false, false, a, b, out);
  return out;
}

// aᵀ * b
inline DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  detail::require_shape(a.rows() == b.rows(), "matmul_tn", a, b);
  DenseMatrix out(a.cols(), b.cols());
  if (a.rows() == 0 || out.values().empty()) return out;
  detail::gemm(true, false, a, b, out);
  return out;
}

// a * bᵀ
inline DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  detail::require_shape(a.cols() == b.cols(), "matmul_nt", a, b);
  DenseMatrix out(a.rows(), b.rows());
  if (a.cols() == 0 || out.values().empty()) return out;
  detail::gemm(false, true, a, b, out);
  return out;
}

inline DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  return out;
}

// Numerically stable softmax of every row (max subtracted first).
inline DenseMatrix row_softmax(const DenseMatrix& a) {
  DenseMatrix out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto in = a.row(r);
    auto o = out.row(r);
    if (in.empty()) continue;
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(in[c] - mx);
      sum += o[c];
    }
    for (double& v : o) v /= sum;
  }
  return out;
}

// Divides every row by its sum. Throws DegenerateRowError on a non-positive sum.
inline DenseMatrix row_normalize(const DenseMatrix& a) {
  DenseMatrix out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto in = a.row(r);
    const double sum = std::accumulate(in.begin(), in.end(), 0.0);
    if (!(sum > 0.0) || !std::isfinite(sum)) throw DegenerateRowError("row_normalize: row sum is not positive", r);
    auto o = out.row(r);
    for (std::size_t c = 0; c < in.size(); ++c) o[c] = in[c] / sum;
  }
  return out;
}

// Rows picked by index, in the given order.
inline DenseMatrix gather_rows(const DenseMatrix& a, std::span<const std::size_t> idx) {
  DenseMatrix out(idx.size(), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto src = a.row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

inline std::vector<double> column_means(const DenseMatrix& a) {
  std::vector<double> mean(a.cols(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) mean[c] += a(r, c);
  if (a.rows() > 0)
    for (double& m : mean) m /= static_cast<double>(a.rows());
  return mean;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Index of the largest entry; the lowest index wins ties.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline std::vector<int> row_argmax(const DenseMatrix& a) {
  std::vector<int> out(a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) out[r] = static_cast<int>(argmax(a.row(r)));
  return out;
}

// 64-bit SplitMix step; used to derive child seeds and to hash job keys.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Seeded xoshiro256** generator. Samplers are written out by hand so that the
// stream does not depend on the standard library's distribution classes.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) {
    std::uint64_t x = seed;
    for (auto& s : state_) {
      x = splitmix64(x);
      s = x;
    }
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Independent child generator; advances this one.
  Rng split() { return Rng(splitmix64((*this)() ^ 0xD1B54A32D192ED03ULL)); }

  // Uniform in [0, 1).
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t x;
    do x = (*this)();
    while (x >= limit);
    return x % n;
  }

  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do u1 = uniform();
    while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  template <class T>
  void shuffle(std::vector<T>& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

  std::uint64_t state_[4]{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline DenseMatrix randn(Rng& rng, std::size_t rows, std::size_t cols) {
  DenseMatrix out(rows, cols);
  for (double& v : out.values()) v = rng.normal();
  return out;
}

}  // namespace gceals
