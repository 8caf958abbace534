#pragma once

// Shared aliases, error types, a small closed-interval type, deterministic
// seed derivation and a block-partitioned parallel loop.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace hopfreach {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class GameMode { Reach, Avoid };

inline const char* to_string(GameMode m) { return m == GameMode::Reach ? "reach" : "avoid"; }

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Closed interval [lo, hi]. Arithmetic is outward in the set sense but not
// in the floating-point sense; the tube scheme's explicit bloating terms
// dominate rounding at the step sizes used here.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  Interval() = default;
  Interval(double l, double h) : lo(l), hi(h) {}
  static Interval point(double v) { return {v, v}; }

  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  double abs_max() const { return std::max(std::abs(lo), std::abs(hi)); }
  bool contains(double v) const { return v >= lo && v <= hi; }

  Interval operator+(const Interval& o) const { return {lo + o.lo, hi + o.hi}; }
  Interval operator-(const Interval& o) const { return {lo - o.hi, hi - o.lo}; }
  Interval operator-() const { return {-hi, -lo}; }
  Interval operator+(double s) const { return {lo + s, hi + s}; }
  Interval operator-(double s) const { return {lo - s, hi - s}; }
  Interval& operator+=(const Interval& o) { lo += o.lo; hi += o.hi; return *this; }

  Interval operator*(const Interval& o) const {
    const double a = lo * o.lo, b = lo * o.hi, c = hi * o.lo, d = hi * o.hi;
    return {std::min(std::min(a, b), std::min(c, d)), std::max(std::max(a, b), std::max(c, d))};
  }
  Interval operator*(double s) const {
    return s >= 0 ? Interval{lo * s, hi * s} : Interval{hi * s, lo * s};
  }
  Interval sqr() const {
    const double a = lo * lo, b = hi * hi;
    if (lo <= 0.0 && hi >= 0.0) return {0.0, std::max(a, b)};
    return {std::min(a, b), std::max(a, b)};
  }
  Interval hull(const Interval& o) const { return {std::min(lo, o.lo), std::max(hi, o.hi)}; }
  Interval inflate(double m) const { return {lo - m, hi + m}; }
  bool subset_of(const Interval& o) const { return lo >= o.lo && hi <= o.hi; }
};

inline Interval sin_range(const Interval& t) {
  if (t.width() >= 2.0 * M_PI) return {-1.0, 1.0};
  double lo = std::min(std::sin(t.lo), std::sin(t.hi));
  double hi = std::max(std::sin(t.lo), std::sin(t.hi));
  // critical points at pi/2 + k*pi
  const double k0 = std::ceil((t.lo - M_PI / 2.0) / M_PI);
  for (double k = k0; M_PI / 2.0 + k * M_PI <= t.hi; k += 1.0) {
    const double s = std::sin(M_PI / 2.0 + k * M_PI);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  return {lo, hi};
}

inline Interval cos_range(const Interval& t) { return sin_range(t + M_PI / 2.0); }

// SplitMix64; used to derive independent per-point seeds from a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Runs fn(i) for i in [0, count). Results must be written to per-index slots
// so parallel and serial execution are bit-identical.
inline void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  if (threads <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const std::size_t n_workers = std::min<std::size_t>(threads, count);
  std::vector<std::thread> pool;
  pool.reserve(n_workers);
  std::exception_ptr error;
  std::mutex error_mutex;
  for (std::size_t w = 0; w < n_workers; ++w) {
    pool.emplace_back([&, w]() {
      const std::size_t chunk = (count + n_workers - 1) / n_workers;
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(count, begin + chunk);
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline std::vector<double> uniform_grid(double t0, double t1, double step) {
  if (!(t1 >= t0) || !(step > 0.0)) throw ConfigError("uniform_grid: bad range or step");
  const int n = std::max(1, static_cast<int>(std::llround((t1 - t0) / step)));
  std::vector<double> g(n + 1);
  for (int i = 0; i <= n; ++i) g[i] = t0 + (t1 - t0) * static_cast<double>(i) / n;
  return g;
}

}  // namespace hopfreach
