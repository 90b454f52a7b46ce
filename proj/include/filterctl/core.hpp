#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace filterctl {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Raised when an argument violates an operation's precondition.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical procedure cannot produce a meaningful result
/// (divergence, empty fit window, unobservable parameter).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidInput(message);
}

inline bool all_finite(std::span<const double> values) {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

/// Closed frequency interval [lo, hi] in rad/ns.
struct Band {
  double lo = 0.0;
  double hi = 0.0;

  Band() = default;
  Band(double lo_, double hi_) : lo(lo_), hi(hi_) {
    require(std::isfinite(lo) && std::isfinite(hi) && lo < hi,
            "band requires finite lo < hi");
  }
  double width() const { return hi - lo; }
};

/// Sorts bands and merges any that overlap or touch.
inline std::vector<Band> normalize_bands(std::vector<Band> bands) {
  std::sort(bands.begin(), bands.end(),
            [](const Band& a, const Band& b) { return a.lo < b.lo; });
  std::vector<Band> merged;
  for (const Band& b : bands) {
    if (!merged.empty() && b.lo <= merged.back().hi)
      merged.back().hi = std::max(merged.back().hi, b.hi);
    else
      merged.push_back(b);
  }
  return merged;
}

// ---------------------------------------------------------------------------
// Random streams. Every stochastic quantity is drawn from an mt19937_64
// seeded by (root seed, stream name, index), so realization k never depends
// on how many other realizations were generated before it.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stream,
                                 std::uint64_t index = 0) {
  return splitmix64(splitmix64(root ^ fnv1a64(stream)) + index);
}

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) built from the top 53 bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal draw (Marsaglia polar method; portable across standard
/// library implementations, unlike std::normal_distribution).
inline double standard_normal(Rng& rng) {
  for (;;) {
    const double u = 2.0 * uniform01(rng) - 1.0;
    const double v = 2.0 * uniform01(rng) - 1.0;
    const double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
  }
}

inline double exponential(Rng& rng, double mean) {
  return -mean * std::log1p(-uniform01(rng));
}

// ---------------------------------------------------------------------------
// Small numerical helpers shared across modules.

/// atan(b) - atan(a) without cancellation when both arguments are large.
inline double atan_diff(double a, double b) {
  const double denom = 1.0 + a * b;
  if (std::isfinite(a) && std::isfinite(b) && denom > 0.0) return std::atan((b - a) / denom);
  return std::atan(b) - std::atan(a);
}

/// Uniformly spaced points lo, ..., hi (inclusive), n >= 2.
inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  require(n >= 2, "linspace requires at least two points");
  std::vector<double> out(n);
  const double step = (hi - lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) out[i] = lo + step * static_cast<double>(i);
  out.back() = hi;
  return out;
}

/// Trapezoid integral of y(x) over the tabulated nodes.
inline double trapezoid(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), "trapezoid: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i)
    acc += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return acc;
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_rms = 0.0;
};

/// Ordinary least squares y = slope * x + intercept.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, "fit_line needs >= 2 points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double denom = n * sxx - sx * sx;
  require(denom != 0.0, "fit_line: degenerate abscissae");
  LineFit fit;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (fit.slope * x[i] + fit.intercept);
    ss += r * r;
  }
  fit.residual_rms = std::sqrt(ss / n);
  return fit;
}

}  // namespace filterctl
