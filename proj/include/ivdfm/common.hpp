// SPDX-License-Identifier: Apache-2.0
//
// Shared utilities: deterministic RNG, warning sink, small string helpers.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ivdfm {

inline constexpr double kPi = 3.14159265358979323846;

// Warnings go to stderr; library calls never abort on recoverable conditions.
void log_warning(const std::string& msg);

namespace detail {
inline void format_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void format_into(std::ostringstream& os, const T& head, const Rest&... rest) {
  os << head;
  format_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string cat(const Args&... args) {
  std::ostringstream os;
  detail::format_into(os, args...);
  return os.str();
}

// Derive an independent stream seed from (base, salt); splitmix64 finalizer.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt);

// Deterministic random stream. All transforms are spelled out here instead of
// relying on std:: distributions, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw() { return gen_(); }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; consumes two uniforms per call.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Inverse-CDF Laplace draw: loc - scale * sgn(w) * log(1 - 2|w|), w ~ U(-1/2, 1/2).
  double laplace(double loc, double scale) {
    double w = uniform() - 0.5;
    return loc - scale * sign_of(w) * std::log(1.0 - 2.0 * std::abs(w));
  }

  // Student-t with integer dof > 2: normal over sqrt(chi2/dof).
  double student_t(int dof) {
    double z = normal();
    double chi2 = 0.0;
    for (int i = 0; i < dof; ++i) {
      double n = normal();
      chi2 += n * n;
    }
    return z / std::sqrt(chi2 / static_cast<double>(dof));
  }

  std::size_t index(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

 private:
  static double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }
  std::mt19937_64 gen_;
};

}  // namespace ivdfm
