// SPDX-License-Identifier: Apache-2.0
//
// chanest - three-stage cascaded channel estimation for RIS-aided mmWave
// MU-MIMO uplinks with hybrid analog/digital arrays
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef CHANEST_TYPES_HPP
#define CHANEST_TYPES_HPP

#include <Eigen/Dense>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>

namespace chanest {

using cd = std::complex<double>;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

/// Directional cosine scaled by element spacing over wavelength. Steering
/// vectors built from it are 1-periodic in the stored value.
struct SpatialFrequency {
    double cycles = 0.0;
    SpatialFrequency() = default;
    SpatialFrequency(double c) : cycles(c) {}  // intentionally implicit
};

/// Wrap a frequency into the principal period [-1/2, 1/2).
inline double wrap_half(double f) { return f - std::floor(f + 0.5); }

/// Cyclic distance between two frequencies, in [0, 1/2].
inline double wrap_distance(double a, double b) { return std::abs(wrap_half(a - b)); }

// ---- error taxonomy ----------------------------------------------------

/// Configuration or precondition violations detected before any estimation.
struct invalid_config : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct invalid_dimension : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Dictionary smaller than the array it must cover.
struct dictionary_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Recoverable per-trial estimation failures. The Monte-Carlo harness counts
/// these and excludes the trial from NMSE aggregates.
struct estimation_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct detection_failure : estimation_error {
    using estimation_error::estimation_error;
};

struct insufficient_samples : estimation_error {
    using estimation_error::estimation_error;
};

/// Numerically rank-deficient linear system; carries a condition estimate.
struct singular_system : estimation_error {
    double condition;
    singular_system(const std::string& msg, double cond)
        : estimation_error(msg + " (condition ~ " + std::to_string(cond) + ")"), condition(cond) {}
};

// ---- deterministic RNG streams ------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Fold an id tuple into a stream seed. Used to split one master seed into
/// independent per-(stage, user, frame) streams.
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t s = 0x243f6a8885a308d3ULL;
    for (std::uint64_t p : parts) s = splitmix64(s ^ splitmix64(p));
    return s;
}

/// One deterministic random stream. Draw order is part of the contract:
/// re-running with the same seed reproduces every draw bit-exactly.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : eng_(seed) {}

    double uniform() { return unif_(eng_); }
    double normal() { return norm_(eng_); }

    /// CN(0, variance) sample, real part drawn first.
    cd cgaussian(double variance) {
        const double s = std::sqrt(variance * 0.5);
        const double re = s * normal();
        const double im = s * normal();
        return {re, im};
    }

    /// Unit-modulus sample exp(i 2 pi u), u ~ U[0,1).
    cd unit_phase() { return std::polar(1.0, kTwoPi * uniform()); }

  private:
    std::mt19937_64 eng_;
    std::uniform_real_distribution<double> unif_{0.0, 1.0};
    std::normal_distribution<double> norm_{0.0, 1.0};
};

// ---- plain-text serialization helpers ------------------------------------

/// Shortest round-trip decimal form of a double.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// Complex number as "re,im" with shortest round-trip decimals.
inline std::string format_complex(cd v) {
    return format_double(v.real()) + "," + format_double(v.imag());
}

}  // namespace chanest

#endif  // CHANEST_TYPES_HPP
