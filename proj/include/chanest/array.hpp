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

#ifndef CHANEST_ARRAY_HPP
#define CHANEST_ARRAY_HPP

#include <utility>

#include "chanest/types.hpp"

namespace chanest {

/// ULA array response a_n(x), element m = exp(-i 2 pi m x), m = 0..n-1.
/// Phases are evaluated per element from m*x (no multiplicative recurrence),
/// so large arrays do not accumulate rounding drift.
inline VectorXcd ula_steering(int n, SpatialFrequency x) {
    if (n < 1) throw invalid_dimension("ula_steering: array size must be >= 1");
    VectorXcd a(n);
    for (int m = 0; m < n; ++m) a(m) = std::polar(1.0, -kTwoPi * x.cycles * m);
    return a;
}

/// UPA array response a_{m1 x m2}(y, z) = a_{m1}(y) kron a_{m2}(z).
/// Element (p*m2 + q) = exp(-i 2 pi (p y + q z)); the m1 axis varies slowest.
inline VectorXcd upa_steering(int m1, int m2, SpatialFrequency y, SpatialFrequency z) {
    if (m1 < 1 || m2 < 1) throw invalid_dimension("upa_steering: array dims must be >= 1");
    VectorXcd a(m1 * m2);
    for (int p = 0; p < m1; ++p)
        for (int q = 0; q < m2; ++q)
            a(p * m2 + q) = std::polar(1.0, -kTwoPi * (p * y.cycles + q * z.cycles));
    return a;
}

/// Square DFT matrix with entry (r, c) = exp(-i 2 pi r c / n) (0-based).
/// Satisfies U U^H = n I.
inline MatrixXcd dft_matrix(int n) {
    if (n < 1) throw invalid_dimension("dft_matrix: size must be >= 1");
    MatrixXcd u(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            u(r, c) = std::polar(1.0, -kTwoPi * double(r) * double(c) / n);
    return u;
}

/// Steering matrix with one ULA response per column.
inline MatrixXcd steering_matrix(int n, const VectorXd& freqs) {
    MatrixXcd a(n, freqs.size());
    for (Eigen::Index l = 0; l < freqs.size(); ++l) a.col(l) = ula_steering(n, freqs(l));
    return a;
}

/// Grid sizes for the over-complete angle dictionary of an m1 x m2 UPA.
struct DictionaryConfig {
    int m1 = 1, m2 = 1;
    int d1 = 1, d2 = 1;

    static DictionaryConfig oversampled(int m1, int m2, int factor = 2) {
        return DictionaryConfig{m1, m2, factor * m1, factor * m2};
    }

    void validate() const {
        if (m1 < 1 || m2 < 1 || d1 < 1 || d2 < 1)
            throw invalid_dimension("DictionaryConfig: all dims must be >= 1");
        if (d1 < m1 || d2 < m2)
            throw dictionary_error("DictionaryConfig: dictionary must satisfy d1 >= m1, d2 >= m2");
    }

    int atoms() const { return d1 * d2; }

    // Grid frequencies cover one full period [-1/2, 1/2). Steering vectors
    // are 1-periodic in spatial frequency, so a wider range would duplicate
    // every atom and make recovered supports ambiguous.
    double grid1(int c) const { return -0.5 + double(c) / d1; }
    double grid2(int c) const { return -0.5 + double(c) / d2; }

    /// Nearest grid point to a frequency, respecting the wrap-around.
    double snap1(double f) const { return grid1(int(std::lround((wrap_half(f) + 0.5) * d1)) % d1); }
    double snap2(double f) const { return grid2(int(std::lround((wrap_half(f) + 0.5) * d2)) % d2); }
};

/// Per-axis over-complete dictionaries (A1: m1 x d1, A2: m2 x d2) whose
/// columns are ULA responses on the uniform one-period grids.
inline std::pair<MatrixXcd, MatrixXcd> build_ris_dictionary(const DictionaryConfig& cfg) {
    cfg.validate();
    MatrixXcd a1(cfg.m1, cfg.d1), a2(cfg.m2, cfg.d2);
    for (int c = 0; c < cfg.d1; ++c) a1.col(c) = ula_steering(cfg.m1, cfg.grid1(c));
    for (int c = 0; c < cfg.d2; ++c) a2.col(c) = ula_steering(cfg.m2, cfg.grid2(c));
    return {std::move(a1), std::move(a2)};
}

}  // namespace chanest

#endif  // CHANEST_ARRAY_HPP
