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

#ifndef CHANEST_DESIGN_HPP
#define CHANEST_DESIGN_HPP

#include "chanest/array.hpp"
#include "chanest/linalg.hpp"
#include "chanest/solvers.hpp"
#include "chanest/types.hpp"

namespace chanest {

/// Slot-d combiner of the uncompressed acquisition stage: rows
/// (d-1)*n_rf .. d*n_rf - 1 of the n_bs DFT matrix (d is 1-based).
/// Stacking all n_bs/n_rf blocks reproduces the full DFT matrix.
inline MatrixXcd dft_block_combiner(int d, int n_rf, int n_bs) {
    if (n_rf < 1 || n_bs < 1 || n_bs % n_rf != 0)
        throw invalid_dimension("dft_block_combiner: n_bs must be a multiple of n_rf");
    const int slots = n_bs / n_rf;
    if (d < 1 || d > slots) throw invalid_dimension("dft_block_combiner: slot index out of range");
    MatrixXcd w(n_rf, n_bs);
    for (int r = 0; r < n_rf; ++r) {
        const int row = (d - 1) * n_rf + r;
        for (int c = 0; c < n_bs; ++c)
            w(r, c) = std::polar(1.0, -kTwoPi * double(row) * double(c) / n_bs);
    }
    return w;
}

/// Noise-minimizing hybrid combiner built on the estimated common AoA
/// steering matrix: first L rows are A_hat^H, remaining chains zero-padded.
/// The zero rows are an idealization; a pure phase-shifter network cannot
/// realize them, and only the first L rows carry unit-modulus entries.
inline MatrixXcd optimized_combiner(const MatrixXcd& a_hat, int n_rf) {
    const int l = int(a_hat.cols());
    if (n_rf < l) throw invalid_config("optimized_combiner: need n_rf >= L");
    MatrixXcd w = MatrixXcd::Zero(n_rf, a_hat.rows());
    w.topRows(l) = a_hat.adjoint();
    return w;
}

/// Noise-minimizing RIS activation for the per-antenna gain LS: the slots
/// replay the estimated cascaded steering columns of the typical path.
inline MatrixXcd optimized_ris_matrix(const MatrixXcd& a_ris_r_hat) {
    if (!is_unit_modulus(a_ris_r_hat, 1e-9))
        throw invalid_config("optimized_ris_matrix: columns must be unit-modulus steering vectors");
    return a_ris_r_hat;
}

/// I.i.d. uniform-phase matrix, deterministic per seed.
inline MatrixXcd random_unit_modulus(int rows, int cols, std::uint64_t seed) {
    if (rows < 1 || cols < 1) throw invalid_dimension("random_unit_modulus: dims must be >= 1");
    RngStream rng(mix_seed({seed, 0x554d4f44ULL}));
    MatrixXcd m(rows, cols);
    for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) m(r, c) = rng.unit_phase();
    return m;
}

/// Linear map T = (W A_hat)^+ W applied to raw receiver noise by the AoA
/// projection. Row norms squared of T, times sigma^2, give the per-component
/// amplified noise variance.
inline MatrixXcd noise_projection_gain(const MatrixXcd& w, const MatrixXcd& a_hat) {
    return ls_pinv(w * a_hat, w);
}

}  // namespace chanest

#endif  // CHANEST_DESIGN_HPP
