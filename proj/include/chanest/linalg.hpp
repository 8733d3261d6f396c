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

#ifndef CHANEST_LINALG_HPP
#define CHANEST_LINALG_HPP

#include "chanest/types.hpp"

namespace chanest {

/// Kronecker product A (m x n) x B (p x q) -> (mp x nq).
inline MatrixXcd kron(const MatrixXcd& a, const MatrixXcd& b) {
    MatrixXcd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

/// Column-wise Khatri-Rao product: column m of the result is
/// A(:,m) kron B(:,m). Satisfies vec(X diag(h) Y) = (Y^T kr X) h with
/// column-major vec.
inline MatrixXcd khatri_rao_cols(const MatrixXcd& a, const MatrixXcd& b) {
    if (a.cols() != b.cols()) throw invalid_dimension("khatri_rao_cols: column count mismatch");
    MatrixXcd out(a.rows() * b.rows(), a.cols());
    for (Eigen::Index m = 0; m < a.cols(); ++m)
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            out.block(i * b.rows(), m, b.rows(), 1) = a(i, m) * b.col(m);
    return out;
}

/// Column-major vectorization.
inline VectorXcd vec_cm(const MatrixXcd& x) {
    return Eigen::Map<const VectorXcd>(x.data(), x.size());
}

inline bool is_unit_modulus(const MatrixXcd& x, double tol = 1e-12) {
    return ((x.array().abs() - 1.0).abs() < tol).all();
}

/// True when every row is entirely unit-modulus or entirely zero. Hybrid
/// combiners built from an estimated steering matrix zero-pad unused chains.
inline bool rows_unit_modulus_or_zero(const MatrixXcd& x, double tol = 1e-12) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const auto row = x.row(i).array().abs();
        const bool unit = ((row - 1.0).abs() < tol).all();
        const bool zero = (row < tol).all();
        if (!unit && !zero) return false;
    }
    return true;
}

}  // namespace chanest

#endif  // CHANEST_LINALG_HPP
