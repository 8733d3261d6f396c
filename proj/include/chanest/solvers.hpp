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

#ifndef CHANEST_SOLVERS_HPP
#define CHANEST_SOLVERS_HPP

#include <algorithm>
#include <functional>
#include <vector>

#include "chanest/array.hpp"
#include "chanest/types.hpp"

namespace chanest {

// ---- least squares --------------------------------------------------------

/// Left pseudo-inverse solve X = (A^H A)^-1 A^H Y for a tall full-column-rank
/// A. Throws singular_system (with a condition estimate) when the numerical
/// rank falls short.
inline MatrixXcd ls_pinv(const MatrixXcd& a, const MatrixXcd& y) {
    if (a.rows() < a.cols()) throw invalid_dimension("ls_pinv: system must not be underdetermined");
    if (a.rows() != y.rows()) throw invalid_dimension("ls_pinv: row count mismatch");
    Eigen::ColPivHouseholderQR<MatrixXcd> qr(a);
    if (qr.rank() < a.cols()) {
        const auto& r = qr.matrixR();
        const double top = std::abs(r(0, 0));
        const double bottom = std::abs(r(a.cols() - 1, a.cols() - 1));
        throw singular_system("ls_pinv: rank-deficient system",
                              bottom > 0 ? top / bottom : std::numeric_limits<double>::infinity());
    }
    return qr.solve(y);
}

/// Condition estimate (largest/smallest singular value).
inline double condition_number(const MatrixXcd& a) {
    Eigen::JacobiSVD<MatrixXcd> svd(a);
    const auto& s = svd.singularValues();
    return s(s.size() - 1) > 0 ? s(0) / s(s.size() - 1) : std::numeric_limits<double>::infinity();
}

// ---- orthogonal matching pursuit -------------------------------------------

struct SparseSolution {
    std::vector<int> support;   ///< selected dictionary columns, in pick order
    VectorXcd coefficients;     ///< LS fit on the support, aligned with it
    double residual_norm = 0.0;
    bool regularized = false;   ///< support solve needed Tikhonov regularization
};

/// Greedy sparse recovery: per iteration pick the column maximizing
/// |col^H r| / ||col||, then refit all coefficients by LS on the support.
/// An ill-conditioned support Gram matrix falls back to a Tikhonov solve
/// with lambda = 1e-10 trace(A^H A)/s and sets the regularized flag.
inline SparseSolution omp(const MatrixXcd& sensing, const VectorXcd& y, int sparsity) {
    const Eigen::Index n = sensing.rows(), d = sensing.cols();
    if (y.size() != n) throw invalid_dimension("omp: measurement length mismatch");
    if (sparsity < 1 || sparsity > std::min(n, d))
        throw invalid_dimension("omp: sparsity must be in [1, min(n, d)]");

    VectorXd colnorm(d);
    for (Eigen::Index c = 0; c < d; ++c) {
        colnorm(c) = sensing.col(c).norm();
        if (colnorm(c) == 0.0) throw invalid_dimension("omp: zero dictionary column");
    }

    SparseSolution sol;
    VectorXcd residual = y;
    MatrixXcd basis(n, sparsity);
    for (int it = 0; it < sparsity; ++it) {
        int best = -1;
        double best_score = -1.0;
        for (Eigen::Index c = 0; c < d; ++c) {
            if (std::find(sol.support.begin(), sol.support.end(), int(c)) != sol.support.end())
                continue;
            const double score = std::abs(sensing.col(c).dot(residual)) / colnorm(c);
            if (score > best_score + 0.0) {  // strict: ties keep the lowest index
                best_score = score;
                best = int(c);
            }
        }
        sol.support.push_back(best);
        basis.col(it) = sensing.col(best);

        const auto sub = basis.leftCols(it + 1);
        Eigen::JacobiSVD<MatrixXcd> svd(sub, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const auto& sv = svd.singularValues();
        if (sv(it) < 1e-12 * sv(0)) {
            MatrixXcd gram = sub.adjoint() * sub;
            const double lambda = 1e-10 * gram.trace().real() / double(it + 1);
            gram.diagonal().array() += lambda;
            sol.coefficients = gram.ldlt().solve(MatrixXcd(sub.adjoint() * y));
            sol.regularized = true;
        } else {
            sol.coefficients = svd.solve(y);
        }
        residual = y - sub * sol.coefficients;
    }
    sol.residual_norm = residual.norm();
    return sol;
}

// ---- 1-D refinement --------------------------------------------------------

namespace detail {

/// Golden-section maximization of f on [lo, hi]; assumes a single local
/// maximum inside the bracket (which grid search has already isolated).
inline double golden_max(const std::function<double(double)>& f, double lo, double hi,
                         int iters = 70) {
    constexpr double inv_phi = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int i = 0; i < iters; ++i) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        }
    }
    return 0.5 * (a + b);
}

/// Coarse periodic grid scan followed by a bracketed golden-section polish.
/// Ties in the scan resolve to the lowest grid index.
inline double periodic_argmax(const std::function<double(double)>& f, int grid_points) {
    int best = 0;
    double best_val = -1.0;
    const double step = 1.0 / grid_points;
    for (int i = 0; i < grid_points; ++i) {
        const double v = f(-0.5 + i * step);
        if (v > best_val) {
            best_val = v;
            best = i;
        }
    }
    const double center = -0.5 + best * step;
    const double refined = golden_max(f, center - step, center + step);
    // keep the refined point only when it actually improves on the grid hit
    return f(refined) >= best_val ? wrap_half(refined) : wrap_half(center);
}

}  // namespace detail

// ---- separable nonlinear LS over RIS angle rotations -----------------------

struct RotationEstimate {
    double dv = 0.0;        ///< vertical angle rotation
    double dw = 0.0;        ///< horizontal angle rotation
    cd gain{0.0, 0.0};      ///< complex gain scaling factor
    bool degenerate = false;
};

/// Fit p ~ E^H diag(h_ref) a_M(dv, dw) x. The gain is eliminated in closed
/// form (x = c^H p / ||c||^2 with c the candidate regressor), leaving a 2-D
/// search over the angle rotations: coarse per-axis grids at 4x the array
/// resolution, then a bracketed 1-D polish per axis.
inline RotationEstimate snl_ls_rotation(const VectorXcd& h_ref, const MatrixXcd& e,
                                        const VectorXcd& p, int m1, int m2) {
    if (h_ref.size() != e.rows()) throw invalid_dimension("snl_ls_rotation: M mismatch");
    if (e.cols() != p.size()) throw invalid_dimension("snl_ls_rotation: slot count mismatch");
    if (h_ref.norm() == 0.0) throw invalid_dimension("snl_ls_rotation: zero reference vector");

    RotationEstimate est;
    if (p.norm() == 0.0) {
        est.degenerate = true;
        return est;
    }

    const MatrixXcd eh = e.adjoint();  // tau x M
    auto objective = [&](double dv, double dw) {
        VectorXcd c = eh * VectorXcd(h_ref.cwiseProduct(upa_steering(m1, m2, dv, dw)));
        const double cn2 = c.squaredNorm();
        if (cn2 == 0.0) return -1.0;
        return std::norm(c.dot(p)) / cn2;
    };

    const int g1 = 4 * m1, g2 = 4 * m2;
    double best = -1.0;
    for (int i = 0; i < g1; ++i) {
        for (int k = 0; k < g2; ++k) {
            const double dv = -0.5 + double(i) / g1;
            const double dw = -0.5 + double(k) / g2;
            const double v = objective(dv, dw);
            if (v > best) {
                best = v;
                est.dv = dv;
                est.dw = dw;
            }
        }
    }
    const double dw0 = est.dw;
    const double dv1 = detail::golden_max([&](double v) { return objective(v, dw0); },
                                          est.dv - 1.0 / g1, est.dv + 1.0 / g1);
    if (objective(dv1, dw0) >= best) est.dv = wrap_half(dv1);
    best = std::max(best, objective(est.dv, est.dw));
    const double dv_fixed = est.dv;
    const double dw1 = detail::golden_max([&](double w) { return objective(dv_fixed, w); },
                                          est.dw - 1.0 / g2, est.dw + 1.0 / g2);
    if (objective(dv_fixed, dw1) >= best) est.dw = wrap_half(dw1);

    VectorXcd c = eh * VectorXcd(h_ref.cwiseProduct(upa_steering(m1, m2, est.dv, est.dw)));
    const double cn2 = c.squaredNorm();
    est.gain = cn2 > 0 ? cd(c.dot(p) / cn2) : cd(0, 0);
    if (std::abs(est.gain) == 0.0) est.degenerate = true;
    return est;
}

// ---- AoD line search --------------------------------------------------------

/// Spectral line search over the per-antenna gain ratio sequence. With the
/// convention eta_i = exp(-i 2 pi (i-1) xi), returns +xi; feed the conjugate
/// sequence to flip the sign. Resolution is set by the sequence length, not
/// by any antenna count: the search maximizes the periodogram
/// |sum_i eta_i exp(+i 2 pi (i-1) xi)|^2 over one period.
inline double line_search_aod(const VectorXcd& etas) {
    const int v = int(etas.size()) - 1;
    if (v < 1) throw insufficient_samples("line_search_aod: need at least two ratio samples");

    auto objective = [&](double xi) {
        cd acc(0.0, 0.0);
        for (int i = 0; i <= v; ++i) acc += etas(i) * std::polar(1.0, kTwoPi * i * xi);
        return std::norm(acc);
    };
    return detail::periodic_argmax(objective, 4 * (v + 1));
}

}  // namespace chanest

#endif  // CHANEST_SOLVERS_HPP
