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

#ifndef CHANEST_ESTIMATOR_HPP
#define CHANEST_ESTIMATOR_HPP

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "chanest/array.hpp"
#include "chanest/channel.hpp"
#include "chanest/design.hpp"
#include "chanest/linalg.hpp"
#include "chanest/pilot.hpp"
#include "chanest/solvers.hpp"
#include "chanest/types.hpp"

namespace chanest {

// ---- common AoA (stage I) ---------------------------------------------------

struct CommonAoAEstimate {
    VectorXd psi_hat;  ///< sorted ascending
    MatrixXcd a_hat;   ///< n_bs x L steering matrix, unit first elements
};

namespace detail {

inline double median_of(VectorXd v) {
    std::sort(v.begin(), v.end());
    const Eigen::Index n = v.size();
    return n % 2 ? v(n / 2) : 0.5 * (v(n / 2 - 1) + v(n / 2));
}

/// Maximize a scalar objective over a local window by dense scan plus a
/// bracketed polish. Keeps the incumbent when nothing improves on it.
inline double refine_frequency(const std::function<double(double)>& objective, double center,
                               double halfwidth, double scan_step, double incumbent) {
    double best = incumbent;
    double best_val = objective(incumbent);
    const int steps = int(2.0 * halfwidth / scan_step) + 1;
    for (int i = 0; i <= steps; ++i) {
        const double psi = center - halfwidth + i * scan_step;
        const double v = objective(psi);
        if (v > best_val) {
            best_val = v;
            best = psi;
        }
    }
    const double polished = golden_max(objective, best - scan_step, best + scan_step);
    if (objective(polished) > best_val) best = polished;
    return wrap_half(best);
}

/// Power of the data captured by a candidate steering vector after the other
/// paths' current estimates are projected out. Maximizing this in one
/// frequency (the others fixed) is exact coordinate ascent on the joint LS
/// fit, which cross-path Dirichlet leakage cannot bias.
class DeflatedCorrelation {
  public:
    DeflatedCorrelation(const MatrixXcd& y, const VectorXd& other_freqs) : y_(y), n_(int(y.rows())) {
        if (other_freqs.size() > 0) {
            const MatrixXcd others = steering_matrix(n_, other_freqs);
            Eigen::HouseholderQR<MatrixXcd> qr(others);
            q_ = qr.householderQ() * MatrixXcd::Identity(n_, others.cols());
        }
    }

    double operator()(double psi) const {
        VectorXcd b = ula_steering(n_, psi);
        if (q_.size() > 0) b -= q_ * (q_.adjoint() * b);
        const double nb2 = b.squaredNorm();
        if (nb2 < 1e-9 * n_) return -1.0;  // candidate collapsed onto another path
        return (y_.adjoint() * b).squaredNorm() / nb2;
    }

  private:
    const MatrixXcd& y_;
    int n_;
    MatrixXcd q_;
};

inline VectorXd drop_entry(const VectorXd& v, int idx) {
    VectorXd out(v.size() - 1);
    int j = 0;
    for (int i = 0; i < v.size(); ++i)
        if (i != idx) out(j++) = v(i);
    return out;
}

}  // namespace detail

/// Estimate the L common AoA frequencies from the uncompressed stage-I
/// measurement. Peaks are taken one at a time from the DFT row powers of the
/// running residual: pick the strongest unused bin (it must clear 10x the
/// median row power of the original spectrum), refine the frequency over a
/// window of width 2/n_bs (dense 1e-4-cycle scan plus a bracketed polish),
/// then refit all picked paths and deflate. The refinement objective is the
/// deflated correlation: candidate and data are both projected off the other
/// paths before correlating, so leakage between close paths cancels. Cyclic
/// polish passes then re-run every path against the others' final estimates.
inline CommonAoAEstimate estimate_common_aoa(const MatrixXcd& y0_ant, int paths) {
    const int n = int(y0_ant.rows());
    if (paths < 1) throw invalid_dimension("estimate_common_aoa: need at least one path");
    if (y0_ant.cols() < 1) throw invalid_dimension("estimate_common_aoa: empty measurement");

    const MatrixXcd u = dft_matrix(n);
    const VectorXd base_power = (u.adjoint() * y0_ant).rowwise().squaredNorm();
    const double threshold = 10.0 * detail::median_of(base_power);
    const double halfwidth = 1.0 / n;

    VectorXd psi(paths);
    MatrixXcd residual = y0_ant;
    std::vector<bool> taken(n, false);
    for (int l = 0; l < paths; ++l) {
        const VectorXd row_power = (u.adjoint() * residual).rowwise().squaredNorm();
        int best = -1;
        double best_val = -1.0;
        for (int b = 0; b < n; ++b) {
            if (!taken[b] && row_power(b) > best_val) {
                best_val = row_power(b);
                best = b;
            }
        }
        if (best < 0 || best_val <= threshold)
            throw detection_failure(
                "estimate_common_aoa: fewer than L separated peaks above the detection threshold");
        taken[best] = true;

        const double center = wrap_half(double(best) / n);
        const detail::DeflatedCorrelation objective(y0_ant, psi.head(l));
        psi(l) = detail::refine_frequency(objective, center, halfwidth, 1e-4, center);

        const MatrixXcd a = steering_matrix(n, psi.head(l + 1));
        try {
            residual = y0_ant - a * ls_pinv(a, y0_ant);
        } catch (const singular_system&) {
            throw detection_failure("estimate_common_aoa: refined paths collapsed");
        }
    }

    // Coordinate ascent alternating over the paths. Adjacent paths couple
    // through their overlapping mainlobes and converge linearly, so iterate
    // until the estimates stop moving.
    for (int pass = 0; pass < 30; ++pass) {
        double moved = 0.0;
        for (int l = 0; l < paths; ++l) {
            const detail::DeflatedCorrelation objective(y0_ant, detail::drop_entry(psi, l));
            const double next = detail::refine_frequency(objective, psi(l), halfwidth, 1e-4, psi(l));
            moved = std::max(moved, wrap_distance(next, psi(l)));
            psi(l) = next;
        }
        if (moved < 1e-10) break;
    }

    for (int a = 0; a < paths; ++a)
        for (int b = a + 1; b < paths; ++b)
            if (wrap_distance(psi(a), psi(b)) < 0.25 / n)
                throw detection_failure("estimate_common_aoa: refined paths collapsed");

    std::sort(psi.begin(), psi.end());
    return {psi, steering_matrix(n, psi)};
}

// ---- stage-II building blocks ----------------------------------------------

/// Project one frame onto the estimated AoA directions:
/// (1/sqrt(p)) [(W A_hat)^+ Y]^H, one column per path.
inline MatrixXcd project_onto_aoa(const MatrixXcd& y, const MatrixXcd& w, const MatrixXcd& a_hat,
                                  double p) {
    if (p <= 0.0) throw invalid_config("project_onto_aoa: power must be positive");
    MatrixXcd x = ls_pinv(w * a_hat, y);
    return x.adjoint() / std::sqrt(p);
}

/// Index of the strongest projected path (0-based); ties go to the lowest.
inline int select_typical_path(const MatrixXcd& projections) {
    if (projections.cols() < 1) throw invalid_dimension("select_typical_path: empty projection");
    int best = 0;
    double best_val = projections.col(0).squaredNorm();
    for (Eigen::Index l = 1; l < projections.cols(); ++l) {
        const double v = projections.col(l).squaredNorm();
        if (v > best_val) {
            best_val = v;
            best = int(l);
        }
    }
    return best;
}

/// Cascaded decomposition anchored at the typical path r: its steering atoms
/// and gains, plus per-path angle rotations (dv, dw) and gain scalings x
/// relating every other path to it.
struct TypicalUserDecomposition {
    int r = 0;
    int m1 = 1, m2 = 1;
    MatrixXcd a_ris_r;       ///< m x J cascaded steering of the typical path
    VectorXcd beta_ris_r1;   ///< conjugated cascaded gains, antenna 1
    VectorXd dv, dw;         ///< angle rotation factors (entry r = 0)
    VectorXcd x;             ///< gain scaling factors (entry r = 1)
    VectorXd atom_v, atom_w; ///< recovered cascaded angle pairs per atom

    MatrixXcd a_ris(int l) const {
        return VectorXcd(upa_steering(m1, m2, dv(l), dw(l))).asDiagonal() * a_ris_r;
    }
    VectorXcd h_ris_antenna1(int l) const {
        return a_ris(l) * VectorXcd(x(l) * beta_ris_r1);
    }
};

/// Equivalent common RIS->BS channel, a re-parameterization of the common hop
/// that stage III reuses. The centroid frequencies cancel in every
/// reconstructed cascaded channel.
struct EquivalentCommonChannel {
    VectorXcd lambda_c;  ///< diagonal gain entries, length L
    MatrixXcd a_m_c;     ///< m x L
    double theta_c = 0.0, varphi_c = 0.0;

    MatrixXcd core() const { return lambda_c.asDiagonal() * a_m_c.adjoint(); }  // L x m
};

inline EquivalentCommonChannel make_equivalent_common(const TypicalUserDecomposition& d,
                                                      double mu1, double mu2) {
    const int l_paths = int(d.x.size());
    EquivalentCommonChannel c;
    c.theta_c = mu1;
    c.varphi_c = mu2;
    const cd s = d.beta_ris_r1.sum();
    c.lambda_c.resize(l_paths);
    c.a_m_c.resize(d.a_ris_r.rows(), l_paths);
    for (int l = 0; l < l_paths; ++l) {
        c.lambda_c(l) = std::conj(s * d.x(l));
        c.a_m_c.col(l) = upa_steering(d.m1, d.m2, mu1 + d.dv(l), mu2 + d.dw(l));
    }
    return c;
}

/// Stack of all Q subchannels of the typical user from its decomposition and
/// the per-antenna phase rows (a_q is the Q x J AoD steering matrix).
inline MatrixXcd reconstruct_user1(const MatrixXcd& a_hat, const TypicalUserDecomposition& d,
                                   const MatrixXcd& a_q) {
    const Eigen::Index n_bs = a_hat.rows(), m = d.a_ris_r.rows();
    const int l_paths = int(d.x.size());
    std::vector<MatrixXcd> a_ris_l(l_paths);
    for (int l = 0; l < l_paths; ++l) a_ris_l[l] = d.a_ris(l);

    MatrixXcd g(a_q.rows() * n_bs, m);
    MatrixXcd h(m, l_paths);
    for (Eigen::Index q = 0; q < a_q.rows(); ++q) {
        const VectorXcd omega_row = a_q.row(q).transpose();
        for (int l = 0; l < l_paths; ++l)
            h.col(l) = a_ris_l[l] * VectorXcd(omega_row.cwiseProduct(d.x(l) * d.beta_ris_r1));
        g.middleRows(q * n_bs, n_bs) = a_hat * h.adjoint();
    }
    return g;
}

/// Stack of all Q subchannels of a stage-III user from the equivalent common
/// channel, its recovered atoms and antenna-1 gains, and the AoD steering.
inline MatrixXcd reconstruct_common_user(const MatrixXcd& a_hat, const EquivalentCommonChannel& c,
                                         const MatrixXcd& a_mk_c, const VectorXcd& beta_k1,
                                         const MatrixXcd& a_qk) {
    const Eigen::Index n_bs = a_hat.rows(), m = a_mk_c.rows();
    const MatrixXcd front = a_hat * c.core();  // n_bs x m
    MatrixXcd g(a_qk.rows() * n_bs, m);
    for (Eigen::Index q = 0; q < a_qk.rows(); ++q) {
        const VectorXcd beta_q = a_qk.row(q).transpose().conjugate().cwiseProduct(beta_k1);
        const VectorXcd h = a_mk_c * beta_q;
        g.middleRows(q * n_bs, n_bs) = front * h.asDiagonal();
    }
    return g;
}

/// Prebuilt over-complete dictionary for the RIS angle domain.
struct RisDictionary {
    DictionaryConfig cfg;
    MatrixXcd a1, a2;
    MatrixXcd atoms;  ///< m x (d1 d2), kron(a1, a2)

    static RisDictionary build(const DictionaryConfig& c) {
        RisDictionary d;
        d.cfg = c;
        auto [a1, a2] = build_ris_dictionary(c);
        d.a1 = std::move(a1);
        d.a2 = std::move(a2);
        d.atoms = kron(d.a1, d.a2);
        return d;
    }

    std::pair<double, double> angles(int atom) const {
        return {cfg.grid1(atom / cfg.d2), cfg.grid2(atom % cfg.d2)};
    }
};

/// Per-user estimate plus per-stage diagnostics.
struct CascadedEstimate {
    MatrixXcd g_hat;   ///< (Q_k n_bs) x m
    VectorXd xi_hat;   ///< recovered AoD frequencies (empty when Q_k = 1)
    double omp_residual = 0.0;
    double cond_proj = 0.0;      ///< condition of W A_hat
    double cond_gain_ls = 0.0;   ///< condition of the per-frame gain LS system
    bool ratio_guard_applied = false;
    bool omp_regularized = false;
};

struct Stage2Core {
    MatrixXcd g11;  ///< first subchannel of the typical user
    TypicalUserDecomposition decomp;
    EquivalentCommonChannel common;
    double omp_residual = 0.0;
    bool omp_regularized = false;
};

// Sub-stage I of stage II: project the first frame onto the common AoAs,
// recover the typical path's cascaded atoms/gains by sparse recovery, then
// tie every other path to it through a separable nonlinear LS over the angle
// rotations and a closed-form gain scaling.
inline Stage2Core stage2_substage1(const MatrixXcd& y11, const MatrixXcd& w, const MatrixXcd& e,
                                   const MatrixXcd& a_hat, const SystemConfig& cfg,
                                   const RisDictionary& dict) {
    const int j1 = cfg.j_paths.front();
    const int l_paths = int(a_hat.cols());

    const MatrixXcd proj = project_onto_aoa(y11, w, a_hat, cfg.power.front());
    const int r = select_typical_path(proj);

    const MatrixXcd sensing = e.adjoint() * dict.atoms;
    SparseSolution sol = omp(sensing, proj.col(r), j1);

    Stage2Core core;
    auto& d = core.decomp;
    d.r = r;
    d.m1 = cfg.m1;
    d.m2 = cfg.m2;
    d.a_ris_r.resize(cfg.m(), j1);
    d.atom_v.resize(j1);
    d.atom_w.resize(j1);
    for (int j = 0; j < j1; ++j) {
        d.a_ris_r.col(j) = dict.atoms.col(sol.support[j]);
        auto [g1, g2] = dict.angles(sol.support[j]);
        d.atom_v(j) = g1;
        d.atom_w(j) = g2;
    }
    d.beta_ris_r1 = sol.coefficients;
    d.dv = VectorXd::Zero(l_paths);
    d.dw = VectorXd::Zero(l_paths);
    d.x = VectorXcd::Ones(l_paths);

    const VectorXcd h_r = d.a_ris_r * d.beta_ris_r1;
    for (int l = 0; l < l_paths; ++l) {
        if (l == r) continue;
        const RotationEstimate rot = snl_ls_rotation(h_r, e, proj.col(l), cfg.m1, cfg.m2);
        if (rot.degenerate)
            throw detection_failure("stage2_substage1: degenerate gain scaling for a path");
        d.dv(l) = rot.dv;
        d.dw(l) = rot.dw;
        d.x(l) = rot.gain;
    }

    MatrixXcd h_all(cfg.m(), l_paths);
    for (int l = 0; l < l_paths; ++l) h_all.col(l) = d.h_ris_antenna1(l);
    core.g11 = a_hat * h_all.adjoint();

    // Centroid of the recovered cascaded angles, snapped to the dictionary
    // grid. The value is a pure re-parameterization (it cancels in every
    // reconstructed channel); the snap keeps stage-III atoms on-grid.
    const double mu1 = dict.cfg.snap1(d.atom_v.mean());
    const double mu2 = dict.cfg.snap2(d.atom_w.mean());
    core.common = make_equivalent_common(d, mu1, mu2);
    core.omp_residual = sol.residual_norm;
    core.omp_regularized = sol.regularized;
    return core;
}

namespace detail {

/// Gain-ratio sequences -> AoD frequencies, one line search per path.
/// Paths whose antenna-1 gain is negligible relative to the strongest are
/// excluded (the ratio is undefined) and inherit the strongest path's AoD.
inline VectorXd aods_from_ratios(const MatrixXcd& etas /* (V+1) x J, row 0 = ones */,
                                 const VectorXcd& beta1, bool conjugate_sequence,
                                 bool* guard_applied) {
    const int j_paths = int(etas.cols());
    VectorXd xi(j_paths);
    int strongest = 0;
    for (int j = 1; j < j_paths; ++j)
        if (std::abs(beta1(j)) > std::abs(beta1(strongest))) strongest = j;
    const double floor = 1e-3 * std::abs(beta1(strongest));

    std::vector<int> weak;
    for (int j = 0; j < j_paths; ++j) {
        if (j != strongest && std::abs(beta1(j)) < floor) {
            weak.push_back(j);
            continue;
        }
        const VectorXcd seq =
            conjugate_sequence ? VectorXcd(etas.col(j).conjugate()) : VectorXcd(etas.col(j));
        xi(j) = line_search_aod(seq);
    }
    for (int j : weak) xi(j) = xi(strongest);
    if (guard_applied) *guard_applied = !weak.empty();
    return xi;
}

}  // namespace detail

// Sub-stage II of stage II: per extra antenna, re-estimate the typical path's
// cascaded gains by LS; the per-antenna gain ratios trace complex exponentials
// in the AoD frequencies, recovered by the spectral line search. The AoD
// steering matrix then extends the decomposition to every antenna.
inline CascadedEstimate stage2_substage2(const std::vector<MatrixXcd>& y_frames,
                                         const std::vector<FramePlan>& plans,
                                         const MatrixXcd& a_hat, const Stage2Core& core,
                                         const SystemConfig& cfg) {
    if (y_frames.size() != plans.size())
        throw invalid_dimension("stage2_substage2: frame/plan count mismatch");
    const int q1 = cfg.q.front();
    const int j1 = cfg.j_paths.front();
    const auto& d = core.decomp;

    CascadedEstimate est;
    est.omp_residual = core.omp_residual;
    est.omp_regularized = core.omp_regularized;

    if (q1 == 1 || y_frames.empty()) {
        est.g_hat = core.g11;
        return est;
    }

    const int v1 = int(y_frames.size());
    MatrixXcd etas(v1 + 1, j1);
    etas.row(0).setOnes();
    double worst_cond = 0.0;
    for (int f = 0; f < v1; ++f) {
        const MatrixXcd proj =
            project_onto_aoa(y_frames[f], plans[f].combiner, a_hat, cfg.power.front());
        const MatrixXcd basis = plans[f].ris.adjoint() * d.a_ris_r;
        worst_cond = std::max(worst_cond, condition_number(basis));
        const VectorXcd beta_i = ls_pinv(basis, proj.col(d.r));
        for (int j = 0; j < j1; ++j) {
            const cd denom = d.beta_ris_r1(j);
            etas(f + 1, j) = denom != cd(0, 0) ? beta_i(j) / denom : cd(0, 0);
        }
    }
    est.cond_gain_ls = worst_cond;

    est.xi_hat =
        detail::aods_from_ratios(etas, d.beta_ris_r1, /*conjugate=*/false, &est.ratio_guard_applied);
    const MatrixXcd a_q = steering_matrix(q1, est.xi_hat);
    est.g_hat = reconstruct_user1(a_hat, d, a_q);
    return est;
}

// Stage III for one remaining user: the vectorized first frame is sparse in
// the dictionary conjugated through the equivalent common channel, giving the
// user's atoms and antenna-1 gains; the remaining frames recover per-antenna
// gain ratios, AoDs by line search (opposite phase convention to stage II),
// and the full stack via the common core.
inline CascadedEstimate stage3_user(const std::vector<MatrixXcd>& y_frames,
                                    const std::vector<FramePlan>& plans, const MatrixXcd& a_hat,
                                    const EquivalentCommonChannel& common, const SystemConfig& cfg,
                                    const RisDictionary& dict, int user_k) {
    if (user_k < 2 || user_k > cfg.n_users)
        throw invalid_config("stage3_user: user index out of range");
    if (common.a_m_c.size() == 0)
        throw invalid_config("stage3_user: equivalent common channel missing");
    if (y_frames.empty() || y_frames.size() != plans.size())
        throw invalid_dimension("stage3_user: frame/plan count mismatch");

    const int k = user_k - 1;  // 0-based
    const int jk = cfg.j_paths[k];
    const int qk = cfg.q[k];
    const double pk = cfg.power[k];
    const MatrixXcd f_core = common.core();  // L x m

    CascadedEstimate est;

    // Sub-stage I: sparse recovery of the user's cascaded atoms.
    const MatrixXcd b_proj = ls_pinv(plans[0].combiner * a_hat, y_frames[0]) / std::sqrt(pk);
    const MatrixXcd mixing = khatri_rao_cols(plans[0].ris.transpose(), f_core);
    SparseSolution sol = omp(mixing * dict.atoms, vec_cm(b_proj), jk);
    est.omp_residual = sol.residual_norm;
    est.omp_regularized = sol.regularized;

    MatrixXcd a_mk_c(cfg.m(), jk);
    for (int j = 0; j < jk; ++j) a_mk_c.col(j) = dict.atoms.col(sol.support[j]);
    const VectorXcd beta_k1 = sol.coefficients;

    if (qk == 1 || y_frames.size() == 1) {
        est.g_hat = reconstruct_common_user(a_hat, common, a_mk_c, beta_k1, MatrixXcd::Ones(1, jk));
        return est;
    }

    // Sub-stage II: per-antenna gains via the common-channel mixing matrix.
    const int vk = int(y_frames.size()) - 1;
    MatrixXcd etas(vk + 1, jk);
    etas.row(0).setOnes();
    double worst_cond = 0.0;
    for (int f = 1; f <= vk; ++f) {
        const MatrixXcd proj = ls_pinv(plans[f].combiner * a_hat, y_frames[f]) / std::sqrt(pk);
        const MatrixXcd pi = khatri_rao_cols(plans[f].ris.transpose(), f_core) * a_mk_c;
        worst_cond = std::max(worst_cond, condition_number(pi));
        const VectorXcd beta_i = ls_pinv(pi, vec_cm(proj));
        for (int j = 0; j < jk; ++j) {
            const cd denom = beta_k1(j);
            etas(f, j) = denom != cd(0, 0) ? beta_i(j) / denom : cd(0, 0);
        }
    }
    est.cond_gain_ls = worst_cond;

    est.xi_hat =
        detail::aods_from_ratios(etas, beta_k1, /*conjugate=*/true, &est.ratio_guard_applied);
    const MatrixXcd a_qk = steering_matrix(qk, est.xi_hat);
    est.g_hat = reconstruct_common_user(a_hat, common, a_mk_c, beta_k1, a_qk);
    return est;
}

// ---- full pipeline -----------------------------------------------------------

struct EstimatorOptions {
    bool optimized_w = true;  ///< stage-II/III combiners from the AoA estimate
    bool optimized_e = true;  ///< stage-II sub-stage-II RIS slots replay the typical-path atoms
    bool oracle = false;      ///< true angles injected, gains by LS
};

struct TrialDiagnostics {
    int typical_path = -1;
    double cond_w_aoa = 0.0;
    std::vector<double> omp_residual;  ///< stage II, then stage-III users
    std::vector<double> cond_pi;       ///< per stage-III user
    std::vector<double> xi_error;      ///< per user, max AoD error vs truth

    std::string to_text() const {
        std::string s;
        s += "typical_path = " + std::to_string(typical_path + 1) + "\n";
        s += "cond_w_aoa = " + format_double(cond_w_aoa) + "\n";
        for (size_t i = 0; i < omp_residual.size(); ++i)
            s += "omp_residual" + std::to_string(i) + " = " + format_double(omp_residual[i]) + "\n";
        for (size_t i = 0; i < cond_pi.size(); ++i)
            s += "cond_pi" + std::to_string(i) + " = " + format_double(cond_pi[i]) + "\n";
        for (size_t i = 0; i < xi_error.size(); ++i)
            s += "xi_error" + std::to_string(i) + " = " + format_double(xi_error[i]) + "\n";
        return s;
    }
};

struct ThreeStageResult {
    std::vector<CascadedEstimate> users;  ///< size K
    CommonAoAEstimate aoa;
    PilotSchedule schedule;
    TrialDiagnostics diag;

    std::vector<MatrixXcd> g_hats() const {
        std::vector<MatrixXcd> g;
        g.reserve(users.size());
        for (const auto& u : users) g.push_back(u.g_hat);
        return g;
    }
};

namespace detail {

inline std::vector<int> sort_permutation(const VectorXd& v) {
    std::vector<int> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v(a) < v(b); });
    return idx;
}

/// Max over true AoDs of the cyclic distance to the nearest estimate.
inline double aod_match_error(const VectorXd& truth, const VectorXd& est) {
    if (est.size() == 0) return 0.0;
    double worst = 0.0;
    for (Eigen::Index t = 0; t < truth.size(); ++t) {
        double nearest = 0.5;
        for (Eigen::Index e = 0; e < est.size(); ++e)
            nearest = std::min(nearest, wrap_distance(truth(t), est(e)));
        worst = std::max(worst, nearest);
    }
    return worst;
}

/// Oracle counterpart of stage2_substage1: true angles (in sorted-AoA path
/// order), gains by LS against the measurements.
inline Stage2Core oracle_stage2_core(const ChannelRealization& chan, const SystemConfig& cfg,
                                     const MatrixXcd& y11, const MatrixXcd& w,
                                     const MatrixXcd& e, const MatrixXcd& a_hat,
                                     const std::vector<int>& perm) {
    const int j1 = cfg.j_paths.front();
    const int l_paths = cfg.n_paths_bs;
    const auto& u1 = chan.users.front();

    const MatrixXcd proj = project_onto_aoa(y11, w, a_hat, cfg.power.front());
    const int r = select_typical_path(proj);
    const int pr = perm[r];

    Stage2Core core;
    auto& d = core.decomp;
    d.r = r;
    d.m1 = cfg.m1;
    d.m2 = cfg.m2;
    d.a_ris_r.resize(cfg.m(), j1);
    d.atom_v.resize(j1);
    d.atom_w.resize(j1);
    for (int j = 0; j < j1; ++j) {
        d.atom_v(j) = wrap_half(chan.ris_bs.upsilon(pr) - u1.theta(j));
        d.atom_w(j) = wrap_half(chan.ris_bs.omega(pr) - u1.varphi(j));
        d.a_ris_r.col(j) = upa_steering(cfg.m1, cfg.m2, d.atom_v(j), d.atom_w(j));
    }
    d.beta_ris_r1 = ls_pinv(e.adjoint() * d.a_ris_r, proj.col(r));
    d.dv = VectorXd::Zero(l_paths);
    d.dw = VectorXd::Zero(l_paths);
    d.x = VectorXcd::Ones(l_paths);

    const VectorXcd h_r = d.a_ris_r * d.beta_ris_r1;
    const MatrixXcd eh = e.adjoint();
    for (int l = 0; l < l_paths; ++l) {
        if (l == r) continue;
        const int pl = perm[l];
        d.dv(l) = wrap_half(chan.ris_bs.upsilon(pl) - chan.ris_bs.upsilon(pr));
        d.dw(l) = wrap_half(chan.ris_bs.omega(pl) - chan.ris_bs.omega(pr));
        const VectorXcd c =
            eh * VectorXcd(h_r.cwiseProduct(upa_steering(cfg.m1, cfg.m2, d.dv(l), d.dw(l))));
        const double cn2 = c.squaredNorm();
        d.x(l) = cn2 > 0 ? cd(c.dot(proj.col(l)) / cn2) : cd(0, 0);
    }

    MatrixXcd h_all(cfg.m(), l_paths);
    for (int l = 0; l < l_paths; ++l) h_all.col(l) = d.h_ris_antenna1(l);
    core.g11 = a_hat * h_all.adjoint();
    core.common = make_equivalent_common(d, d.atom_v.mean(), d.atom_w.mean());
    return core;
}

}  // namespace detail

/// Simulate one full trial and run the three-stage estimator. Measurement
/// noise and the random combiner/RIS draws come from per-(stage, user, frame)
/// streams split off `seed`, so two calls with identical arguments are
/// bit-identical and stages may be generated independently.
inline ThreeStageResult run_three_stage(const ChannelRealization& chan, const SystemConfig& cfg,
                                        const ScheduleCounts& counts, const RisDictionary& dict,
                                        double sigma2, std::uint64_t seed,
                                        const EstimatorOptions& opt = {}) {
    cfg.validate();
    counts.validate(cfg);
    const int m = cfg.m();
    const int l_paths = cfg.n_paths_bs;
    const int j1 = cfg.j_paths.front();

    ThreeStageResult out;
    out.users.resize(cfg.n_users);
    auto e_stream = [&](int stage, int user, int frame) {
        return mix_seed({seed, stream_tag::ris, std::uint64_t(stage), std::uint64_t(user),
                         std::uint64_t(frame)});
    };
    auto w_stream = [&](int stage, int user, int frame) {
        return mix_seed({seed, stream_tag::combiner, std::uint64_t(stage), std::uint64_t(user),
                         std::uint64_t(frame)});
    };

    // Stage I.
    out.schedule.counts = counts;
    out.schedule.e0 = random_unit_modulus(m, counts.v0, mix_seed({seed, stream_tag::stage1_ris}));
    const MatrixXcd y0 = run_stage1(chan, cfg, out.schedule, sigma2, seed);

    std::vector<int> perm;  // sorted-AoA order of the true paths (oracle only)
    if (opt.oracle) {
        perm = detail::sort_permutation(chan.ris_bs.psi);
        VectorXd psi(l_paths);
        for (int l = 0; l < l_paths; ++l) psi(l) = chan.ris_bs.psi(perm[l]);
        out.aoa = {psi, steering_matrix(cfg.n_bs, psi)};
    } else {
        out.aoa = estimate_common_aoa(y0, l_paths);
    }

    // Stage II.
    const MatrixXcd w_opt = optimized_combiner(out.aoa.a_hat, cfg.n_rf);
    auto combiner_for = [&](int stage, int user, int frame) {
        return opt.optimized_w ? w_opt
                               : random_unit_modulus(cfg.n_rf, cfg.n_bs, w_stream(stage, user, frame));
    };
    FramePlan f11{combiner_for(2, 1, 1), random_unit_modulus(m, counts.tau11, e_stream(2, 1, 1)), 1};
    const MatrixXcd y11 =
        simulate_frame(chan, cfg, 0, f11, sigma2, noise_stream(seed, 2, 1, 1));
    out.schedule.stage2.push_back(f11);

    Stage2Core core = opt.oracle
                          ? detail::oracle_stage2_core(chan, cfg, y11, f11.combiner, f11.ris,
                                                       out.aoa.a_hat, perm)
                          : stage2_substage1(y11, f11.combiner, f11.ris, out.aoa.a_hat, cfg, dict);
    out.diag.typical_path = core.decomp.r;
    out.diag.cond_w_aoa = condition_number(f11.combiner * out.aoa.a_hat);
    out.diag.omp_residual.push_back(core.omp_residual);

    // Stage II sub-stage II frames. The noise-minimizing RIS activation is
    // defined only when the frame length matches the atom count.
    const bool e_a_fits = opt.optimized_e && counts.tau12 == j1;
    const MatrixXcd e_a = e_a_fits ? optimized_ris_matrix(core.decomp.a_ris_r) : MatrixXcd();
    std::vector<MatrixXcd> y2;
    std::vector<FramePlan> plans2;
    for (int i = 2; i <= counts.v1 + 1; ++i) {
        FramePlan f{combiner_for(2, 1, i),
                    e_a_fits ? e_a : random_unit_modulus(m, counts.tau12, e_stream(2, 1, i)), i};
        if (!opt.oracle)
            y2.push_back(simulate_frame(chan, cfg, 0, f, sigma2, noise_stream(seed, 2, 1, i)));
        plans2.push_back(f);
        out.schedule.stage2.push_back(std::move(f));
    }

    if (opt.oracle) {
        const int q1 = cfg.q.front();
        VectorXd xi = chan.users.front().xi;
        CascadedEstimate est;
        est.xi_hat = q1 > 1 ? xi : VectorXd();
        est.g_hat = reconstruct_user1(out.aoa.a_hat, core.decomp,
                                      q1 > 1 ? steering_matrix(q1, xi) : MatrixXcd::Ones(1, j1));
        out.users[0] = std::move(est);
    } else {
        out.users[0] = stage2_substage2(y2, plans2, out.aoa.a_hat, core, cfg);
    }

    // Stage III.
    for (int k = 2; k <= cfg.n_users; ++k) {
        std::vector<MatrixXcd> y3;
        std::vector<FramePlan> plans3;
        plans3.push_back(FramePlan{combiner_for(3, k, 1),
                                   random_unit_modulus(m, counts.tauk1, e_stream(3, k, 1)), 1});
        y3.push_back(simulate_frame(chan, cfg, k - 1, plans3[0], sigma2,
                                    noise_stream(seed, 3, k, 1)));
        for (int i = 2; i <= counts.vk + 1; ++i) {
            FramePlan f{combiner_for(3, k, i),
                        random_unit_modulus(m, counts.tauk2, e_stream(3, k, i)), i};
            if (!opt.oracle)
                y3.push_back(
                    simulate_frame(chan, cfg, k - 1, f, sigma2, noise_stream(seed, 3, k, i)));
            plans3.push_back(std::move(f));
        }

        if (opt.oracle) {
            const auto& uk = chan.users[k - 1];
            const int jk = cfg.j_paths[k - 1];
            const int qk = cfg.q[k - 1];
            const int pr = perm[core.decomp.r];
            MatrixXcd a_mk_c(m, jk);
            for (int j = 0; j < jk; ++j)
                a_mk_c.col(j) = upa_steering(
                    cfg.m1, cfg.m2,
                    wrap_half(uk.theta(j) - chan.ris_bs.upsilon(pr) + core.common.theta_c),
                    wrap_half(uk.varphi(j) - chan.ris_bs.omega(pr) + core.common.varphi_c));
            const MatrixXcd proj =
                ls_pinv(plans3[0].combiner * out.aoa.a_hat, y3[0]) / std::sqrt(cfg.power[k - 1]);
            const MatrixXcd pi =
                khatri_rao_cols(plans3[0].ris.transpose(), core.common.core()) * a_mk_c;
            const VectorXcd beta_k1 = ls_pinv(pi, vec_cm(proj));
            CascadedEstimate est;
            est.xi_hat = qk > 1 ? uk.xi : VectorXd();
            est.g_hat = reconstruct_common_user(
                out.aoa.a_hat, core.common, a_mk_c, beta_k1,
                qk > 1 ? steering_matrix(qk, uk.xi) : MatrixXcd::Ones(1, jk));
            out.users[k - 1] = std::move(est);
        } else {
            out.users[k - 1] =
                stage3_user(y3, plans3, out.aoa.a_hat, core.common, cfg, dict, k);
            out.diag.omp_residual.push_back(out.users[k - 1].omp_residual);
            out.diag.cond_pi.push_back(out.users[k - 1].cond_gain_ls);
        }
        out.schedule.stage3.push_back(std::move(plans3));
    }

    for (int k = 0; k < cfg.n_users; ++k)
        out.diag.xi_error.push_back(
            detail::aod_match_error(chan.users[k].xi, out.users[k].xi_hat));
    return out;
}

}  // namespace chanest

#endif  // CHANEST_ESTIMATOR_HPP
