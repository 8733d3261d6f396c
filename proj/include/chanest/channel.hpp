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

#ifndef CHANEST_CHANNEL_HPP
#define CHANEST_CHANNEL_HPP

#include <string>
#include <vector>

#include "chanest/array.hpp"
#include "chanest/linalg.hpp"
#include "chanest/types.hpp"

namespace chanest {

/// Array geometry, user population and link budget of one deployment.
/// Per-user quantities are indexed 0..K-1 (user 1 of the protocol is index 0).
struct SystemConfig {
    int n_bs = 32;  ///< BS antennas (ULA)
    int n_rf = 8;   ///< BS RF chains
    int m1 = 8;     ///< RIS rows
    int m2 = 8;     ///< RIS columns
    int n_users = 2;
    int n_paths_bs = 2;  ///< propagation paths RIS -> BS (L)

    std::vector<int> q;         ///< per-user antennas
    std::vector<int> q_rf;      ///< per-user RF chains
    std::vector<int> j_paths;   ///< per-user paths user -> RIS (J_k)
    std::vector<double> power;  ///< per-user transmit power, linear

    double spacing_bs = 0.5;   ///< element spacing / wavelength
    double spacing_ris = 0.5;
    double spacing_ue = 0.5;
    double dist_br = 80.0;  ///< BS-RIS distance [m]
    double dist_ru = 40.0;  ///< RIS-user distance [m]

    int m() const { return m1 * m2; }
    int stage1_slots_per_frame() const { return n_bs / n_rf; }

    /// Uniform population where every user shares (q, q_rf, j, power).
    static SystemConfig uniform(int n_bs, int n_rf, int m1, int m2, int users, int l, int q,
                                int q_rf, int j, double power = 1.0) {
        SystemConfig c;
        c.n_bs = n_bs;
        c.n_rf = n_rf;
        c.m1 = m1;
        c.m2 = m2;
        c.n_users = users;
        c.n_paths_bs = l;
        c.q.assign(users, q);
        c.q_rf.assign(users, q_rf);
        c.j_paths.assign(users, j);
        c.power.assign(users, power);
        return c;
    }

    void validate() const {
        if (n_bs < 1 || n_rf < 1 || m1 < 1 || m2 < 1 || n_users < 1 || n_paths_bs < 1)
            throw invalid_config("SystemConfig: all counts must be >= 1");
        if (n_rf < n_paths_bs)
            throw invalid_config("SystemConfig: need n_rf >= L to project onto the common AoAs");
        if (n_bs % n_rf != 0)
            throw invalid_config("SystemConfig: n_bs must be divisible by n_rf");
        if (n_paths_bs > m()) throw invalid_config("SystemConfig: L must not exceed M");
        if ((int)q.size() != n_users || (int)q_rf.size() != n_users ||
            (int)j_paths.size() != n_users || (int)power.size() != n_users)
            throw invalid_config("SystemConfig: per-user arrays must have n_users entries");
        for (int k = 0; k < n_users; ++k) {
            if (q[k] < 1 || q_rf[k] < 1 || j_paths[k] < 1)
                throw invalid_config("SystemConfig: per-user counts must be >= 1");
            if (j_paths[k] > m()) throw invalid_config("SystemConfig: J_k must not exceed M");
            if (power[k] <= 0.0) throw invalid_config("SystemConfig: powers must be positive");
        }
    }
};

/// RIS->BS paths: BS AoA frequency psi, RIS departure frequencies
/// (upsilon, omega), complex gain alpha. All frequencies in [-1/2, 1/2).
struct RisBsPathSet {
    VectorXd psi, upsilon, omega;
    VectorXcd alpha;
    int size() const { return int(psi.size()); }
};

/// User->RIS paths: RIS arrival frequencies (theta, varphi), user AoD
/// frequency xi, complex gain beta.
struct UserRisPathSet {
    VectorXd theta, varphi, xi;
    VectorXcd beta;
    int size() const { return int(theta.size()); }
};

/// Path gain variances of the two hops.
inline double ris_bs_gain_variance(const SystemConfig& cfg) {
    return 1e-3 * std::pow(cfg.dist_br, -2.2);
}
inline double user_ris_gain_variance(const SystemConfig& cfg) {
    return 1e-3 * std::pow(cfg.dist_ru, -2.8);
}

/// H_br = A_bs Lambda A_ris^H (N_bs x M).
inline MatrixXcd assemble_ris_bs(const RisBsPathSet& paths, const SystemConfig& cfg) {
    if (paths.size() != cfg.n_paths_bs)
        throw invalid_dimension("assemble_ris_bs: path count mismatch");
    MatrixXcd a_bs = steering_matrix(cfg.n_bs, paths.psi);
    MatrixXcd a_ris(cfg.m(), paths.size());
    for (int l = 0; l < paths.size(); ++l)
        a_ris.col(l) = upa_steering(cfg.m1, cfg.m2, paths.upsilon(l), paths.omega(l));
    return a_bs * paths.alpha.asDiagonal() * a_ris.adjoint();
}

/// H_k = A_ris,k B_k A_q^H (M x Q_k).
inline MatrixXcd assemble_user_ris(const UserRisPathSet& paths, const SystemConfig& cfg, int user) {
    if (paths.size() != cfg.j_paths.at(user))
        throw invalid_dimension("assemble_user_ris: path count mismatch");
    MatrixXcd a_ris(cfg.m(), paths.size());
    for (int j = 0; j < paths.size(); ++j)
        a_ris.col(j) = upa_steering(cfg.m1, cfg.m2, paths.theta(j), paths.varphi(j));
    MatrixXcd a_q = steering_matrix(cfg.q.at(user), paths.xi);
    return a_ris * paths.beta.asDiagonal() * a_q.adjoint();
}

/// Subchannel seen from user antenna q (1-based): H_br diag(H_k(:,q)).
inline MatrixXcd cascaded_subchannel(const MatrixXcd& h_br, const MatrixXcd& h_k, int q) {
    if (h_br.cols() != h_k.rows()) throw invalid_dimension("cascaded_subchannel: M mismatch");
    if (q < 1 || q > h_k.cols()) throw invalid_dimension("cascaded_subchannel: antenna index");
    return h_br * h_k.col(q - 1).asDiagonal();
}

/// Full cascaded channel, the Q_k stacked subchannels. Equals the column-wise
/// Khatri-Rao product H_k^T kr H_br.
inline MatrixXcd cascaded_full(const MatrixXcd& h_br, const MatrixXcd& h_k) {
    if (h_br.cols() != h_k.rows()) throw invalid_dimension("cascaded_full: M mismatch");
    const Eigen::Index n = h_br.rows(), qk = h_k.cols();
    MatrixXcd g(qk * n, h_br.cols());
    for (Eigen::Index q = 0; q < qk; ++q)
        g.middleRows(q * n, n) = cascaded_subchannel(h_br, h_k, int(q) + 1);
    return g;
}

/// One drawn deployment: path parameters plus the assembled matrices.
struct ChannelRealization {
    RisBsPathSet ris_bs;
    std::vector<UserRisPathSet> users;
    MatrixXcd h_br;                ///< N_bs x M
    std::vector<MatrixXcd> h_k;    ///< per user, M x Q_k
    std::vector<MatrixXcd> g_k;    ///< per user, (Q_k N_bs) x M

    /// Rebuild the matrices from the stored path parameters.
    void assemble(const SystemConfig& cfg) {
        h_br = assemble_ris_bs(ris_bs, cfg);
        h_k.resize(users.size());
        g_k.resize(users.size());
        for (size_t k = 0; k < users.size(); ++k) {
            h_k[k] = assemble_user_ris(users[k], cfg, int(k));
            g_k[k] = cascaded_full(h_br, h_k[k]);
        }
    }
};

namespace detail {

/// Draw `count` frequencies on [-1/2, 1/2), optionally snapped to an n-point
/// DFT grid, rejecting candidates closer than min_sep (cyclic) to an
/// already-accepted one. The separation is capped at 0.9/count, the largest
/// value that stays satisfiable on the unit circle.
inline VectorXd draw_separated(RngStream& rng, int count, double min_sep, bool on_grid,
                               int grid_n) {
    min_sep = std::min(min_sep, 0.9 / count);
    VectorXd out(count);
    for (int i = 0; i < count; ++i) {
        for (int attempt = 0;; ++attempt) {
            if (attempt > 10000)
                throw invalid_config("sample_channel: cannot satisfy angular separation");
            double f = rng.uniform() - 0.5;
            if (on_grid) f = wrap_half(std::round(f * grid_n) / grid_n);
            bool ok = true;
            for (int p = 0; p < i; ++p)
                if (wrap_distance(f, out(p)) < min_sep) { ok = false; break; }
            if (ok) { out(i) = f; break; }
        }
    }
    return out;
}

/// Draw `count` 2-D frequency pairs; two pairs are considered separated when
/// at least one axis differs by its array's resolution.
inline void draw_separated_pairs(RngStream& rng, int count, int m1, int m2, bool on_grid,
                                 VectorXd& f1, VectorXd& f2) {
    const double sep1 = std::min(1.0 / m1, 0.9 / count);
    const double sep2 = std::min(1.0 / m2, 0.9 / count);
    f1.resize(count);
    f2.resize(count);
    for (int i = 0; i < count; ++i) {
        for (int attempt = 0;; ++attempt) {
            if (attempt > 10000)
                throw invalid_config("sample_channel: cannot satisfy angular separation");
            double a = rng.uniform() - 0.5;
            double b = rng.uniform() - 0.5;
            if (on_grid) {
                a = wrap_half(std::round(a * m1) / m1);
                b = wrap_half(std::round(b * m2) / m2);
            }
            bool ok = true;
            for (int p = 0; p < i; ++p) {
                if (wrap_distance(a, f1(p)) < sep1 && wrap_distance(b, f2(p)) < sep2) {
                    ok = false;
                    break;
                }
            }
            if (ok) { f1(i) = a; f2(i) = b; break; }
        }
    }
}

/// Complex Gaussian gains, resampled while negligibly small relative to the
/// expected magnitude (degenerate gains break typical-path selection).
inline VectorXcd draw_gains(RngStream& rng, int count, double variance) {
    const double expected_mag = 0.5 * std::sqrt(kTwoPi / 2.0 * variance);  // sqrt(pi v)/2
    VectorXcd g(count);
    for (int i = 0; i < count; ++i) {
        cd v;
        do {
            v = rng.cgaussian(variance);
        } while (std::abs(v) < 1e-6 * expected_mag);
        g(i) = v;
    }
    return g;
}

}  // namespace detail

/// Draw one channel realization. Angle frequencies are uniform on
/// [-1/2, 1/2) (or snapped to the matching DFT/element grid when on_grid),
/// with a minimum cyclic separation of one resolution bin between paths of
/// the same hop. Deterministic in (cfg, seed).
inline ChannelRealization sample_channel(const SystemConfig& cfg, std::uint64_t seed,
                                         bool on_grid = false) {
    cfg.validate();
    RngStream rng(mix_seed({seed, 0x4348414eULL}));

    ChannelRealization out;
    const int l = cfg.n_paths_bs;
    out.ris_bs.psi = detail::draw_separated(rng, l, 1.0 / cfg.n_bs, on_grid, cfg.n_bs);
    detail::draw_separated_pairs(rng, l, cfg.m1, cfg.m2, on_grid, out.ris_bs.upsilon,
                                 out.ris_bs.omega);
    out.ris_bs.alpha = detail::draw_gains(rng, l, ris_bs_gain_variance(cfg));

    out.users.resize(cfg.n_users);
    for (int k = 0; k < cfg.n_users; ++k) {
        auto& u = out.users[k];
        const int j = cfg.j_paths[k];
        detail::draw_separated_pairs(rng, j, cfg.m1, cfg.m2, on_grid, u.theta, u.varphi);
        u.xi.resize(j);
        for (int p = 0; p < j; ++p) {
            double f = rng.uniform() - 0.5;
            if (on_grid) f = wrap_half(std::round(f * cfg.q[k]) / cfg.q[k]);
            u.xi(p) = f;
        }
        u.beta = detail::draw_gains(rng, j, user_ris_gain_variance(cfg));
    }
    out.assemble(cfg);
    return out;
}

/// Flat text record of one realization (key = value lines, complex values as
/// "re,im"), for reproducing failing trials offline.
inline std::string dump_channel_text(const ChannelRealization& chan) {
    std::string s;
    auto put = [&s](const std::string& key, const std::string& val) {
        s += key + " = " + val + "\n";
    };
    put("ris_bs.paths", std::to_string(chan.ris_bs.size()));
    for (int l = 0; l < chan.ris_bs.size(); ++l) {
        const std::string p = "ris_bs.path" + std::to_string(l);
        put(p + ".psi", format_double(chan.ris_bs.psi(l)));
        put(p + ".upsilon", format_double(chan.ris_bs.upsilon(l)));
        put(p + ".omega", format_double(chan.ris_bs.omega(l)));
        put(p + ".alpha", format_complex(chan.ris_bs.alpha(l)));
    }
    put("users", std::to_string(chan.users.size()));
    for (size_t k = 0; k < chan.users.size(); ++k) {
        const auto& u = chan.users[k];
        const std::string uk = "user" + std::to_string(k + 1);
        put(uk + ".paths", std::to_string(u.size()));
        for (int j = 0; j < u.size(); ++j) {
            const std::string p = uk + ".path" + std::to_string(j);
            put(p + ".theta", format_double(u.theta(j)));
            put(p + ".varphi", format_double(u.varphi(j)));
            put(p + ".xi", format_double(u.xi(j)));
            put(p + ".beta", format_complex(u.beta(j)));
        }
    }
    return s;
}

}  // namespace chanest

#endif  // CHANEST_CHANNEL_HPP
