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

#ifndef CHANEST_PILOT_HPP
#define CHANEST_PILOT_HPP

#include <vector>

#include "chanest/channel.hpp"
#include "chanest/design.hpp"
#include "chanest/linalg.hpp"
#include "chanest/types.hpp"

namespace chanest {

// RNG stream ids. Every (stage, user, frame) cell owns an independent stream
// split from the master seed, so frames can be produced in any order (or in
// parallel) with bit-identical results.
namespace stream_tag {
inline constexpr std::uint64_t noise = 0x4e4f495345ULL;
inline constexpr std::uint64_t combiner = 0x57464c4fULL;
inline constexpr std::uint64_t ris = 0x45464c4fULL;
inline constexpr std::uint64_t stage1_ris = 0x45304953ULL;
}  // namespace stream_tag

inline RngStream noise_stream(std::uint64_t seed, int stage, int user, int frame) {
    return RngStream(mix_seed({seed, stream_tag::noise, std::uint64_t(stage),
                               std::uint64_t(user), std::uint64_t(frame)}));
}

/// Frame/slot counts of the three-stage protocol. Stage-III counts are
/// uniform over the remaining users.
struct ScheduleCounts {
    int v0 = 1;      ///< stage-I frames (each n_bs/n_rf slots)
    int tau11 = 1;   ///< stage-II sub-stage-I slots
    int v1 = 1;      ///< stage-II sub-stage-II frames
    int tau12 = 1;   ///< slots per stage-II sub-stage-II frame
    int tauk1 = 1;   ///< stage-III sub-stage-I slots (per user)
    int vk = 1;      ///< stage-III sub-stage-II frames (per user)
    int tauk2 = 1;   ///< slots per stage-III sub-stage-II frame

    /// Minimum-overhead defaults: the compressed-sensing slot counts scale as
    /// c J ln M (c configurable), the LS slot counts as J and ceil(J/L).
    static ScheduleCounts defaults(const SystemConfig& cfg, double c = 1.0) {
        const double log_m = std::log(double(cfg.m()));
        const int j = cfg.j_paths.front();
        const int l = cfg.n_paths_bs;
        ScheduleCounts s;
        s.v0 = 1;
        s.tau11 = std::max(j, int(std::ceil(c * j * log_m)));
        s.v1 = cfg.q.front() > 1 ? 1 : 0;
        s.tau12 = j;
        s.tauk1 = std::max(int(std::ceil(double(j) / l)), int(std::ceil(c * j * log_m / l)));
        s.vk = 1;
        s.tauk2 = int(std::ceil(double(j) / l));
        if (cfg.n_users > 1) {
            bool all_multi = true;
            for (int k = 1; k < cfg.n_users; ++k) all_multi &= cfg.q[k] > 1;
            s.vk = all_multi ? 1 : 0;
        }
        return s;
    }

    long total_slots(const SystemConfig& cfg) const {
        return long(v0) * cfg.stage1_slots_per_frame() + tau11 + long(v1) * tau12 +
               long(cfg.n_users - 1) * (tauk1 + long(vk) * tauk2);
    }

    void validate(const SystemConfig& cfg) const {
        const int j1 = cfg.j_paths.front();
        const int l = cfg.n_paths_bs;
        if (v0 < 1) throw invalid_config("schedule: v0 must be >= 1");
        if (tau11 < j1) throw invalid_config("schedule: tau11 must be >= J1");
        if (1 + v1 > cfg.q.front())
            throw invalid_config("schedule: 1+v1 frames exceed the typical user's antennas");
        if (cfg.q.front() > 1 && v1 < 1)
            throw invalid_config("schedule: v1 must be >= 1 when the typical user has Q1 > 1");
        if (v1 >= 1 && tau12 < j1)
            throw invalid_config("schedule: tau12 must be >= J1");
        for (int k = 1; k < cfg.n_users; ++k) {
            const int jk = cfg.j_paths[k];
            if (long(l) * tauk1 < jk)
                throw invalid_config("schedule: tauk1 too small for sparse recovery");
            if (1 + vk > cfg.q[k])
                throw invalid_config("schedule: 1+vk frames exceed user antennas");
            if (cfg.q[k] > 1 && vk < 1)
                throw invalid_config("schedule: vk must be >= 1 when user has Qk > 1");
            if (vk >= 1 && tauk2 < (jk + l - 1) / l)
                throw invalid_config("schedule: tauk2 must be >= ceil(Jk/L)");
        }
    }
};

/// Combiner/RIS assignment of one pilot frame.
struct FramePlan {
    MatrixXcd combiner;  ///< n_rf x n_bs, rows unit-modulus or zero
    MatrixXcd ris;       ///< m x slots, unit-modulus entries
    int antenna = 1;     ///< transmitting user antenna (1-based)
};

/// Fully materialized pilot schedule: counts plus the per-frame matrices.
struct PilotSchedule {
    ScheduleCounts counts;
    MatrixXcd e0;                                ///< m x v0 stage-I RIS columns
    std::vector<FramePlan> stage2;               ///< [0] = sub-stage I, then v1 frames
    std::vector<std::vector<FramePlan>> stage3;  ///< per remaining user (k = 2..K)

    void validate(const SystemConfig& cfg) const {
        counts.validate(cfg);
        if (e0.rows() != cfg.m() || e0.cols() != counts.v0)
            throw invalid_config("schedule: e0 must be m x v0");
        if (!is_unit_modulus(e0)) throw invalid_config("schedule: e0 entries must be unit-modulus");
        auto check_frame = [&cfg](const FramePlan& f, int slots, int q) {
            if (f.combiner.rows() != cfg.n_rf || f.combiner.cols() != cfg.n_bs)
                throw invalid_config("schedule: combiner must be n_rf x n_bs");
            if (!rows_unit_modulus_or_zero(f.combiner))
                throw invalid_config("schedule: combiner rows must be unit-modulus or zero");
            if (f.ris.rows() != cfg.m() || f.ris.cols() != slots)
                throw invalid_config("schedule: RIS matrix has wrong shape");
            if (!is_unit_modulus(f.ris))
                throw invalid_config("schedule: RIS entries must be unit-modulus");
            if (f.antenna < 1 || f.antenna > q)
                throw invalid_config("schedule: antenna index out of range");
        };
        if ((int)stage2.size() != 1 + counts.v1)
            throw invalid_config("schedule: stage-II frame count mismatch");
        check_frame(stage2[0], counts.tau11, cfg.q.front());
        for (int i = 1; i <= counts.v1; ++i) check_frame(stage2[i], counts.tau12, cfg.q.front());
        if ((int)stage3.size() != cfg.n_users - 1)
            throw invalid_config("schedule: stage-III user count mismatch");
        for (int k = 2; k <= cfg.n_users; ++k) {
            const auto& frames = stage3[k - 2];
            if ((int)frames.size() != 1 + counts.vk)
                throw invalid_config("schedule: stage-III frame count mismatch");
            check_frame(frames[0], counts.tauk1, cfg.q[k - 1]);
            for (int i = 1; i <= counts.vk; ++i) check_frame(frames[i], counts.tauk2, cfg.q[k - 1]);
        }
    }
};

/// Hybrid precoder that drives a single antenna: row `antenna` equals
/// sqrt(p)/q_rf, all other rows zero. With the all-ones pilot vector the
/// radiated power is exactly p.
inline MatrixXcd single_antenna_precoder(int q_k, int q_rf, double p, int antenna) {
    if (q_k < 1 || q_rf < 1) throw invalid_dimension("single_antenna_precoder: dims must be >= 1");
    if (antenna < 1 || antenna > q_k)
        throw invalid_dimension("single_antenna_precoder: antenna index out of range");
    if (p < 0.0) throw invalid_config("single_antenna_precoder: power must be nonnegative");
    MatrixXcd f = MatrixXcd::Zero(q_k, q_rf);
    f.row(antenna - 1).setConstant(std::sqrt(p) / q_rf);
    return f;
}

/// One uplink pilot slot: returns W (sum_k sqrt(p_k) H_br diag(h_{k,a_k}) e) + W n
/// with n ~ CN(0, sigma2 I). `users` are 0-based indices into chan.users.
inline VectorXcd simulate_slot(const ChannelRealization& chan, const std::vector<int>& users,
                               const MatrixXcd& w, const VectorXcd& e,
                               const std::vector<int>& antenna, const std::vector<double>& power,
                               double sigma2, RngStream& rng) {
    const Eigen::Index n_bs = chan.h_br.rows(), m = chan.h_br.cols();
    if (w.cols() != n_bs) throw invalid_dimension("simulate_slot: combiner width mismatch");
    if (e.size() != m) throw invalid_dimension("simulate_slot: RIS vector length mismatch");
    if (!is_unit_modulus(e, 1e-9))
        throw invalid_config("simulate_slot: RIS entries must be unit-modulus");
    if (users.size() != antenna.size() || users.size() != power.size())
        throw invalid_dimension("simulate_slot: per-user argument lengths differ");

    VectorXcd mixed = VectorXcd::Zero(m);
    for (size_t i = 0; i < users.size(); ++i) {
        const auto& h = chan.h_k.at(users[i]);
        if (antenna[i] < 1 || antenna[i] > h.cols())
            throw invalid_dimension("simulate_slot: antenna index out of range");
        mixed += std::sqrt(power[i]) * h.col(antenna[i] - 1);
    }
    VectorXcd x = chan.h_br * VectorXcd(mixed.cwiseProduct(e));

    VectorXcd noise(n_bs);
    for (Eigen::Index i = 0; i < n_bs; ++i) noise(i) = rng.cgaussian(sigma2);
    return w * (x + noise);
}

/// All slots of one frame for one transmitting user.
inline MatrixXcd simulate_frame(const ChannelRealization& chan, const SystemConfig& cfg, int user,
                                const FramePlan& plan, double sigma2, RngStream&& rng) {
    MatrixXcd y(cfg.n_rf, plan.ris.cols());
    for (Eigen::Index j = 0; j < plan.ris.cols(); ++j)
        y.col(j) = simulate_slot(chan, {user}, plan.combiner, plan.ris.col(j), {plan.antenna},
                                 {cfg.power.at(user)}, sigma2, rng);
    return y;
}

/// Stage I: all users transmit from antenna 1 simultaneously; each frame
/// sweeps the DFT-block combiners over D = n_bs/n_rf slots and the stacked
/// measurement is uncompressed with (1/n_bs) U^H. Noiseless output equals
/// H_br sum_k sqrt(p_k) diag(h_{k,1}) E0 exactly.
inline MatrixXcd run_stage1(const ChannelRealization& chan, const SystemConfig& cfg,
                            const PilotSchedule& schedule, double sigma2, std::uint64_t seed) {
    cfg.validate();
    if (schedule.counts.v0 < 1) throw invalid_config("run_stage1: v0 must be >= 1");
    if (schedule.e0.rows() != cfg.m() || schedule.e0.cols() != schedule.counts.v0)
        throw invalid_config("run_stage1: e0 must be m x v0");

    const int d_slots = cfg.stage1_slots_per_frame();
    std::vector<int> all_users(cfg.n_users);
    std::vector<int> antennas(cfg.n_users, 1);
    for (int k = 0; k < cfg.n_users; ++k) all_users[k] = k;

    const MatrixXcd u = dft_matrix(cfg.n_bs);
    MatrixXcd y0(cfg.n_bs, schedule.counts.v0);
    for (int i = 0; i < schedule.counts.v0; ++i) {
        RngStream rng = noise_stream(seed, 1, 0, i + 1);
        VectorXcd stacked(cfg.n_bs);
        for (int d = 1; d <= d_slots; ++d) {
            const MatrixXcd w = dft_block_combiner(d, cfg.n_rf, cfg.n_bs);
            stacked.segment((d - 1) * cfg.n_rf, cfg.n_rf) = simulate_slot(
                chan, all_users, w, schedule.e0.col(i), antennas, cfg.power, sigma2, rng);
        }
        y0.col(i) = (u.adjoint() * stacked) / double(cfg.n_bs);
    }
    return y0;
}

/// Stage II frames of the typical user: frame 1 transmits from antenna 1 for
/// tau11 slots, frames 2..v1+1 from antennas 2..v1+1 for tau12 slots each.
inline std::vector<MatrixXcd> run_stage2(const ChannelRealization& chan, const SystemConfig& cfg,
                                         const PilotSchedule& schedule, double sigma2,
                                         std::uint64_t seed) {
    if ((int)schedule.stage2.size() != 1 + schedule.counts.v1)
        throw invalid_config("run_stage2: stage-II frame count mismatch");
    if (1 + schedule.counts.v1 > cfg.q.front())
        throw invalid_config("run_stage2: frame count exceeds the typical user's antennas");
    std::vector<MatrixXcd> out;
    out.reserve(schedule.stage2.size());
    for (size_t i = 0; i < schedule.stage2.size(); ++i)
        out.push_back(simulate_frame(chan, cfg, 0, schedule.stage2[i], sigma2,
                                     noise_stream(seed, 2, 1, int(i) + 1)));
    return out;
}

/// Stage III frames of user k (1-based, 2..K), mirroring stage II.
inline std::vector<MatrixXcd> run_stage3(const ChannelRealization& chan, const SystemConfig& cfg,
                                         const PilotSchedule& schedule, double sigma2,
                                         std::uint64_t seed, int user_k) {
    if (user_k < 2 || user_k > cfg.n_users)
        throw invalid_config("run_stage3: user index out of range");
    const auto& frames = schedule.stage3.at(user_k - 2);
    if ((int)frames.size() != 1 + schedule.counts.vk)
        throw invalid_config("run_stage3: stage-III frame count mismatch");
    if (1 + schedule.counts.vk > cfg.q[user_k - 1])
        throw invalid_config("run_stage3: frame count exceeds user antennas");
    std::vector<MatrixXcd> out;
    out.reserve(frames.size());
    for (size_t i = 0; i < frames.size(); ++i)
        out.push_back(simulate_frame(chan, cfg, user_k - 1, frames[i], sigma2,
                                     noise_stream(seed, 3, user_k, int(i) + 1)));
    return out;
}

/// Measurements of one trial, indexed by (stage, user, frame).
struct MeasurementSet {
    MatrixXcd stage1;                             ///< uncompressed, n_bs x v0
    std::vector<MatrixXcd> stage2;                ///< 1 + v1 frames
    std::vector<std::vector<MatrixXcd>> stage3;   ///< per remaining user
    double sigma2 = 0.0;
};

/// Schedule with random unit-modulus combiners and RIS matrices everywhere,
/// deterministic per seed. Stage-I combiners are implied DFT blocks.
inline PilotSchedule make_random_schedule(const SystemConfig& cfg, const ScheduleCounts& counts,
                                          std::uint64_t seed) {
    PilotSchedule s;
    s.counts = counts;
    s.e0 = random_unit_modulus(cfg.m(), counts.v0, mix_seed({seed, stream_tag::stage1_ris}));
    auto frame = [&](int stage, int user, int idx, int slots, int antenna) {
        FramePlan f;
        f.combiner = random_unit_modulus(
            cfg.n_rf, cfg.n_bs,
            mix_seed({seed, stream_tag::combiner, std::uint64_t(stage), std::uint64_t(user),
                      std::uint64_t(idx)}));
        f.ris = random_unit_modulus(cfg.m(), slots,
                                    mix_seed({seed, stream_tag::ris, std::uint64_t(stage),
                                              std::uint64_t(user), std::uint64_t(idx)}));
        f.antenna = antenna;
        return f;
    };
    s.stage2.push_back(frame(2, 1, 1, counts.tau11, 1));
    for (int i = 2; i <= counts.v1 + 1; ++i) s.stage2.push_back(frame(2, 1, i, counts.tau12, i));
    for (int k = 2; k <= cfg.n_users; ++k) {
        std::vector<FramePlan> frames;
        frames.push_back(frame(3, k, 1, counts.tauk1, 1));
        for (int i = 2; i <= counts.vk + 1; ++i) frames.push_back(frame(3, k, i, counts.tauk2, i));
        s.stage3.push_back(std::move(frames));
    }
    return s;
}

}  // namespace chanest

#endif  // CHANEST_PILOT_HPP
