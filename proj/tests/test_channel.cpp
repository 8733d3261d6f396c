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

#include <catch2/catch_amalgamated.hpp>

#include "chanest/channel.hpp"

using namespace chanest;
using Catch::Approx;

namespace {

SystemConfig tiny_cfg() {
    // smallest config that keeps L = 2 valid
    return SystemConfig::uniform(/*n_bs=*/2, /*n_rf=*/2, /*m1=*/2, /*m2=*/2, /*users=*/1,
                                 /*l=*/2, /*q=*/1, /*q_rf=*/1, /*j=*/1);
}

MatrixXcd random_matrix(RngStream& rng, int rows, int cols) {
    MatrixXcd m(rows, cols);
    for (int i = 0; i < m.size(); ++i) m.data()[i] = rng.cgaussian(1.0);
    return m;
}

/// Entrywise cascaded-channel oracle: G[(q-1)N + n, m] = H_br[n,m] H_k[m,q].
MatrixXcd cascade_bruteforce(const MatrixXcd& h_br, const MatrixXcd& h_k) {
    const Eigen::Index n = h_br.rows(), m = h_br.cols(), q = h_k.cols();
    MatrixXcd g(q * n, m);
    for (Eigen::Index qq = 0; qq < q; ++qq)
        for (Eigen::Index nn = 0; nn < n; ++nn)
            for (Eigen::Index mm = 0; mm < m; ++mm)
                g(qq * n + nn, mm) = h_br(nn, mm) * h_k(mm, qq);
    return g;
}

}  // namespace

TEST_CASE("sample_channel is deterministic in (cfg, seed)", "[channel]") {
    const SystemConfig cfg = SystemConfig::uniform(8, 4, 4, 2, 2, 2, 4, 2, 2);
    const ChannelRealization a = sample_channel(cfg, 123);
    const ChannelRealization b = sample_channel(cfg, 123);
    CHECK((a.h_br - b.h_br).norm() == 0.0);
    CHECK((a.ris_bs.psi - b.ris_bs.psi).norm() == 0.0);
    for (int k = 0; k < cfg.n_users; ++k) CHECK((a.g_k[k] - b.g_k[k]).norm() == 0.0);
    const ChannelRealization c = sample_channel(cfg, 124);
    CHECK((a.h_br - c.h_br).norm() > 0.0);
}

TEST_CASE("sampled gain variance matches the link budget", "[channel]") {
    SystemConfig cfg = tiny_cfg();
    cfg.dist_br = 80.0;
    cfg.dist_ru = 40.0;
    const int realizations = 50000;  // L = 2 gains each -> 1e5 draws
    double acc = 0.0;
    long count = 0;
    for (int i = 0; i < realizations; ++i) {
        const ChannelRealization chan = sample_channel(cfg, 1000 + i);
        acc += chan.ris_bs.alpha.squaredNorm();
        count += chan.ris_bs.alpha.size();
    }
    const double want = 1e-3 * std::pow(80.0, -2.2);
    CHECK(acc / double(count) == Approx(want).epsilon(0.05));
}

TEST_CASE("on-grid sampling lands on the DFT grids", "[channel]") {
    SystemConfig cfg = SystemConfig::uniform(8, 4, 4, 4, 2, 2, 4, 2, 2);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const ChannelRealization chan = sample_channel(cfg, seed, /*on_grid=*/true);
        for (int l = 0; l < chan.ris_bs.size(); ++l) {
            CHECK(std::abs(chan.ris_bs.psi(l) * 8 - std::round(chan.ris_bs.psi(l) * 8)) < 1e-12);
            CHECK(chan.ris_bs.psi(l) >= -0.5);
            CHECK(chan.ris_bs.psi(l) < 0.5);
            CHECK(std::abs(chan.ris_bs.upsilon(l) * 4 - std::round(chan.ris_bs.upsilon(l) * 4)) <
                  1e-12);
        }
    }
}

TEST_CASE("sampled paths honor the minimum angular separation", "[channel]") {
    const SystemConfig cfg = SystemConfig::uniform(16, 4, 4, 4, 2, 4, 4, 2, 3);
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const ChannelRealization chan = sample_channel(cfg, seed);
        for (int a = 0; a < chan.ris_bs.size(); ++a)
            for (int b = a + 1; b < chan.ris_bs.size(); ++b)
                CHECK(wrap_distance(chan.ris_bs.psi(a), chan.ris_bs.psi(b)) >= 1.0 / 16 - 1e-12);
    }
}

TEST_CASE("assemble_ris_bs matches the outer-product form", "[channel]") {
    SystemConfig cfg = SystemConfig::uniform(4, 2, 2, 3, 1, 2, 1, 1, 1);

    // single path of unit gain at zero angles -> all-ones rank-1 matrix
    SystemConfig cfg1 = cfg;
    cfg1.n_paths_bs = 1;
    RisBsPathSet one;
    one.psi = VectorXd::Zero(1);
    one.upsilon = VectorXd::Zero(1);
    one.omega = VectorXd::Zero(1);
    one.alpha = VectorXcd::Ones(1);
    const MatrixXcd h1 = assemble_ris_bs(one, cfg1);
    CHECK((h1 - MatrixXcd::Ones(4, 6)).norm() < 1e-12);
    CHECK(Eigen::JacobiSVD<MatrixXcd>(h1).singularValues()(1) < 1e-12);  // rank 1

    // random two-path case: factored form equals the summed outer products
    RngStream rng(9);
    auto draw_freqs = [&rng](int n) {
        VectorXd v(n);
        for (int i = 0; i < n; ++i) v(i) = rng.uniform() - 0.5;
        return v;
    };
    RisBsPathSet two;
    two.psi = draw_freqs(2);
    two.upsilon = draw_freqs(2);
    two.omega = draw_freqs(2);
    two.alpha = VectorXcd(2);
    two.alpha << rng.cgaussian(1.0), rng.cgaussian(1.0);
    const MatrixXcd fact = assemble_ris_bs(two, cfg);
    MatrixXcd summed = MatrixXcd::Zero(4, 6);
    for (int l = 0; l < 2; ++l)
        summed += two.alpha(l) * ula_steering(4, two.psi(l)) *
                  upa_steering(2, 3, two.upsilon(l), two.omega(l)).adjoint();
    CHECK((fact - summed).norm() / summed.norm() < 1e-12);
}

TEST_CASE("assemble_user_ris matches the summed form and its column identity", "[channel]") {
    SystemConfig cfg = SystemConfig::uniform(4, 2, 2, 2, 1, 1, 3, 1, 2);
    RngStream rng(11);
    auto draw_freqs = [&rng](int n) {
        VectorXd v(n);
        for (int i = 0; i < n; ++i) v(i) = rng.uniform() - 0.5;
        return v;
    };
    UserRisPathSet paths;
    paths.theta = draw_freqs(2);
    paths.varphi = draw_freqs(2);
    paths.xi = draw_freqs(2);
    paths.beta = VectorXcd(2);
    paths.beta << rng.cgaussian(1.0), rng.cgaussian(1.0);

    const MatrixXcd h = assemble_user_ris(paths, cfg, 0);
    MatrixXcd summed = MatrixXcd::Zero(4, 3);
    MatrixXcd a_ris(4, 2), a_q(3, 2);
    for (int j = 0; j < 2; ++j) {
        a_ris.col(j) = upa_steering(2, 2, paths.theta(j), paths.varphi(j));
        a_q.col(j) = ula_steering(3, paths.xi(j));
        summed += paths.beta(j) * a_ris.col(j) * a_q.col(j).adjoint();
    }
    CHECK((h - summed).norm() / summed.norm() < 1e-12);

    // all-ones case
    UserRisPathSet ones;
    SystemConfig cfg1 = cfg;
    cfg1.j_paths[0] = 1;
    ones.theta = VectorXd::Zero(1);
    ones.varphi = VectorXd::Zero(1);
    ones.xi = VectorXd::Zero(1);
    ones.beta = VectorXcd::Ones(1);
    CHECK((assemble_user_ris(ones, cfg1, 0) - MatrixXcd::Ones(4, 3)).norm() < 1e-12);

    // column q = A_ris diag(beta) conj(row q of A_q)
    for (int q = 0; q < 3; ++q) {
        const VectorXcd want =
            a_ris * VectorXcd(paths.beta.cwiseProduct(a_q.row(q).transpose().conjugate()));
        CHECK((h.col(q) - want).norm() < 1e-12);
    }
}

TEST_CASE("cascaded_subchannel basics", "[channel]") {
    RngStream rng(4);
    const MatrixXcd h_br = random_matrix(rng, 2, 3);
    MatrixXcd h_k = random_matrix(rng, 3, 2);

    h_k.col(0).setOnes();
    CHECK((cascaded_subchannel(h_br, h_k, 1) - h_br).norm() < 1e-14);

    h_k.col(1).setZero();
    CHECK(cascaded_subchannel(h_br, h_k, 2).norm() == 0.0);

    const MatrixXcd h_k2 = random_matrix(rng, 3, 2);
    const MatrixXcd g = cascaded_subchannel(h_br, h_k2, 2);
    for (int n = 0; n < 2; ++n)
        for (int m = 0; m < 3; ++m) CHECK(std::abs(g(n, m) - h_br(n, m) * h_k2(m, 1)) < 1e-14);

    CHECK_THROWS_AS(cascaded_subchannel(h_br, h_k2, 3), invalid_dimension);
    CHECK_THROWS_AS(cascaded_subchannel(h_br, h_k2, 0), invalid_dimension);
}

TEST_CASE("cascaded_full equals the entrywise Khatri-Rao oracle", "[channel]") {
    RngStream rng(8);
    const MatrixXcd h_br = random_matrix(rng, 2, 3);
    const MatrixXcd h_k1 = random_matrix(rng, 3, 1);
    CHECK((cascaded_full(h_br, h_k1) - cascaded_subchannel(h_br, h_k1, 1)).norm() == 0.0);

    for (int rep = 0; rep < 100; ++rep) {
        const int n = 2 + int(rng.uniform() * 3);   // <= 4
        const int m = 2 + int(rng.uniform() * 5);   // <= 6
        const int q = 1 + int(rng.uniform() * 3);   // <= 3
        const MatrixXcd a = random_matrix(rng, n, m);
        const MatrixXcd b = random_matrix(rng, m, q);
        const MatrixXcd got = cascaded_full(a, b);
        const MatrixXcd want = cascade_bruteforce(a, b);
        REQUIRE((got - want).norm() / want.norm() < 1e-12);
        // row block q equals the subchannel
        for (int qq = 1; qq <= q; ++qq)
            REQUIRE((got.middleRows((qq - 1) * n, n) - cascaded_subchannel(a, b, qq)).norm() == 0.0);
    }
}

TEST_CASE("vectorization identity behind the stage-III model", "[channel]") {
    RngStream rng(15);
    for (int rep = 0; rep < 20; ++rep) {
        const int l = 2 + int(rng.uniform() * 2), m = 3 + int(rng.uniform() * 3),
                  t = 2 + int(rng.uniform() * 3);
        const MatrixXcd x = random_matrix(rng, l, m);
        const MatrixXcd y = random_matrix(rng, m, t);
        const VectorXcd h = random_matrix(rng, m, 1).col(0);
        const VectorXcd lhs = vec_cm(x * h.asDiagonal() * y);
        const VectorXcd rhs = khatri_rao_cols(y.transpose(), x) * h;
        REQUIRE((lhs - rhs).norm() < 1e-12 * std::max(1.0, rhs.norm()));
    }
}

TEST_CASE("assembly is closed under reassembly", "[channel]") {
    const SystemConfig cfg = SystemConfig::uniform(8, 4, 4, 2, 2, 2, 4, 2, 2);
    ChannelRealization chan = sample_channel(cfg, 77);
    const MatrixXcd h_br = chan.h_br;
    const std::vector<MatrixXcd> g = chan.g_k;
    chan.assemble(cfg);  // parameters are stored, so this is the identity
    CHECK((chan.h_br - h_br).norm() == 0.0);
    for (size_t k = 0; k < g.size(); ++k) CHECK((chan.g_k[k] - g[k]).norm() == 0.0);
}

TEST_CASE("channel dump is a flat key-value record", "[channel]") {
    const SystemConfig cfg = SystemConfig::uniform(4, 2, 2, 2, 2, 2, 2, 1, 1);
    const ChannelRealization chan = sample_channel(cfg, 5);
    const std::string text = dump_channel_text(chan);
    CHECK(text.find("ris_bs.paths = 2") != std::string::npos);
    CHECK(text.find("user1.path0.beta = ") != std::string::npos);
    CHECK(text.find("user2.paths = 1") != std::string::npos);
    CHECK(text == dump_channel_text(chan));
}

TEST_CASE("config validation catches inconsistent setups", "[channel]") {
    SystemConfig cfg = SystemConfig::uniform(8, 4, 4, 2, 2, 2, 4, 2, 2);
    CHECK_NOTHROW(cfg.validate());
    SystemConfig bad = cfg;
    bad.n_rf = 3;  // not a divisor of n_bs
    CHECK_THROWS_AS(bad.validate(), invalid_config);
    bad = cfg;
    bad.n_paths_bs = 5;  // exceeds n_rf
    CHECK_THROWS_AS(bad.validate(), invalid_config);
    bad = cfg;
    bad.power[0] = 0.0;
    CHECK_THROWS_AS(bad.validate(), invalid_config);
}
