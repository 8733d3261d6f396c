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

#include <CLI11.hpp>
#include <iostream>

#include "chanest/chanest.hpp"

namespace {

using namespace chanest;

int cmd_run(const std::string& config_path, const std::vector<double>& snr_override,
            int trials_override, long seed_override, const std::string& methods_override,
            const std::string& out_override, double max_fail_override) {
    ExperimentSpec spec;
    if (!config_path.empty()) spec = spec_from_config(parse_config_file(config_path));

    if (!snr_override.empty()) {
        if (spec.sweep_name == "snr_db") spec.sweep_values = snr_override;
        else spec.snr_db_fixed = snr_override.front();
    }
    if (trials_override > 0) spec.trials = trials_override;
    if (seed_override >= 0) spec.seed = std::uint64_t(seed_override);
    if (!methods_override.empty()) {
        spec.methods.clear();
        for (const auto& s : detail::split_list(methods_override)) {
            const auto m = method_from_string(s);
            if (!m) throw invalid_config("unknown method '" + s + "'");
            spec.methods.push_back(*m);
        }
    }
    if (!out_override.empty()) spec.out_path = out_override;
    if (max_fail_override >= 0.0) spec.max_fail_rate = max_fail_override;

    const auto rows = run_experiment(spec);
    emit_csv(rows, spec.out_path);
    std::cout << csv_text(rows);
    std::cout << "wrote " << spec.out_path << "\n";

    for (const auto& r : rows) {
        if (r.trials > 0 && double(r.failures) / r.trials > spec.max_fail_rate) {
            std::cerr << "estimation failure rate " << r.failures << "/" << r.trials
                      << " for method " << r.method << " at " << r.sweep_name << " = "
                      << r.sweep_value << " exceeds --max-fail-rate\n";
            return 2;
        }
    }
    return 0;
}

int cmd_overhead(const std::string& config_path) {
    ExperimentSpec spec;
    if (!config_path.empty()) spec = spec_from_config(parse_config_file(config_path));
    const auto hybrid =
        min_pilot_overhead(spec.system, OverheadMethod::hybrid_proposed, spec.schedule.c);
    const auto digital =
        min_pilot_overhead(spec.system, OverheadMethod::fully_digital_proposed, spec.schedule.c);
    std::cout << "# minimum pilot overhead, hybrid front end\n" << hybrid.to_text();
    std::cout << "# minimum pilot overhead, fully digital front end\n" << digital.to_text();
    const ScheduleCounts counts = spec.schedule.resolve(spec.system);
    counts.validate(spec.system);
    std::cout << "# configured schedule\n";
    std::cout << "total_slots = " << counts.total_slots(spec.system) << "\n";
    return 0;
}

int cmd_selftest() {
    int failed = 0;
    auto report = [&failed](const std::string& name, bool ok, const std::string& detail) {
        std::cout << (ok ? "[PASS] " : "[FAIL] ") << name;
        if (!detail.empty()) std::cout << " (" << detail << ")";
        std::cout << "\n";
        if (!ok) ++failed;
    };

    // Noiseless on-grid pipeline exactness at desk scale.
    {
        SystemConfig cfg = SystemConfig::uniform(32, 8, 8, 8, 2, 2, 8, 2, 2);
        const ScheduleCounts counts = ScheduleCounts::defaults(cfg);
        const RisDictionary dict =
            RisDictionary::build(DictionaryConfig::oversampled(cfg.m1, cfg.m2, 2));
        double worst = 0.0;
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            const ChannelRealization chan = sample_channel(cfg, seed, /*on_grid=*/true);
            const ThreeStageResult res = run_three_stage(chan, cfg, counts, dict, 0.0, seed);
            worst = std::max(worst, nmse(res.g_hats(), chan.g_k));
        }
        report("noiseless on-grid pipeline NMSE < 1e-5", worst < 1e-5,
               "worst = " + format_double(worst));
    }

    // Cascaded stacking equals the column-wise Kronecker construction.
    {
        RngStream rng(7);
        double worst = 0.0;
        for (int inst = 0; inst < 20; ++inst) {
            MatrixXcd h_br(3, 5), h_k(5, 2);
            for (int i = 0; i < h_br.size(); ++i) h_br.data()[i] = rng.cgaussian(1.0);
            for (int i = 0; i < h_k.size(); ++i) h_k.data()[i] = rng.cgaussian(1.0);
            const MatrixXcd kr = khatri_rao_cols(h_k.transpose(), h_br);
            worst = std::max(worst,
                             (cascaded_full(h_br, h_k) - kr).norm() / kr.norm());
        }
        report("cascade equals Khatri-Rao product", worst < 1e-12,
               "worst rel err = " + format_double(worst));
    }

    // Noiseless sparse recovery matches exhaustive search on instances that
    // satisfy the greedy exact-recovery condition.
    {
        RngStream rng(11);
        bool all_ok = true;
        int accepted = 0;
        while (accepted < 50 && all_ok) {
            const int n = 6, d = 10, s = 2;
            MatrixXcd phi(n, d);
            for (int i = 0; i < phi.size(); ++i) phi.data()[i] = rng.cgaussian(1.0);
            std::vector<int> truth{int(rng.uniform() * d), 0};
            do {
                truth[1] = int(rng.uniform() * d);
            } while (truth[1] == truth[0]);
            MatrixXcd unit = phi;
            for (int c = 0; c < d; ++c) unit.col(c) /= unit.col(c).norm();
            MatrixXcd sub(n, s);
            sub.col(0) = unit.col(truth[0]);
            sub.col(1) = unit.col(truth[1]);
            double erc = 0.0;
            for (int c = 0; c < d; ++c) {
                if (c == truth[0] || c == truth[1]) continue;
                erc = std::max(erc, ls_pinv(sub, MatrixXcd(unit.col(c))).cwiseAbs().sum());
            }
            if (erc >= 1.0) continue;  // greedy recovery not guaranteed here
            ++accepted;
            VectorXcd y =
                phi.col(truth[0]) * rng.cgaussian(1.0) + phi.col(truth[1]) * rng.cgaussian(1.0);
            auto sol = omp(phi, y, s);
            std::sort(sol.support.begin(), sol.support.end());
            std::sort(truth.begin(), truth.end());
            all_ok = sol.support == truth && sol.residual_norm < 1e-9;
        }
        report("noiseless sparse support recovery", all_ok, "");
    }

    return failed == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte-Carlo harness for three-stage RIS cascaded channel estimation"};
    app.require_subcommand(1);

    std::string config_path, methods, out_path;
    std::vector<double> snr;
    int trials = -1;
    long seed = -1;
    double max_fail_rate = -1.0;

    auto* run = app.add_subcommand("run", "run an experiment sweep and write CSV");
    run->add_option("--config", config_path, "flat key = value configuration file");
    run->add_option("--snr", snr, "SNR values in dB (comma separated)")->delimiter(',');
    run->add_option("--trials", trials, "Monte-Carlo trials per sweep point");
    run->add_option("--seed", seed, "master seed");
    run->add_option("--methods", methods, "comma-separated method list");
    run->add_option("--out", out_path, "output CSV path");
    run->add_option("--max-fail-rate", max_fail_rate,
                    "tolerated estimation-failure fraction per row (default 0.5)");

    auto* overhead = app.add_subcommand("overhead", "print the pilot-overhead accounting");
    overhead->add_option("--config", config_path, "flat key = value configuration file");

    auto* selftest = app.add_subcommand("selftest", "run the built-in noiseless oracle checks");
    (void)selftest;

    try {
        app.parse(argc, argv);
        if (run->parsed())
            return cmd_run(config_path, snr, trials, seed, methods, out_path, max_fail_rate);
        if (overhead->parsed()) return cmd_overhead(config_path);
        return cmd_selftest();
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const chanest::invalid_config& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
