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

#ifndef CHANEST_HARNESS_HPP
#define CHANEST_HARNESS_HPP

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "chanest/estimator.hpp"
#include "chanest/metrics.hpp"
#include "chanest/pilot.hpp"

namespace chanest {

enum class Method { proposed, oracle, random_w, optimized_w, random_e, optimized_e };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::proposed: return "proposed";
        case Method::oracle: return "oracle";
        case Method::random_w: return "random_w";
        case Method::optimized_w: return "optimized_w";
        case Method::random_e: return "random_e";
        case Method::optimized_e: return "optimized_e";
    }
    return "?";
}

inline std::optional<Method> method_from_string(const std::string& s) {
    for (Method m : {Method::proposed, Method::oracle, Method::random_w, Method::optimized_w,
                     Method::random_e, Method::optimized_e})
        if (s == method_name(m)) return m;
    return std::nullopt;
}

/// Estimator switches behind each named method. "optimized_w" and "random_e"
/// intentionally coincide: they are the shared middle leg of the two design
/// comparisons (W on/off runs with random RIS slots, E on/off runs with the
/// optimized combiner).
inline EstimatorOptions options_for(Method m) {
    switch (m) {
        case Method::proposed: return {true, true, false};
        case Method::oracle: return {true, true, true};
        case Method::random_w: return {false, false, false};
        case Method::optimized_w: return {true, false, false};
        case Method::random_e: return {true, false, false};
        case Method::optimized_e: return {true, true, false};
    }
    return {};
}

struct ScheduleOverrides {
    std::optional<int> v0, tau11, v1, tau12, tauk1, vk, tauk2;
    double c = 1.0;  ///< constant in front of the J ln M measurement counts

    ScheduleCounts resolve(const SystemConfig& cfg) const {
        ScheduleCounts s = ScheduleCounts::defaults(cfg, c);
        if (v0) s.v0 = *v0;
        if (tau11) s.tau11 = *tau11;
        if (v1) s.v1 = *v1;
        if (tau12) s.tau12 = *tau12;
        if (tauk1) s.tauk1 = *tauk1;
        if (vk) s.vk = *vk;
        if (tauk2) s.tauk2 = *tauk2;
        return s;
    }
};

struct ExperimentSpec {
    SystemConfig system;
    int dict_oversample = 2;
    std::string sweep_name = "snr_db";  ///< "snr_db" | "q" | "n_rf"
    std::vector<double> sweep_values{0.0};
    double snr_db_fixed = 0.0;  ///< SNR used when sweeping q or n_rf
    int trials = 200;
    std::uint64_t seed = 1;
    std::vector<Method> methods{Method::proposed};
    ScheduleOverrides schedule;
    bool on_grid = false;
    std::string out_path = "results.csv";
    double max_fail_rate = 0.5;

    void validate() const {
        system.validate();
        if (trials < 1) throw invalid_config("spec: trials must be >= 1");
        if (sweep_values.empty()) throw invalid_config("spec: empty sweep");
        if (methods.empty()) throw invalid_config("spec: no methods selected");
        if (sweep_name != "snr_db" && sweep_name != "q" && sweep_name != "n_rf")
            throw invalid_config("spec: sweep must be one of snr_db, q, n_rf");
        if (max_fail_rate < 0.0 || max_fail_rate > 1.0)
            throw invalid_config("spec: max_fail_rate must lie in [0, 1]");
        if (dict_oversample < 1) throw invalid_config("spec: dict_oversample must be >= 1");
    }
};

struct ResultRow {
    std::string method;
    std::string sweep_name;
    double sweep_value = 0.0;
    int trials = 0;
    int failures = 0;
    double nmse_mean = 0.0;
    double nmse_median = 0.0;
    double nmse_p10 = 0.0;
    double nmse_p90 = 0.0;
    long pilot_overhead = 0;
};

namespace detail {

inline double percentile(std::vector<double> v, double p) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const double idx = p * double(v.size() - 1);
    const size_t lo = size_t(idx);
    const double frac = idx - double(lo);
    return lo + 1 < v.size() ? v[lo] * (1.0 - frac) + v[lo + 1] * frac : v[lo];
}

inline SystemConfig apply_sweep(const SystemConfig& base, const std::string& sweep, double value) {
    SystemConfig cfg = base;
    if (sweep == "q") {
        for (auto& q : cfg.q) q = int(value);
    } else if (sweep == "n_rf") {
        cfg.n_rf = int(value);
    }
    return cfg;
}

}  // namespace detail

/// Run the full trial matrix. The channel and every noise stream of a trial
/// are keyed by (master seed, sweep index, trial) only, never by the method:
/// all methods see identical randomness, so per-trial comparisons between
/// methods are paired by construction. Failed trials (estimation errors) are
/// counted and excluded from the NMSE aggregates.
inline std::vector<ResultRow> run_experiment(const ExperimentSpec& spec) {
    spec.validate();

    // Surface configuration problems across the whole sweep before running
    // any trial.
    struct Cell {
        SystemConfig cfg;
        ScheduleCounts counts;
        double sigma2;
    };
    std::vector<Cell> cells;
    for (double value : spec.sweep_values) {
        Cell c{detail::apply_sweep(spec.system, spec.sweep_name, value), {}, 0.0};
        c.cfg.validate();
        c.counts = spec.schedule.resolve(c.cfg);
        c.counts.validate(c.cfg);
        const double snr = spec.sweep_name == "snr_db" ? value : spec.snr_db_fixed;
        c.sigma2 = noise_variance_from_snr(snr, c.cfg.power.front(), c.cfg.dist_br, c.cfg.dist_ru);
        cells.push_back(std::move(c));
    }

    std::vector<ResultRow> rows;
    for (Method m : spec.methods) {
        const EstimatorOptions opt = options_for(m);
        for (size_t si = 0; si < cells.size(); ++si) {
            const Cell& cell = cells[si];
            const RisDictionary dict = RisDictionary::build(
                DictionaryConfig::oversampled(cell.cfg.m1, cell.cfg.m2, spec.dict_oversample));

            std::vector<double> values;
            int failures = 0;
            for (int t = 0; t < spec.trials; ++t) {
                const std::uint64_t trial_seed =
                    mix_seed({spec.seed, 0x545249414cULL, std::uint64_t(si), std::uint64_t(t)});
                const ChannelRealization chan =
                    sample_channel(cell.cfg, mix_seed({trial_seed, 0x474eULL}), spec.on_grid);
                try {
                    const ThreeStageResult res = run_three_stage(chan, cell.cfg, cell.counts, dict,
                                                                 cell.sigma2, trial_seed, opt);
                    values.push_back(nmse(res.g_hats(), chan.g_k));
                } catch (const estimation_error&) {
                    ++failures;
                }
            }

            ResultRow row;
            row.method = method_name(m);
            row.sweep_name = spec.sweep_name;
            row.sweep_value = spec.sweep_values[si];
            row.trials = spec.trials;
            row.failures = failures;
            row.nmse_mean = values.empty()
                                ? std::numeric_limits<double>::quiet_NaN()
                                : std::accumulate(values.begin(), values.end(), 0.0) / values.size();
            row.nmse_median = detail::percentile(values, 0.5);
            row.nmse_p10 = detail::percentile(values, 0.1);
            row.nmse_p90 = detail::percentile(values, 0.9);
            row.pilot_overhead = cell.counts.total_slots(cell.cfg);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

inline std::string csv_text(const std::vector<ResultRow>& rows) {
    std::string s =
        "method,sweep_name,sweep_value,trials,failures,nmse_mean,nmse_median,nmse_p10,nmse_p90,"
        "pilot_overhead\n";
    for (const auto& r : rows) {
        s += r.method + "," + r.sweep_name + "," + format_double(r.sweep_value) + "," +
             std::to_string(r.trials) + "," + std::to_string(r.failures) + "," +
             format_double(r.nmse_mean) + "," + format_double(r.nmse_median) + "," +
             format_double(r.nmse_p10) + "," + format_double(r.nmse_p90) + "," +
             std::to_string(r.pilot_overhead) + "\n";
    }
    return s;
}

inline void emit_csv(const std::vector<ResultRow>& rows, const std::string& path) {
    std::ofstream f(path, std::ios::binary);  // LF line endings everywhere
    if (!f) throw std::runtime_error("emit_csv: cannot open '" + path + "' for writing");
    f << csv_text(rows);
    f.flush();
    if (!f) throw std::runtime_error("emit_csv: write to '" + path + "' failed");
}

// ---- flat key = value configuration --------------------------------------

inline std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw invalid_config("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw invalid_config("config line " + std::to_string(line_no) + ": empty key");
        kv[key] = value;
    }
    return kv;
}

inline std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw invalid_config("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_config_text(buf.str());
}

namespace detail {

inline int to_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const int out = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw invalid_config("config: '" + key + "' expects an integer, got '" + v + "'");
    }
}

inline double to_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw invalid_config("config: '" + key + "' expects a number, got '" + v + "'");
    }
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw invalid_config("config: '" + key + "' expects true/false, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : v) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (!isspace(static_cast<unsigned char>(c))) {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

}  // namespace detail

/// Build an experiment from flat dotted keys. Unknown keys are rejected so
/// typos surface as configuration errors instead of silent defaults.
inline ExperimentSpec spec_from_config(const std::map<std::string, std::string>& kv) {
    ExperimentSpec spec;
    SystemConfig& sys = spec.system;
    int users = sys.n_users;
    int q = 8, q_rf = 2, j = 2;
    double power = 1.0;

    for (const auto& [key, value] : kv) {
        if (key == "system.n_bs") sys.n_bs = detail::to_int(key, value);
        else if (key == "system.n_rf") sys.n_rf = detail::to_int(key, value);
        else if (key == "system.m1") sys.m1 = detail::to_int(key, value);
        else if (key == "system.m2") sys.m2 = detail::to_int(key, value);
        else if (key == "system.users") users = detail::to_int(key, value);
        else if (key == "system.l") sys.n_paths_bs = detail::to_int(key, value);
        else if (key == "system.q") q = detail::to_int(key, value);
        else if (key == "system.q_rf") q_rf = detail::to_int(key, value);
        else if (key == "system.j") j = detail::to_int(key, value);
        else if (key == "system.power") power = detail::to_double(key, value);
        else if (key == "system.d_br") sys.dist_br = detail::to_double(key, value);
        else if (key == "system.d_ru") sys.dist_ru = detail::to_double(key, value);
        else if (key == "system.spacing_bs") sys.spacing_bs = detail::to_double(key, value);
        else if (key == "system.spacing_ris") sys.spacing_ris = detail::to_double(key, value);
        else if (key == "system.spacing_ue") sys.spacing_ue = detail::to_double(key, value);
        else if (key == "dict.oversample") spec.dict_oversample = detail::to_int(key, value);
        else if (key == "schedule.v0") spec.schedule.v0 = detail::to_int(key, value);
        else if (key == "schedule.tau11") spec.schedule.tau11 = detail::to_int(key, value);
        else if (key == "schedule.v1") spec.schedule.v1 = detail::to_int(key, value);
        else if (key == "schedule.tau12") spec.schedule.tau12 = detail::to_int(key, value);
        else if (key == "schedule.tauk1") spec.schedule.tauk1 = detail::to_int(key, value);
        else if (key == "schedule.vk") spec.schedule.vk = detail::to_int(key, value);
        else if (key == "schedule.tauk2") spec.schedule.tauk2 = detail::to_int(key, value);
        else if (key == "schedule.c") spec.schedule.c = detail::to_double(key, value);
        else if (key == "run.sweep") spec.sweep_name = value;
        else if (key == "run.snr_db") {
            spec.sweep_values.clear();
            for (const auto& s : detail::split_list(value))
                spec.sweep_values.push_back(detail::to_double(key, s));
        } else if (key == "run.q_values" || key == "run.n_rf_values") {
            // applied below once the sweep axis is known
        } else if (key == "run.trials") spec.trials = detail::to_int(key, value);
        else if (key == "run.seed") spec.seed = std::uint64_t(detail::to_int(key, value));
        else if (key == "run.methods") {
            spec.methods.clear();
            for (const auto& s : detail::split_list(value)) {
                const auto m = method_from_string(s);
                if (!m) throw invalid_config("config: unknown method '" + s + "'");
                spec.methods.push_back(*m);
            }
        } else if (key == "run.on_grid") spec.on_grid = detail::to_bool(key, value);
        else if (key == "run.out") spec.out_path = value;
        else if (key == "run.max_fail_rate") spec.max_fail_rate = detail::to_double(key, value);
        else throw invalid_config("config: unknown key '" + key + "'");
    }

    sys.n_users = users;
    sys.q.assign(users, q);
    sys.q_rf.assign(users, q_rf);
    sys.j_paths.assign(users, j);
    sys.power.assign(users, power);

    if (spec.sweep_name == "q" || spec.sweep_name == "n_rf") {
        const std::string list_key = "run." + spec.sweep_name + "_values";
        const auto it = kv.find(list_key);
        if (it == kv.end())
            throw invalid_config("config: sweep '" + spec.sweep_name + "' needs " + list_key);
        if (!spec.sweep_values.empty()) spec.snr_db_fixed = spec.sweep_values.front();
        spec.sweep_values.clear();
        for (const auto& s : detail::split_list(it->second))
            spec.sweep_values.push_back(detail::to_double(list_key, s));
    }
    return spec;
}

}  // namespace chanest

#endif  // CHANEST_HARNESS_HPP
