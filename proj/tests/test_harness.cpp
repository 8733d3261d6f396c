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
#include <sstream>

#include "chanest/harness.hpp"

using namespace chanest;
using Catch::Approx;

namespace {

ExperimentSpec desk_spec() {
    ExperimentSpec spec;
    spec.system = SystemConfig::uniform(32, 8, 8, 8, 2, 2, 8, 2, 2);
    spec.trials = 5;
    spec.seed = 7;
    spec.methods = {Method::proposed};
    spec.sweep_values = {10.0};
    spec.on_grid = true;
    return spec;
}

/// Minimal CSV reader used to round-trip the emitted rows.
std::vector<ResultRow> parse_csv_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);  // header
    std::vector<ResultRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::string cur;
        for (char c : line) {
            if (c == ',') {
                f.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        f.push_back(cur);
        REQUIRE(f.size() == 10);
        ResultRow r;
        r.method = f[0];
        r.sweep_name = f[1];
        r.sweep_value = std::stod(f[2]);
        r.trials = std::stoi(f[3]);
        r.failures = std::stoi(f[4]);
        r.nmse_mean = std::stod(f[5]);
        r.nmse_median = std::stod(f[6]);
        r.nmse_p10 = std::stod(f[7]);
        r.nmse_p90 = std::stod(f[8]);
        r.pilot_overhead = std::stol(f[9]);
        rows.push_back(r);
    }
    return rows;
}

}  // namespace

TEST_CASE("noiseless on-grid experiment reaches the exactness floor", "[harness]") {
    ExperimentSpec spec = desk_spec();
    spec.trials = 1;
    spec.sweep_values = {std::numeric_limits<double>::infinity()};  // sigma^2 = 0
    const auto rows = run_experiment(spec);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].failures == 0);
    CHECK(rows[0].nmse_mean < 1e-5);
}

TEST_CASE("experiments are deterministic end to end", "[harness]") {
    const ExperimentSpec spec = desk_spec();
    const std::string a = csv_text(run_experiment(spec));
    const std::string b = csv_text(run_experiment(spec));
    CHECK(a == b);
    CHECK(a.find("proposed,snr_db,10,5,") != std::string::npos);
}

TEST_CASE("csv writing round-trips and degenerate inputs", "[harness]") {
    CHECK(csv_text({}) ==
          "method,sweep_name,sweep_value,trials,failures,nmse_mean,nmse_median,nmse_p10,"
          "nmse_p90,pilot_overhead\n");

    ResultRow r;
    r.method = "proposed";
    r.sweep_name = "snr_db";
    r.sweep_value = -10.0;
    r.trials = 3;
    r.failures = 1;
    r.nmse_mean = 0.123456789012345;
    r.nmse_median = 1e-7;
    r.nmse_p10 = 0.25;
    r.nmse_p90 = 3.5;
    r.pilot_overhead = 21;
    const std::string text = csv_text({r});
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);

    const auto parsed = parse_csv_text(text);
    REQUIRE(parsed.size() == 1);
    CHECK(parsed[0].method == r.method);
    CHECK(parsed[0].sweep_value == r.sweep_value);
    CHECK(parsed[0].trials == r.trials);
    CHECK(parsed[0].failures == r.failures);
    CHECK(parsed[0].nmse_mean == r.nmse_mean);    // shortest round-trip is exact
    CHECK(parsed[0].nmse_median == r.nmse_median);
    CHECK(parsed[0].pilot_overhead == r.pilot_overhead);

    // file emission matches the in-memory text
    const std::string path = "harness_roundtrip_test.csv";
    emit_csv({r}, path);
    std::ifstream f(path, std::ios::binary);
    std::ostringstream buf;
    buf << f.rdbuf();
    CHECK(buf.str() == text);
    std::remove(path.c_str());
}

TEST_CASE("failure accounting and exclusion from aggregates", "[harness]") {
    ExperimentSpec spec = desk_spec();
    spec.trials = 12;
    spec.on_grid = false;
    spec.sweep_values = {-30.0};  // deep noise: some trials must fail detection
    const auto rows = run_experiment(spec);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].failures >= 0);
    CHECK(rows[0].failures <= rows[0].trials);
    if (rows[0].failures < rows[0].trials) {
        CHECK(std::isfinite(rows[0].nmse_median));
        CHECK(rows[0].nmse_p10 <= rows[0].nmse_median);
        CHECK(rows[0].nmse_median <= rows[0].nmse_p90);
    } else {
        CHECK(std::isnan(rows[0].nmse_median));
    }
}

TEST_CASE("disjoint seed runs pool to the same statistics", "[harness]") {
    ExperimentSpec spec = desk_spec();
    spec.trials = 40;
    ExperimentSpec half1 = spec, half2 = spec;
    half1.trials = 20;
    half2.trials = 20;
    half2.seed = spec.seed + 1000;

    const auto full = run_experiment(spec);
    const auto a = run_experiment(half1);
    const auto b = run_experiment(half2);
    const double pooled_mean = 0.5 * (a[0].nmse_mean + b[0].nmse_mean);
    CHECK(full[0].nmse_mean / pooled_mean > 0.4);
    CHECK(full[0].nmse_mean / pooled_mean < 2.5);
}

TEST_CASE("methods share channel and noise randomness", "[harness]") {
    // With common random numbers, the oracle must win (or tie) against the
    // full pipeline on a per-row basis even with few trials.
    ExperimentSpec spec = desk_spec();
    spec.trials = 10;
    spec.methods = {Method::proposed, Method::oracle};
    const auto rows = run_experiment(spec);
    REQUIRE(rows.size() == 2);
    CHECK(rows[1].nmse_median <= rows[0].nmse_median);
    CHECK(rows[0].pilot_overhead == rows[1].pilot_overhead);
}

TEST_CASE("config parsing honors keys and rejects unknown ones", "[harness]") {
    const std::string text =
        "# desk-scale experiment\n"
        "system.n_bs = 16\n"
        "system.n_rf = 4\n"
        "system.m1 = 4\n"
        "system.m2 = 4\n"
        "system.users = 2\n"
        "system.l = 2\n"
        "system.q = 4   # per-user antennas\n"
        "system.q_rf = 2\n"
        "system.j = 2\n"
        "run.sweep = snr_db\n"
        "run.snr_db = -10, 0, 10\n"
        "run.trials = 7\n"
        "run.seed = 99\n"
        "run.methods = proposed, oracle\n"
        "run.on_grid = true\n"
        "run.out = out.csv\n";
    const ExperimentSpec spec = spec_from_config(parse_config_text(text));
    CHECK(spec.system.n_bs == 16);
    CHECK(spec.system.q == std::vector<int>{4, 4});
    CHECK(spec.sweep_values == std::vector<double>{-10.0, 0.0, 10.0});
    CHECK(spec.trials == 7);
    CHECK(spec.seed == 99);
    REQUIRE(spec.methods.size() == 2);
    CHECK(spec.methods[1] == Method::oracle);
    CHECK(spec.on_grid);
    CHECK(spec.out_path == "out.csv");

    CHECK_THROWS_AS(spec_from_config(parse_config_text("system.n_antennas = 4\n")), invalid_config);
    CHECK_THROWS_AS(spec_from_config(parse_config_text("run.methods = nonsense\n")), invalid_config);
    CHECK_THROWS_AS(parse_config_text("just some text\n"), invalid_config);
}

TEST_CASE("q sweep reshapes the population and keeps the SNR fixed", "[harness]") {
    const std::string text =
        "run.sweep = q\n"
        "run.snr_db = 5\n"
        "run.q_values = 4, 8\n"
        "run.trials = 2\n";
    const ExperimentSpec spec = spec_from_config(parse_config_text(text));
    CHECK(spec.sweep_name == "q");
    CHECK(spec.sweep_values == std::vector<double>{4.0, 8.0});
    CHECK(spec.snr_db_fixed == 5.0);

    ExperimentSpec run = spec;
    run.system = SystemConfig::uniform(16, 4, 4, 4, 2, 2, 8, 2, 2);
    run.on_grid = true;
    run.seed = 3;
    const auto rows = run_experiment(run);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].sweep_value == 4.0);
    CHECK(rows[1].sweep_value == 8.0);
    CHECK(rows[0].pilot_overhead > 0);
    CHECK(rows[1].pilot_overhead > 0);
}

TEST_CASE("invalid specs are rejected before any trial runs", "[harness]") {
    ExperimentSpec spec = desk_spec();
    spec.trials = 0;
    CHECK_THROWS_AS(run_experiment(spec), invalid_config);

    spec = desk_spec();
    spec.methods.clear();
    CHECK_THROWS_AS(run_experiment(spec), invalid_config);

    spec = desk_spec();
    spec.sweep_name = "q";
    spec.sweep_values = {0.0};  // zero antennas is rejected during pre-validation
    CHECK_THROWS_AS(run_experiment(spec), invalid_config);
}
