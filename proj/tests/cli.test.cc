// Copyright 2026 The TCG Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "gtest/gtest.h"
#include "tcg/random.hpp"

using namespace tcg;
using namespace tcg::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string &name) {
    fs::path p = fs::temp_directory_path() / ("tcg-cli-test-" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_simulate(const std::string &arguments) {
    int status = std::system((std::string(TCG_SIMULATE) + " " + arguments + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Section, RejectsUnknownKeys) {
    json j = {{"a", 1.0}, {"b", 2}};
    Section s(j, "config");
    EXPECT_DOUBLE_EQ(s.number("a"), 1.0);
    EXPECT_THROW(s.finish(), ConfigError);
    EXPECT_EQ(s.integer("b", 0), 2);
    EXPECT_NO_THROW(s.finish());
}

TEST(Section, TypeErrors) {
    json j = {{"x", "text"}, {"n", 1.5}, {"f", 1}, {"mode", "odd"}};
    Section s(j, "config");
    EXPECT_THROW(s.number("x"), ConfigError);
    EXPECT_THROW(s.integer("n", 0), ConfigError);
    EXPECT_THROW(s.flag("f", false), ConfigError);
    EXPECT_THROW(s.text("mode", "a", {"a", "b"}), ConfigError);
    EXPECT_THROW(s.number("missing"), ConfigError);
    EXPECT_DOUBLE_EQ(s.number("missing", 4.0), 4.0);
    EXPECT_THROW(Section(json::array(), "config"), ConfigError);
}

TEST(ParseNoise, AllForms) {
    json a = {{"one_over_f", {{"f_min_hz", 1e3}, {"f_max_hz", 1e7}, {"n", 5}, {"p", 1e-6}}}};
    EXPECT_EQ(parse_noise(Section(a, "noise")).components.size(), 5u);

    json b = {{"quasi_static", {{"p", 2e-6}}}};
    OuSum qs = parse_noise(Section(b, "noise"));
    ASSERT_EQ(qs.components.size(), 1u);
    EXPECT_TRUE(qs.components[0].is_quasi_static());
    EXPECT_DOUBLE_EQ(qs.components[0].stationary_variance(), 1e-6);

    json c = {{"components", {{{"f0_hz", 1e6}, {"sigma_sq", 4e-6}}, {{"gamma_rad_per_ns", 0.5}, {"sigma_sq", 1e-6}}}}};
    OuSum cs = parse_noise(Section(c, "noise"));
    ASSERT_EQ(cs.components.size(), 2u);
    EXPECT_NEAR(cs.components[0].params().gamma, 2.0 * kPi * 1e-3, 1e-15);
    EXPECT_NEAR(cs.components[0].params().sigma, 2e-3, 1e-15);
    EXPECT_DOUBLE_EQ(cs.components[1].params().gamma, 0.5);
}

TEST(ParseNoise, Rejections) {
    json both = {{"quasi_static", {{"p", 1e-6}}}, {"one_over_f", json::object()}};
    EXPECT_THROW(parse_noise(Section(both, "noise")), ConfigError);
    json none = json::object();
    EXPECT_THROW(parse_noise(Section(none, "noise")), ConfigError);
    json extra = {{"quasi_static", {{"p", 1e-6}, {"q", 1}}}};
    EXPECT_THROW(parse_noise(Section(extra, "noise")), ConfigError);
    json rate = {{"components", {{{"f0_hz", 1e6}, {"gamma_rad_per_ns", 1.0}, {"sigma_sq", 1e-6}}}}};
    EXPECT_THROW(parse_noise(Section(rate, "noise")), ConfigError);
    json order = {{"one_over_f", {{"f_min_hz", 1e7}, {"f_max_hz", 1e3}, {"n", 5}, {"p", 1e-6}}}};
    EXPECT_THROW(parse_noise(Section(order, "noise")), ConfigError);
}

TEST(Format, RoundTrips) {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) {
        EXPECT_EQ(std::stod(fmt(v)), v);
    }
    EXPECT_EQ(fmt(std::nan("")), "nan");
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(hits.size(), 4, [&](size_t i) { hits[i]++; });
    for (const auto &h : hits) {
        EXPECT_EQ(h.load(), 1);
    }
    EXPECT_THROW(parallel_for(50, 3,
                              [](size_t i) {
                                  if (i == 17) {
                                      throw std::runtime_error("boom");
                                  }
                              }),
                 std::runtime_error);
}

TEST(FlipSpectrum, BernoulliIntervalCoversZero) {
    auto outcomes = bernoulli_ensemble(0.05, 100, 400, 3);
    FlipSpectrum f = flip_spectrum(outcomes, 30, 500, 3);
    EXPECT_LE(f.slope_ci.lo, 0.0);
    EXPECT_GE(f.slope_ci.hi, 0.0);
    EXPECT_LT(std::abs(f.slope), 0.05);
}

TEST(FlipSpectrum, PairedFlipsAreNotFlat) {
    // single-round excursions flip twice in a row: spectrum ~ cos^2(pi f)
    RandomStream rng(4);
    std::vector<std::vector<int>> outcomes;
    for (int r = 0; r < 200; ++r) {
        std::vector<int> o(100, 0);
        for (size_t j = 0; j + 1 < o.size(); ++j) {
            if (rng.uniform() < 0.05) {
                o[j] = 1;
            }
        }
        outcomes.push_back(o);
    }
    FlipSpectrum f = flip_spectrum(outcomes, 30, 500, 4);
    EXPECT_LT(f.slope_ci.hi, 0.0);
}

TEST(Summary, SaturationOfBernoulliChains) {
    auto outcomes = bernoulli_ensemble(0.02, 100, 400, 5);
    SaturationSummary s = summarize_outcomes(outcomes, 300, 5);
    ASSERT_TRUE(s.converged);
    double lambda = -0.5 * std::log(1.0 - 2.0 * 0.02);
    EXPECT_LE(s.lambda_ci.lo, lambda);
    EXPECT_GE(s.lambda_ci.hi, lambda);
    EXPECT_EQ(s.t.front(), 1.0);
    EXPECT_EQ(s.mean.size(), 100u);
}

TEST(Commands, SampleNoiseOutputs) {
    fs::path dir = scratch("noise");
    RunArgs a;
    a.out = dir.string();
    a.config = {{"noise", {{"quasi_static", {{"p", 2e-6}}}}},
                {"duration_ns", 1000.0},
                {"dt_ns", 10.0},
                {"welch_segment", 32},
                {"dump_samples", 4},
                {"trajectories", 2}};
    EXPECT_EQ(cmd_sample_noise(a), 0);
    std::string traj = slurp(dir / "trajectory.csv");
    EXPECT_EQ(traj.substr(0, traj.find('\n')), "t_ns,channel,component,value");
    EXPECT_EQ(std::count(traj.begin(), traj.end(), '\n'), 5);
    std::string psd = slurp(dir / "psd.csv");
    EXPECT_EQ(psd.substr(0, psd.find('\n')), "frequency_hz,psd,ci_lo,ci_hi,analytic_psd");
    fs::remove_all(dir);
}

TEST(Commands, ConfigMistakesAreConfigErrors) {
    RunArgs a;
    a.out = scratch("bad").string();
    a.config = {{"experiment", "parity"}};
    EXPECT_THROW(cmd_sample_noise(a), ConfigError);
    a.config = {{"noise_model", "pink"}};
    EXPECT_THROW(cmd_parity(a), ConfigError);
    a.config = {{"data_bits", {0, 2}}};
    EXPECT_THROW(cmd_parity(a), ConfigError);
    a.config = {{"kind", "exchange"}, {"steps", 0}};
    EXPECT_THROW(cmd_calibrate(a), ConfigError);
    a.config = {{"gates", {"CNOT99"}}};
    EXPECT_THROW(cmd_gate_library(a), ConfigError);
}

TEST(Simulate, ExitCodes) {
    fs::path dir = scratch("exit");
    fs::create_directories(dir);
    {
        std::ofstream(dir / "ok.json") << R"({"noise": {"quasi_static": {"p": 1e-6}}, "duration_ns": 500,
            "dt_ns": 5, "welch_segment": 16, "trajectories": 1, "seed": 3})";
        std::ofstream(dir / "unknown.json") << R"({"noise": {"quasi_static": {"p": 1e-6}}, "colour": 1})";
        std::ofstream(dir / "broken.json") << "{";
    }
    std::string out = " --out " + (dir / "o").string();
    EXPECT_EQ(run_simulate("sample-noise --config " + (dir / "ok.json").string() + out), 0);
    EXPECT_TRUE(fs::exists(dir / "o" / "summary.csv"));
    EXPECT_EQ(run_simulate("sample-noise --config " + (dir / "unknown.json").string() + out), 2);
    EXPECT_EQ(run_simulate("sample-noise --config " + (dir / "broken.json").string() + out), 2);
    EXPECT_EQ(run_simulate("sample-noise --config " + (dir / "missing.json").string() + out), 2);
    EXPECT_EQ(run_simulate("sample-noise --seed nope" + out), 2);
    EXPECT_EQ(run_simulate("no-such-command"), 2);
    fs::remove_all(dir);
}
