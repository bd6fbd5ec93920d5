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

#ifndef TCG_TOOLS_COMMANDS_HPP
#define TCG_TOOLS_COMMANDS_HPP

#include <cstdint>
#include <functional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tcg/analysis.hpp"
#include "tcg/circuits.hpp"

namespace tcg::cli {

using nlohmann::json;

/// Invalid configuration (exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Reads one JSON object, remembering which keys were consumed so that
/// finish() can reject the rest.
class Section {
   public:
    Section(const json &j, std::string path);

    bool has(const std::string &key) const;
    double number(const std::string &key) const;
    double number(const std::string &key, double fallback) const;
    int64_t integer(const std::string &key, int64_t fallback) const;
    std::string text(const std::string &key, const std::string &fallback, const std::set<std::string> &allowed) const;
    bool flag(const std::string &key, bool fallback) const;
    std::vector<int> integers(const std::string &key, std::vector<int> fallback) const;
    Section child(const std::string &key) const;
    const json &raw(const std::string &key) const;
    void finish() const;

   private:
    const json &j_;
    std::string path_;
    mutable std::set<std::string> used_;
};

/// noise block: {"one_over_f": {...}} | {"quasi_static": {"p": ...}} |
/// {"components": [{"gamma_rad_per_ns" | "f0_hz", "sigma_sq", "mu"}]}
OuSum parse_noise(const Section &s);
/// "one_over_f" | "quasi_static" | "none"
ParityNoiseModel named_noise(const std::string &name);

struct RunArgs {
    json config = json::object();
    uint64_t seed = 1;
    size_t trajectories = 0;  // 0: config value or the command default
    std::string out = ".";
    std::string cache;
    unsigned workers = 0;  // 0: hardware concurrency
};

unsigned resolve_workers(unsigned requested);

/// Runs fn(i) for i < n on a pool; every index is handled exactly once and
/// results must be stored by index. The first exception is rethrown.
void parallel_for(size_t n, unsigned workers, const std::function<void(size_t)> &fn);

struct ParityEnsemble {
    std::vector<std::vector<int>> outcomes;  // [realization][round]
    std::vector<MeasurementRecord> records;
    double seconds = 0.0;  // wall time including the plan
};

ParityEnsemble run_parity_ensemble(const SpinChainConfig &cfg, const ParityNoiseModel &noise,
                                   const ParityOptions &options, uint64_t seed, size_t realizations, unsigned workers,
                                   PrecomputeCache &cache, const GateLibrary &lib = default_gate_library());

std::vector<std::vector<int>> bernoulli_ensemble(double q, size_t rounds, size_t realizations, uint64_t seed);

/// Mean outcome per round with percentile bootstrap bands and a saturation
/// fit; the lambda and a intervals come from refitting bootstrap resamples.
/// A fit that does not converge leaves NaN estimates and converged false.
struct SaturationSummary {
    std::vector<double> t;  // rounds since the start: 1, 2, ...
    std::vector<double> mean;
    std::vector<Interval> bands;
    FitResult fit;
    bool converged = false;
    Interval a_ci;
    Interval lambda_ci;
};
SaturationSummary summarize_outcomes(const std::vector<std::vector<int>> &outcomes, size_t resamples,
                                     uint64_t seed);

/// Flip-series PSD averaged over realizations, with bootstrap bands and the
/// interior log-log slope and its bootstrap interval.
struct FlipSpectrum {
    Spectrum mean;
    std::vector<Interval> bands;
    double slope = 0.0;
    Interval slope_ci;
};
FlipSpectrum flip_spectrum(const std::vector<std::vector<int>> &outcomes, size_t segment_length,
                           size_t resamples, uint64_t seed);

/// simulate_decay split into fixed seed blocks that run on the pool and are
/// pooled in order, so the result does not depend on the worker count.
DecayCurve run_decay_ensemble(const DecayOptions &options, const ParityNoiseModel &noise, uint64_t seed,
                              unsigned workers, PrecomputeCache &cache);

/// CSV number formatting that round-trips doubles.
std::string fmt(double v);

int cmd_sample_noise(const RunArgs &args);
int cmd_single_qubit(const RunArgs &args);
int cmd_two_qubit(const RunArgs &args);
int cmd_parity(const RunArgs &args);
int cmd_calibrate(const RunArgs &args);
int cmd_compare_coarse(const RunArgs &args);
int cmd_gate_library(const RunArgs &args);

}  // namespace tcg::cli

#endif
