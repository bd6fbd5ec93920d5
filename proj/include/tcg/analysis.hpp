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

#ifndef TCG_ANALYSIS_HPP
#define TCG_ANALYSIS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "tcg/liouville.hpp"

namespace tcg {

/// Realizations of a sampled series. Rows may differ in length only when
/// built as ragged.
struct TimeSeriesEnsemble {
    double spacing = 1.0;
    std::vector<std::vector<double>> series;

    bool rectangular() const;
    size_t length() const;  // throws unless rectangular
    std::vector<double> mean() const;
};

struct FitResult {
    std::vector<std::string> names;
    RVec estimate;
    RVec standard_error;
    RMat covariance;
    double residual_norm = 0.0;
    int iterations = 0;

    double value(const std::string &name) const;
    double error(const std::string &name) const;
};

/// M'[0] = 0, M'[j] = 1 iff M[j - 1] != M[j].
std::vector<int> parity_flip_series(const std::vector<int> &outcomes);

struct WelchOptions {
    size_t segment_length = 30;
    double overlap = 0.5;
    bool hann = true;
    bool remove_mean = true;  // per segment, before windowing
};

struct Spectrum {
    std::vector<double> frequency;
    std::vector<double> density;
};

/// One-sided Welch estimate; sum(density) * df matches the variance.
Spectrum welch_psd(const std::vector<double> &x, double spacing, const WelchOptions &options = {});

/// Least-squares slope of log10(psd) against log10(f) for f_lo <= f <= f_hi.
double log_log_slope(const Spectrum &s, double f_lo, double f_hi);

/// a (1 - exp(-2 lambda t)). Throws std::runtime_error when the fit does
/// not converge.
FitResult fit_saturation(const std::vector<double> &t, const std::vector<double> &y);

enum class DecayModel {
    /// 1/2 (1 + exp(-(t/T)^b))
    free_induction,
    /// a exp(-(t/T)^b) cos(2 pi J t) + 1 - a, J fixed
    exchange,
};

/// Parameters T (same unit as t) and b, plus a for the exchange model.
/// j_ghz is the oscillation frequency in cycles per unit of t.
FitResult fit_t2star(const std::vector<double> &t, const std::vector<double> &p, DecayModel model,
                     double j_ghz = 0.0, double t_guess = 0.0);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// Percentile bootstrap interval of the mean. level 0.9545 is the two-sigma
/// equivalent. Throws std::invalid_argument for fewer than 30 values.
Interval bootstrap_ci(const std::vector<double> &values, size_t resamples = 1000, double level = 0.9545,
                      uint64_t seed = 1);

/// Percentile bootstrap bands for the pointwise mean of an ensemble.
std::vector<Interval> bootstrap_bands(const TimeSeriesEnsemble &e, size_t resamples = 1000, double level = 0.9545,
                                      uint64_t seed = 1);

}  // namespace tcg

#endif
