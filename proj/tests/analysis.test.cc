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

#include "tcg/analysis.hpp"

#include <cmath>
#include <numbers>

#include "gtest/gtest.h"
#include "tcg/circuits.hpp"
#include "tcg/random.hpp"

using namespace tcg;

namespace {

double sample_variance(const std::vector<double> &x) {
    double m = 0.0;
    for (double v : x) {
        m += v / x.size();
    }
    double s = 0.0;
    for (double v : x) {
        s += (v - m) * (v - m);
    }
    return s / x.size();
}

}  // namespace

TEST(FlipSeries, Examples) {
    EXPECT_EQ(parity_flip_series({0, 0, 0, 0}), (std::vector<int>{0, 0, 0, 0}));
    EXPECT_EQ(parity_flip_series({0, 1, 1, 0}), (std::vector<int>{0, 1, 0, 1}));
    EXPECT_EQ(parity_flip_series({0, 1, 0, 1, 0}), (std::vector<int>{0, 1, 1, 1, 1}));
    EXPECT_EQ(parity_flip_series({1}), (std::vector<int>{0}));
    EXPECT_THROW(parity_flip_series({}), std::invalid_argument);
}

TEST(Ensemble, MeanAndShape) {
    TimeSeriesEnsemble e{2.0, {{0, 1, 2}, {2, 3, 4}}};
    EXPECT_TRUE(e.rectangular());
    EXPECT_EQ(e.length(), 3u);
    EXPECT_EQ(e.mean(), (std::vector<double>{1, 2, 3}));
    e.series.push_back({1});
    EXPECT_FALSE(e.rectangular());
    EXPECT_THROW(e.length(), std::invalid_argument);
}

TEST(Welch, WhiteNoiseLevelMatchesVariance) {
    RandomStream rng(5);
    std::vector<double> x(60000);
    for (double &v : x) {
        v = 1.7 * rng.normal();
    }
    double dt = 0.5;
    Spectrum s = welch_psd(x, dt, {});
    double df = s.frequency[1] - s.frequency[0];
    double total = 0.0;
    for (double p : s.density) {
        total += p * df;
    }
    EXPECT_NEAR(total / sample_variance(x), 1.0, 0.05);
    // flat level 2 v dt
    double mid = s.density[s.density.size() / 2];
    EXPECT_NEAR(mid / (2.0 * 1.7 * 1.7 * dt), 1.0, 0.1);
}

TEST(Welch, SinusoidPeaksAtItsFrequency) {
    std::vector<double> x(600);
    for (size_t i = 0; i < x.size(); ++i) {
        x[i] = std::sin(2.0 * std::numbers::pi * 0.2 * i);
    }
    Spectrum s = welch_psd(x, 1.0, {});
    size_t arg = 0;
    for (size_t k = 1; k < s.density.size(); ++k) {
        if (s.density[k] > s.density[arg]) {
            arg = k;
        }
    }
    EXPECT_NEAR(s.frequency[arg], 0.2, 1e-12);
    EXPECT_THROW(welch_psd(std::vector<double>(10, 0.0), 1.0, {}), std::invalid_argument);
}

TEST(Welch, MatchesDirectTransform) {
    // independent evaluation: explicit segments, window and DFT sums
    RandomStream rng(8);
    std::vector<double> x(40);
    for (double &v : x) {
        v = rng.normal() + 0.3;
    }
    const size_t n = 8, step = 4;
    const double dt = 0.25;
    WelchOptions o;
    o.segment_length = n;
    Spectrum s = welch_psd(x, dt, o);
    std::vector<double> w(n);
    double w2 = 0.0;
    for (size_t i = 0; i < n; ++i) {
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
        w2 += w[i] * w[i];
    }
    std::vector<double> ref(n / 2 + 1, 0.0);
    size_t segments = 0;
    for (size_t start = 0; start + n <= x.size(); start += step, ++segments) {
        double mean = 0.0;
        for (size_t i = 0; i < n; ++i) {
            mean += x[start + i] / n;
        }
        for (size_t k = 0; k <= n / 2; ++k) {
            double re = 0.0, im = 0.0;
            for (size_t i = 0; i < n; ++i) {
                double a = -2.0 * std::numbers::pi * k * i / n;
                re += w[i] * (x[start + i] - mean) * std::cos(a);
                im += w[i] * (x[start + i] - mean) * std::sin(a);
            }
            double p = (re * re + im * im) * dt / w2;
            ref[k] += (k == 0 || k == n / 2) ? p : 2.0 * p;
        }
    }
    ASSERT_EQ(s.density.size(), ref.size());
    for (size_t k = 0; k < ref.size(); ++k) {
        EXPECT_NEAR(s.frequency[k], k / (n * dt), 1e-12);
        EXPECT_NEAR(s.density[k], ref[k] / segments, 1e-12 * (1.0 + ref[k]));
    }
}

TEST(Welch, MeanRemovalDepressesFirstBin) {
    // Hann window: |W(1)|^2 / n over sum w^2 is 1/6 of the white level
    RandomStream rng(9);
    const size_t n = 30, reps = 20000;
    std::vector<double> avg(n / 2 + 1, 0.0);
    for (size_t r = 0; r < reps; ++r) {
        std::vector<double> x(n);
        for (double &v : x) {
            v = rng.normal();
        }
        Spectrum s = welch_psd(x, 1.0, {});
        for (size_t k = 0; k < avg.size(); ++k) {
            avg[k] += s.density[k] / reps;
        }
    }
    double level = 0.0;
    for (size_t k = 2; k < n / 2; ++k) {
        level += avg[k] / (n / 2 - 2);
    }
    EXPECT_NEAR(level, 2.0, 0.03);
    EXPECT_NEAR(avg[1] / level, 5.0 / 6.0, 0.03);
}

TEST(Welch, BernoulliFlipSeriesIsFlat) {
    RandomStream rng(21);
    const size_t n_real = 4000;
    Spectrum avg;
    for (size_t r = 0; r < n_real; ++r) {
        auto out = bernoulli_outcomes(3e-3, 300, rng);
        auto flips = parity_flip_series(out);
        Spectrum s = welch_psd(std::vector<double>(flips.begin(), flips.end()), 1.0, {});
        if (avg.density.empty()) {
            avg = s;
            std::fill(avg.density.begin(), avg.density.end(), 0.0);
        }
        for (size_t k = 0; k < s.density.size(); ++k) {
            avg.density[k] += s.density[k] / n_real;
        }
    }
    EXPECT_LT(std::abs(log_log_slope(avg, 0.05, 0.45)), 0.05);
}

TEST(SaturationFit, RecoversGeneratorParameters) {
    std::vector<double> t, y;
    for (int j = 1; j <= 300; ++j) {
        t.push_back(j);
        y.push_back(0.475 * (1.0 - std::exp(-2.0 * 0.00327 * j)));
    }
    FitResult f = fit_saturation(t, y);
    EXPECT_NEAR(f.value("a"), 0.475, 0.475 * 0.01);
    EXPECT_NEAR(f.value("lambda"), 0.00327, 0.00327 * 0.01);
    EXPECT_GE(f.error("a"), 0.0);
}

TEST(SaturationFit, BernoulliChainSaturatesAtOneHalf) {
    RandomStream rng(8);
    const double q = 3e-3;
    const size_t n_real = 4000, rounds = 300;
    std::vector<double> mean(rounds, 0.0), t(rounds);
    for (size_t r = 0; r < n_real; ++r) {
        auto out = bernoulli_outcomes(q, rounds, rng);
        for (size_t j = 0; j < rounds; ++j) {
            mean[j] += static_cast<double>(out[j]) / n_real;
        }
    }
    for (size_t j = 0; j < rounds; ++j) {
        t[j] = static_cast<double>(j + 1);
    }
    FitResult f = fit_saturation(t, mean);
    // exact mean: (1 - (1 - 2q)^t) / 2
    double lambda = -0.5 * std::log(1.0 - 2.0 * q);
    EXPECT_NEAR(f.value("lambda"), lambda, 3.0 * f.error("lambda") + 0.1 * lambda);
    EXPECT_NEAR(f.value("a"), 0.5, 3.0 * f.error("a") + 0.05);
}

TEST(SaturationFit, ZeroDataGivesZeroAmplitude) {
    std::vector<double> t(20), y(20, 0.0);
    for (size_t j = 0; j < t.size(); ++j) {
        t[j] = j + 1.0;
    }
    FitResult f = fit_saturation(t, y);
    EXPECT_NEAR(f.value("a"), 0.0, 1e-12);
    EXPECT_THROW(fit_saturation({1, 2}, {0, 0}), std::invalid_argument);
}

TEST(DecayFit, QuasiStaticAnalyticDecay) {
    // Pr(t) = (1 + exp(-p t^2 / 2)) / 2 gives T = sqrt(2 / p), b = 2
    double p = std::pow(2.0 * std::numbers::pi * 6.431e-5, 2);
    std::vector<double> t, y;
    for (int k = 0; k <= 200; ++k) {
        double tk = 50.0 * k;
        t.push_back(tk);
        y.push_back(0.5 * (1.0 + std::exp(-p * tk * tk / 2.0)));
    }
    FitResult f = fit_t2star(t, y, DecayModel::free_induction);
    EXPECT_NEAR(f.value("T"), std::sqrt(2.0 / p), 1e-6 * std::sqrt(2.0 / p));
    EXPECT_NEAR(f.value("b"), 2.0, 1e-6);
}

TEST(DecayFit, ExchangeOscillationEnvelope) {
    std::vector<double> t, y;
    for (int k = 0; k <= 1500; ++k) {
        double tk = 1.0 * k;
        t.push_back(tk);
        y.push_back(0.36 * std::exp(-std::pow(tk / 510.0, 1.9)) * std::cos(2.0 * std::numbers::pi * 0.1 * tk) + 0.64);
    }
    FitResult f = fit_t2star(t, y, DecayModel::exchange, 0.1);
    EXPECT_NEAR(f.value("T"), 510.0, 1e-4);
    EXPECT_NEAR(f.value("b"), 1.9, 1e-6);
    EXPECT_NEAR(f.value("a"), 0.36, 1e-8);
}

TEST(Bootstrap, ConstantGivesZeroWidth) {
    Interval ci = bootstrap_ci(std::vector<double>(40, 2.5));
    EXPECT_DOUBLE_EQ(ci.lo, 2.5);
    EXPECT_DOUBLE_EQ(ci.hi, 2.5);
    EXPECT_THROW(bootstrap_ci(std::vector<double>(29, 1.0)), std::invalid_argument);
}

TEST(Bootstrap, MonotoneInLevel) {
    RandomStream rng(2);
    std::vector<double> x(60);
    for (double &v : x) {
        v = rng.normal();
    }
    Interval a = bootstrap_ci(x, 1000, 0.68, 4);
    Interval b = bootstrap_ci(x, 1000, 0.9545, 4);
    EXPECT_LE(b.lo, a.lo);
    EXPECT_GE(b.hi, a.hi);
}

TEST(Bootstrap, CoverageOfGaussianMean) {
    RandomStream rng(77);
    int covered = 0;
    const int reps = 500;
    for (int r = 0; r < reps; ++r) {
        std::vector<double> x(50);
        for (double &v : x) {
            v = 1.0 + rng.normal();
        }
        Interval ci = bootstrap_ci(x, 1000, 0.9545, 100 + r);
        covered += ci.lo <= 1.0 && 1.0 <= ci.hi;
    }
    double c = static_cast<double>(covered) / reps;
    EXPECT_GE(c, 0.92);
    EXPECT_LE(c, 0.98);
}

TEST(Bootstrap, BandsBracketMean) {
    RandomStream rng(3);
    TimeSeriesEnsemble e;
    for (int i = 0; i < 40; ++i) {
        e.series.push_back({rng.normal(), 1.0 + rng.normal(), 5.0});
    }
    auto bands = bootstrap_bands(e);
    auto m = e.mean();
    for (size_t j = 0; j < m.size(); ++j) {
        EXPECT_LE(bands[j].lo, m[j] + 1e-12);
        EXPECT_GE(bands[j].hi, m[j] - 1e-12);
    }
    EXPECT_DOUBLE_EQ(bands[2].hi - bands[2].lo, 0.0);
}
