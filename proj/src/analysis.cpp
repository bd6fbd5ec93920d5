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

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <random>
#include <stdexcept>

#include <unsupported/Eigen/FFT>

#include "tcg/least_squares.hpp"
#include "tcg/random.hpp"

namespace tcg {

namespace {

void require(bool ok, const char *msg) {
    if (!ok) {
        throw std::invalid_argument(msg);
    }
}

FitResult finish_fit(std::vector<std::string> names, const LmResult &r, const RMat &jac) {
    if (!r.converged) {
        throw std::runtime_error("fit did not converge");
    }
    FitResult out;
    out.names = std::move(names);
    out.estimate = r.x;
    out.iterations = r.iterations;
    out.residual_norm = r.residual.norm();
    Eigen::Index n = r.residual.size();
    Eigen::Index k = r.x.size();
    double s2 = n > k ? r.residual.squaredNorm() / static_cast<double>(n - k) : 0.0;
    out.covariance = s2 * (jac.transpose() * jac).completeOrthogonalDecomposition().pseudoInverse();
    out.standard_error = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    return out;
}

}  // namespace

bool TimeSeriesEnsemble::rectangular() const {
    for (const auto &s : series) {
        if (s.size() != series.front().size()) {
            return false;
        }
    }
    return true;
}

size_t TimeSeriesEnsemble::length() const {
    require(rectangular(), "TimeSeriesEnsemble: ragged series");
    return series.empty() ? 0 : series.front().size();
}

std::vector<double> TimeSeriesEnsemble::mean() const {
    std::vector<double> m(length(), 0.0);
    for (const auto &s : series) {
        for (size_t j = 0; j < m.size(); ++j) {
            m[j] += s[j];
        }
    }
    for (double &v : m) {
        v /= static_cast<double>(series.size());
    }
    return m;
}

double FitResult::value(const std::string &name) const {
    for (size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) {
            return estimate(static_cast<Eigen::Index>(i));
        }
    }
    throw std::out_of_range("FitResult: no parameter " + name);
}

double FitResult::error(const std::string &name) const {
    for (size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) {
            return standard_error(static_cast<Eigen::Index>(i));
        }
    }
    throw std::out_of_range("FitResult: no parameter " + name);
}

std::vector<int> parity_flip_series(const std::vector<int> &outcomes) {
    require(!outcomes.empty(), "parity_flip_series: empty input");
    std::vector<int> out(outcomes.size(), 0);
    for (size_t j = 1; j < outcomes.size(); ++j) {
        out[j] = outcomes[j] != outcomes[j - 1] ? 1 : 0;
    }
    return out;
}

Spectrum welch_psd(const std::vector<double> &x, double spacing, const WelchOptions &options) {
    size_t len = options.segment_length;
    require(len >= 2, "welch_psd: segment length must be at least 2");
    require(x.size() >= len, "welch_psd: series shorter than one segment");
    require(spacing > 0.0, "welch_psd: spacing must be positive");
    require(options.overlap >= 0.0 && options.overlap < 1.0, "welch_psd: overlap must lie in [0, 1)");
    size_t step = std::max<size_t>(1, static_cast<size_t>(std::lround(len * (1.0 - options.overlap))));
    std::vector<double> w(len, 1.0);
    if (options.hann) {
        for (size_t i = 0; i < len; ++i) {
            // periodic Hann
            w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / static_cast<double>(len));
        }
    }
    double wsum = 0.0;
    for (double v : w) {
        wsum += v * v;
    }
    size_t nf = len / 2 + 1;
    Spectrum s;
    s.frequency.resize(nf);
    s.density.assign(nf, 0.0);
    for (size_t k = 0; k < nf; ++k) {
        s.frequency[k] = k / (len * spacing);
    }
    size_t count = 0;
    std::vector<double> seg(len);
    std::vector<cplx> spec;
    Eigen::FFT<double> fft;
    for (size_t start = 0; start + len <= x.size(); start += step) {
        double mean = 0.0;
        if (options.remove_mean) {
            for (size_t i = 0; i < len; ++i) {
                mean += x[start + i];
            }
            mean /= static_cast<double>(len);
        }
        for (size_t i = 0; i < len; ++i) {
            seg[i] = (x[start + i] - mean) * w[i];
        }
        fft.fwd(spec, seg);
        for (size_t k = 0; k < nf; ++k) {
            double p = std::norm(spec[k]) * spacing / wsum;
            bool edge = k == 0 || (len % 2 == 0 && k == len / 2);
            s.density[k] += edge ? p : 2.0 * p;
        }
        ++count;
    }
    for (double &v : s.density) {
        v /= static_cast<double>(count);
    }
    return s;
}

double log_log_slope(const Spectrum &s, double f_lo, double f_hi) {
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    int n = 0;
    for (size_t k = 0; k < s.frequency.size(); ++k) {
        double f = s.frequency[k];
        if (f < f_lo || f > f_hi || f <= 0.0 || s.density[k] <= 0.0) {
            continue;
        }
        double lx = std::log10(f);
        double ly = std::log10(s.density[k]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++n;
    }
    require(n >= 2, "log_log_slope: fewer than two bins in range");
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

FitResult fit_saturation(const std::vector<double> &t, const std::vector<double> &y) {
    require(t.size() == y.size(), "fit_saturation: size mismatch");
    require(y.size() >= 10, "fit_saturation: need at least 10 points");
    Eigen::Index n = static_cast<Eigen::Index>(t.size());
    auto residual = [&](const RVec &p) {
        RVec r(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            r(i) = p(0) * (1.0 - std::exp(-2.0 * p(1) * t[i])) - y[i];
        }
        return r;
    };
    auto jacobian = [&](const RVec &p) {
        RMat j(n, 2);
        for (Eigen::Index i = 0; i < n; ++i) {
            double e = std::exp(-2.0 * p(1) * t[i]);
            j(i, 0) = 1.0 - e;
            j(i, 1) = 2.0 * p(0) * t[i] * e;
        }
        return j;
    };
    RVec p0(2);
    p0(0) = y.back();
    if (std::abs(p0(0)) < 1e-12) {
        // nothing to fit: a = 0 with lambda undetermined
        FitResult out;
        out.names = {"a", "lambda"};
        out.estimate = RVec::Zero(2);
        RVec r = residual(out.estimate);
        out.residual_norm = r.norm();
        out.covariance = RMat::Zero(2, 2);
        out.covariance(0, 0) = r.squaredNorm() / std::max<double>(1.0, n - 2.0) / static_cast<double>(n);
        out.standard_error = out.covariance.diagonal().cwiseSqrt();
        return out;
    }
    // early slope through the origin on the first tenth of the points
    size_t early = std::max<size_t>(2, t.size() / 10);
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < early; ++i) {
        num += t[i] * y[i];
        den += t[i] * t[i];
    }
    double slope = den > 0.0 ? num / den : 0.0;
    p0(1) = slope / (2.0 * p0(0));
    if (!(p0(1) > 0.0)) {
        p0(1) = 1.0 / (t.back() - t.front() + 1.0);
    }
    LmOptions opt;
    opt.max_iterations = 200;
    LmResult r = levenberg_marquardt(residual, jacobian, p0, opt);
    return finish_fit({"a", "lambda"}, r, jacobian(r.x));
}

FitResult fit_t2star(const std::vector<double> &t, const std::vector<double> &p, DecayModel model, double j_ghz,
                     double t_guess) {
    require(t.size() == p.size() && t.size() >= 4, "fit_t2star: need matching inputs of length >= 4");
    Eigen::Index n = static_cast<Eigen::Index>(t.size());
    bool ex = model == DecayModel::exchange;
    double w = 2.0 * std::numbers::pi * j_ghz;
    // parameters: T, b[, a]
    auto residual = [&](const RVec &q) {
        RVec r(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            double e = std::exp(-std::pow(t[i] / std::abs(q(0)), q(1)));
            r(i) = ex ? q(2) * e * std::cos(w * t[i]) + 1.0 - q(2) - p[i] : 0.5 * (1.0 + e) - p[i];
        }
        return r;
    };
    auto jacobian = [&](const RVec &q) {
        RMat jm(n, q.size());
        double tt = std::abs(q(0));
        for (Eigen::Index i = 0; i < n; ++i) {
            double x = t[i] / tt;
            double xb = x > 0.0 ? std::pow(x, q(1)) : 0.0;
            double e = std::exp(-xb);
            double scale = ex ? q(2) * std::cos(w * t[i]) : 0.5;
            jm(i, 0) = scale * e * xb * q(1) / tt * (q(0) < 0.0 ? -1.0 : 1.0);
            jm(i, 1) = x > 0.0 ? -scale * e * xb * std::log(x) : 0.0;
            if (ex) {
                jm(i, 2) = e * std::cos(w * t[i]) - 1.0;
            }
        }
        return jm;
    };
    RVec q0(ex ? 3 : 2);
    q0(1) = 2.0;
    if (ex) {
        q0(2) = 0.375;
    }
    if (t_guess > 0.0) {
        q0(0) = t_guess;
    } else {
        double best = std::numeric_limits<double>::infinity();
        double span = t.back();
        for (int k = 0; k <= 60; ++k) {
            q0(0) = span * std::pow(10.0, -2.0 + 3.0 * k / 60.0);
            double c = residual(q0).squaredNorm();
            if (c < best) {
                best = c;
                t_guess = q0(0);
            }
        }
        q0(0) = t_guess;
    }
    LmOptions opt;
    opt.max_iterations = 200;
    LmResult r = levenberg_marquardt(residual, jacobian, q0, opt);
    r.x(0) = std::abs(r.x(0));
    std::vector<std::string> names{"T", "b"};
    if (ex) {
        names.push_back("a");
    }
    return finish_fit(names, r, jacobian(r.x));
}

namespace {

Interval percentile(std::vector<double> v, double level) {
    std::sort(v.begin(), v.end());
    auto at = [&](double q) {
        double pos = q * static_cast<double>(v.size() - 1);
        size_t i = static_cast<size_t>(std::floor(pos));
        size_t j = std::min(i + 1, v.size() - 1);
        double f = pos - static_cast<double>(i);
        return v[i] * (1.0 - f) + v[j] * f;
    };
    return {at(0.5 * (1.0 - level)), at(0.5 * (1.0 + level))};
}

}  // namespace

Interval bootstrap_ci(const std::vector<double> &values, size_t resamples, double level, uint64_t seed) {
    require(values.size() >= 30, "bootstrap_ci: need at least 30 realizations");
    require(level > 0.0 && level < 1.0, "bootstrap_ci: level must lie in (0, 1)");
    require(resamples >= 2, "bootstrap_ci: need at least two resamples");
    RandomStream rng(seed);
    std::uniform_int_distribution<size_t> pick(0, values.size() - 1);
    std::vector<double> means(resamples);
    for (size_t b = 0; b < resamples; ++b) {
        double s = 0.0;
        for (size_t i = 0; i < values.size(); ++i) {
            s += values[pick(rng.engine())];
        }
        means[b] = s / static_cast<double>(values.size());
    }
    return percentile(std::move(means), level);
}

std::vector<Interval> bootstrap_bands(const TimeSeriesEnsemble &e, size_t resamples, double level, uint64_t seed) {
    size_t len = e.length();
    size_t n = e.series.size();
    require(n >= 30, "bootstrap_bands: need at least 30 realizations");
    RandomStream rng(seed);
    std::uniform_int_distribution<size_t> pick(0, n - 1);
    std::vector<std::vector<double>> means(len, std::vector<double>(resamples, 0.0));
    std::vector<size_t> idx(n);
    for (size_t b = 0; b < resamples; ++b) {
        for (auto &i : idx) {
            i = pick(rng.engine());
        }
        for (size_t j = 0; j < len; ++j) {
            double s = 0.0;
            for (size_t i : idx) {
                s += e.series[i][j];
            }
            means[j][b] = s / static_cast<double>(n);
        }
    }
    std::vector<Interval> out(len);
    for (size_t j = 0; j < len; ++j) {
        out[j] = percentile(std::move(means[j]), level);
    }
    return out;
}

}  // namespace tcg
