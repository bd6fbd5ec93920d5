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
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <thread>

#include "tcg/coarse_grain.hpp"
#include "tcg/liouville.hpp"
#include "tcg/random.hpp"
#include "tcg/stochastic.hpp"
#include "tcg/units.hpp"

namespace tcg::cli {

// ---------------------------------------------------------------- config

Section::Section(const json &j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) {
        throw ConfigError(path_ + ": expected an object");
    }
}

bool Section::has(const std::string &key) const { return j_.contains(key); }

const json &Section::raw(const std::string &key) const {
    used_.insert(key);
    return j_.at(key);
}

double Section::number(const std::string &key) const {
    if (!has(key)) {
        throw ConfigError(path_ + "." + key + ": required");
    }
    const json &v = raw(key);
    if (!v.is_number()) {
        throw ConfigError(path_ + "." + key + ": expected a number");
    }
    double x = v.get<double>();
    if (!std::isfinite(x)) {
        throw ConfigError(path_ + "." + key + ": not finite");
    }
    return x;
}

double Section::number(const std::string &key, double fallback) const {
    return has(key) ? number(key) : fallback;
}

int64_t Section::integer(const std::string &key, int64_t fallback) const {
    if (!has(key)) {
        return fallback;
    }
    const json &v = raw(key);
    if (!v.is_number_integer()) {
        throw ConfigError(path_ + "." + key + ": expected an integer");
    }
    return v.get<int64_t>();
}

std::string Section::text(const std::string &key, const std::string &fallback,
                          const std::set<std::string> &allowed) const {
    if (!has(key)) {
        return fallback;
    }
    const json &v = raw(key);
    if (!v.is_string()) {
        throw ConfigError(path_ + "." + key + ": expected a string");
    }
    std::string s = v.get<std::string>();
    if (!allowed.empty() && !allowed.count(s)) {
        std::string list;
        for (const auto &a : allowed) {
            list += (list.empty() ? "" : "|") + a;
        }
        throw ConfigError(path_ + "." + key + ": expected one of " + list);
    }
    return s;
}

bool Section::flag(const std::string &key, bool fallback) const {
    if (!has(key)) {
        return fallback;
    }
    const json &v = raw(key);
    if (!v.is_boolean()) {
        throw ConfigError(path_ + "." + key + ": expected true or false");
    }
    return v.get<bool>();
}

std::vector<int> Section::integers(const std::string &key, std::vector<int> fallback) const {
    if (!has(key)) {
        return fallback;
    }
    const json &v = raw(key);
    if (!v.is_array()) {
        throw ConfigError(path_ + "." + key + ": expected an array of integers");
    }
    std::vector<int> out;
    for (const auto &e : v) {
        if (!e.is_number_integer()) {
            throw ConfigError(path_ + "." + key + ": expected an array of integers");
        }
        out.push_back(e.get<int>());
    }
    return out;
}

Section Section::child(const std::string &key) const {
    if (!has(key)) {
        throw ConfigError(path_ + "." + key + ": required");
    }
    return Section(raw(key), path_ + "." + key);
}

void Section::finish() const {
    for (const auto &[k, v] : j_.items()) {
        if (!used_.count(k)) {
            throw ConfigError(path_ + "." + k + ": unknown key");
        }
    }
}

OuSum parse_noise(const Section &s) {
    int forms = s.has("one_over_f") + s.has("quasi_static") + s.has("components");
    if (forms != 1) {
        throw ConfigError("noise: give exactly one of one_over_f, quasi_static, components");
    }
    OuSum out;
    if (s.has("one_over_f")) {
        Section o = s.child("one_over_f");
        double fmin = o.number("f_min_hz");
        double fmax = o.number("f_max_hz");
        int64_t n = o.integer("n", 0);
        double p = o.number("p");
        o.finish();
        if (!(fmin > 0.0 && fmax >= fmin && n >= 1 && p > 0.0)) {
            throw ConfigError("noise.one_over_f: need 0 < f_min_hz <= f_max_hz, n >= 1, p > 0");
        }
        out = make_one_over_f(fmin, fmax, static_cast<size_t>(n), p);
    } else if (s.has("quasi_static")) {
        Section o = s.child("quasi_static");
        double p = o.number("p");
        o.finish();
        if (!(p > 0.0)) {
            throw ConfigError("noise.quasi_static.p: must be positive");
        }
        out = quasi_static(p);
    } else {
        const json &list = s.raw("components");
        if (!list.is_array() || list.empty()) {
            throw ConfigError("noise.components: expected a nonempty array");
        }
        for (size_t i = 0; i < list.size(); ++i) {
            Section c(list[i], "noise.components[" + std::to_string(i) + "]");
            if (c.has("gamma_rad_per_ns") == c.has("f0_hz")) {
                throw ConfigError(c.has("f0_hz") ? "noise.components: give gamma_rad_per_ns or f0_hz, not both"
                                                 : "noise.components: gamma_rad_per_ns or f0_hz required");
            }
            double g = c.has("f0_hz") ? hz_to_rad_per_ns(c.number("f0_hz")) : c.number("gamma_rad_per_ns");
            double s2 = c.number("sigma_sq");
            double mu = c.number("mu", 0.0);
            c.finish();
            if (!(g > 0.0 && s2 >= 0.0)) {
                throw ConfigError("noise.components: need a positive rate and sigma_sq >= 0");
            }
            out.components.push_back(OuComponent::ou({g, std::sqrt(s2), mu}));
        }
    }
    s.finish();
    return out;
}

ParityNoiseModel named_noise(const std::string &name) {
    if (name == "one_over_f") {
        return one_over_f_noise();
    }
    if (name == "quasi_static") {
        return quasi_static_noise();
    }
    if (name == "none") {
        return no_noise();
    }
    throw ConfigError("unknown noise model " + name);
}

namespace {

SpinChainConfig parse_chain(const Section &root) {
    SpinChainConfig cfg;
    if (!root.has("chain")) {
        return cfg;
    }
    Section c = root.child("chain");
    cfg.field_tesla = c.number("field_mtesla", cfg.field_tesla * 1e3) * 1e-3;
    cfg.g_factor = c.number("g_factor", cfg.g_factor);
    cfg.pulse_ns = c.number("pulse_ns", cfg.pulse_ns);
    cfg.idle_ns = c.number("idle_ns", cfg.idle_ns);
    cfg.ancilla_first_spin = static_cast<int>(c.integer("ancilla_first_spin", cfg.ancilla_first_spin));
    if (c.has("deltas_mhz")) {
        const json &d = c.raw("deltas_mhz");
        if (!d.is_array()) {
            throw ConfigError("config.chain.deltas_mhz: expected an array of numbers");
        }
        cfg.deltas_mhz.clear();
        for (const auto &v : d) {
            if (!v.is_number()) {
                throw ConfigError("config.chain.deltas_mhz: expected an array of numbers");
            }
            cfg.deltas_mhz.push_back(v.get<double>());
        }
    }
    c.finish();
    try {
        cfg.validate();
    } catch (const std::invalid_argument &e) {
        throw ConfigError(std::string("config.chain: ") + e.what());
    }
    return cfg;
}

size_t trajectory_count(const RunArgs &args, const Section &root, size_t fallback) {
    int64_t n = root.integer("trajectories", static_cast<int64_t>(fallback));
    if (args.trajectories > 0) {
        n = static_cast<int64_t>(args.trajectories);
    }
    if (n < 1) {
        throw ConfigError("trajectories: must be at least 1");
    }
    return static_cast<size_t>(n);
}

size_t positive(const Section &s, const std::string &key, int64_t fallback) {
    int64_t v = s.integer(key, fallback);
    if (v < 1) {
        throw ConfigError("config." + key + ": must be at least 1");
    }
    return static_cast<size_t>(v);
}

double positive_number(const Section &s, const std::string &key, double fallback) {
    double v = s.number(key, fallback);
    if (!(v > 0.0)) {
        throw ConfigError("config." + key + ": must be positive");
    }
    return v;
}

void check_experiment(const Section &root, const std::string &name) {
    std::string e = root.text("experiment", name, {});
    if (e != name) {
        throw ConfigError("config.experiment: '" + e + "' does not match subcommand '" + name + "'");
    }
}

std::ofstream open_output(const std::string &dir, const std::string &name) {
    std::filesystem::create_directories(dir);
    std::ofstream out(std::filesystem::path(dir) / name);
    if (!out) {
        throw std::runtime_error("cannot write " + (std::filesystem::path(dir) / name).string());
    }
    return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Pauli matrices for the single-qubit closed form.
CMat pauli_x() {
    CMat x = CMat::Zero(2, 2);
    x(0, 1) = x(1, 0) = 1.0;
    return x;
}

CMat kron2(const CMat &a, const CMat &b) {
    CMat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

// Natural form of rho -> L rho L - (L^2 rho + rho L^2) / 2 for Hermitian L.
CMat dissipator_natural(const CMat &l) {
    CMat id = CMat::Identity(l.rows(), l.cols());
    CMat l2 = l * l;
    return kron2(l.transpose(), l) - 0.5 * (kron2(id, l2) + kron2(l2.transpose(), id));
}

CMat commutator_natural(const CMat &a) {
    CMat id = CMat::Identity(a.rows(), a.cols());
    return kron2(id, a) - kron2(a.transpose(), id);
}

// Integral of the OU bridge mean over [0, dt] and the double integral of the
// zero-boundary bridge covariance over the square.
double bridge_mean_integral(const OuParams &p, double dt, double x0, double x1) {
    return (x0 + x1) * std::tanh(0.5 * p.gamma * dt) / p.gamma;
}

double bridge_square_integral(const OuParams &p, double dt) {
    double g = p.gamma;
    return p.sigma * p.sigma / (g * g) * (dt - 2.0 * std::tanh(0.5 * g * dt) / g);
}

// Double integral of the stationary autocovariance over [0, t]^2.
double stationary_square_integral(const OuSum &s, double t) {
    double total = 0.0;
    for (const auto &c : s.components) {
        double v = c.stationary_variance();
        if (c.is_quasi_static()) {
            total += v * t * t;
        } else {
            double g = c.params().gamma;
            total += 2.0 * v * (g * t - 1.0 + std::exp(-g * t)) / (g * g);
        }
    }
    return total;
}

double max_abs(const RMat &m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

std::string fmt(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------- workers

unsigned resolve_workers(unsigned requested) {
    if (requested > 0) {
        return requested;
    }
    unsigned h = std::thread::hardware_concurrency();
    return h > 0 ? h : 1;
}

void parallel_for(size_t n, unsigned workers, const std::function<void(size_t)> &fn) {
    workers = std::max(1u, std::min<unsigned>(resolve_workers(workers), static_cast<unsigned>(std::max<size_t>(n, 1))));
    if (workers == 1) {
        for (size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto body = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= n) {
                return;
            }
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
                next = n;
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back(body);
    }
    for (auto &t : pool) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

// ---------------------------------------------------------------- ensembles

ParityEnsemble run_parity_ensemble(const SpinChainConfig &cfg, const ParityNoiseModel &noise,
                                   const ParityOptions &options, uint64_t seed, size_t realizations, unsigned workers,
                                   PrecomputeCache &cache, const GateLibrary &lib) {
    auto t0 = std::chrono::steady_clock::now();
    ParityExperiment exp(cfg, noise, options, cache, lib);
    ParityEnsemble out;
    out.records.resize(realizations);
    parallel_for(realizations, workers, [&](size_t r) { out.records[r] = exp.run(seed, r); });
    for (const auto &rec : out.records) {
        out.outcomes.push_back(rec.outcomes);
    }
    out.seconds = seconds_since(t0);
    return out;
}

std::vector<std::vector<int>> bernoulli_ensemble(double q, size_t rounds, size_t realizations, uint64_t seed) {
    std::vector<std::vector<int>> out;
    for (size_t r = 0; r < realizations; ++r) {
        RandomStream rng(stream_seed(seed, hash_name("bernoulli"), r));
        out.push_back(bernoulli_outcomes(q, rounds, rng));
    }
    return out;
}

SaturationSummary summarize_outcomes(const std::vector<std::vector<int>> &outcomes, size_t resamples,
                                     uint64_t seed) {
    TimeSeriesEnsemble e;
    for (const auto &o : outcomes) {
        e.series.emplace_back(o.begin(), o.end());
    }
    SaturationSummary s;
    s.mean = e.mean();
    for (size_t j = 0; j < s.mean.size(); ++j) {
        s.t.push_back(static_cast<double>(j + 1));
    }
    s.bands = bootstrap_bands(e, resamples, 0.9545, stream_seed(seed, hash_name("bands")));
    try {
        s.fit = fit_saturation(s.t, s.mean);
        s.converged = true;
    } catch (const std::runtime_error &) {
        s.fit.names = {"a", "lambda"};
        s.fit.estimate = RVec::Constant(2, std::nan(""));
        s.fit.standard_error = RVec::Constant(2, std::nan(""));
    }

    RandomStream rng(stream_seed(seed, hash_name("fit-bootstrap")));
    std::uniform_int_distribution<size_t> pick(0, e.series.size() - 1);
    std::vector<double> as, ls;
    std::vector<double> m(s.mean.size());
    for (size_t b = 0; b < resamples; ++b) {
        std::fill(m.begin(), m.end(), 0.0);
        for (size_t i = 0; i < e.series.size(); ++i) {
            const auto &row = e.series[pick(rng.engine())];
            for (size_t j = 0; j < m.size(); ++j) {
                m[j] += row[j];
            }
        }
        for (double &v : m) {
            v /= static_cast<double>(e.series.size());
        }
        try {
            FitResult f = fit_saturation(s.t, m);
            as.push_back(f.value("a"));
            ls.push_back(f.value("lambda"));
        } catch (const std::runtime_error &) {
            // resample without a converged fit: left out of the interval
        }
    }
    auto pct = [](std::vector<double> v) {
        if (v.empty()) {
            return Interval{std::nan(""), std::nan("")};
        }
        std::sort(v.begin(), v.end());
        auto at = [&](double q) {
            double pos = q * static_cast<double>(v.size() - 1);
            size_t i = static_cast<size_t>(pos);
            size_t j = std::min(i + 1, v.size() - 1);
            return v[i] + (pos - static_cast<double>(i)) * (v[j] - v[i]);
        };
        return Interval{at(0.5 * (1.0 - 0.9545)), at(0.5 * (1.0 + 0.9545))};
    };
    s.a_ci = pct(as);
    s.lambda_ci = pct(ls);
    return s;
}

FlipSpectrum flip_spectrum(const std::vector<std::vector<int>> &outcomes, size_t segment_length, size_t resamples,
                           uint64_t seed) {
    std::vector<Spectrum> per;
    WelchOptions w;
    w.segment_length = segment_length;
    for (const auto &o : outcomes) {
        auto flips = parity_flip_series(o);
        per.push_back(welch_psd(std::vector<double>(flips.begin(), flips.end()), 1.0, w));
    }
    FlipSpectrum out;
    out.mean = per.front();
    size_t nf = out.mean.density.size();
    TimeSeriesEnsemble e;
    for (const auto &s : per) {
        e.series.push_back(s.density);
    }
    out.mean.density = e.mean();
    // interior: bins 2 .. below Nyquist. With mean removal and a Hann window
    // the first bin of white noise sits at 5/6 of its true level.
    double f_lo = 1.5 * out.mean.frequency[1];
    double f_hi = out.mean.frequency[segment_length % 2 == 0 ? nf - 2 : nf - 1] + 0.5 * out.mean.frequency[1];
    size_t usable = 0;
    for (size_t k = 2; k < nf; ++k) {
        usable += out.mean.frequency[k] < f_hi && out.mean.density[k] > 0.0;
    }
    out.slope = usable >= 2 ? log_log_slope(out.mean, f_lo, f_hi) : std::nan("");
    out.bands = bootstrap_bands(e, resamples, 0.9545, stream_seed(seed, hash_name("psd-bands")));

    RandomStream rng(stream_seed(seed, hash_name("slope-bootstrap")));
    std::uniform_int_distribution<size_t> pick(0, per.size() - 1);
    std::vector<double> slopes;
    Spectrum tmp = out.mean;
    for (size_t b = 0; b < resamples; ++b) {
        std::fill(tmp.density.begin(), tmp.density.end(), 0.0);
        for (size_t i = 0; i < per.size(); ++i) {
            const auto &d = per[pick(rng.engine())].density;
            for (size_t k = 0; k < nf; ++k) {
                tmp.density[k] += d[k] / static_cast<double>(per.size());
            }
        }
        bool positive_bins = true;
        for (size_t k = 2; k < nf; ++k) {
            if (out.mean.frequency[k] >= f_hi) {
                break;
            }
            positive_bins = positive_bins && tmp.density[k] > 0.0;
        }
        if (positive_bins) {
            slopes.push_back(log_log_slope(tmp, f_lo, f_hi));
        }
    }
    std::sort(slopes.begin(), slopes.end());
    if (slopes.empty()) {
        out.slope_ci = {std::nan(""), std::nan("")};
    } else {
        auto at = [&](double q) { return slopes[static_cast<size_t>(q * static_cast<double>(slopes.size() - 1))]; };
        out.slope_ci = {at(0.5 * (1.0 - 0.9545)), at(0.5 * (1.0 + 0.9545))};
    }
    return out;
}

DecayCurve run_decay_ensemble(const DecayOptions &o, const ParityNoiseModel &noise, uint64_t seed, unsigned workers,
                              PrecomputeCache &cache) {
    // split trajectories into blocks so workers can share the load; each
    // block uses its own seed stream and blocks are merged in order
    size_t blocks = std::min<size_t>(o.trajectories, 16);
    std::vector<DecayCurve> parts(blocks);
    std::vector<size_t> sizes(blocks, o.trajectories / blocks);
    for (size_t b = 0; b < o.trajectories % blocks; ++b) {
        ++sizes[b];
    }
    {
        DecayOptions warm = o;
        warm.trajectories = 1;
        simulate_decay(warm, noise, seed, cache);  // fills the cache before threads start
    }
    parallel_for(blocks, workers, [&](size_t b) {
        DecayOptions ob = o;
        ob.trajectories = sizes[b];
        parts[b] = simulate_decay(ob, noise, stream_seed(seed, hash_name("decay-block"), b), cache);
    });
    // pooled mean and population variance; a block's stderr is sqrt(var / (w - 1))
    DecayCurve c;
    c.t_ns = parts.front().t_ns;
    size_t nt = c.t_ns.size();
    c.probability.assign(nt, 0.0);
    c.std_error.assign(nt, 0.0);
    double total = static_cast<double>(o.trajectories);
    for (size_t k = 0; k < nt; ++k) {
        double mean = 0.0;
        for (size_t b = 0; b < blocks; ++b) {
            mean += static_cast<double>(sizes[b]) * parts[b].probability[k] / total;
        }
        double ss = 0.0;
        for (size_t b = 0; b < blocks; ++b) {
            double w = static_cast<double>(sizes[b]);
            double var_b = std::pow(parts[b].std_error[k], 2) * std::max(w - 1.0, 0.0);
            ss += w * var_b + w * std::pow(parts[b].probability[k] - mean, 2);
        }
        c.probability[k] = mean;
        c.std_error[k] = total > 1.0 ? std::sqrt(ss / total / (total - 1.0)) : 0.0;
    }
    return c;
}

// ---------------------------------------------------------------- commands

int cmd_sample_noise(const RunArgs &args) {
    Section root(args.config, "config");
    check_experiment(root, "sample-noise");
    OuSum noise = parse_noise(root.child("noise"));
    double duration = positive_number(root, "duration_ns", 1e7);
    double dt = positive_number(root, "dt_ns", 50.0);
    size_t segment = positive(root, "welch_segment", 4096);
    size_t dump = static_cast<size_t>(root.integer("dump_samples", 1000));
    double band_lo = root.number("band_f_min_hz", 0.0);
    double band_hi = root.number("band_f_max_hz", 0.0);
    size_t resamples = positive(root, "bootstrap_resamples", 1000);
    size_t n = trajectory_count(args, root, 10);
    root.finish();

    size_t points = static_cast<size_t>(std::floor(duration / dt + 1e-9)) + 1;
    if (points < segment) {
        throw ConfigError("config.welch_segment: longer than the trace");
    }
    std::vector<double> grid(points);
    for (size_t k = 0; k < points; ++k) {
        grid[k] = dt * static_cast<double>(k);
    }
    std::vector<OuSum> channels{noise};
    WelchOptions w;
    w.segment_length = segment;
    std::vector<Spectrum> psd(n);
    std::vector<std::vector<double>> first;
    parallel_for(n, args.workers, [&](size_t r) {
        CoarseTrajectory traj = sample_coarse(channels, grid, stream_seed(args.seed, hash_name("sample-noise"), r));
        std::vector<double> x(points, 0.0);
        for (size_t c = 0; c < traj.num_components(0); ++c) {
            auto s = traj.series(0, c);
            for (size_t k = 0; k < points; ++k) {
                x[k] += s[k];
            }
        }
        psd[r] = welch_psd(x, dt * 1e-9, w);
        if (r == 0) {
            for (size_t c = 0; c < traj.num_components(0); ++c) {
                auto s = traj.series(0, c);
                first.emplace_back(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(std::min(dump, points)));
            }
        }
    });

    auto tout = open_output(args.out, "trajectory.csv");
    tout << "t_ns,channel,component,value\n";
    for (size_t c = 0; c < first.size(); ++c) {
        for (size_t k = 0; k < first[c].size(); ++k) {
            tout << fmt(grid[k]) << ",0," << c << "," << fmt(first[c][k]) << "\n";
        }
    }
    TimeSeriesEnsemble e;
    for (const auto &s : psd) {
        e.series.push_back(s.density);
    }
    Spectrum mean = psd.front();
    mean.density = e.mean();
    std::vector<Interval> bands;
    if (n >= 30) {
        bands = bootstrap_bands(e, resamples, 0.9545, stream_seed(args.seed, hash_name("psd-bands")));
    }
    auto pout = open_output(args.out, "psd.csv");
    pout << "frequency_hz,psd,ci_lo,ci_hi,analytic_psd\n";
    double lo_ratio = std::numeric_limits<double>::infinity(), hi_ratio = 0.0;
    for (size_t k = 1; k < mean.frequency.size(); ++k) {
        double f = mean.frequency[k];
        double a = analytic_psd(noise, f);
        pout << fmt(f) << "," << fmt(mean.density[k]) << "," << fmt(bands.empty() ? std::nan("") : bands[k].lo) << ","
             << fmt(bands.empty() ? std::nan("") : bands[k].hi) << "," << fmt(a) << "\n";
        if (band_hi > band_lo && f >= band_lo && f <= band_hi) {
            lo_ratio = std::min(lo_ratio, mean.density[k] / a);
            hi_ratio = std::max(hi_ratio, mean.density[k] / a);
        }
    }
    auto sout = open_output(args.out, "summary.csv");
    sout << "key,value\n";
    sout << "realizations," << n << "\n";
    if (band_hi > band_lo) {
        sout << "band_slope," << fmt(log_log_slope(mean, band_lo, band_hi)) << "\n";
        sout << "band_min_ratio," << fmt(lo_ratio) << "\n";
        sout << "band_max_ratio," << fmt(hi_ratio) << "\n";
    }
    return 0;
}

namespace {

// Entries that are deterministic across paths carry a standard error at
// rounding level; z-scores use this floor instead.
constexpr double kSeFloor = 1e-10;

struct OracleRow {
    double x_start = 0.0, x_end = 0.0;
    double engine_vs_closed = std::nan("");
    double engine_vs_oracle = 0.0;
    double oracle_se_max = 0.0;
    double max_z = 0.0;
};

void write_oracle_rows(const std::string &dir, const std::vector<OracleRow> &rows) {
    auto out = open_output(dir, "report.csv");
    out << "segment,x_start,x_end,engine_vs_closed,engine_vs_oracle,oracle_se_max,max_z\n";
    for (size_t k = 0; k < rows.size(); ++k) {
        const auto &r = rows[k];
        out << k << "," << fmt(r.x_start) << "," << fmt(r.x_end) << "," << fmt(r.engine_vs_closed) << ","
            << fmt(r.engine_vs_oracle) << "," << fmt(r.oracle_se_max) << "," << fmt(r.max_z) << "\n";
    }
}

OracleRow compare_with_oracle(const RMat &engine, const std::vector<ChannelBoundary> &boundary,
                              const OracleResult &o) {
    OracleRow row;
    row.x_start = boundary[0][0].first;
    row.x_end = boundary[0][0].second;
    RMat diff = engine - o.mean;
    row.engine_vs_oracle = max_abs(diff);
    row.oracle_se_max = max_abs(o.std_error);
    for (Eigen::Index i = 0; i < diff.size(); ++i) {
        row.max_z = std::max(row.max_z, std::abs(diff.data()[i]) / std::max(o.std_error.data()[i], kSeFloor));
    }
    return row;
}

}  // namespace

int cmd_single_qubit(const RunArgs &args) {
    Section root(args.config, "config");
    check_experiment(root, "single-qubit");
    double gamma = positive_number(root, "gamma_rad_per_ns", 0.05);
    double sd = root.number("stationary_sd_rad_per_ns", 0.02);
    double omega = root.number("omega_mhz", 0.0);
    double seg_ns = positive_number(root, "segment_ns", 40.0);
    size_t segments = positive(root, "segments", 4);
    size_t paths = positive(root, "oracle_paths", 10000);
    double fine_dt = positive_number(root, "oracle_dt_ns", 0.1);
    bool antithetic = root.flag("antithetic", true);
    root.finish();
    if (sd < 0.0) {
        throw ConfigError("config.stationary_sd_rad_per_ns: must be non-negative");
    }

    OperatorBasis basis = pauli_basis(1);
    StructureConstants sc(basis);
    CMat x = pauli_x();
    CMat z = CMat::Zero(2, 2);
    z(0, 0) = 1.0;
    z(1, 1) = -1.0;
    OuParams p{gamma, sd * std::sqrt(2.0 * gamma), 0.0};
    OuSum process;
    process.components.push_back(OuComponent::ou(p));
    SegmentSpec spec;
    spec.durations = {seg_ns};
    spec.hamiltonians = {mhz_to_rad_per_ns(omega) * z / 2.0};
    spec.channels.push_back({"eta", {x / 2.0}, process});
    PrecomputeCache cache(args.cache);
    const SegmentPrecompute &pre = cache.get(spec, basis, sc);

    std::vector<double> grid(segments + 1);
    for (size_t k = 0; k <= segments; ++k) {
        grid[k] = seg_ns * static_cast<double>(k);
    }
    std::vector<OuSum> channels{process};
    CoarseTrajectory traj = sample_coarse(channels, grid, stream_seed(args.seed, hash_name("single-qubit")));
    std::vector<OracleRow> rows(segments);
    std::vector<RMat> generators(segments);
    parallel_for(segments, args.workers, [&](size_t k) {
        std::vector<ChannelBoundary> b{{{traj.value(0, 0, k), traj.value(0, 0, k + 1)}}};
        RMat gen = assemble_generator(pre, sc, b);
        generators[k] = gen;
        RMat engine = segment_map(pre, gen);
        rows[k] = compare_with_oracle(
            engine, b,
            oracle_average(spec, basis, b, paths, fine_dt, stream_seed(args.seed, hash_name("oracle"), k), antithetic));
        if (omega == 0.0) {
            double theta = bridge_mean_integral(p, seg_ns, b[0][0].first, b[0][0].second);
            double v = bridge_square_integral(p, seg_ns);
            CMat l = cplx(0.0, -0.5 * theta) * commutator_natural(x) + 0.25 * v * dissipator_natural(x);
            RMat closed = expm(from_natural(l, basis));
            rows[k].engine_vs_closed = max_abs(engine - closed);
        }
    });
    write_oracle_rows(args.out, rows);
    auto g = open_output(args.out, "generator.csv");
    write_generator_csv(g, generators.front());
    return 0;
}

int cmd_two_qubit(const RunArgs &args) {
    Section root(args.config, "config");
    check_experiment(root, "two-qubit");
    double j_mhz = root.number("exchange_mhz", 20.0);
    double gamma = positive_number(root, "gamma_rad_per_ns", 0.05);
    double sd = root.number("stationary_sd", 0.01);
    double seg_ns = positive_number(root, "segment_ns", 40.0);
    size_t segments = positive(root, "segments", 3);
    size_t paths = positive(root, "oracle_paths", 4000);
    double fine_dt = positive_number(root, "oracle_dt_ns", 0.1);
    bool antithetic = root.flag("antithetic", true);
    root.finish();

    OperatorBasis basis = singlet_triplet_basis();
    StructureConstants sc(basis);
    CMat ss = exchange_operator(2, 0, 1);
    CMat l = mhz_to_rad_per_ns(j_mhz) * ss;
    OuParams p{gamma, sd * std::sqrt(2.0 * gamma), 0.0};
    OuSum process;
    process.components.push_back(OuComponent::ou(p));
    SegmentSpec spec;
    spec.durations = {seg_ns};
    spec.hamiltonians = {l};
    spec.channels.push_back({"xi", {l}, process});
    PrecomputeCache cache(args.cache);
    const SegmentPrecompute &pre = cache.get(spec, basis, sc);

    // candidate dissipators: V D[L] against V sqrt(B0^2 + B1^2) D[L]
    double v = bridge_square_integral(p, seg_ns);
    double j = mhz_to_rad_per_ns(j_mhz);
    double root_sum = std::sqrt(std::pow(0.75 * j, 2) + 3.0 * std::pow(0.25 * j, 2));
    RMat cand_sq = from_natural(v * dissipator_natural(l), basis);
    RMat cand_root = root_sum * cand_sq;
    double scale = std::max(max_abs(cand_sq), 1e-300);
    double off = 0.0;
    for (Eigen::Index i = 0; i < cand_sq.size(); ++i) {
        if (std::abs(cand_sq.data()[i]) <= 1e-14 * scale) {
            off = std::max(off, std::abs(pre.gamma_s.data()[i]));
        }
    }

    std::vector<double> grid(segments + 1);
    for (size_t k = 0; k <= segments; ++k) {
        grid[k] = seg_ns * static_cast<double>(k);
    }
    std::vector<OuSum> channels{process};
    CoarseTrajectory traj = sample_coarse(channels, grid, stream_seed(args.seed, hash_name("two-qubit")));
    std::vector<OracleRow> rows(segments);
    std::vector<double> coherent_err(segments, 0.0);
    std::vector<double> z_sq(segments, 0.0), z_root(segments, 0.0);
    RVec lcoef = basis.coefficients(l);
    std::vector<RMat> generators(segments);
    parallel_for(segments, args.workers, [&](size_t k) {
        std::vector<ChannelBoundary> b{{{traj.value(0, 0, k), traj.value(0, 0, k + 1)}}};
        RMat gen = assemble_generator(pre, sc, b);
        generators[k] = gen;
        RMat engine = segment_map(pre, gen);
        OracleResult o = oracle_average(spec, basis, b, paths, fine_dt,
                                        stream_seed(args.seed, hash_name("oracle"), k), antithetic);
        rows[k] = compare_with_oracle(engine, b, o);

        double theta = bridge_mean_integral(p, seg_ns, b[0][0].first, b[0][0].second);
        RVec phi = coherent_vector(pre, b);
        coherent_err[k] = (phi - theta * lcoef).cwiseAbs().maxCoeff();
        RMat coh = gen - pre.gamma_s - pre.delta_s;
        auto zmax = [&](const RMat &cand) {
            RMat m = pre.ideal * expm(coh + cand);
            double z = 0.0;
            for (Eigen::Index i = 0; i < m.size(); ++i) {
                z = std::max(z, std::abs(m.data()[i] - o.mean.data()[i]) / std::max(o.std_error.data()[i], kSeFloor));
            }
            return z;
        };
        z_sq[k] = zmax(cand_sq);
        z_root[k] = zmax(cand_root);
    });
    write_oracle_rows(args.out, rows);
    auto g = open_output(args.out, "generator.csv");
    write_generator_csv(g, generators.front());

    auto out = open_output(args.out, "structure.csv");
    out << "key,value\n";
    out << "delta_s_max_abs," << fmt(max_abs(pre.delta_s)) << "\n";
    out << "gamma_s_off_structure_max_abs," << fmt(off) << "\n";
    out << "gamma_s_vs_sum_of_squares_rel," << fmt(max_abs(pre.gamma_s - cand_sq) / scale) << "\n";
    out << "gamma_s_vs_root_sum_rel," << fmt(max_abs(pre.gamma_s - cand_root) / scale) << "\n";
    out << "oracle_max_z_sum_of_squares," << fmt(*std::max_element(z_sq.begin(), z_sq.end())) << "\n";
    out << "oracle_max_z_root_sum," << fmt(*std::max_element(z_root.begin(), z_root.end())) << "\n";
    out << "coherent_minus_exchange_shift_max_abs,"
        << fmt(*std::max_element(coherent_err.begin(), coherent_err.end())) << "\n";
    std::set<double> rates;
    for (Eigen::Index r = 0; r < pre.gamma_s.rows(); ++r) {
        double g_rr = pre.gamma_s(r, r);
        if (std::abs(g_rr) > 1e-12 * scale) {
            rates.insert(-g_rr / seg_ns);
        }
    }
    size_t idx = 0;
    for (double rate : rates) {
        out << "coherence_decay_rate_per_ns_" << idx++ << "," << fmt(rate) << "\n";
    }
    return 0;
}

int cmd_parity(const RunArgs &args) {
    Section root(args.config, "config");
    check_experiment(root, "parity");
    std::string model = root.text("noise_model", "one_over_f", {"one_over_f", "quasi_static", "none", "bernoulli"});
    std::string mode = root.text("mode", "finite", {"finite", "instantaneous", "perfect_measurement"});
    size_t rounds = positive(root, "rounds", 100);
    double coarse = positive_number(root, "coarse_ns", 40.0);
    double q = root.number("bernoulli_q", 3e-3);
    size_t segment = positive(root, "welch_segment", 30);
    std::vector<int> bits = root.integers("data_bits", {0, 0});
    size_t resamples = positive(root, "bootstrap_resamples", 1000);
    std::string lib_path = root.text("gate_library", "", {});
    bool check = root.flag("check_states", false);
    SpinChainConfig cfg = parse_chain(root);
    size_t n = trajectory_count(args, root, 400);
    root.finish();
    if (bits.size() != 2 || (bits[0] != 0 && bits[0] != 1) || (bits[1] != 0 && bits[1] != 1)) {
        throw ConfigError("config.data_bits: expected two bits");
    }
    if (!(q >= 0.0 && q <= 1.0)) {
        throw ConfigError("config.bernoulli_q: must lie in [0, 1]");
    }
    if (rounds < 10) {
        throw ConfigError("config.rounds: the saturation fit needs at least 10 rounds");
    }
    if (n < 30) {
        throw ConfigError("trajectories: bootstrap intervals need at least 30 realizations");
    }

    std::vector<std::vector<int>> outcomes;
    std::vector<MeasurementRecord> records;
    if (model == "bernoulli") {
        outcomes = bernoulli_ensemble(q, rounds, n, args.seed);
    } else {
        ParityOptions o;
        o.mode = mode == "finite"          ? ParityMode::finite
                 : mode == "instantaneous" ? ParityMode::instantaneous
                                           : ParityMode::perfect_measurement;
        o.rounds = rounds;
        o.coarse_ns = coarse;
        o.data_bits = {bits[0], bits[1]};
        o.check_states = check;
        GateLibrary lib;
        try {
            lib = lib_path.empty() ? default_gate_library() : load_gate_library(lib_path);
        } catch (const std::exception &e) {
            throw ConfigError(std::string("config.gate_library: ") + e.what());
        }
        PrecomputeCache cache(args.cache);
        ParityEnsemble ens;
        try {
            ens = run_parity_ensemble(cfg, named_noise(model), o, args.seed, n, args.workers, cache, lib);
        } catch (const std::invalid_argument &e) {
            throw ConfigError(e.what());
        }
        outcomes = std::move(ens.outcomes);
        records = std::move(ens.records);
        std::cout << "parity: " << n << " realizations in " << ens.seconds << " s\n";
    }

    auto oout = open_output(args.out, "outcomes.csv");
    oout << "realization,round,outcome,p0,parity\n";
    for (size_t r = 0; r < outcomes.size(); ++r) {
        for (size_t j = 0; j < outcomes[r].size(); ++j) {
            oout << r << "," << j + 1 << "," << outcomes[r][j] << ","
                 << fmt(records.empty() ? std::nan("") : records[r].p0[j]) << ","
                 << fmt(records.empty() ? std::nan("") : records[r].parity[j]) << "\n";
        }
    }
    SaturationSummary sat = summarize_outcomes(outcomes, resamples, args.seed);
    auto mout = open_output(args.out, "mean.csv");
    mout << "round,mean,ci_lo,ci_hi\n";
    for (size_t j = 0; j < sat.mean.size(); ++j) {
        mout << j + 1 << "," << fmt(sat.mean[j]) << "," << fmt(sat.bands[j].lo) << "," << fmt(sat.bands[j].hi)
             << "\n";
    }
    auto fout = open_output(args.out, "fit.csv");
    const std::string method =
        sat.converged ? "least squares; bootstrap percentile 95.45%" : "least squares did not converge";
    fout << "param,estimate,stderr,ci_lo,ci_hi,method\n";
    fout << "a," << fmt(sat.fit.value("a")) << "," << fmt(sat.fit.error("a")) << "," << fmt(sat.a_ci.lo) << ","
         << fmt(sat.a_ci.hi) << "," << method << "\n";
    fout << "lambda_per_round," << fmt(sat.fit.value("lambda")) << "," << fmt(sat.fit.error("lambda")) << ","
         << fmt(sat.lambda_ci.lo) << "," << fmt(sat.lambda_ci.hi) << "," << method << "\n";

    FlipSpectrum fs = flip_spectrum(outcomes, segment, resamples, args.seed);
    auto pout = open_output(args.out, "psd.csv");
    pout << "frequency_per_round,psd,ci_lo,ci_hi\n";
    for (size_t k = 0; k < fs.mean.frequency.size(); ++k) {
        pout << fmt(fs.mean.frequency[k]) << "," << fmt(fs.mean.density[k]) << "," << fmt(fs.bands[k].lo) << ","
             << fmt(fs.bands[k].hi) << "\n";
    }
    auto sout = open_output(args.out, "summary.csv");
    sout << "key,value\n";
    sout << "realizations," << n << "\n";
    sout << "rounds," << rounds << "\n";
    sout << "psd_interior_slope," << fmt(fs.slope) << "\n";
    sout << "psd_slope_ci_lo," << fmt(fs.slope_ci.lo) << "\n";
    sout << "psd_slope_ci_hi," << fmt(fs.slope_ci.hi) << "\n";
    return 0;
}

int cmd_calibrate(const RunArgs &args) {
    Section root(args.config, "config");
    check_experiment(root, "calibrate");
    std::string kind = root.text("kind", "free_induction", {"free_induction", "exchange"});
    std::string model = root.text("noise_model", "one_over_f", {"one_over_f", "quasi_static", "none"});
    bool ex = kind == "exchange";
    DecayOptions o;
    o.kind = ex ? DecayKind::exchange : DecayKind::free_induction;
    o.field_tesla = root.number("field_mtesla", 0.05) * 1e-3;
    o.exchange_mhz = root.number("exchange_mhz", 100.0);
    o.step_ns = positive_number(root, "step_ns", ex ? 2.5 : 100.0);
    o.steps = positive(root, "steps", ex ? 600 : 100);
    o.trajectories = trajectory_count(args, root, 1000);
    root.finish();
    ParityNoiseModel noise = named_noise(model);

    PrecomputeCache cache(args.cache);
    DecayCurve c = run_decay_ensemble(o, noise, args.seed, args.workers, cache);
    size_t nt = c.t_ns.size();

    auto dout = open_output(args.out, "decay.csv");
    dout << "t_ns,probability,stderr,analytic\n";
    double j = mhz_to_rad_per_ns(o.exchange_mhz);
    for (size_t k = 0; k < nt; ++k) {
        double t = c.t_ns[k];
        double a = ex ? 0.625 + 0.375 * std::cos(j * t) * std::exp(-0.5 * j * j * stationary_square_integral(noise.exchange, t))
                      : 0.5 * (1.0 + std::exp(-stationary_square_integral(noise.magnetic, t)));
        dout << fmt(t) << "," << fmt(c.probability[k]) << "," << fmt(c.std_error[k]) << "," << fmt(a) << "\n";
    }
    FitResult f = fit_t2star(c.t_ns, c.probability, ex ? DecayModel::exchange : DecayModel::free_induction,
                             o.exchange_mhz * 1e-3);
    auto fout = open_output(args.out, "fit.csv");
    fout << "param,estimate,stderr,method\n";
    fout << "t2star_ns," << fmt(f.value("T")) << "," << fmt(f.error("T")) << ",least squares\n";
    fout << "b," << fmt(f.value("b")) << "," << fmt(f.error("b")) << ",least squares\n";
    if (ex) {
        fout << "a," << fmt(f.value("a")) << "," << fmt(f.error("a")) << ",least squares\n";
    }
    return 0;
}

int cmd_compare_coarse(const RunArgs &args) {
    Section root(args.config, "config");
    check_experiment(root, "compare-coarse");
    std::string model = root.text("noise_model", "one_over_f", {"one_over_f", "quasi_static", "none"});
    size_t rounds = positive(root, "rounds", 100);
    double ca = positive_number(root, "coarse_a_ns", 40.0);
    double cb = positive_number(root, "coarse_b_ns", 120.0);
    size_t resamples = positive(root, "bootstrap_resamples", 1000);
    SpinChainConfig cfg = parse_chain(root);
    size_t n = trajectory_count(args, root, 400);
    root.finish();
    if (n < 30 || rounds < 10) {
        throw ConfigError("compare-coarse: need at least 30 trajectories and 10 rounds");
    }
    ParityNoiseModel noise = named_noise(model);
    ParityOptions o;
    o.rounds = rounds;
    PrecomputeCache cache(args.cache);
    std::vector<ParityEnsemble> runs;
    for (double c : {ca, cb}) {
        o.coarse_ns = c;
        try {
            runs.push_back(run_parity_ensemble(cfg, noise, o, args.seed, n, args.workers, cache));
        } catch (const std::invalid_argument &e) {
            throw ConfigError(e.what());
        }
        std::cout << "compare-coarse: coarse " << c << " ns took " << runs.back().seconds << " s\n";
    }
    SaturationSummary sa = summarize_outcomes(runs[0].outcomes, resamples, args.seed);
    SaturationSummary sb = summarize_outcomes(runs[1].outcomes, resamples, args.seed);
    auto out = open_output(args.out, "compare.csv");
    out << "round,mean_a,ci_lo_a,ci_hi_a,mean_b,ci_lo_b,ci_hi_b,overlap\n";
    size_t overlap = 0;
    for (size_t j = 0; j < rounds; ++j) {
        bool ov = sa.bands[j].lo <= sb.bands[j].hi && sb.bands[j].lo <= sa.bands[j].hi;
        overlap += ov;
        out << j + 1 << "," << fmt(sa.mean[j]) << "," << fmt(sa.bands[j].lo) << "," << fmt(sa.bands[j].hi) << ","
            << fmt(sb.mean[j]) << "," << fmt(sb.bands[j].lo) << "," << fmt(sb.bands[j].hi) << "," << ov << "\n";
    }
    auto sout = open_output(args.out, "summary.csv");
    sout << "key,value\n";
    sout << "coarse_a_ns," << fmt(ca) << "\ncoarse_b_ns," << fmt(cb) << "\n";
    sout << "overlap_fraction," << fmt(static_cast<double>(overlap) / static_cast<double>(rounds)) << "\n";
    sout << "lambda_a," << fmt(sa.fit.value("lambda")) << "\nlambda_b," << fmt(sb.fit.value("lambda")) << "\n";
    return 0;
}

int cmd_gate_library(const RunArgs &args) {
    Section root(args.config, "config");
    check_experiment(root, "gate-library");
    double jmax = positive_number(root, "max_exchange_mhz", 150.0);
    bool robust = root.flag("robust", true);
    CalibrationOptions o = robust ? robust_calibration_options() : CalibrationOptions{};
    o.starts = static_cast<int>(positive(root, "starts", static_cast<int64_t>(o.starts)));
    std::set<std::string> only;
    if (root.has("gates")) {
        const json &g = root.raw("gates");
        if (!g.is_array()) {
            throw ConfigError("config.gates: expected an array of gate names");
        }
        for (const auto &e : g) {
            if (!e.is_string()) {
                throw ConfigError("config.gates: expected an array of gate names");
            }
            only.insert(e.get<std::string>());
        }
    }
    SpinChainConfig cfg = parse_chain(root);
    root.finish();
    o.seed = args.seed;
    GateLibrary lib;
    lib.deltas_mhz = cfg.deltas_mhz;
    lib.pulse_ns = cfg.pulse_ns;
    lib.idle_ns = cfg.idle_ns;
    lib.max_exchange_mhz = jmax;
    auto targets = standard_calibration_targets(cfg);
    if (!only.empty()) {
        std::erase_if(targets, [&](const CalibrationTarget &t) { return !only.count(t.name); });
        if (targets.size() != only.size()) {
            throw ConfigError("config.gates: unknown gate name");
        }
    }
    std::vector<GateDefinition> defs(targets.size());
    parallel_for(targets.size(), args.workers,
                 [&](size_t i) { defs[i] = calibrate_gate(targets[i], cfg, jmax, o); });
    for (auto &d : defs) {
        if (d.infidelity > 1e-4) {
            throw std::runtime_error("gate-library: " + d.name + " did not reach the fidelity bound");
        }
        std::cout << d.name << ": infidelity " << d.infidelity << "\n";
        lib.gates[d.name] = std::move(d);
    }
    auto out = open_output(args.out, "gate_library.json");
    write_gate_library(out, lib);
    return 0;
}

}  // namespace tcg::cli
