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

#include "tcg/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace tcg {

namespace {

void require(bool ok, const char *msg) {
    if (!ok) {
        throw std::invalid_argument(msg);
    }
}

// sinh(x) / sinh(z) for 0 <= x <= z, written so that neither factor overflows.
double sinh_ratio(double x, double z) {
    if (x <= 0.0) {
        return 0.0;
    }
    if (x >= z) {
        return 1.0;
    }
    return std::exp(x - z) * std::expm1(-2.0 * x) / std::expm1(-2.0 * z);
}

// Clamps t into [a, b] when it lies within rounding distance; throws otherwise.
double clamp_to_segment(double t, double a, double b) {
    double tol = 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
    if (t < a - tol || t > b + tol) {
        throw std::out_of_range("time outside bridge segment");
    }
    return std::min(std::max(t, a), b);
}

}  // namespace

OuComponent OuComponent::ou(OuParams params) {
    require(params.gamma > 0.0 && std::isfinite(params.gamma), "OU component requires gamma > 0");
    require(params.sigma >= 0.0 && std::isfinite(params.sigma), "OU component requires sigma >= 0");
    OuComponent c;
    c.params_ = params;
    return c;
}

OuComponent OuComponent::quasi_static(double p) {
    require(p > 0.0 && std::isfinite(p), "quasi-static component requires p > 0");
    OuComponent c;
    c.quasi_static_ = true;
    c.p_ = p;
    return c;
}

double OuComponent::stationary_variance() const {
    return quasi_static_ ? 0.5 * p_ : params_.stationary_variance();
}

double ou_step(double x, const OuParams &p, double dt, double noise_draw) {
    require(p.gamma > 0.0, "ou_step requires gamma > 0; use a quasi-static component instead");
    require(dt >= 0.0, "ou_step requires dt >= 0");
    double decay = std::exp(-p.gamma * dt);
    double var = p.sigma * p.sigma / (2.0 * p.gamma) * -std::expm1(-2.0 * p.gamma * dt);
    return x * decay + p.mu * -std::expm1(-p.gamma * dt) + noise_draw * std::sqrt(var);
}

CoarseTrajectory::CoarseTrajectory(std::vector<double> grid, std::vector<std::vector<std::vector<double>>> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
    require(!grid_.empty(), "trajectory grid is empty");
    for (size_t k = 1; k < grid_.size(); k++) {
        require(grid_[k] > grid_[k - 1], "trajectory grid must be strictly increasing");
    }
    for (const auto &ch : values_) {
        for (const auto &comp : ch) {
            require(comp.size() == grid_.size(), "one value per component per grid point");
        }
    }
}

CoarseTrajectory sample_coarse(std::span<const OuSum> channels, std::span<const double> grid, uint64_t seed,
                               const PinnedInitialValues &pinned) {
    require(!grid.empty(), "sample_coarse: empty grid");
    for (size_t k = 1; k < grid.size(); k++) {
        require(grid[k] > grid[k - 1], "sample_coarse: grid must be strictly increasing");
    }
    std::vector<std::vector<std::vector<double>>> values(channels.size());
    for (size_t a = 0; a < channels.size(); a++) {
        const auto &comps = channels[a].components;
        values[a].resize(comps.size());
        for (size_t n = 0; n < comps.size(); n++) {
            const OuComponent &c = comps[n];
            RandomStream rng(stream_seed(seed, a, n));
            std::vector<double> &v = values[a][n];
            v.resize(grid.size());
            std::optional<double> pin;
            if (a < pinned.size() && n < pinned[a].size()) {
                pin = pinned[a][n];
            }
            double x0 = rng.normal();
            v[0] = pin ? *pin : c.stationary_mean() + std::sqrt(c.stationary_variance()) * x0;
            for (size_t k = 1; k < grid.size(); k++) {
                v[k] = c.is_quasi_static() ? v[0] : ou_step(v[k - 1], c.params(), grid[k] - grid[k - 1], rng.normal());
            }
        }
    }
    return CoarseTrajectory(std::vector<double>(grid.begin(), grid.end()), std::move(values));
}

void write_trajectory_csv(std::ostream &out, const CoarseTrajectory &traj) {
    auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
    out << "t_ns,channel,component,value\n";
    for (size_t a = 0; a < traj.num_channels(); a++) {
        for (size_t n = 0; n < traj.num_components(a); n++) {
            for (size_t k = 0; k < traj.grid().size(); k++) {
                out << traj.grid()[k] << ',' << a << ',' << n << ',' << traj.value(a, n, k) << '\n';
            }
        }
    }
    out.precision(old_precision);
}

BridgeShape bridge_shape(double gamma, double t, double t_start, double t_end) {
    require(gamma > 0.0, "bridge requires gamma > 0");
    require(t_end > t_start, "bridge requires t_end > t_start");
    t = clamp_to_segment(t, t_start, t_end);
    double z = gamma * (t_end - t_start);
    return {sinh_ratio(gamma * (t_end - t), z), sinh_ratio(gamma * (t - t_start), z)};
}

double bridge_mean(const BridgeSegment &seg, double t) {
    require(seg.params.mu == 0.0, "bridge_mean supports mu = 0 only");
    t = clamp_to_segment(t, seg.t_start, seg.t_end);
    if (t == seg.t_start) {
        return seg.x_start;
    }
    if (t == seg.t_end) {
        return seg.x_end;
    }
    BridgeShape w = bridge_shape(seg.params.gamma, t, seg.t_start, seg.t_end);
    return w.start * seg.x_start + w.end * seg.x_end;
}

double BridgeKernel::left(double s) const {
    return -std::expm1(-2.0 * rate * (s - t_start));
}

double BridgeKernel::right(double t) const {
    return -std::expm1(-2.0 * rate * (t_end - t));
}

double BridgeKernel::operator()(double s, double t) const {
    if (s > t) {
        std::swap(s, t);
    }
    return scale * std::exp(-rate * (t - s)) * left(s) * right(t);
}

BridgeKernel bridge_kernel(const OuParams &p, double t_start, double t_end) {
    require(p.gamma > 0.0, "bridge requires gamma > 0");
    require(t_end > t_start, "bridge requires t_end > t_start");
    double z = p.gamma * (t_end - t_start);
    BridgeKernel k;
    k.rate = p.gamma;
    k.scale = p.sigma * p.sigma / (2.0 * p.gamma) / -std::expm1(-2.0 * z);
    k.t_start = t_start;
    k.t_end = t_end;
    return k;
}

double bridge_covariance(const OuParams &p, double s, double t, double t_start, double t_end) {
    require(t_end > t_start, "bridge requires t_end > t_start");
    s = clamp_to_segment(s, t_start, t_end);
    t = clamp_to_segment(t, t_start, t_end);
    return bridge_kernel(p, t_start, t_end)(s, t);
}

std::vector<double> sample_zero_bridge(const OuParams &p, double t_start, double t_end, size_t steps,
                                       RandomStream &rng) {
    require(t_end > t_start, "sample_zero_bridge: degenerate segment");
    require(steps >= 1, "sample_zero_bridge: need at least one step");
    require(p.gamma > 0.0, "sample_zero_bridge requires gamma > 0");
    OuParams centered = p;
    centered.mu = 0.0;
    double dt = (t_end - t_start) / static_cast<double>(steps);
    // Unconditioned path from X(t_start) = 0, then subtract its projection
    // onto the endpoint value. The residual is independent of X(t_end) and
    // has exactly the zero-boundary bridge law.
    std::vector<double> x(steps + 1, 0.0);
    for (size_t j = 1; j <= steps; j++) {
        x[j] = ou_step(x[j - 1], centered, dt, rng.normal());
    }
    double end = x[steps];
    for (size_t j = 1; j < steps; j++) {
        double t = t_start + dt * static_cast<double>(j);
        x[j] -= bridge_shape(p.gamma, t, t_start, t_end).end * end;
    }
    x[steps] = 0.0;
    return x;
}

std::vector<double> sample_zero_bridge(const OuParams &p, double t_start, double t_end, double fine_dt,
                                       uint64_t seed) {
    require(t_end > t_start, "sample_zero_bridge: degenerate segment");
    require(fine_dt > 0.0, "sample_zero_bridge: fine_dt must be positive");
    double ratio = (t_end - t_start) / fine_dt;
    double steps = std::round(ratio);
    require(steps >= 1.0 && std::abs(ratio - steps) <= 1e-9 * std::max(1.0, ratio),
            "sample_zero_bridge: fine_dt must divide the segment");
    RandomStream rng(seed);
    return sample_zero_bridge(p, t_start, t_end, static_cast<size_t>(steps), rng);
}

OuSum make_one_over_f(double f_min_hz, double f_max_hz, size_t n, double p) {
    require(f_min_hz > 0.0 && f_max_hz > f_min_hz, "make_one_over_f requires 0 < f_min < f_max");
    require(n >= 1, "make_one_over_f requires n >= 1");
    require(p > 0.0, "make_one_over_f requires p > 0");
    OuSum out;
    double lo = std::log(f_min_hz);
    double hi = std::log(f_max_hz);
    for (size_t k = 0; k < n; k++) {
        double u = n == 1 ? 0.5 : static_cast<double>(k) / static_cast<double>(n - 1);
        double f = std::exp(lo + u * (hi - lo));
        double gamma = hz_to_rad_per_ns(f);
        out.components.push_back(OuComponent::ou({gamma, std::sqrt(p * gamma), 0.0}));
    }
    return out;
}

OuSum quasi_static(double p) {
    OuSum out;
    out.components.push_back(OuComponent::quasi_static(p));
    return out;
}

double analytic_psd(const OuSum &s, double f_hz) {
    require(f_hz > 0.0, "analytic_psd requires f > 0");
    double total = 0.0;
    for (const OuComponent &c : s.components) {
        if (c.is_quasi_static()) {
            continue;
        }
        // Rates converted from per-ns to per-s.
        double f0 = rad_per_ns_to_hz(c.params().gamma);
        double sigma_sq = c.params().sigma * c.params().sigma * 1e9;
        total += sigma_sq / (2.0 * kPi * kPi * (f0 * f0 + f_hz * f_hz));
    }
    return total;
}

}  // namespace tcg
