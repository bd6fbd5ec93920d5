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

#ifndef TCG_STOCHASTIC_HPP
#define TCG_STOCHASTIC_HPP

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tcg/random.hpp"
#include "tcg/units.hpp"

// Ornstein-Uhlenbeck processes, sums of them, and their bridges.
//
// Units: time in ns, rates in rad/ns. A process value carries whatever unit
// its channel assigns (rad/ns for field noise, dimensionless for relative
// exchange noise). sigma^2 has units of value^2 / ns.

namespace tcg {

/// Parameters of dX = gamma (mu - X) dt + sigma dW.
struct OuParams {
    double gamma = 0.0;
    double sigma = 0.0;
    double mu = 0.0;

    double stationary_variance() const { return sigma * sigma / (2.0 * gamma); }
};

/// One term of an OU sum. The gamma -> 0 limit with sigma^2 = p gamma is
/// representable only through quasi_static(), never as a raw OuParams.
class OuComponent {
   public:
    /// Throws std::invalid_argument unless gamma > 0 and sigma >= 0.
    static OuComponent ou(OuParams params);
    /// Random constant with variance p/2. Throws unless p > 0.
    static OuComponent quasi_static(double p);

    bool is_quasi_static() const { return quasi_static_; }
    const OuParams &params() const { return params_; }
    double stationary_variance() const;
    double stationary_mean() const { return params_.mu; }

    bool operator==(const OuComponent &) const = default;

   private:
    OuParams params_{};
    bool quasi_static_ = false;
    double p_ = 0.0;
};

struct OuSum {
    std::vector<OuComponent> components;
    std::string unit;
};

/// Exact OU update over dt given a standard normal draw.
double ou_step(double x, const OuParams &p, double dt, double noise_draw);

/// Noise sampled on a coarse grid. Immutable after construction.
class CoarseTrajectory {
   public:
    CoarseTrajectory(std::vector<double> grid, std::vector<std::vector<std::vector<double>>> values);

    const std::vector<double> &grid() const { return grid_; }
    size_t num_channels() const { return values_.size(); }
    size_t num_components(size_t channel) const { return values_[channel].size(); }
    double value(size_t channel, size_t component, size_t k) const { return values_[channel][component][k]; }
    std::span<const double> series(size_t channel, size_t component) const { return values_[channel][component]; }

    bool operator==(const CoarseTrajectory &) const = default;

   private:
    std::vector<double> grid_;
    std::vector<std::vector<std::vector<double>>> values_;  // [channel][component][k]
};

/// Initial values per [channel][component] overriding the stationary law.
using PinnedInitialValues = std::vector<std::vector<std::optional<double>>>;

/// Samples every component on `grid`. Each component draws from its own
/// stream keyed by (seed, channel, component).
CoarseTrajectory sample_coarse(std::span<const OuSum> channels, std::span<const double> grid, uint64_t seed,
                               const PinnedInitialValues &pinned = {});

/// CSV with header t_ns,channel,component,value; one row per sample,
/// ordered by channel, component, then time.
void write_trajectory_csv(std::ostream &out, const CoarseTrajectory &traj);

/// OU bridge between (t_start, x_start) and (t_end, x_end), mean zero.
struct BridgeSegment {
    OuParams params;
    double t_start = 0.0;
    double t_end = 0.0;
    double x_start = 0.0;
    double x_end = 0.0;
};

/// Weights of x_start and x_end in the bridge mean:
/// sinh(g (t_end - t)) / sinh(g dt) and sinh(g (t - t_start)) / sinh(g dt).
struct BridgeShape {
    double start = 0.0;
    double end = 0.0;
};
BridgeShape bridge_shape(double gamma, double t, double t_start, double t_end);

double bridge_mean(const BridgeSegment &seg, double t);

/// Two-point function of the zero-boundary bridge on [t_start, t_end].
double bridge_covariance(const OuParams &p, double s, double t, double t_start, double t_end);

/// The zero-boundary bridge kernel written as
///   cov(s, t) = scale * exp(-rate (t - s)) * left(s) * right(t),  s <= t,
/// with left(s) = 1 - exp(-2 g (s - t_start)), right(t) = 1 - exp(-2 g (t_end - t)).
/// Every factor is bounded, for any g * (t_end - t_start).
struct BridgeKernel {
    double rate = 0.0;
    double scale = 0.0;
    double t_start = 0.0;
    double t_end = 0.0;

    double left(double s) const;
    double right(double t) const;
    double operator()(double s, double t) const;
};
BridgeKernel bridge_kernel(const OuParams &p, double t_start, double t_end);

/// Fine-grid sample of the zero-boundary bridge. Endpoints are exactly 0.
std::vector<double> sample_zero_bridge(const OuParams &p, double t_start, double t_end, double fine_dt,
                                       uint64_t seed);
std::vector<double> sample_zero_bridge(const OuParams &p, double t_start, double t_end, size_t steps,
                                       RandomStream &rng);

/// n OU terms with log-uniform corner frequencies in [f_min_hz, f_max_hz]
/// and sigma_k^2 = p * gamma_k, approximating a 1/f spectrum.
OuSum make_one_over_f(double f_min_hz, double f_max_hz, size_t n, double p);

OuSum quasi_static(double p);

/// One-sided PSD in value^2 / Hz at frequency f_hz > 0.
double analytic_psd(const OuSum &s, double f_hz);

}  // namespace tcg

#endif
