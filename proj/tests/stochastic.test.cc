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

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "gtest/gtest.h"
#include "stats.hpp"

using namespace tcg;
using tcg_test::moments;

TEST(ou_step, noiseless_decay) {
    ASSERT_EQ(ou_step(5.0, {1.0, 0.0, 0.0}, std::log(2.0), 0.7), 2.5);
}

TEST(ou_step, rejects_bad_arguments) {
    ASSERT_THROW(ou_step(1.0, {0.0, 1.0, 0.0}, 1.0, 0.0), std::invalid_argument);
    ASSERT_THROW(ou_step(1.0, {1.0, 1.0, 0.0}, -1.0, 0.0), std::invalid_argument);
    ASSERT_THROW(OuComponent::ou({0.0, 1.0, 0.0}), std::invalid_argument);
    ASSERT_THROW(OuComponent::ou({1.0, -1.0, 0.0}), std::invalid_argument);
}

TEST(ou_step, long_step_forgets_initial_value) {
    OuParams p{0.5, 0.3, 0.0};
    RandomStream rng(11);
    std::vector<double> from_high, from_low, reference;
    for (int i = 0; i < 10000; i++) {
        from_high.push_back(ou_step(40.0, p, 200.0, rng.normal()));
        from_low.push_back(ou_step(-40.0, p, 200.0, rng.normal()));
        reference.push_back(std::sqrt(p.stationary_variance()) * rng.normal());
    }
    ASSERT_GT(tcg_test::ks_two_sample_p(from_high, from_low), 1e-3);
    ASSERT_GT(tcg_test::ks_two_sample_p(from_high, reference), 1e-3);
}

TEST(ou_step, conditional_moments_match_closed_form) {
    OuParams p{0.1, 0.2, 0.3};
    RandomStream rng(12);
    double x0 = 1.5;
    for (double dt : {0.1, 1.0, 10.0}) {
        std::vector<double> draws(100000);
        for (double &d : draws) {
            d = ou_step(x0, p, dt, rng.normal());
        }
        auto m = moments(draws);
        double mean = x0 * std::exp(-p.gamma * dt) + p.mu * (1 - std::exp(-p.gamma * dt));
        double var = p.sigma * p.sigma / (2 * p.gamma) * (1 - std::exp(-2 * p.gamma * dt));
        EXPECT_NEAR(m.mean, mean, 4 * m.mean_se()) << dt;
        EXPECT_NEAR(m.var, var, 4 * m.var_se()) << dt;
    }
}

TEST(sample_coarse, noiseless_pinned_decay) {
    std::vector<OuSum> ch{OuSum{{OuComponent::ou({std::log(2.0), 0.0, 0.0})}, "x"}};
    std::vector<double> grid{0, 1, 2};
    auto traj = sample_coarse(ch, grid, 3, {{1.0}});
    ASSERT_DOUBLE_EQ(traj.value(0, 0, 0), 1.0);
    ASSERT_DOUBLE_EQ(traj.value(0, 0, 1), 0.5);
    ASSERT_DOUBLE_EQ(traj.value(0, 0, 2), 0.25);
}

TEST(sample_coarse, rejects_bad_grids) {
    std::vector<OuSum> ch{quasi_static(1.0)};
    std::vector<double> empty;
    std::vector<double> dup{0, 1, 1};
    std::vector<double> dec{0, 2, 1};
    ASSERT_THROW(sample_coarse(ch, empty, 1), std::invalid_argument);
    ASSERT_THROW(sample_coarse(ch, dup, 1), std::invalid_argument);
    ASSERT_THROW(sample_coarse(ch, dec, 1), std::invalid_argument);
}

TEST(sample_coarse, autocovariance_is_exponential) {
    OuParams p{0.3, 0.5, 0.0};
    std::vector<OuSum> ch{OuSum{{OuComponent::ou(p)}, "x"}};
    std::vector<double> grid{0.0, 0.7, 2.0, 5.5};
    std::vector<std::vector<double>> cols(grid.size());
    for (uint64_t s = 0; s < 10000; s++) {
        auto traj = sample_coarse(ch, grid, s);
        for (size_t k = 0; k < grid.size(); k++) {
            cols[k].push_back(traj.value(0, 0, k));
        }
    }
    for (size_t m = 1; m < grid.size(); m++) {
        auto [c, se] = tcg_test::covariance_with_se(cols[0], cols[m]);
        EXPECT_NEAR(c, p.stationary_variance() * std::exp(-p.gamma * grid[m]), 4 * se) << m;
    }
}

TEST(sample_coarse, deterministic_and_stream_separated) {
    std::vector<OuSum> one{make_one_over_f(1e3, 1e8, 4, 1e-4)};
    std::vector<OuSum> two{one[0], quasi_static(2.0)};
    std::vector<double> grid{0, 10, 25, 40};
    auto a = sample_coarse(one, grid, 99);
    auto b = sample_coarse(one, grid, 99);
    auto c = sample_coarse(one, grid, 100);
    auto d = sample_coarse(two, grid, 99);
    ASSERT_EQ(a, b);
    ASSERT_NE(a.series(0, 2)[3], c.series(0, 2)[3]);
    for (size_t n = 0; n < 4; n++) {
        for (size_t k = 0; k < grid.size(); k++) {
            ASSERT_EQ(a.value(0, n, k), d.value(0, n, k));
        }
    }
    std::ostringstream sa, sb;
    write_trajectory_csv(sa, a);
    write_trajectory_csv(sb, b);
    ASSERT_EQ(sa.str(), sb.str());
    ASSERT_EQ(sa.str().substr(0, 28), "t_ns,channel,component,value");
}

TEST(bridge_mean, boundary_and_zero_values) {
    BridgeSegment seg{{0.8, 1.0, 0.0}, 2.0, 5.0, -0.4, 1.3};
    ASSERT_EQ(bridge_mean(seg, 2.0), -0.4);
    ASSERT_EQ(bridge_mean(seg, 5.0), 1.3);
    seg.x_start = seg.x_end = 0.0;
    for (double t : {2.1, 3.0, 4.9}) {
        ASSERT_EQ(bridge_mean(seg, t), 0.0);
    }
    seg.params.mu = 0.1;
    ASSERT_THROW(bridge_mean(seg, 3.0), std::invalid_argument);
    seg.params.mu = 0.0;
    ASSERT_THROW(bridge_mean(seg, 5.5), std::out_of_range);
}

TEST(bridge_mean, equals_direct_formula) {
    BridgeSegment seg{{0.37, 1.0, 0.0}, 1.0, 4.0, 0.6, -1.1};
    for (double t = 1.0; t <= 4.0; t += 0.25) {
        double g = seg.params.gamma, a = seg.t_start, b = seg.t_end;
        double direct = seg.x_start * std::exp(-g * (t - a)) +
                        (std::exp(2 * g * (t - a)) - 1) / (std::exp(2 * g * (b - a)) - 1) *
                            (std::exp(g * (b - t)) * seg.x_end - std::exp(-g * (t - a)) * seg.x_start);
        ASSERT_NEAR(bridge_mean(seg, t), direct, 1e-13) << t;
    }
}

TEST(bridge_mean, stable_for_stiff_segments) {
    BridgeSegment seg{{1e4, 1.0, 0.0}, 0.0, 10.0, 2.0, 3.0};
    ASSERT_NEAR(bridge_mean(seg, 1e-4), 2.0 * std::exp(-1.0), 1e-12);
    ASSERT_NEAR(bridge_mean(seg, 10.0 - 1e-4), 3.0 * std::exp(-1.0), 1e-12);
    ASSERT_EQ(bridge_mean(seg, 5.0), 0.0);
}

// Conditioned OU law through a time-changed Brownian bridge:
// X(t) = x0 e^{-g tau} + sigma/sqrt(2g) e^{-g tau} B(u_t), u_t = e^{2 g tau} - 1,
// with B pinned at u_end to w = sqrt(2g)/sigma (e^{g dt} x1 - x0).
static double conditioned_ou_reference(const OuParams &p, double dt, double x0, double x1, double tau,
                                       RandomStream &rng) {
    double g = p.gamma;
    double u = std::expm1(2 * g * tau);
    double u_end = std::expm1(2 * g * dt);
    double w = std::sqrt(2 * g) / p.sigma * (std::exp(g * dt) * x1 - x0);
    double w_u = std::sqrt(u) * rng.normal();
    double w_end = w_u + std::sqrt(u_end - u) * rng.normal();
    double bridge = u / u_end * w + w_u - u / u_end * w_end;
    return x0 * std::exp(-g * tau) + p.sigma / std::sqrt(2 * g) * std::exp(-g * tau) * bridge;
}

TEST(bridge_mean, matches_conditioned_paths) {
    OuParams p{1.0, 1.0, 0.0};
    RandomStream rng(21);
    std::vector<double> samples(100000);
    for (double &s : samples) {
        s = conditioned_ou_reference(p, 1.0, 0.0, 1.0, 0.5, rng);
    }
    auto m = moments(samples);
    EXPECT_NEAR(bridge_mean({p, 0.0, 1.0, 0.0, 1.0}, 0.5), m.mean, 4 * m.mean_se());
    // Closed form sinh(1/2)/sinh(1) as a frozen value.
    EXPECT_NEAR(bridge_mean({p, 0.0, 1.0, 0.0, 1.0}, 0.5), 0.443409441985, 1e-11);
}

TEST(bridge_covariance, zero_on_boundaries) {
    OuParams p{0.7, 1.3, 0.0};
    ASSERT_EQ(bridge_covariance(p, 1.0, 2.5, 1.0, 4.0), 0.0);
    ASSERT_EQ(bridge_covariance(p, 2.5, 4.0, 1.0, 4.0), 0.0);
    ASSERT_THROW(bridge_covariance(p, 0.5, 2.0, 1.0, 4.0), std::out_of_range);
    ASSERT_THROW(bridge_covariance(p, 0.5, 2.0, 4.0, 4.0), std::invalid_argument);
}

TEST(bridge_covariance, reference_value) {
    double expected = std::sinh(0.5) * std::sinh(0.5) / std::sinh(1.0);
    ASSERT_NEAR(bridge_covariance({1.0, 1.0, 0.0}, 0.5, 0.5, 0.0, 1.0), expected, 1e-15);
    ASSERT_NEAR(expected, 0.2310585786, 1e-10);
}

TEST(bridge_covariance, matches_sinh_form_and_shift_behaviour) {
    OuParams p{0.45, 0.8, 0.0};
    double a = 0.3, b = 3.1;
    auto direct = [&](double s, double t) {
        double g = p.gamma;
        return p.sigma * p.sigma / g * std::sinh(g * (s - a)) * std::sinh(g * (b - t)) / std::sinh(g * (b - a));
    };
    for (double s : {0.4, 1.0, 2.2}) {
        for (double t : {s, s + 0.5, 3.0}) {
            if (t > b) continue;
            ASSERT_NEAR(bridge_covariance(p, s, t, a, b), direct(s, t), 1e-13);
            ASSERT_NEAR(bridge_covariance(p, t, s, a, b), bridge_covariance(p, s, t, a, b), 1e-15);
            ASSERT_NEAR(bridge_covariance(p, s + 7, t + 7, a + 7, b + 7), bridge_covariance(p, s, t, a, b), 1e-12);
        }
    }
    ASSERT_GT(std::abs(bridge_covariance(p, 1.4, 1.9, a, b) - bridge_covariance(p, 0.9, 1.4, a, b)), 1e-3);
}

TEST(bridge_covariance, gram_matrix_is_psd) {
    for (double g : {1e-6, 0.01, 1.0, 50.0, 1e5}) {
        OuParams p{g, 1.0, 0.0};
        Eigen::MatrixXd gram(8, 8);
        for (int i = 0; i < 8; i++) {
            for (int j = 0; j < 8; j++) {
                gram(i, j) = bridge_covariance(p, 0.1 + 0.1 * i, 0.1 + 0.1 * j, 0.0, 0.9);
            }
        }
        ASSERT_LT((gram - gram.transpose()).cwiseAbs().maxCoeff(), 1e-15);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
        ASSERT_GE(es.eigenvalues().minCoeff(), -1e-12 * gram.trace()) << g;
    }
}

TEST(bridge_covariance, stiff_segment_recovers_stationary_variance) {
    OuParams p{1e3, 2.0, 0.0};
    ASSERT_NEAR(bridge_covariance(p, 5.0, 5.0, 0.0, 10.0), p.stationary_variance(), 1e-15);
    ASSERT_NEAR(bridge_covariance(p, 5.0, 5.001, 0.0, 10.0), p.stationary_variance() * std::exp(-1.0), 1e-15);
}

TEST(bridge_covariance, quasi_static_limit_vanishes) {
    double p = 3.0;
    for (double g : {1e-9, 1e-12, 1e-15}) {
        ASSERT_LT(bridge_covariance({g, std::sqrt(p * g), 0.0}, 2.0, 5.0, 0.0, 10.0), 1e-7);
    }
}

TEST(sample_zero_bridge, endpoints_are_zero) {
    OuParams p{2.0, 1.0, 0.0};
    for (uint64_t seed = 0; seed < 50; seed++) {
        auto path = sample_zero_bridge(p, 1.0, 3.0, 0.1, seed);
        ASSERT_EQ(path.size(), 21u);
        ASSERT_EQ(path.front(), 0.0);
        ASSERT_EQ(path.back(), 0.0);
    }
    ASSERT_THROW(sample_zero_bridge(p, 1.0, 1.0, 0.1, 0), std::invalid_argument);
    ASSERT_THROW(sample_zero_bridge(p, 1.0, 2.0, 0.3, 0), std::invalid_argument);
}

TEST(sample_zero_bridge, two_point_function_and_third_moment) {
    OuParams p{1.0, 1.0, 0.0};
    const size_t steps = 20;
    const size_t paths = 100000;
    std::vector<std::vector<double>> at(steps + 1, std::vector<double>(paths));
    RandomStream rng(5);
    for (size_t i = 0; i < paths; i++) {
        auto path = sample_zero_bridge(p, 0.0, 1.0, steps, rng);
        for (size_t j = 0; j <= steps; j++) {
            at[j][i] = path[j];
        }
    }
    std::vector<std::pair<size_t, size_t>> pairs{{1, 1}, {3, 12}, {10, 10}, {5, 19}, {14, 17}};
    for (auto [i, j] : pairs) {
        auto [c, se] = tcg_test::covariance_with_se(at[i], at[j]);
        EXPECT_NEAR(c, bridge_covariance(p, i / 20.0, j / 20.0, 0.0, 1.0), 4 * se) << i << "," << j;
    }
    for (size_t j : {4, 10, 16}) {
        std::vector<double> cube(paths);
        for (size_t i = 0; i < paths; i++) {
            cube[i] = at[j][i] * at[j][i] * at[j][i];
        }
        auto m = moments(cube);
        EXPECT_NEAR(m.mean, 0.0, 4 * m.mean_se()) << j;
    }
}

TEST(sample_zero_bridge, mean_plus_bridge_reconstructs_conditioned_process) {
    OuParams p{1.5, 0.9, 0.0};
    double x0 = 0.7, x1 = -0.4, dt = 1.0;
    const size_t steps = 10;
    RandomStream rng_a(31), rng_b(32);
    for (size_t j : {2, 5, 8}) {
        double tau = dt * j / steps;
        std::vector<double> ours(10000), reference(10000);
        for (size_t i = 0; i < ours.size(); i++) {
            auto path = sample_zero_bridge(p, 0.0, dt, steps, rng_a);
            ours[i] = bridge_mean({p, 0.0, dt, x0, x1}, tau) + path[j];
            reference[i] = conditioned_ou_reference(p, dt, x0, x1, tau, rng_b);
        }
        EXPECT_GT(tcg_test::ks_two_sample_p(ours, reference), 1e-3) << j;
    }
}

TEST(make_one_over_f, single_component_is_lorentzian) {
    OuSum s = make_one_over_f(1e6, 1e7, 1, 0.25);
    ASSERT_EQ(s.components.size(), 1u);
    double f0 = s.components[0].params().gamma * 1e9 / kTwoPi;
    double sigma_sq = s.components[0].params().sigma * s.components[0].params().sigma * 1e9;
    for (double f : {1e3, 1e6, 3e7}) {
        ASSERT_NEAR(analytic_psd(s, f), sigma_sq / (2 * kPi * kPi) / (f0 * f0 + f * f),
                    1e-12 * analytic_psd(s, f));
        ASSERT_NEAR(analytic_psd(s, f), 0.25 * f0 / kPi / (f0 * f0 + f * f), 1e-12 * analytic_psd(s, f));
    }
}

TEST(make_one_over_f, charge_noise_parameters) {
    double p = 4e-6;
    OuSum s = make_one_over_f(1e-3, 1e10, 14, p);
    ASSERT_EQ(s.components.size(), 14u);
    for (size_t k = 0; k < 14; k++) {
        double f = 1e-3 * std::pow(10.0, 13.0 * k / 13.0);
        const OuParams &c = s.components[k].params();
        ASSERT_NEAR(c.gamma, kTwoPi * f * 1e-9, 1e-12 * c.gamma);
        ASSERT_NEAR(c.sigma * c.sigma, p * c.gamma, 1e-12 * p * c.gamma);
        ASSERT_EQ(c.mu, 0.0);
    }
    ASSERT_THROW(make_one_over_f(0.0, 1.0, 3, p), std::invalid_argument);
    ASSERT_THROW(make_one_over_f(2.0, 1.0, 3, p), std::invalid_argument);
}

TEST(make_one_over_f, interior_slope_is_minus_one) {
    OuSum s = make_one_over_f(1e-3, 1e10, 14, 4e-6);
    std::vector<double> lx, ly;
    for (double lf = -1.0; lf <= 8.0; lf += 0.25) {
        lx.push_back(lf);
        ly.push_back(std::log10(analytic_psd(s, std::pow(10.0, lf))));
    }
    double mx = 0, my = 0;
    for (size_t i = 0; i < lx.size(); i++) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= lx.size();
    my /= ly.size();
    double sxy = 0, sxx = 0;
    for (size_t i = 0; i < lx.size(); i++) {
        sxy += (lx[i] - mx) * (ly[i] - my);
        sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    ASSERT_NEAR(sxy / sxx, -1.0, 0.1);
}

TEST(quasi_static, constant_with_half_p_variance) {
    double p = 0.6;
    std::vector<OuSum> ch{quasi_static(p)};
    std::vector<double> grid{0, 5, 100, 1e6};
    std::vector<double> first;
    for (uint64_t s = 0; s < 100000; s++) {
        auto traj = sample_coarse(ch, grid, s);
        for (size_t k = 1; k < grid.size(); k++) {
            ASSERT_EQ(traj.value(0, 0, k), traj.value(0, 0, 0));
        }
        first.push_back(traj.value(0, 0, 0));
    }
    auto m = moments(first);
    EXPECT_NEAR(m.var, p / 2, 4 * m.var_se());
    ASSERT_THROW(quasi_static(0.0), std::invalid_argument);
    ASSERT_THROW(quasi_static(-1.0), std::invalid_argument);
}

TEST(analytic_psd, asymptote_and_corner) {
    OuSum s = make_one_over_f(1e3, 1e6, 4, 1e-3);
    double sum_sigma_sq = 0;
    for (auto &c : s.components) {
        sum_sigma_sq += c.params().sigma * c.params().sigma * 1e9;
    }
    double f = 1e9;
    ASSERT_NEAR(analytic_psd(s, f), sum_sigma_sq / (2 * kPi * kPi * f * f), 1e-3 * analytic_psd(s, f));
    OuSum one = make_one_over_f(5e4, 5e5, 1, 1e-3);
    double f0 = one.components[0].params().gamma * 1e9 / kTwoPi;
    ASSERT_NEAR(analytic_psd(one, f0), 0.5 * analytic_psd(one, f0 * 1e-6), 1e-9 * analytic_psd(one, f0));
    ASSERT_EQ(analytic_psd(quasi_static(1.0), 1.0), 0.0);
}
