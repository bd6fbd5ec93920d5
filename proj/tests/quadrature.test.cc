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

#include "tcg/quadrature.hpp"

#include <cmath>

#include "gtest/gtest.h"

using namespace tcg;
using cplx = std::complex<double>;

namespace {

// Composite Simpson on [0, 1].
cplx simpson(const std::function<cplx(double)> &f) {
    const int n = 40000;
    cplx s = f(0.0) + f(1.0);
    for (int i = 1; i < n; ++i) {
        s += (i % 2 ? 4.0 : 2.0) * f(static_cast<double>(i) / n);
    }
    return s / (3.0 * n);
}

Eigen::MatrixXd sample(const CellGrid &grid, const std::function<double(double)> &f) {
    auto t = grid.node_times();
    Eigen::MatrixXd out(t.size(), 1);
    for (size_t i = 0; i < t.size(); ++i) {
        out(i, 0) = f(t[i]);
    }
    return out;
}

}  // namespace

TEST(CellRule, interpolates_polynomials_exactly) {
    CellRule rule(8);
    ASSERT_EQ(rule.num_nodes(), 9u);
    double sum = 0.0;
    for (double w : rule.weights()) {
        EXPECT_GT(w, 0.0);
        sum += w;
    }
    EXPECT_NEAR(sum, 1.0, 1e-14);
    for (double u : {0.0, 0.13, 0.5, 0.77, 1.0}) {
        double p = 0.0;
        for (size_t a = 0; a < rule.num_nodes(); ++a) {
            double x = rule.nodes()[a];
            p += rule.lagrange(a, u) * (x * x * x - 2 * x + 1);
        }
        EXPECT_NEAR(p, u * u * u - 2 * u + 1, 1e-13);
    }
}

TEST(CellRule, weights_match_brute_force) {
    CellRule rule(8);
    for (cplx x : {cplx(3, 0), cplx(0, 19.9), cplx(0, 20.5), cplx(0, 55), cplx(150, 0), cplx(5, 80)}) {
        auto w = rule.exponential_weights(x);
        for (size_t a = 0; a < rule.num_nodes(); ++a) {
            cplx into = simpson([&](double u) { return std::exp(-x * u) * rule.lagrange(a, u); });
            cplx out = simpson([&](double u) { return std::exp(-x * (1.0 - u)) * rule.lagrange(a, u); });
            // Row and column sums of the triangle weights reduce to single integrals.
            cplx rows = simpson([&](double t) { return rule.lagrange(a, t) * (1.0 - std::exp(-x * t)) / x; });
            cplx cols = simpson([&](double s) { return rule.lagrange(a, s) * (1.0 - std::exp(-x * (1.0 - s))) / x; });
            EXPECT_LT(std::abs(w.into(a) - into), 1e-10) << x << " a=" << a;
            EXPECT_LT(std::abs(w.out(a) - out), 1e-10) << x << " a=" << a;
            EXPECT_LT(std::abs(w.diag.col(a).sum() - rows), 1e-10) << x << " a=" << a;
            EXPECT_LT(std::abs(w.diag.row(a).sum() - cols), 1e-10) << x << " a=" << a;
        }
        EXPECT_LT(std::abs(w.decay - std::exp(-x)), 1e-15);
    }
}

TEST(CellRule, zero_rate_diag_sums_to_half) {
    CellRule rule(6);
    auto w = rule.exponential_weights(0.0);
    EXPECT_NEAR(w.diag.sum().real(), 0.5, 1e-14);
    EXPECT_NEAR(w.into.sum().real(), 1.0, 1e-14);
    EXPECT_NEAR(w.out.sum().real(), 1.0, 1e-14);
}

TEST(CellGrid, aligned_and_graded) {
    CellRule rule(4);
    CellGrid grid({0.0, 3.0, 10.0}, 1.0, 0.01, rule);
    double t = 0.0;
    bool saw_three = false;
    for (const Cell &c : grid.cells()) {
        EXPECT_NEAR(c.start, t, 1e-12);
        EXPECT_LE(c.width, 1.0 + 1e-12);
        t += c.width;
        if (std::abs(t - 3.0) < 1e-12) {
            saw_three = true;
        }
    }
    EXPECT_NEAR(t, 10.0, 1e-12);
    EXPECT_TRUE(saw_three);
    EXPECT_NEAR(grid.cells().front().width, 0.01, 1e-15);
    EXPECT_NEAR(grid.cells().back().width, 0.01, 1e-12);
    EXPECT_NEAR(grid.node_weights().sum(), 10.0, 1e-12);
    EXPECT_EQ(grid.refined().cells().front().width, 0.005);
    EXPECT_THROW(CellGrid({0.0}, 1.0, 0.0, rule), std::invalid_argument);
}

TEST(causal_double_integral, constant_with_exponential_kernel) {
    CellRule rule(8);
    for (double lam : {0.0, 0.01, 3.0, 200.0}) {
        CellGrid grid({0.0, 4.0, 7.0}, 0.5, lam > 0 ? 0.5 / lam : 0.0, rule);
        Eigen::MatrixXd one = Eigen::MatrixXd::Ones(grid.num_nodes(), 1);
        double got = causal_double_integral(grid, one, one, lam)(0, 0);
        double T = 7.0;
        double want = lam == 0.0 ? T * T / 2 : T / lam + std::expm1(-lam * T) / (lam * lam);
        EXPECT_NEAR(got, want, 1e-12 * std::abs(want)) << lam;
    }
}

TEST(causal_double_integral, polynomial_product_and_order) {
    // int_{s<t} s * t^2 = T^5 / 10, int_{s<t} t * s^2 = T^5 / 15.
    CellRule rule(4);
    CellGrid grid({0.0, 2.0}, 0.3, 0.0, rule);
    auto s1 = sample(grid, [](double t) { return t; });
    auto s2 = sample(grid, [](double t) { return t * t; });
    EXPECT_NEAR(causal_double_integral(grid, s1, s2, 0.0)(0, 0), 3.2, 1e-12);
    EXPECT_NEAR(causal_double_integral(grid, s2, s1, 0.0)(0, 0), 32.0 / 15.0, 1e-12);
}

TEST(causal_double_integral, oscillating_kernel) {
    // int_{s<t} e^{-i w (t-s)} ds dt over [0, T] for a fast rotation on coarse cells.
    CellRule rule(8);
    CellGrid grid({0.0, 40.0}, 0.5, 0.0, rule);
    double w = 88.0;
    cplx lam(0.0, w);
    Eigen::MatrixXcd one = Eigen::MatrixXcd::Ones(grid.num_nodes(), 1);
    cplx got = causal_double_integral(grid, one, one, lam)(0, 0);
    double T = 40.0;
    cplx want = T / lam + (std::exp(-lam * T) - 1.0) / (lam * lam);
    EXPECT_LT(std::abs(got - want), 1e-12 * std::abs(want));
}

TEST(exponential_integral, filon_rotation) {
    CellRule rule(8);
    CellGrid grid({0.0, 10.0, 40.0}, 0.5, 0.0, rule);
    double w = 88.0;
    Eigen::MatrixXcd f = sample(grid, [](double t) { return std::cos(0.3 * t); }).cast<cplx>();
    cplx mu(0.0, -w);  // integral e^{i w t} cos(0.3 t)
    cplx got = exponential_integral(grid, f, mu)(0);
    auto prim = [&](double t, double k) { return std::exp(cplx(0, (w + k) * t)) / cplx(0, w + k); };
    cplx want = 0.5 * (prim(40, 0.3) - prim(0, 0.3) + prim(40, -0.3) - prim(0, -0.3));
    EXPECT_LT(std::abs(got - want), 1e-12);
}

TEST(causal_double_integral, rejects_mismatched_nodes) {
    CellRule rule(4);
    CellGrid grid({0.0, 1.0}, 0.5, 0.0, rule);
    Eigen::MatrixXd bad = Eigen::MatrixXd::Ones(3, 1);
    EXPECT_THROW(causal_double_integral(grid, bad, bad, 0.0), std::invalid_argument);
}

TEST(modulated_double_integral, rotation_in_later_time) {
    // int_{s<t} e^{-mu t} ds dt = int_0^T t e^{-mu t} dt, and with f = s:
    // int_0^T t^2 / 2 e^{-mu t} dt.
    CellRule rule(8);
    CellGrid grid({0.0, 15.0, 40.0}, 0.5, 0.0, rule);
    cplx mu(0.0, 60.0);
    Eigen::MatrixXcd one = Eigen::MatrixXcd::Ones(grid.num_nodes(), 1);
    Eigen::MatrixXcd lin = sample(grid, [](double t) { return t; }).cast<cplx>();
    double T = 40.0;
    cplx e = std::exp(-mu * T);
    cplx want1 = (1.0 - e * (1.0 + mu * T)) / (mu * mu);
    cplx want2 = (2.0 - e * (2.0 + 2.0 * mu * T + mu * mu * T * T)) / (mu * mu * mu) / 2.0;
    EXPECT_LT(std::abs(modulated_double_integral(grid, one, one, mu)(0, 0) - want1), 1e-12);
    EXPECT_LT(std::abs(modulated_double_integral(grid, lin, one, mu)(0, 0) - want2), 1e-11);
    // Zero rate reduces to the plain causal integral.
    Eigen::MatrixXcd sq = sample(grid, [](double t) { return std::sin(0.2 * t); }).cast<cplx>();
    EXPECT_LT((modulated_double_integral(grid, sq, lin, 0.0) - causal_double_integral(grid, sq, lin, cplx(0.0))).norm(),
              1e-11);
}
