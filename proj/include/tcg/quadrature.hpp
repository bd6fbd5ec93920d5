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

#ifndef TCG_QUADRATURE_HPP
#define TCG_QUADRATURE_HPP

#include <Eigen/Dense>
#include <complex>
#include <cstddef>
#include <vector>

// Product integration on piecewise-polynomial cells.
//
// Each cell carries order+1 Chebyshev-Lobatto nodes. Integrands are the
// Lagrange interpolants of their node values, multiplied by exponential
// kernels that are integrated exactly. This handles stiff decay and fast
// rotation without resolving either on the grid.

namespace tcg {

class CellRule {
   public:
    explicit CellRule(int order);

    int order() const { return order_; }
    size_t num_nodes() const { return nodes_.size(); }
    /// Nodes on [0, 1].
    const std::vector<double> &nodes() const { return nodes_; }
    /// integral_0^1 l_a(u) du.
    const std::vector<double> &weights() const { return weights_; }
    double lagrange(size_t a, double u) const;

    /// Weights for kernels e^{-x (.)} on a unit cell:
    ///   into[b]  = int_0^1 e^{-x u} l_b(u) du,
    ///   out[a]   = int_0^1 e^{-x (1-u)} l_a(u) du,
    ///   diag(a,b) = int_0^1 dT l_b(T) int_0^T dS e^{-x (T-S)} l_a(S),
    ///   decay    = e^{-x}.
    /// Re x must be nonnegative.
    struct Weights {
        Eigen::VectorXcd into;
        Eigen::VectorXcd out;
        Eigen::MatrixXcd diag;
        std::complex<double> decay;
    };
    Weights exponential_weights(std::complex<double> x) const;

    /// mod(a, b) = int_0^1 dT e^{-x T} l_b(T) int_0^T l_a(S) dS.
    Eigen::MatrixXcd modulated_weights(std::complex<double> x) const;

   private:
    int order_;
    std::vector<double> nodes_;
    std::vector<double> weights_;
    std::vector<double> bary_;
    std::vector<double> pair_nodes_;
    std::vector<double> pair_bary_;
    std::vector<std::vector<double>> pair_samples_;  // [a * m + b][k]
    std::vector<std::vector<double>> l_at_gauss_, l_rev_at_gauss_;
    std::vector<std::vector<double>> pair_at_gauss_;  // [a * m + b][gauss point]

    std::vector<std::vector<double>> mod_samples_;   // [a * m + b][k]
    std::vector<std::vector<double>> mod_at_gauss_;  // [a * m + b][gauss point]

    std::vector<double> pair_values(double v) const;
    std::vector<double> sampled_values(const std::vector<std::vector<double>> &samples, double v) const;
};

struct Cell {
    double start = 0.0;
    double width = 0.0;
    size_t piece = 0;
};

/// Cells covering [breakpoints.front(), breakpoints.back()], aligned with
/// every breakpoint. Cells are at most max_width wide; when layer_width > 0
/// they shrink geometrically toward the two outer ends, down to layer_width.
class CellGrid {
   public:
    CellGrid(std::vector<double> breakpoints, double max_width, double layer_width, const CellRule &rule);

    const std::vector<Cell> &cells() const { return cells_; }
    const CellRule &rule() const { return *rule_; }
    size_t num_nodes() const { return cells_.size() * rule_->num_nodes(); }
    double node_time(size_t cell, size_t a) const;
    std::vector<double> node_times() const;
    std::vector<size_t> node_pieces() const;
    /// Plain integration weight of each node (cell width times rule weight).
    Eigen::VectorXd node_weights() const;
    double start() const { return breakpoints_.front(); }
    double end() const { return breakpoints_.back(); }
    CellGrid refined() const;

   private:
    std::vector<double> breakpoints_;
    double max_width_;
    double layer_width_;
    const CellRule *rule_;
    std::vector<Cell> cells_;
};

/// integral e^{-mu (t - start)} f(t) dt for each column of f (rows are grid nodes).
Eigen::RowVectorXcd exponential_integral(const CellGrid &grid, const Eigen::MatrixXcd &f, std::complex<double> mu);

/// integral integral_{s < t} e^{-lambda (t - s)} f(s) g(t)^T ds dt, with f and g
/// given by node values (rows are grid nodes, columns are functions).
Eigen::MatrixXcd causal_double_integral(const CellGrid &grid, const Eigen::MatrixXcd &f, const Eigen::MatrixXcd &g,
                                        std::complex<double> lambda);
Eigen::MatrixXd causal_double_integral(const CellGrid &grid, const Eigen::MatrixXd &f, const Eigen::MatrixXd &g,
                                       double lambda);

/// integral integral_{s < t} f(s) g(t)^T e^{-mu (t - start)} ds dt: a kernel that
/// rotates in the later time only.
Eigen::MatrixXcd modulated_double_integral(const CellGrid &grid, const Eigen::MatrixXcd &f, const Eigen::MatrixXcd &g,
                                           std::complex<double> mu);

}  // namespace tcg

#endif
