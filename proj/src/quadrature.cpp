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
#include <map>
#include <stdexcept>

#include "tcg/units.hpp"

namespace tcg {

namespace {

using cplx = std::complex<double>;

constexpr double kDecayCutoff = 60.0;
constexpr double kPanelArgument = 20.0;
constexpr int kGaussPoints = 48;

struct GaussRule {
    std::vector<double> x, w;  // on [0, 1]
};

GaussRule make_gauss(int n) {
    GaussRule r;
    r.x.resize(n);
    r.w.resize(n);
    for (int i = 0; i < n; ++i) {
        double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = z;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (z * p1 - p0) / (z * z - 1.0);
            double dz = p1 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) {
                break;
            }
        }
        r.x[i] = 0.5 * (1.0 - z);
        r.w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    return r;
}

const GaussRule &gauss() {
    static const GaussRule rule = make_gauss(kGaussPoints);
    return rule;
}

}  // namespace

CellRule::CellRule(int order) : order_(order) {
    if (order < 1 || order > 16) {
        throw std::invalid_argument("CellRule: order must be in [1, 16]");
    }
    const int m = order + 1;
    nodes_.resize(m);
    bary_.resize(m);
    for (int a = 0; a < m; ++a) {
        nodes_[a] = 0.5 * (1.0 - std::cos(kPi * a / order));
        bary_[a] = (a % 2 == 0 ? 1.0 : -1.0) * ((a == 0 || a == order) ? 0.5 : 1.0);
    }
    nodes_[0] = 0.0;
    nodes_[order] = 1.0;

    const GaussRule &g = gauss();
    const size_t ng = g.x.size();
    l_at_gauss_.assign(m, std::vector<double>(ng));
    l_rev_at_gauss_.assign(m, std::vector<double>(ng));
    weights_.assign(m, 0.0);
    for (int a = 0; a < m; ++a) {
        for (size_t i = 0; i < ng; ++i) {
            l_at_gauss_[a][i] = lagrange(a, g.x[i]);
            l_rev_at_gauss_[a][i] = lagrange(a, 1.0 - g.x[i]);
            weights_[a] += g.w[i] * l_at_gauss_[a][i];
        }
    }
    // p_ab(v) = int_v^1 l_a(T - v) l_b(T) dT has degree 2 order + 1; it is sampled
    // exactly on Chebyshev-Lobatto points and evaluated barycentrically.
    const int pdeg = 2 * order + 1;
    pair_nodes_.resize(pdeg + 1);
    pair_bary_.resize(pdeg + 1);
    for (int k = 0; k <= pdeg; ++k) {
        pair_nodes_[k] = 0.5 * (1.0 - std::cos(kPi * k / pdeg));
        pair_bary_[k] = (k % 2 == 0 ? 1.0 : -1.0) * ((k == 0 || k == pdeg) ? 0.5 : 1.0);
    }
    pair_samples_.assign(m * m, std::vector<double>(pdeg + 1, 0.0));
    for (int i = 0; i <= pdeg; ++i) {
        double v = pair_nodes_[i];
        double len = 1.0 - v;
        std::vector<std::vector<double>> la(m, std::vector<double>(ng)), lb(m, std::vector<double>(ng));
        for (int a = 0; a < m; ++a) {
            for (size_t j = 0; j < ng; ++j) {
                double t = v + len * g.x[j];
                la[a][j] = lagrange(a, t - v);
                lb[a][j] = lagrange(a, t);
            }
        }
        for (int a = 0; a < m; ++a) {
            for (int b = 0; b < m; ++b) {
                double s = 0.0;
                for (size_t j = 0; j < ng; ++j) {
                    s += g.w[j] * la[a][j] * lb[b][j];
                }
                pair_samples_[a * m + b][i] = len * s;
            }
        }
    }
    // l_b(T) int_0^T l_a(S) dS, also of degree 2 order + 1.
    mod_samples_.assign(m * m, std::vector<double>(pdeg + 1, 0.0));
    for (int i = 0; i <= pdeg; ++i) {
        double t = pair_nodes_[i];
        for (int a = 0; a < m; ++a) {
            double in = 0.0;
            for (size_t j = 0; j < ng; ++j) {
                in += g.w[j] * lagrange(a, t * g.x[j]);
            }
            in *= t;
            for (int b = 0; b < m; ++b) {
                mod_samples_[a * m + b][i] = in * lagrange(b, t);
            }
        }
    }
    pair_at_gauss_.assign(m * m, std::vector<double>(ng));
    mod_at_gauss_.assign(m * m, std::vector<double>(ng));
    for (size_t i = 0; i < ng; ++i) {
        auto vals = pair_values(g.x[i]);
        auto mods = sampled_values(mod_samples_, g.x[i]);
        for (int ab = 0; ab < m * m; ++ab) {
            pair_at_gauss_[ab][i] = vals[ab];
            mod_at_gauss_[ab][i] = mods[ab];
        }
    }
}

std::vector<double> CellRule::pair_values(double v) const {
    return sampled_values(pair_samples_, v);
}

std::vector<double> CellRule::sampled_values(const std::vector<std::vector<double>> &samples, double v) const {
    const size_t n = pair_nodes_.size();
    std::vector<double> out(samples.size(), 0.0);
    for (size_t k = 0; k < n; ++k) {
        if (v == pair_nodes_[k]) {
            for (size_t ab = 0; ab < out.size(); ++ab) {
                out[ab] = samples[ab][k];
            }
            return out;
        }
    }
    std::vector<double> t(n);
    double den = 0.0;
    for (size_t k = 0; k < n; ++k) {
        t[k] = pair_bary_[k] / (v - pair_nodes_[k]);
        den += t[k];
    }
    for (size_t ab = 0; ab < out.size(); ++ab) {
        double num = 0.0;
        for (size_t k = 0; k < n; ++k) {
            num += t[k] * samples[ab][k];
        }
        out[ab] = num / den;
    }
    return out;
}

double CellRule::lagrange(size_t a, double u) const {
    double num = 0.0;
    double den = 0.0;
    for (size_t j = 0; j < nodes_.size(); ++j) {
        double d = u - nodes_[j];
        if (d == 0.0) {
            return j == a ? 1.0 : 0.0;
        }
        double t = bary_[j] / d;
        den += t;
        if (j == a) {
            num = t;
        }
    }
    return num / den;
}

CellRule::Weights CellRule::exponential_weights(cplx x) const {
    const size_t m = nodes_.size();
    const GaussRule &g = gauss();
    Weights w;
    w.into = Eigen::VectorXcd::Zero(m);
    w.out = Eigen::VectorXcd::Zero(m);
    w.diag = Eigen::MatrixXcd::Zero(m, m);
    w.decay = std::exp(-x);
    // Every integrand is a polynomial in v times e^{-x v} on [0, 1]. Strong decay
    // truncates the range; fast rotation or decay splits it into panels.
    double len = x.real() > kDecayCutoff ? kDecayCutoff / x.real() : 1.0;
    size_t panels = static_cast<size_t>(std::ceil(std::max(std::abs(x.imag()), x.real()) * len / kPanelArgument));
    panels = std::max<size_t>(panels, 1);
    if (panels == 1 && len == 1.0) {
        for (size_t i = 0; i < g.x.size(); ++i) {
            cplx e = g.w[i] * std::exp(-x * g.x[i]);
            for (size_t a = 0; a < m; ++a) {
                w.into(a) += e * l_at_gauss_[a][i];
                w.out(a) += e * l_rev_at_gauss_[a][i];
                for (size_t b = 0; b < m; ++b) {
                    w.diag(a, b) += e * pair_at_gauss_[a * m + b][i];
                }
            }
        }
        return w;
    }
    double width = len / panels;
    for (size_t p = 0; p < panels; ++p) {
        for (size_t i = 0; i < g.x.size(); ++i) {
            double v = (p + g.x[i]) * width;
            cplx e = width * g.w[i] * std::exp(-x * v);
            auto pv = pair_values(v);
            for (size_t a = 0; a < m; ++a) {
                w.into(a) += e * lagrange(a, v);
                w.out(a) += e * lagrange(a, 1.0 - v);
                for (size_t b = 0; b < m; ++b) {
                    w.diag(a, b) += e * pv[a * m + b];
                }
            }
        }
    }
    return w;
}

Eigen::MatrixXcd CellRule::modulated_weights(cplx x) const {
    const size_t m = nodes_.size();
    const GaussRule &g = gauss();
    Eigen::MatrixXcd w = Eigen::MatrixXcd::Zero(m, m);
    double len = x.real() > kDecayCutoff ? kDecayCutoff / x.real() : 1.0;
    size_t panels = static_cast<size_t>(std::ceil(std::max(std::abs(x.imag()), x.real()) * len / kPanelArgument));
    panels = std::max<size_t>(panels, 1);
    if (panels == 1 && len == 1.0) {
        for (size_t i = 0; i < g.x.size(); ++i) {
            cplx e = g.w[i] * std::exp(-x * g.x[i]);
            for (size_t a = 0; a < m; ++a) {
                for (size_t b = 0; b < m; ++b) {
                    w(a, b) += e * mod_at_gauss_[a * m + b][i];
                }
            }
        }
        return w;
    }
    double width = len / panels;
    for (size_t p = 0; p < panels; ++p) {
        for (size_t i = 0; i < g.x.size(); ++i) {
            double v = (p + g.x[i]) * width;
            cplx e = width * g.w[i] * std::exp(-x * v);
            auto mv = sampled_values(mod_samples_, v);
            for (size_t a = 0; a < m; ++a) {
                for (size_t b = 0; b < m; ++b) {
                    w(a, b) += e * mv[a * m + b];
                }
            }
        }
    }
    return w;
}

CellGrid::CellGrid(std::vector<double> breakpoints, double max_width, double layer_width, const CellRule &rule)
    : breakpoints_(std::move(breakpoints)), max_width_(max_width), layer_width_(layer_width), rule_(&rule) {
    if (breakpoints_.size() < 2) {
        throw std::invalid_argument("CellGrid: need at least one piece");
    }
    if (!(max_width_ > 0.0)) {
        throw std::invalid_argument("CellGrid: max_width must be positive");
    }
    for (size_t j = 0; j + 1 < breakpoints_.size(); ++j) {
        if (!(breakpoints_[j + 1] >= breakpoints_[j])) {
            throw std::invalid_argument("CellGrid: breakpoints must be nondecreasing");
        }
    }
    const size_t pieces = breakpoints_.size() - 1;
    for (size_t j = 0; j < pieces; ++j) {
        double p0 = breakpoints_[j];
        double p1 = breakpoints_[j + 1];
        double len = p1 - p0;
        if (len <= 0.0) {
            continue;
        }
        std::vector<double> left, right;
        bool graded = layer_width_ > 0.0 && layer_width_ < max_width_;
        auto grade = [&](std::vector<double> &sizes) {
            double total = 0.0;
            for (double s = layer_width_; s < max_width_ && total + s <= 0.5 * len; s *= 2.0) {
                sizes.push_back(s);
                total += s;
            }
        };
        if (graded && j == 0) {
            grade(left);
        }
        if (graded && j + 1 == pieces) {
            grade(right);
        }
        double used = 0.0;
        for (double s : left) used += s;
        for (double s : right) used += s;
        double rem = len - used;
        size_t n = static_cast<size_t>(std::ceil(rem / max_width_ - 1e-9));
        if (n == 0 && rem > 1e-12 * len) {
            n = 1;
        }
        double t = p0;
        for (double s : left) {
            cells_.push_back({t, s, j});
            t += s;
        }
        for (size_t k = 0; k < n; ++k) {
            cells_.push_back({t, rem / n, j});
            t += rem / n;
        }
        for (auto it = right.rbegin(); it != right.rend(); ++it) {
            cells_.push_back({t, *it, j});
            t += *it;
        }
        // Snap the last cell of the piece onto the breakpoint.
        cells_.back().width = p1 - cells_.back().start;
    }
    if (cells_.empty()) {
        throw std::invalid_argument("CellGrid: zero total duration");
    }
}

double CellGrid::node_time(size_t cell, size_t a) const {
    const Cell &c = cells_[cell];
    return c.start + c.width * rule_->nodes()[a];
}

std::vector<double> CellGrid::node_times() const {
    std::vector<double> t;
    t.reserve(num_nodes());
    for (size_t c = 0; c < cells_.size(); ++c) {
        for (size_t a = 0; a < rule_->num_nodes(); ++a) {
            t.push_back(node_time(c, a));
        }
    }
    return t;
}

std::vector<size_t> CellGrid::node_pieces() const {
    std::vector<size_t> p;
    p.reserve(num_nodes());
    for (const Cell &c : cells_) {
        for (size_t a = 0; a < rule_->num_nodes(); ++a) {
            p.push_back(c.piece);
        }
    }
    return p;
}

Eigen::VectorXd CellGrid::node_weights() const {
    Eigen::VectorXd w(num_nodes());
    const size_t m = rule_->num_nodes();
    for (size_t c = 0; c < cells_.size(); ++c) {
        for (size_t a = 0; a < m; ++a) {
            w(c * m + a) = cells_[c].width * rule_->weights()[a];
        }
    }
    return w;
}

CellGrid CellGrid::refined() const {
    return CellGrid(breakpoints_, 0.5 * max_width_, 0.5 * layer_width_, *rule_);
}

namespace {

class WeightCache {
   public:
    WeightCache(const CellRule &rule, cplx rate) : rule_(rule), rate_(rate) {}
    const CellRule::Weights &get(double width) {
        auto it = cache_.find(width);
        if (it == cache_.end()) {
            it = cache_.emplace(width, rule_.exponential_weights(rate_ * width)).first;
        }
        return it->second;
    }

   private:
    const CellRule &rule_;
    cplx rate_;
    std::map<double, CellRule::Weights> cache_;
};

template <typename Scalar>
Scalar cast_scalar(cplx z) {
    if constexpr (std::is_same_v<Scalar, double>) {
        return z.real();
    } else {
        return z;
    }
}

template <typename Mat>
Mat causal_impl(const CellGrid &grid, const Mat &f, const Mat &g, cplx lambda) {
    using Scalar = typename Mat::Scalar;
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    const size_t m = grid.rule().num_nodes();
    if (static_cast<size_t>(f.rows()) != grid.num_nodes() || static_cast<size_t>(g.rows()) != grid.num_nodes()) {
        throw std::invalid_argument("causal_double_integral: node count mismatch");
    }
    const Eigen::Index p = f.cols();
    const Eigen::Index q = g.cols();
    Mat out = Mat::Zero(p, q);
    Vec acc = Vec::Zero(p);
    WeightCache cache(grid.rule(), lambda);
    Mat left(p, m + 1);
    Mat right(m + 1, q);
    Vec into(m), outw(m);
    Mat diag(m, m);
    for (size_t c = 0; c < grid.cells().size(); ++c) {
        double h = grid.cells()[c].width;
        const auto &w = cache.get(h);
        for (size_t a = 0; a < m; ++a) {
            into(a) = cast_scalar<Scalar>(w.into(a));
            outw(a) = cast_scalar<Scalar>(w.out(a));
            for (size_t b = 0; b < m; ++b) {
                diag(a, b) = cast_scalar<Scalar>(w.diag(a, b));
            }
        }
        auto fc = f.middleRows(c * m, m);
        auto gc = g.middleRows(c * m, m);
        left.col(0) = acc;
        left.rightCols(m) = (h * h) * fc.transpose();
        right.row(0) = h * (gc.transpose() * into).transpose();
        right.bottomRows(m) = diag * gc;
        out.noalias() += left * right;
        acc = cast_scalar<Scalar>(w.decay) * acc + h * (fc.transpose() * outw);
    }
    return out;
}

}  // namespace

Eigen::RowVectorXcd exponential_integral(const CellGrid &grid, const Eigen::MatrixXcd &f, cplx mu) {
    const size_t m = grid.rule().num_nodes();
    if (static_cast<size_t>(f.rows()) != grid.num_nodes()) {
        throw std::invalid_argument("exponential_integral: node count mismatch");
    }
    Eigen::RowVectorXcd out = Eigen::RowVectorXcd::Zero(f.cols());
    WeightCache cache(grid.rule(), mu);
    for (size_t c = 0; c < grid.cells().size(); ++c) {
        const Cell &cell = grid.cells()[c];
        const auto &w = cache.get(cell.width);
        cplx phase = std::exp(-mu * (cell.start - grid.start())) * cell.width;
        out += phase * (w.into.transpose() * f.middleRows(c * m, m));
    }
    return out;
}

Eigen::MatrixXcd modulated_double_integral(const CellGrid &grid, const Eigen::MatrixXcd &f, const Eigen::MatrixXcd &g,
                                           cplx mu) {
    const size_t m = grid.rule().num_nodes();
    if (static_cast<size_t>(f.rows()) != grid.num_nodes() || static_cast<size_t>(g.rows()) != grid.num_nodes()) {
        throw std::invalid_argument("modulated_double_integral: node count mismatch");
    }
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(f.cols(), g.cols());
    Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(f.cols());
    WeightCache cache(grid.rule(), mu);
    std::map<double, Eigen::MatrixXcd> mod_cache;
    Eigen::VectorXd plain(m);
    for (size_t a = 0; a < m; ++a) {
        plain(a) = grid.rule().weights()[a];
    }
    Eigen::MatrixXcd left(f.cols(), m + 1);
    Eigen::MatrixXcd right(m + 1, g.cols());
    for (size_t c = 0; c < grid.cells().size(); ++c) {
        const Cell &cell = grid.cells()[c];
        double h = cell.width;
        const auto &w = cache.get(h);
        auto it = mod_cache.find(h);
        if (it == mod_cache.end()) {
            it = mod_cache.emplace(h, grid.rule().modulated_weights(mu * h)).first;
        }
        cplx phase = std::exp(-mu * (cell.start - grid.start()));
        auto fc = f.middleRows(c * m, m);
        auto gc = g.middleRows(c * m, m);
        left.col(0) = acc;
        left.rightCols(m) = (h * h) * fc.transpose();
        right.row(0) = h * (gc.transpose() * w.into).transpose();
        right.bottomRows(m) = it->second * gc;
        out.noalias() += phase * (left * right);
        acc += h * (fc.transpose() * plain.cast<cplx>());
    }
    return out;
}

Eigen::MatrixXcd causal_double_integral(const CellGrid &grid, const Eigen::MatrixXcd &f, const Eigen::MatrixXcd &g,
                                        cplx lambda) {
    return causal_impl(grid, f, g, lambda);
}

Eigen::MatrixXd causal_double_integral(const CellGrid &grid, const Eigen::MatrixXd &f, const Eigen::MatrixXd &g,
                                       double lambda) {
    return causal_impl(grid, f, g, cplx(lambda, 0.0));
}

}  // namespace tcg
