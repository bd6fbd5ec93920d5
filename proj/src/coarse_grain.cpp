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

#include "tcg/coarse_grain.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <random>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "tcg/quadrature.hpp"

namespace tcg {

namespace {

void require(bool ok, const char *msg) {
    if (!ok) {
        throw std::invalid_argument(msg);
    }
}

bool is_hermitian(const CMat &m) {
    double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    return (m - m.adjoint()).cwiseAbs().maxCoeff() <= 1e-12 * scale;
}

double max_rate(const SegmentSpec &spec) {
    double g = 0.0;
    for (const NoiseChannel &ch : spec.channels) {
        for (const OuComponent &c : ch.process.components) {
            if (!c.is_quasi_static()) {
                g = std::max(g, c.params().gamma);
            }
        }
    }
    return g;
}

bool channel_active(const NoiseChannel &ch) {
    for (const CMat &op : ch.ops) {
        if (op.cwiseAbs().maxCoeff() > 0.0) {
            return true;
        }
    }
    return false;
}

// One rotating part of a coupling: e^{i q w t} U'^dag B_q U'.
struct RotatingPart {
    double q = 0.0;
    std::vector<CMat> ops;  // per piece
};

std::vector<RotatingPart> split_rotating(const NoiseChannel &ch, const Eigen::VectorXd &g, bool secular) {
    if (!secular) {
        return {RotatingPart{0.0, ch.ops}};
    }
    const size_t d = static_cast<size_t>(g.size());
    std::map<long long, RotatingPart> parts;
    for (size_t j = 0; j < ch.ops.size(); ++j) {
        for (size_t r = 0; r < d; ++r) {
            for (size_t c = 0; c < d; ++c) {
                if (ch.ops[j](r, c) == cplx(0.0, 0.0)) {
                    continue;
                }
                double q = g(r) - g(c);
                long long key = std::llround(q * 1e9);
                auto it = parts.find(key);
                if (it == parts.end()) {
                    RotatingPart p;
                    p.q = static_cast<double>(key) * 1e-9;
                    p.ops.assign(ch.ops.size(), CMat::Zero(d, d));
                    it = parts.emplace(key, std::move(p)).first;
                }
                it->second.ops[j](r, c) = ch.ops[j](r, c);
            }
        }
    }
    std::vector<RotatingPart> out;
    for (auto &kv : parts) {
        out.push_back(std::move(kv.second));
    }
    return out;
}

// Node values (rows = nodes, cols = basis index) of the complex basis
// coefficients of U'^dag B U'.
Eigen::MatrixXcd rotating_coefficients(const std::vector<CMat> &ops, const PiecewisePropagator &prop,
                                       const OperatorBasis &basis, const std::vector<double> &times,
                                       const std::vector<size_t> &pieces) {
    const size_t d = basis.dim();
    Eigen::MatrixXcd out(times.size(), basis.size());
    const CMat &t = basis.vec_matrix();
    for (size_t i = 0; i < times.size(); ++i) {
        CMat u = prop.propagator(pieces[i], times[i]);
        CMat x = u.adjoint() * ops[pieces[i]] * u;
        out.row(i) = (t.adjoint() * Eigen::Map<const CVec>(x.data(), d * d)).transpose();
    }
    return out;
}

// Columns are the functions, each multiplying every basis coefficient of b:
// result(:, r * D + k) = shape(:, r) .* b(:, k).
Eigen::MatrixXcd modulate(const Eigen::MatrixXd &shape, const Eigen::MatrixXcd &b) {
    const Eigen::Index n = b.cols();
    Eigen::MatrixXcd out(b.rows(), shape.cols() * n);
    for (Eigen::Index r = 0; r < shape.cols(); ++r) {
        out.middleCols(r * n, n) = shape.col(r).asDiagonal() * b;
    }
    return out;
}

RMat real_causal(const CellGrid &grid, const Eigen::MatrixXcd &f, const Eigen::MatrixXcd &g, cplx lambda,
                 bool real_path) {
    if (real_path) {
        return causal_double_integral(grid, Eigen::MatrixXd(f.real()), Eigen::MatrixXd(g.real()), lambda.real());
    }
    return causal_double_integral(grid, f, g, lambda).real();
}

RMat dissipator_from_gamma(const RMat &gam, const StructureConstants &sc) {
    const size_t n = sc.size();
    RMat out = RMat::Zero(n, n);
    for (size_t k = 0; k < n; ++k) {
        if (gam.row(k).cwiseAbs().maxCoeff() == 0.0) {
            continue;
        }
        RVec row = gam.row(k).transpose();
        out += sc.ad(k) * sc.ad_combination(row);
    }
    return 0.5 * out;
}

// Relative singular value cut for the pair-matrix factorization.
constexpr double kLowRankTol = 1e-13;

// M ~ F Vh with sqrt(w) F orthogonal-times-singular-values: a randomized
// range finder with a fixed sketch, grown until the residual is below
// kLowRankTol relative to |sqrt(w) M|, followed by an SVD of the small
// projected matrix.
template <class Mat>
std::pair<Mat, Mat> weighted_low_rank(const Mat &m, const Eigen::VectorXd &sqrt_w) {
    using Scalar = typename Mat::Scalar;
    const Eigen::Index rows = m.rows();
    const Eigen::Index cols = m.cols();
    Mat a = sqrt_w.asDiagonal() * m;
    const double anorm = a.norm();
    if (anorm == 0.0 || cols == 0) {
        return {Mat::Zero(rows, 0), Mat::Zero(0, cols)};
    }
    std::mt19937_64 eng(0x5eed);
    std::normal_distribution<double> nd;
    Mat q;
    Mat b;
    for (Eigen::Index k = std::min<Eigen::Index>(cols, std::min<Eigen::Index>(rows, 32));;
         k = std::min<Eigen::Index>(std::min(cols, rows), 2 * k)) {
        Mat omega(cols, k);
        for (Eigen::Index j = 0; j < k; ++j) {
            for (Eigen::Index i = 0; i < cols; ++i) {
                omega(i, j) = Scalar(nd(eng));
            }
        }
        Mat y = a * omega;
        Eigen::HouseholderQR<Mat> qr(y);
        q = qr.householderQ() * Mat::Identity(rows, k);
        b = q.adjoint() * a;
        double resid = (a - q * b).norm();
        if (resid <= kLowRankTol * anorm || k == std::min(cols, rows)) {
            break;
        }
    }
    Eigen::BDCSVD<Mat> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto &sv = svd.singularValues();
    Eigen::Index r = 0;
    while (r < sv.size() && sv(r) > kLowRankTol * sv(0)) {
        ++r;
    }
    Mat f = sqrt_w.cwiseInverse().asDiagonal() * (q * svd.matrixU().leftCols(r)) * sv.head(r).asDiagonal();
    Mat vh = svd.matrixV().leftCols(r).adjoint();
    return {std::move(f), std::move(vh)};
}

struct Level {
    RMat gamma_s, delta_s, lin, pairs;
    std::vector<RMat> coeff_maps;
    size_t num_cells = 0;
};

Level compute_level(const SegmentSpec &spec, const OperatorBasis &basis, const StructureConstants &sc,
                    const QuadratureSettings &settings, const CellGrid &grid, const PiecewisePropagator &prop,
                    const std::vector<std::vector<RotatingPart>> &parts, double omega) {
    const size_t D = basis.size();
    const double dur = spec.duration();
    const auto times = grid.node_times();
    const auto pieces = grid.node_pieces();
    const size_t nn = times.size();
    const Eigen::VectorXd w = grid.node_weights();
    const Eigen::VectorXd sqrt_w = w.cwiseSqrt();

    Level lv;
    lv.num_cells = grid.cells().size();
    RMat tri = RMat::Zero(D, D);

    // Per channel, per rotating part: coefficient node tables.
    std::vector<std::vector<Eigen::MatrixXcd>> coef(spec.channels.size());
    bool real_path = true;
    for (size_t a = 0; a < spec.channels.size(); ++a) {
        for (const RotatingPart &p : parts[a]) {
            coef[a].push_back(rotating_coefficients(p.ops, prop, basis, times, pieces));
            if (p.q != 0.0) {
                real_path = false;
            }
        }
    }
    auto find_part = [&](size_t a, double q) -> int {
        for (size_t i = 0; i < parts[a].size(); ++i) {
            if (std::abs(parts[a][i].q - q) < 1e-9) {
                return static_cast<int>(i);
            }
        }
        return -1;
    };

    // Stochastic parts: per component, one causal integral per rotating pair.
    for (size_t a = 0; a < spec.channels.size(); ++a) {
        if (parts[a].empty()) {
            continue;
        }
        for (const OuComponent &c : spec.channels[a].process.components) {
            if (c.is_quasi_static() || c.params().sigma == 0.0) {
                continue;
            }
            BridgeKernel k = bridge_kernel(c.params(), 0.0, dur);
            Eigen::VectorXd u(nn), v(nn);
            for (size_t i = 0; i < nn; ++i) {
                u(i) = k.left(times[i]);
                v(i) = k.right(times[i]);
            }
            for (size_t i = 0; i < parts[a].size(); ++i) {
                int partner = find_part(a, -parts[a][i].q);
                if (partner < 0) {
                    continue;
                }
                cplx lambda(c.params().gamma, -parts[a][i].q * omega);
                Eigen::MatrixXcd f = u.asDiagonal() * coef[a][partner];
                Eigen::MatrixXcd g = v.asDiagonal() * coef[a][i];
                tri += k.scale * real_causal(grid, f, g, lambda, real_path);
            }
        }
    }
    RMat gam = tri + tri.transpose();
    lv.gamma_s = dissipator_from_gamma(gam, sc);
    lv.delta_s = sc.ad_combination(sc.contract_commutator(tri.transpose()));

    // Deterministic shape functions, compressed per channel.
    std::vector<Eigen::MatrixXd> chi(spec.channels.size());
    lv.coeff_maps.resize(spec.channels.size());
    size_t total = 0;
    for (size_t a = 0; a < spec.channels.size(); ++a) {
        const auto &comps = spec.channels[a].process.components;
        const size_t n = comps.size();
        if (parts[a].empty() || n == 0) {
            lv.coeff_maps[a] = RMat::Zero(0, 2 * n);
            chi[a] = Eigen::MatrixXd::Zero(nn, 0);
            continue;
        }
        Eigen::MatrixXd phi(nn, 2 * n);
        for (size_t m = 0; m < n; ++m) {
            for (size_t i = 0; i < nn; ++i) {
                if (comps[m].is_quasi_static()) {
                    phi(i, m) = 1.0;
                    phi(i, n + m) = 0.0;
                } else {
                    BridgeShape s = bridge_shape(comps[m].params().gamma, times[i], 0.0, dur);
                    phi(i, m) = s.start;
                    phi(i, n + m) = s.end;
                }
            }
        }
        Eigen::BDCSVD<Eigen::MatrixXd> svd(sqrt_w.asDiagonal() * phi, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const auto &sv = svd.singularValues();
        Eigen::Index r = 0;
        while (r < sv.size() && sv(r) > settings.compression_tol * sv(0)) {
            ++r;
        }
        chi[a] = sqrt_w.cwiseInverse().asDiagonal() * svd.matrixU().leftCols(r);
        lv.coeff_maps[a] = sv.head(r).asDiagonal() * svd.matrixV().leftCols(r).transpose();
        total += static_cast<size_t>(r);
    }

    // First-order vectors.
    lv.lin = RMat::Zero(D, total);
    std::vector<double> qs;
    {
        size_t off = 0;
        for (size_t a = 0; a < spec.channels.size(); ++a) {
            const Eigen::Index r = chi[a].cols();
            for (size_t i = 0; i < parts[a].size(); ++i) {
                double q = parts[a][i].q;
                if (std::find_if(qs.begin(), qs.end(), [&](double x) { return std::abs(x - q) < 1e-9; }) == qs.end()) {
                    qs.push_back(q);
                }
                if (r == 0) {
                    continue;
                }
                Eigen::RowVectorXcd s = exponential_integral(grid, modulate(chi[a], coef[a][i]), cplx(0.0, -q * omega));
                for (Eigen::Index j = 0; j < r; ++j) {
                    lv.lin.col(off + j) += s.segment(j * D, D).real().transpose();
                }
            }
            off += r;
        }
    }

    // Second-order deterministic pair vectors.
    const size_t npairs = total * (total + 1) / 2;
    lv.pairs = RMat::Zero(D, npairs);
    if (total > 0) {
        auto stacked = [&](double q) {
            Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(nn, total * D);
            size_t off = 0;
            for (size_t a = 0; a < spec.channels.size(); ++a) {
                const Eigen::Index r = chi[a].cols();
                int i = find_part(a, q);
                if (i >= 0 && r > 0) {
                    out.middleCols(off * D, r * D) = modulate(chi[a], coef[a][i]);
                }
                off += r;
            }
            return out;
        };
        // Terms rotating as e^{i q1 w s} e^{i q2 w t} for the earlier (s) and
        // later (t) factor. Opposite frequencies leave a rotating causal
        // kernel; a single nonzero frequency leaves a kernel rotating in one
        // time only; two unequal nonzero frequencies average out at order
        // 1 / (w dur)^2 and are dropped.
        // The stacked columns are smooth node functions and highly redundant;
        // integrate a weighted low-rank factorization M = F Vh instead.
        struct LowRank {
            Eigen::MatrixXcd f;
            Eigen::MatrixXcd vh;
        };
        auto low_rank = [&](const Eigen::MatrixXcd &m) {
            LowRank lr;
            if (real_path) {
                auto [f, vh] = weighted_low_rank(Eigen::MatrixXd(m.real()), sqrt_w);
                lr.f = f.cast<cplx>();
                lr.vh = vh.cast<cplx>();
            } else {
                auto [f, vh] = weighted_low_rank(m, sqrt_w);
                lr.f = std::move(f);
                lr.vh = std::move(vh);
            }
            return lr;
        };
        std::map<long long, LowRank> factors;
        auto factor = [&](double q) -> const LowRank & {
            long long key = std::llround(q * 1e9);
            auto it = factors.find(key);
            if (it == factors.end()) {
                it = factors.emplace(key, low_rank(stacked(q))).first;
            }
            return it->second;
        };
        auto causal = [&](const LowRank &a, const LowRank &b, cplx lambda) -> RMat {
            if (a.f.cols() == 0 || b.f.cols() == 0) {
                return RMat::Zero(a.vh.cols(), b.vh.cols());
            }
            Eigen::MatrixXcd c;
            if (real_path) {
                c = causal_double_integral(grid, Eigen::MatrixXd(a.f.real()), Eigen::MatrixXd(b.f.real()),
                                           lambda.real())
                        .cast<cplx>();
            } else {
                c = causal_double_integral(grid, a.f, b.f, lambda);
            }
            return (a.vh.transpose() * c * b.vh).real();
        };
        RMat t = RMat::Zero(total * D, total * D);
        auto has_q = [&](double q) {
            return std::find_if(qs.begin(), qs.end(), [&](double x) { return std::abs(x - q) < 1e-9; }) != qs.end();
        };
        for (double q : qs) {
            if (has_q(-q)) {
                t += causal(factor(-q), factor(q), cplx(0.0, -q * omega));
            }
        }
        if (has_q(0.0)) {
            const LowRank &still = factor(0.0);
            Eigen::RowVectorXcd still_int = exponential_integral(grid, still.f, 0.0) * still.vh;
            for (double q : qs) {
                if (q == 0.0) {
                    continue;
                }
                const LowRank &rot = factor(q);
                if (still.f.cols() == 0 || rot.f.cols() == 0) {
                    continue;
                }
                cplx mu(0.0, -q * omega);
                // still at s, rotating at t.
                RMat mod = (still.vh.transpose() * modulated_double_integral(grid, still.f, rot.f, mu) * rot.vh).real();
                t += mod;
                // rotating at s, still at t: full square minus the reversed triangle.
                Eigen::RowVectorXcd rot_int = exponential_integral(grid, rot.f, mu) * rot.vh;
                t += (rot_int.transpose() * still_int).real();
                t -= mod.transpose();
            }
        }
        // t(j*D + l, i*D + k) = int_{s<t} f_{j,l}(s) g_{i,k}(t); the ordered
        // product with i at the later time is block(j, i)^T.
        size_t col = 0;
        for (size_t i = 0; i < total; ++i) {
            for (size_t j = i; j < total; ++j) {
                RMat s = t.block(j * D, i * D, D, D).transpose();
                if (j != i) {
                    s += t.block(i * D, j * D, D, D).transpose();
                }
                lv.pairs.col(col++) = sc.contract_commutator(s);
            }
        }
    }
    return lv;
}

std::vector<ChannelBoundary> probe_boundary(const SegmentSpec &spec) {
    RandomStream rng(0x5eed);
    std::vector<ChannelBoundary> out;
    for (const NoiseChannel &ch : spec.channels) {
        ChannelBoundary b;
        for (const OuComponent &c : ch.process.components) {
            double sd = std::sqrt(c.stationary_variance());
            double x0 = sd * rng.normal();
            double x1 = c.is_quasi_static() ? x0 : sd * rng.normal();
            b.emplace_back(x0, x1);
        }
        out.push_back(std::move(b));
    }
    return out;
}

RVec coherent_from(const std::vector<RMat> &maps, const RMat &lin, const RMat &pairs,
                   std::span<const ChannelBoundary> boundary) {
    if (boundary.size() != maps.size()) {
        throw std::invalid_argument("assemble_generator: boundary values missing for some channels");
    }
    RVec c(lin.cols());
    Eigen::Index off = 0;
    for (size_t a = 0; a < maps.size(); ++a) {
        const size_t n = static_cast<size_t>(maps[a].cols() / 2);
        if (boundary[a].size() != n) {
            throw std::invalid_argument("assemble_generator: boundary values missing for some components");
        }
        RVec y(2 * n);
        for (size_t m = 0; m < n; ++m) {
            y(m) = boundary[a][m].first;
            y(n + m) = boundary[a][m].second;
        }
        c.segment(off, maps[a].rows()) = maps[a] * y;
        off += maps[a].rows();
    }
    RVec phi = lin * c;
    const Eigen::Index r = c.size();
    RVec prod(pairs.cols());
    Eigen::Index col = 0;
    for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = i; j < r; ++j) {
            prod(col++) = c(i) * c(j);
        }
    }
    phi += pairs * prod;
    return phi;
}

double relative_change(const RMat &a, const RMat &b, double floor) {
    double denom = std::max(a.norm(), floor);
    if (denom == 0.0) {
        return 0.0;
    }
    return (a - b).norm() / denom;
}

struct Hasher {
    uint64_t h = 0xcbf29ce484222325ULL;
    void bytes(const void *p, size_t n) {
        const auto *c = static_cast<const unsigned char *>(p);
        for (size_t i = 0; i < n; ++i) {
            h ^= c[i];
            h *= 0x100000001b3ULL;
        }
    }
    void f64(double x) { bytes(&x, sizeof x); }
    void u64(uint64_t x) { bytes(&x, sizeof x); }
    void str(const std::string &s) {
        u64(s.size());
        bytes(s.data(), s.size());
    }
    void cmat(const CMat &m) {
        u64(static_cast<uint64_t>(m.rows()));
        u64(static_cast<uint64_t>(m.cols()));
        bytes(m.data(), sizeof(cplx) * m.size());
    }
};

}  // namespace

double SegmentSpec::duration() const {
    double t = 0.0;
    for (double d : durations) {
        t += d;
    }
    return t;
}

size_t SegmentSpec::dim() const {
    return hamiltonians.empty() ? 0 : static_cast<size_t>(hamiltonians.front().rows());
}

void SegmentSpec::validate() const {
    require(!durations.empty() && durations.size() == hamiltonians.size(),
            "SegmentSpec: need one Hamiltonian per piece");
    const auto d = static_cast<Eigen::Index>(dim());
    for (size_t j = 0; j < durations.size(); ++j) {
        require(durations[j] > 0.0, "SegmentSpec: durations must be positive");
        require(hamiltonians[j].rows() == d && hamiltonians[j].cols() == d, "SegmentSpec: Hamiltonian shape");
        require(is_hermitian(hamiltonians[j]), "SegmentSpec: Hamiltonian is not Hermitian");
    }
    if (frame_rate != 0.0) {
        require(frame_generator.rows() == d && frame_generator.cols() == d, "SegmentSpec: frame generator shape");
        CMat off = frame_generator;
        off.diagonal().setZero();
        require(off.cwiseAbs().maxCoeff() == 0.0, "SegmentSpec: frame generator must be diagonal");
        require(frame_generator.diagonal().imag().cwiseAbs().maxCoeff() == 0.0,
                "SegmentSpec: frame generator must be real");
        for (const CMat &h : hamiltonians) {
            CMat c = frame_generator * h - h * frame_generator;
            require(c.cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, h.cwiseAbs().maxCoeff()),
                    "SegmentSpec: frame generator must commute with the Hamiltonians");
        }
    }
    for (const NoiseChannel &ch : channels) {
        require(ch.ops.size() == durations.size(), "SegmentSpec: channel needs one operator per piece");
        for (const CMat &op : ch.ops) {
            require(op.rows() == d && op.cols() == d, "SegmentSpec: channel operator shape");
            require(is_hermitian(op), "SegmentSpec: channel operator is not Hermitian");
        }
        for (const OuComponent &c : ch.process.components) {
            require(c.stationary_mean() == 0.0, "SegmentSpec: noise components must have zero mean");
        }
    }
}

uint64_t segment_key(const SegmentSpec &spec, const OperatorBasis &basis, const QuadratureSettings &s) {
    Hasher h;
    h.u64(SegmentPrecompute::kFormatVersion);
    h.str(basis.name());
    h.u64(spec.durations.size());
    for (size_t j = 0; j < spec.durations.size(); ++j) {
        h.f64(spec.durations[j]);
        h.cmat(spec.hamiltonians[j]);
    }
    h.f64(spec.frame_rate);
    if (spec.frame_rate != 0.0) {
        h.cmat(spec.frame_generator);
    }
    h.u64(spec.channels.size());
    for (const NoiseChannel &ch : spec.channels) {
        for (const CMat &op : ch.ops) {
            h.cmat(op);
        }
        h.u64(ch.process.components.size());
        for (const OuComponent &c : ch.process.components) {
            h.u64(c.is_quasi_static() ? 1 : 0);
            h.f64(c.params().gamma);
            h.f64(c.params().sigma);
            h.f64(c.stationary_variance());
        }
    }
    h.u64(static_cast<uint64_t>(s.order));
    h.f64(s.max_cell_ns);
    h.f64(s.layer_scale);
    h.f64(s.rel_tol);
    h.u64(static_cast<uint64_t>(s.max_refinements));
    h.f64(s.compression_tol);
    h.f64(s.secular_threshold);
    return h.h;
}

SegmentPrecompute precompute_segment(const SegmentSpec &spec, const OperatorBasis &basis,
                                     const StructureConstants &sc, const QuadratureSettings &settings) {
    spec.validate();
    require(spec.dim() == basis.dim(), "precompute_segment: basis dimension does not match the segment");
    require(sc.size() == basis.size(), "precompute_segment: structure constants do not match the basis");
    const double dur = spec.duration();
    const bool secular = spec.frame_rate != 0.0 && std::abs(spec.frame_rate) * dur > settings.secular_threshold;

    std::vector<CMat> hams = spec.hamiltonians;
    Eigen::VectorXd g;
    if (spec.frame_rate != 0.0) {
        g = spec.frame_generator.diagonal().real();
        if (!secular) {
            for (CMat &h : hams) {
                h += spec.frame_rate * spec.frame_generator;
            }
        }
    }
    PiecewisePropagator prop(spec.durations, hams);

    std::vector<std::vector<RotatingPart>> parts;
    for (const NoiseChannel &ch : spec.channels) {
        parts.push_back(channel_active(ch) ? split_rotating(ch, g, secular) : std::vector<RotatingPart>{});
        bool still = false, rotating = false;
        for (const RotatingPart &p : parts.back()) {
            (p.q == 0.0 ? still : rotating) = true;
        }
        require(!(still && rotating),
                "precompute_segment: with a secular frame each channel must be either static or rotating");
    }

    std::vector<double> breaks{0.0};
    for (double d : spec.durations) {
        breaks.push_back(breaks.back() + d);
    }
    breaks.back() = dur;
    double gmax = max_rate(spec);
    double layer = gmax > 0.0 ? settings.layer_scale / gmax : 0.0;
    CellRule rule(settings.order);
    CellGrid grid(breaks, settings.max_cell_ns, layer, rule);

    SegmentPrecompute pre;
    pre.basis_name = basis.name();
    pre.dim = basis.dim();
    pre.size = basis.size();
    pre.duration = dur;
    pre.key = segment_key(spec, basis, settings);
    CMat u = prop.total();
    if (secular) {
        CVec phase(g.size());
        for (Eigen::Index i = 0; i < g.size(); ++i) {
            phase(i) = std::exp(cplx(0.0, -spec.frame_rate * g(i) * dur));
        }
        u = phase.asDiagonal() * u;
    }
    pre.ideal = unitary_superop(u, basis);

    const auto probes = probe_boundary(spec);
    Level prev = compute_level(spec, basis, sc, settings, grid, prop, parts, spec.frame_rate);
    double change = 0.0;
    for (int r = 1; r <= settings.max_refinements + 1; ++r) {
        if (r == settings.max_refinements + 1) {
            std::ostringstream msg;
            msg << "precompute_segment: quadrature did not converge after " << settings.max_refinements
                << " refinements (last relative change " << change << ")";
            throw std::runtime_error(msg.str());
        }
        grid = grid.refined();
        Level cur = compute_level(spec, basis, sc, settings, grid, prop, parts, spec.frame_rate);
        RMat stoch_a = cur.gamma_s + cur.delta_s;
        RMat stoch_b = prev.gamma_s + prev.delta_s;
        RVec phi_a = coherent_from(cur.coeff_maps, cur.lin, cur.pairs, probes);
        RVec phi_b = coherent_from(prev.coeff_maps, prev.lin, prev.pairs, probes);
        double scale = std::max(stoch_a.norm(), phi_a.norm());
        change = std::max(relative_change(stoch_a, stoch_b, 1e-12 * scale),
                          relative_change(phi_a, phi_b, 1e-12 * scale));
        prev = std::move(cur);
        if (change < settings.rel_tol) {
            pre.refinements = r;
            break;
        }
    }
    pre.gamma_s = std::move(prev.gamma_s);
    pre.delta_s = std::move(prev.delta_s);
    pre.coeff_maps = std::move(prev.coeff_maps);
    pre.lin = std::move(prev.lin);
    pre.pairs = std::move(prev.pairs);
    pre.num_cells = prev.num_cells;
    pre.convergence = change;
    return pre;
}

RVec coherent_vector(const SegmentPrecompute &pre, std::span<const ChannelBoundary> boundary) {
    return coherent_from(pre.coeff_maps, pre.lin, pre.pairs, boundary);
}

RMat assemble_generator(const SegmentPrecompute &pre, const StructureConstants &sc,
                        std::span<const ChannelBoundary> boundary) {
    require(sc.size() == pre.size, "assemble_generator: structure constants do not match");
    RMat k = sc.ad_combination(coherent_vector(pre, boundary));
    k += pre.gamma_s;
    k += pre.delta_s;
    return k;
}

RMat expm(const RMat &m) {
    return m.exp();
}

RVec expm_action(const RMat &m, const RVec &v, double tol) {
    double norm1 = m.cwiseAbs().colwise().sum().maxCoeff();
    int steps = std::max(1, static_cast<int>(std::ceil(norm1)));
    RVec out = v;
    for (int s = 0; s < steps; ++s) {
        RVec term = out;
        RVec acc = out;
        double prev = std::numeric_limits<double>::infinity();
        for (int j = 1; j < 200; ++j) {
            term = m * term / (static_cast<double>(j) * steps);
            acc += term;
            double t = term.lpNorm<Eigen::Infinity>();
            if (t <= tol * acc.lpNorm<Eigen::Infinity>() && prev <= tol * acc.lpNorm<Eigen::Infinity>()) {
                break;
            }
            prev = t;
        }
        out = acc;
    }
    return out;
}

RMat segment_map(const SegmentPrecompute &pre, const RMat &k) {
    return pre.ideal * expm(k);
}

LiouvilleState state_from_density(const CMat &rho, const OperatorBasis &basis) {
    return LiouvilleState{basis.coefficients(rho)};
}

CMat density_from_state(const LiouvilleState &s, const OperatorBasis &basis) {
    return basis.reconstruct(s.coeffs);
}

LiouvilleState propagate(const LiouvilleState &state, const SegmentPrecompute &pre, const RMat &k) {
    require(static_cast<size_t>(state.coeffs.size()) == pre.size && static_cast<size_t>(k.rows()) == pre.size,
            "propagate: dimension mismatch");
    RVec v = pre.size <= 256 ? RVec(expm(k) * state.coeffs) : expm_action(k, state.coeffs);
    LiouvilleState out{pre.ideal * v};
    if (out.coeffs.norm() > state.coeffs.norm() * (1.0 + 1e-6)) {
        throw std::runtime_error("propagate: norm growth; the generator is not contractive");
    }
    return out;
}

std::vector<ChannelBoundary> segment_boundary(const RunSegment &seg, const CoarseTrajectory &traj) {
    std::vector<ChannelBoundary> out;
    out.reserve(seg.channel_map.size());
    for (size_t a = 0; a < seg.channel_map.size(); ++a) {
        size_t ch = seg.channel_map[a];
        require(ch < traj.num_channels(), "segment_boundary: channel out of range");
        ChannelBoundary b;
        for (size_t n = 0; n < traj.num_components(ch); ++n) {
            b.emplace_back(traj.value(ch, n, seg.index), traj.value(ch, n, seg.index + 1));
        }
        out.push_back(std::move(b));
    }
    return out;
}

LiouvilleState concatenate_run(std::span<const RunSegment> segments, const StructureConstants &sc,
                               const CoarseTrajectory &traj, const LiouvilleState &state) {
    const auto &grid = traj.grid();
    LiouvilleState s = state;
    for (const RunSegment &seg : segments) {
        require(seg.pre != nullptr, "concatenate_run: missing precompute");
        require(seg.index + 1 < grid.size(), "concatenate_run: segment beyond the trajectory grid");
        double dt = grid[seg.index + 1] - grid[seg.index];
        require(std::abs(dt - seg.pre->duration) <= 1e-9 * std::max(1.0, dt),
                "concatenate_run: segment duration does not match the grid");
        require(seg.channel_map.size() == seg.pre->coeff_maps.size(), "concatenate_run: channel map size");
        auto b = segment_boundary(seg, traj);
        s = propagate(s, *seg.pre, assemble_generator(*seg.pre, sc, b));
    }
    return s;
}

namespace {

CMat step_unitary(const CMat &h, double dt) {
    if (h.rows() == 2) {
        cplx a0 = 0.5 * (h(0, 0) + h(1, 1));
        double ax = h(0, 1).real();
        double ay = -h(0, 1).imag();
        double az = 0.5 * (h(0, 0) - h(1, 1)).real();
        double r = std::sqrt(ax * ax + ay * ay + az * az);
        double c = std::cos(r * dt);
        double s = r > 0.0 ? std::sin(r * dt) / r : dt;
        CMat u(2, 2);
        u(0, 0) = cplx(c, -s * az);
        u(1, 1) = cplx(c, s * az);
        u(0, 1) = cplx(-s * ay, -s * ax);
        u(1, 0) = cplx(s * ay, -s * ax);
        return std::exp(cplx(0.0, -1.0) * a0.real() * dt) * u;
    }
    return expm_hermitian(h, dt);
}

}  // namespace

OracleResult oracle_average(const SegmentSpec &spec, const OperatorBasis &basis,
                            std::span<const ChannelBoundary> boundary, size_t n_paths, double fine_dt,
                            uint64_t seed, bool antithetic) {
    spec.validate();
    require(spec.dim() == basis.dim(), "oracle_average: basis dimension does not match the segment");
    require(boundary.size() == spec.channels.size(), "oracle_average: boundary values missing");
    require(n_paths >= 2, "oracle_average: need at least two paths");
    require(fine_dt > 0.0, "oracle_average: fine_dt must be positive");
    const double dur = spec.duration();
    const size_t steps = static_cast<size_t>(std::llround(dur / fine_dt));
    require(steps >= 1 && std::abs(steps * fine_dt - dur) <= 1e-9 * dur, "oracle_average: fine_dt must divide the segment");
    require(max_rate(spec) * fine_dt <= 0.01 * (1.0 + 1e-12), "oracle_average: fine_dt does not resolve the fastest rate");

    std::vector<CMat> hams = spec.hamiltonians;
    if (spec.frame_rate != 0.0) {
        for (CMat &h : hams) {
            h += spec.frame_rate * spec.frame_generator;
        }
    }
    for (const CMat &h : hams) {
        Eigen::SelfAdjointEigenSolver<CMat> es(h);
        double width = es.eigenvalues().maxCoeff() - es.eigenvalues().minCoeff();
        require(width * fine_dt <= 1.0, "oracle_average: fine_dt does not resolve the Hamiltonian");
    }
    for (size_t a = 0; a < spec.channels.size(); ++a) {
        require(boundary[a].size() == spec.channels[a].process.components.size(),
                "oracle_average: boundary values missing for some components");
    }

    std::vector<double> starts{0.0};
    for (double d : spec.durations) {
        starts.push_back(starts.back() + d);
    }
    const size_t D = basis.size();
    RMat mean = RMat::Zero(D, D);
    RMat m2 = RMat::Zero(D, D);
    std::vector<std::vector<double>> mean_part(spec.channels.size(), std::vector<double>(steps + 1));
    std::vector<std::vector<double>> resid(spec.channels.size(), std::vector<double>(steps + 1));
    std::vector<double> eta_step(spec.channels.size());
    auto evolve = [&](double sign) {
        CMat u = CMat::Identity(spec.dim(), spec.dim());
        size_t piece = 0;
        for (size_t i = 0; i < steps; ++i) {
            double t0 = i * fine_dt;
            double t1 = i + 1 == steps ? dur : (i + 1) * fine_dt;
            for (size_t a = 0; a < spec.channels.size(); ++a) {
                eta_step[a] = 0.5 * (mean_part[a][i] + mean_part[a][i + 1] + sign * (resid[a][i] + resid[a][i + 1]));
            }
            double t = t0;
            while (t < t1) {
                while (piece + 1 < spec.durations.size() && starts[piece + 1] <= t) {
                    ++piece;
                }
                double end = piece + 1 < spec.durations.size() ? std::min(t1, starts[piece + 1]) : t1;
                CMat h = hams[piece];
                for (size_t a = 0; a < spec.channels.size(); ++a) {
                    h += eta_step[a] * spec.channels[a].ops[piece];
                }
                u = step_unitary(h, end - t) * u;
                t = end;
            }
        }
        return unitary_superop(u, basis);
    };
    for (size_t path = 0; path < n_paths; ++path) {
        for (size_t a = 0; a < spec.channels.size(); ++a) {
            std::fill(mean_part[a].begin(), mean_part[a].end(), 0.0);
            std::fill(resid[a].begin(), resid[a].end(), 0.0);
            const auto &comps = spec.channels[a].process.components;
            for (size_t n = 0; n < comps.size(); ++n) {
                const auto [x0, x1] = boundary[a][n];
                if (comps[n].is_quasi_static()) {
                    for (double &e : mean_part[a]) {
                        e += x0;
                    }
                    continue;
                }
                BridgeSegment seg{comps[n].params(), 0.0, dur, x0, x1};
                RandomStream rng(stream_seed(stream_seed(seed, path), a, n));
                auto z = sample_zero_bridge(comps[n].params(), 0.0, dur, steps, rng);
                for (size_t i = 0; i <= steps; ++i) {
                    double t = i == steps ? dur : i * fine_dt;
                    mean_part[a][i] += bridge_mean(seg, t);
                    resid[a][i] += z[i];
                }
            }
        }
        RMat s = evolve(1.0);
        if (antithetic) {
            s = 0.5 * (s + evolve(-1.0));
        }
        RMat delta = s - mean;
        mean += delta / static_cast<double>(path + 1);
        m2 += delta.cwiseProduct(s - mean);
    }
    OracleResult r;
    r.mean = mean;
    r.std_error = (m2 / static_cast<double>(n_paths - 1) / static_cast<double>(n_paths)).cwiseSqrt();
    return r;
}

namespace {

constexpr char kMagic[8] = {'T', 'C', 'G', 'P', 'R', 'E', '\0', '\0'};

void put_u64(std::ostream &o, uint64_t x) { o.write(reinterpret_cast<const char *>(&x), sizeof x); }
void put_f64(std::ostream &o, double x) { o.write(reinterpret_cast<const char *>(&x), sizeof x); }
void put_mat(std::ostream &o, const RMat &m) {
    put_u64(o, static_cast<uint64_t>(m.rows()));
    put_u64(o, static_cast<uint64_t>(m.cols()));
    o.write(reinterpret_cast<const char *>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
}

uint64_t get_u64(std::istream &i) {
    uint64_t x = 0;
    i.read(reinterpret_cast<char *>(&x), sizeof x);
    return x;
}
double get_f64(std::istream &i) {
    double x = 0;
    i.read(reinterpret_cast<char *>(&x), sizeof x);
    return x;
}
RMat get_mat(std::istream &i) {
    uint64_t r = get_u64(i);
    uint64_t c = get_u64(i);
    if (!i || r > (1u << 20) || c > (1u << 24)) {
        throw std::runtime_error("load_precompute: corrupt matrix header");
    }
    RMat m(r, c);
    i.read(reinterpret_cast<char *>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
    return m;
}

}  // namespace

void save_precompute(std::ostream &out, const SegmentPrecompute &pre) {
    out.write(kMagic, sizeof kMagic);
    put_u64(out, SegmentPrecompute::kFormatVersion);
    put_u64(out, pre.key);
    put_u64(out, pre.basis_name.size());
    out.write(pre.basis_name.data(), static_cast<std::streamsize>(pre.basis_name.size()));
    put_u64(out, pre.dim);
    put_u64(out, pre.size);
    put_f64(out, pre.duration);
    put_mat(out, pre.ideal);
    put_mat(out, pre.gamma_s);
    put_mat(out, pre.delta_s);
    put_u64(out, pre.coeff_maps.size());
    for (const RMat &m : pre.coeff_maps) {
        put_mat(out, m);
    }
    put_mat(out, pre.lin);
    put_mat(out, pre.pairs);
    put_u64(out, static_cast<uint64_t>(pre.refinements));
    put_u64(out, pre.num_cells);
    put_f64(out, pre.convergence);
}

SegmentPrecompute load_precompute(std::istream &in) {
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        throw std::runtime_error("load_precompute: not a precompute file");
    }
    if (get_u64(in) != SegmentPrecompute::kFormatVersion) {
        throw std::runtime_error("load_precompute: unsupported format version");
    }
    SegmentPrecompute p;
    p.key = get_u64(in);
    uint64_t len = get_u64(in);
    if (len > 4096) {
        throw std::runtime_error("load_precompute: corrupt basis name");
    }
    p.basis_name.resize(len);
    in.read(p.basis_name.data(), static_cast<std::streamsize>(len));
    p.dim = get_u64(in);
    p.size = get_u64(in);
    p.duration = get_f64(in);
    p.ideal = get_mat(in);
    p.gamma_s = get_mat(in);
    p.delta_s = get_mat(in);
    uint64_t n = get_u64(in);
    if (n > (1u << 16)) {
        throw std::runtime_error("load_precompute: corrupt channel count");
    }
    for (uint64_t i = 0; i < n; ++i) {
        p.coeff_maps.push_back(get_mat(in));
    }
    p.lin = get_mat(in);
    p.pairs = get_mat(in);
    p.refinements = static_cast<int>(get_u64(in));
    p.num_cells = get_u64(in);
    p.convergence = get_f64(in);
    if (!in) {
        throw std::runtime_error("load_precompute: truncated file");
    }
    return p;
}

PrecomputeCache::PrecomputeCache(std::string directory, QuadratureSettings settings)
    : directory_(std::move(directory)), settings_(settings) {}

const SegmentPrecompute &PrecomputeCache::get(const SegmentSpec &spec, const OperatorBasis &basis,
                                              const StructureConstants &sc) {
    uint64_t key = segment_key(spec, basis, settings_);
    for (const auto &e : entries_) {
        if (e.first == key) {
            return *e.second;
        }
    }
    std::unique_ptr<SegmentPrecompute> pre;
    std::filesystem::path path;
    if (!directory_.empty()) {
        std::ostringstream name;
        name << std::hex << std::setw(16) << std::setfill('0') << key << ".tcgpre";
        path = std::filesystem::path(directory_) / name.str();
        std::ifstream in(path, std::ios::binary);
        if (in) {
            try {
                auto loaded = load_precompute(in);
                if (loaded.key == key) {
                    pre = std::make_unique<SegmentPrecompute>(std::move(loaded));
                }
            } catch (const std::runtime_error &) {
                pre.reset();
            }
        }
    }
    if (!pre) {
        pre = std::make_unique<SegmentPrecompute>(precompute_segment(spec, basis, sc, settings_));
        ++computed_;
        if (!directory_.empty()) {
            std::filesystem::create_directories(directory_);
            auto tmp = path;
            tmp += ".tmp";
            {
                std::ofstream out(tmp, std::ios::binary);
                save_precompute(out, *pre);
            }
            std::filesystem::rename(tmp, path);
        }
    }
    entries_.emplace_back(key, std::move(pre));
    return *entries_.back().second;
}

void write_generator_csv(std::ostream &out, const RMat &k) {
    out << "row,col,value\n";
    out << std::setprecision(17);
    for (Eigen::Index r = 0; r < k.rows(); ++r) {
        for (Eigen::Index c = 0; c < k.cols(); ++c) {
            out << r << ',' << c << ',' << k(r, c) << '\n';
        }
    }
}

}  // namespace tcg
