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

#include "tcg/liouville.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace tcg {

namespace {

constexpr double kBasisTol = 1e-12;

CMat ketbra(const CVec &a, const CVec &b) {
    return a * b.adjoint();
}

CMat kron(const CMat &a, const CMat &b) {
    CMat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); i++) {
        for (Eigen::Index j = 0; j < a.cols(); j++) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

CMat build_vec_matrix(const std::vector<CMat> &elements, size_t d) {
    CMat t(d * d, elements.size());
    for (size_t k = 0; k < elements.size(); k++) {
        t.col(k) = Eigen::Map<const CVec>(elements[k].data(), d * d);
    }
    return t;
}

}  // namespace

OperatorBasis::OperatorBasis(std::vector<CMat> elements, std::string name)
    : elements_(std::move(elements)), name_(std::move(name)) {
    if (elements_.empty()) {
        throw std::invalid_argument("empty operator basis");
    }
    dim_ = static_cast<size_t>(elements_[0].rows());
    if (elements_.size() != dim_ * dim_) {
        throw std::invalid_argument("operator basis needs d^2 elements");
    }
    for (const CMat &p : elements_) {
        if (static_cast<size_t>(p.rows()) != dim_ || static_cast<size_t>(p.cols()) != dim_) {
            throw std::invalid_argument("operator basis elements must be d x d");
        }
        if ((p - p.adjoint()).cwiseAbs().maxCoeff() > kBasisTol) {
            throw std::invalid_argument("operator basis element is not Hermitian");
        }
    }
    vec_ = build_vec_matrix(elements_, dim_);
    CMat gram = vec_.adjoint() * vec_;
    if ((gram - CMat::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() > kBasisTol) {
        throw std::invalid_argument("operator basis is not orthonormal");
    }
}

RVec OperatorBasis::coefficients(const CMat &a) const {
    return (vec_.adjoint() * Eigen::Map<const CVec>(a.data(), a.size())).real();
}

CMat OperatorBasis::reconstruct(const RVec &c) const {
    CVec v = vec_ * c.cast<cplx>();
    return Eigen::Map<const CMat>(v.data(), dim_, dim_);
}

OperatorBasis pauli_basis(int n_qubits) {
    if (n_qubits < 1 || n_qubits > 6) {
        throw std::invalid_argument("pauli_basis supports 1 to 6 qubits");
    }
    std::vector<CMat> single(4, CMat::Zero(2, 2));
    single[0] << 1, 0, 0, 1;
    single[1] << 0, 1, 1, 0;
    single[2] << 0, cplx(0, -1), cplx(0, 1), 0;
    single[3] << 1, 0, 0, -1;
    for (CMat &m : single) {
        m /= std::sqrt(2.0);
    }
    std::vector<CMat> elements = single;
    for (int q = 1; q < n_qubits; q++) {
        std::vector<CMat> next;
        next.reserve(elements.size() * 4);
        for (const CMat &a : elements) {
            for (const CMat &b : single) {
                next.push_back(kron(a, b));
            }
        }
        elements = std::move(next);
    }
    return OperatorBasis(std::move(elements), "pauli_" + std::to_string(n_qubits));
}

OperatorBasis singlet_triplet_basis() {
    const double r2 = std::sqrt(2.0);
    CVec up_up = CVec::Zero(4), up_dn = CVec::Zero(4), dn_up = CVec::Zero(4), dn_dn = CVec::Zero(4);
    up_up(0) = 1;
    up_dn(1) = 1;
    dn_up(2) = 1;
    dn_dn(3) = 1;
    CVec s = (up_dn - dn_up) / r2;
    CVec t0 = (up_dn + dn_up) / r2;
    CVec tm = dn_dn;
    CVec tp = up_up;
    const cplx i_r2(0.0, r2);
    std::vector<CMat> p(16);
    p[0] = ketbra(s, s);
    p[1] = (ketbra(tm, tm) + ketbra(t0, t0) + ketbra(tp, tp)) / std::sqrt(3.0);
    p[2] = (ketbra(tm, t0) + ketbra(t0, tm)) / r2;
    p[3] = (ketbra(tm, tp) + ketbra(tp, tm)) / r2;
    p[4] = (ketbra(t0, tp) + ketbra(tp, t0)) / r2;
    p[5] = (ketbra(tm, t0) - ketbra(t0, tm)) / i_r2;
    p[6] = (ketbra(tm, tp) - ketbra(tp, tm)) / i_r2;
    p[7] = (ketbra(t0, tp) - ketbra(tp, t0)) / i_r2;
    p[8] = (ketbra(tm, tm) - ketbra(t0, t0)) / r2;
    p[9] = (ketbra(tm, tm) + ketbra(t0, t0) - 2.0 * ketbra(tp, tp)) / std::sqrt(6.0);
    p[10] = (ketbra(s, tm) + ketbra(tm, s)) / r2;
    p[11] = (ketbra(s, t0) + ketbra(t0, s)) / r2;
    p[12] = (ketbra(s, tp) + ketbra(tp, s)) / r2;
    p[13] = (ketbra(s, tm) - ketbra(tm, s)) / i_r2;
    p[14] = (ketbra(s, t0) - ketbra(t0, s)) / i_r2;
    p[15] = (ketbra(s, tp) - ketbra(tp, s)) / i_r2;
    return OperatorBasis(std::move(p), "singlet_triplet_2spin");
}

OperatorBasis tensor_product(const OperatorBasis &a, const OperatorBasis &b) {
    std::vector<CMat> elements;
    elements.reserve(a.size() * b.size());
    for (size_t i = 0; i < a.size(); i++) {
        for (size_t j = 0; j < b.size(); j++) {
            elements.push_back(kron(a[i], b[j]));
        }
    }
    return OperatorBasis(std::move(elements), a.name() + "*" + b.name());
}

OperatorBasis basis_by_name(const std::string &name) {
    auto star = name.find('*');
    if (star != std::string::npos) {
        return tensor_product(basis_by_name(name.substr(0, star)), basis_by_name(name.substr(star + 1)));
    }
    if (name == "singlet_triplet_2spin") {
        return singlet_triplet_basis();
    }
    if (name.rfind("pauli_", 0) == 0) {
        size_t used = 0;
        int n = 0;
        try {
            n = std::stoi(name.substr(6), &used);
        } catch (const std::exception &) {
            used = 0;
        }
        if (used == name.size() - 6 && used > 0) {
            return pauli_basis(n);
        }
    }
    throw std::invalid_argument("unknown operator basis: " + name);
}

RMat unitary_superop(const CMat &u, const OperatorBasis &basis) {
    if (static_cast<size_t>(u.rows()) != basis.dim() || u.rows() != u.cols()) {
        throw std::invalid_argument("unitary_superop: dimension mismatch");
    }
    if ((u * u.adjoint() - CMat::Identity(u.rows(), u.cols())).cwiseAbs().maxCoeff() > 1e-10) {
        throw std::invalid_argument("unitary_superop: matrix is not unitary");
    }
    size_t d = basis.dim();
    CMat images(d * d, basis.size());
    for (size_t k = 0; k < basis.size(); k++) {
        CMat q = u * basis[k] * u.adjoint();
        images.col(k) = Eigen::Map<const CVec>(q.data(), d * d);
    }
    return (basis.vec_matrix().adjoint() * images).real();
}

CMat to_natural(const RMat &m, const OperatorBasis &basis) {
    const CMat &t = basis.vec_matrix();
    return t * m.cast<cplx>() * t.adjoint();
}

RMat from_natural(const CMat &s, const OperatorBasis &basis) {
    const CMat &t = basis.vec_matrix();
    return (t.adjoint() * s * t).real();
}

CMat choi_matrix(const RMat &m, const OperatorBasis &basis) {
    size_t d = basis.dim();
    CMat s = to_natural(m, basis);
    CMat choi = CMat::Zero(d * d, d * d);
    for (size_t i = 0; i < d; i++) {
        for (size_t j = 0; j < d; j++) {
            // vec(|i><j|) has a single 1 at index j * d + i.
            CVec image = s.col(j * d + i);
            for (size_t a = 0; a < d; a++) {
                for (size_t b = 0; b < d; b++) {
                    choi(i * d + a, j * d + b) = image(b * d + a);
                }
            }
        }
    }
    return choi;
}

StructureConstants::StructureConstants(const OperatorBasis &basis) : n_(basis.size()) {
    if (n_ > 256) {
        throw std::invalid_argument("structure constants are only formed for bases of up to 256 elements");
    }
    comm_.assign(n_ * n_, {});
    size_t d = basis.dim();
    const CMat &t = basis.vec_matrix();
    CMat comms(d * d, n_);
    for (size_t k = 0; k < n_; k++) {
        for (size_t l = 0; l < n_; l++) {
            CMat c = cplx(0, -1) * (basis[k] * basis[l] - basis[l] * basis[k]);
            comms.col(l) = Eigen::Map<const CVec>(c.data(), d * d);
        }
        RMat block = (t.adjoint() * comms).real();
        for (size_t l = 0; l < n_; l++) {
            for (size_t m = 0; m < n_; m++) {
                if (std::abs(block(m, l)) > 1e-13) {
                    comm_[k * n_ + l].push_back({static_cast<int>(m), block(m, l)});
                }
            }
        }
    }
}

double StructureConstants::big_f(size_t m, size_t k, size_t l) const {
    for (const Entry &e : commutator(k, l)) {
        if (static_cast<size_t>(e.m) == m) {
            return e.value;
        }
    }
    return 0.0;
}

double StructureConstants::f(size_t i, size_t j, size_t k, size_t l) const {
    double total = 0.0;
    for (const Entry &e : commutator(k, l)) {
        total -= e.value * big_f(i, static_cast<size_t>(e.m), j);
    }
    return total;
}

double StructureConstants::g(size_t i, size_t j, size_t k, size_t l) const {
    double total = 0.0;
    for (const Entry &e : commutator(l, j)) {
        total -= big_f(i, k, static_cast<size_t>(e.m)) * e.value;
    }
    return total;
}

RMat StructureConstants::ad(size_t k) const {
    RMat a = RMat::Zero(n_, n_);
    for (size_t j = 0; j < n_; j++) {
        for (const Entry &e : commutator(k, j)) {
            a(e.m, j) = e.value;
        }
    }
    return a;
}

RMat StructureConstants::ad_combination(const RVec &v) const {
    RMat a = RMat::Zero(n_, n_);
    for (size_t k = 0; k < n_; k++) {
        if (v(k) == 0.0) {
            continue;
        }
        for (size_t j = 0; j < n_; j++) {
            for (const Entry &e : commutator(k, j)) {
                a(e.m, j) += v(k) * e.value;
            }
        }
    }
    return a;
}

RVec StructureConstants::contract_commutator(const RMat &s) const {
    RVec w = RVec::Zero(n_);
    for (size_t k = 0; k < n_; k++) {
        for (size_t l = k + 1; l < n_; l++) {
            double anti = 0.5 * (s(k, l) - s(l, k));
            if (anti == 0.0) {
                continue;
            }
            for (const Entry &e : commutator(k, l)) {
                w(e.m) += e.value * anti;
            }
        }
    }
    return w;
}

std::vector<double> StructureConstants::dense_f() const {
    if (n_ > 16) {
        throw std::invalid_argument("dense structure constants only for bases of up to 16 elements");
    }
    std::vector<double> out(n_ * n_ * n_ * n_, 0.0);
    for (const Entry4 &e : sparse_f()) {
        out[((e.i * n_ + e.j) * n_ + e.k) * n_ + e.l] = e.value;
    }
    return out;
}

std::vector<double> StructureConstants::dense_g() const {
    if (n_ > 16) {
        throw std::invalid_argument("dense structure constants only for bases of up to 16 elements");
    }
    std::vector<double> out(n_ * n_ * n_ * n_, 0.0);
    for (const Entry4 &e : sparse_g()) {
        out[((e.i * n_ + e.j) * n_ + e.k) * n_ + e.l] = e.value;
    }
    return out;
}

std::vector<StructureConstants::Entry4> StructureConstants::sparse_f() const {
    // f_ijkl = -sum_m F_mkl (A_m)_ij.
    std::vector<Entry4> out;
    RMat acc(n_, n_);
    for (size_t k = 0; k < n_; k++) {
        for (size_t l = 0; l < n_; l++) {
            if (commutator(k, l).empty()) {
                continue;
            }
            acc.setZero();
            for (const Entry &e : commutator(k, l)) {
                for (size_t j = 0; j < n_; j++) {
                    for (const Entry &a : commutator(e.m, j)) {
                        acc(a.m, j) -= e.value * a.value;
                    }
                }
            }
            for (size_t i = 0; i < n_; i++) {
                for (size_t j = 0; j < n_; j++) {
                    if (std::abs(acc(i, j)) > 1e-13) {
                        out.push_back({int(i), int(j), int(k), int(l), acc(i, j)});
                    }
                }
            }
        }
    }
    return out;
}

std::vector<StructureConstants::Entry4> StructureConstants::sparse_g() const {
    // g_ijkl = -(A_k A_l)_ij.
    std::vector<Entry4> out;
    std::vector<RMat> ads;
    ads.reserve(n_);
    for (size_t k = 0; k < n_; k++) {
        ads.push_back(ad(k));
    }
    for (size_t k = 0; k < n_; k++) {
        for (size_t l = 0; l < n_; l++) {
            RMat prod = -ads[k] * ads[l];
            for (size_t i = 0; i < n_; i++) {
                for (size_t j = 0; j < n_; j++) {
                    if (std::abs(prod(i, j)) > 1e-13) {
                        out.push_back({int(i), int(j), int(k), int(l), prod(i, j)});
                    }
                }
            }
        }
    }
    return out;
}

CMat expm_hermitian(const CMat &h, double t) {
    Eigen::SelfAdjointEigenSolver<CMat> es(h);
    CVec phases = (es.eigenvalues() * -t).unaryExpr([](double x) { return std::polar(1.0, x); });
    return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

PiecewisePropagator::PiecewisePropagator(std::vector<double> durations, std::vector<CMat> hamiltonians)
    : durations_(std::move(durations)) {
    if (durations_.empty() || durations_.size() != hamiltonians.size()) {
        throw std::invalid_argument("PiecewisePropagator: need one Hamiltonian per piece");
    }
    starts_.push_back(0.0);
    CMat acc = CMat::Identity(hamiltonians[0].rows(), hamiltonians[0].cols());
    for (size_t j = 0; j < durations_.size(); j++) {
        if (!(durations_[j] > 0.0)) {
            throw std::invalid_argument("PiecewisePropagator: durations must be positive");
        }
        const CMat &h = hamiltonians[j];
        if ((h - h.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, h.cwiseAbs().maxCoeff())) {
            throw std::invalid_argument("PiecewisePropagator: Hamiltonian is not Hermitian");
        }
        Eigen::SelfAdjointEigenSolver<CMat> es(h);
        eigvals_.push_back(es.eigenvalues());
        eigvecs_.push_back(es.eigenvectors());
        start_props_.push_back(acc);
        starts_.push_back(starts_.back() + durations_[j]);
        acc = propagator(j, starts_.back());
    }
}

size_t PiecewisePropagator::piece_at(double tau) const {
    for (size_t j = 0; j + 1 < durations_.size(); j++) {
        if (tau <= starts_[j + 1]) {
            return j;
        }
    }
    return durations_.size() - 1;
}

CMat PiecewisePropagator::propagator(size_t j, double tau) const {
    double dt = tau - starts_[j];
    CVec phases = (eigvals_[j] * -dt).unaryExpr([](double x) { return std::polar(1.0, x); });
    return eigvecs_[j] * phases.asDiagonal() * eigvecs_[j].adjoint() * start_props_[j];
}

std::vector<RMat> btilde(const std::vector<std::vector<CMat>> &channel_ops, const PiecewisePropagator &prop,
                         const OperatorBasis &basis, const std::vector<double> &nodes,
                         const std::vector<size_t> &node_piece) {
    if (nodes.size() != node_piece.size()) {
        throw std::invalid_argument("btilde: one piece index per node");
    }
    for (size_t n = 0; n < nodes.size(); n++) {
        if (node_piece[n] >= prop.num_pieces() || nodes[n] < prop.piece_start(node_piece[n]) - 1e-9 ||
            nodes[n] > prop.piece_end(node_piece[n]) + 1e-9) {
            throw std::invalid_argument("btilde: quadrature node outside its piece");
        }
    }
    for (const auto &ops : channel_ops) {
        if (ops.size() != prop.num_pieces()) {
            throw std::invalid_argument("btilde: one operator per piece");
        }
    }
    size_t d = basis.dim();
    std::vector<RMat> out(channel_ops.size(), RMat(nodes.size(), basis.size()));
    CMat stacked(d * d, channel_ops.size());
    for (size_t n = 0; n < nodes.size(); n++) {
        CMat u = prop.propagator(node_piece[n], nodes[n]);
        for (size_t a = 0; a < channel_ops.size(); a++) {
            CMat rotated = u.adjoint() * channel_ops[a][node_piece[n]] * u;
            stacked.col(a) = Eigen::Map<const CVec>(rotated.data(), d * d);
        }
        RMat coeffs = (basis.vec_matrix().adjoint() * stacked).real();
        for (size_t a = 0; a < channel_ops.size(); a++) {
            out[a].row(n) = coeffs.col(a).transpose();
        }
    }
    return out;
}

RMat btilde(const std::vector<CMat> &ops, const PiecewisePropagator &prop, const OperatorBasis &basis,
            const std::vector<double> &nodes, const std::vector<size_t> &node_piece) {
    return btilde(std::vector<std::vector<CMat>>{ops}, prop, basis, nodes, node_piece)[0];
}

}  // namespace tcg
