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

#ifndef TCG_LIOUVILLE_HPP
#define TCG_LIOUVILLE_HPP

#include <Eigen/Dense>
#include <complex>

#include "tcg/units.hpp"
#include <cstddef>
#include <string>
#include <vector>

// Operator bases, superoperators in a Hermitian orthonormal basis, and the
// structure constants of the basis.
//
// A superoperator M acts on coefficient vectors c_k = Tr(P_k rho):
// M_lk = Tr(P_l M(P_k)). For Hermiticity-preserving maps M is real.

namespace tcg {

using cplx = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

class OperatorBasis {
   public:
    /// Throws std::invalid_argument unless the elements are d x d, Hermitian
    /// and Hilbert-Schmidt orthonormal within 1e-12, with d^2 of them.
    OperatorBasis(std::vector<CMat> elements, std::string name);

    size_t dim() const { return dim_; }
    size_t size() const { return elements_.size(); }
    const CMat &operator[](size_t k) const { return elements_[k]; }
    const std::string &name() const { return name_; }

    /// Tr(P_k A) for every k. Real parts only; A is expected Hermitian.
    RVec coefficients(const CMat &a) const;
    /// Sum_k c_k P_k.
    CMat reconstruct(const RVec &c) const;
    /// Column k holds the column-stacked P_k, so vec(rho) = T c and c = T^dagger vec(rho).
    const CMat &vec_matrix() const { return vec_; }

   private:
    size_t dim_ = 0;
    std::vector<CMat> elements_;
    std::string name_;
    CMat vec_;
};

/// Normalized Pauli strings on n qubits, lexicographic I < X < Y < Z with the
/// first qubit most significant. Element 0 is I / sqrt(2^n).
OperatorBasis pauli_basis(int n_qubits);

/// The 16 two-spin operators: P0 = |S><S|, P1 = triplet projector / sqrt(3),
/// P2..P9 Gell-Mann-type triplet block, P10..P15 singlet-triplet coherences.
/// Spin order |up>, |down>; product basis |s1 s2> with spin 1 most significant.
OperatorBasis singlet_triplet_basis();

/// Elements P_a (x) P_b, index a * b.size() + b.
OperatorBasis tensor_product(const OperatorBasis &a, const OperatorBasis &b);

/// "pauli_<n>", "singlet_triplet_2spin", or factors joined by '*'.
OperatorBasis basis_by_name(const std::string &name);

/// M_lk = Tr(P_l U P_k U^dagger). Throws if U is not unitary within 1e-10.
RMat unitary_superop(const CMat &u, const OperatorBasis &basis);

/// Natural (column-stacking) representation of a basis-space superoperator.
CMat to_natural(const RMat &m, const OperatorBasis &basis);
/// Basis-space representation of a natural-representation superoperator.
RMat from_natural(const CMat &s, const OperatorBasis &basis);

/// Choi matrix sum_ij |i><j| (x) M(|i><j|) of a basis-space superoperator.
CMat choi_matrix(const RMat &m, const OperatorBasis &basis);

/// Structure constants of a basis.
///
/// F_mkl = -i Tr(P_m [P_k, P_l]) is real, and the adjoint matrices
/// (A_k)_ij = F_ikj represent -i [P_k, .] in the basis. The contracted
/// tensors follow from them:
///   f_ijkl = Tr(P_i [[P_k, P_l], P_j]) = -sum_m F_mkl F_imj,
///   g_ijkl = Tr(P_i [P_k, [P_l, P_j]]) = -(A_k A_l)_ij.
class StructureConstants {
   public:
    struct Entry {
        int m;
        double value;
    };

    explicit StructureConstants(const OperatorBasis &basis);

    size_t size() const { return n_; }
    /// Nonzero F_mkl for fixed (k, l).
    const std::vector<Entry> &commutator(size_t k, size_t l) const { return comm_[k * n_ + l]; }
    double big_f(size_t m, size_t k, size_t l) const;
    double f(size_t i, size_t j, size_t k, size_t l) const;
    double g(size_t i, size_t j, size_t k, size_t l) const;

    /// A_k as a dense matrix.
    RMat ad(size_t k) const;
    /// sum_k v_k A_k.
    RMat ad_combination(const RVec &v) const;
    /// The vector w_m = (1/2) sum_kl F_mkl S_kl, so that the coefficient of
    /// P_m in -(i/2) sum_kl S_kl [P_k, P_l] is w_m.
    RVec contract_commutator(const RMat &s) const;

    /// Dense f and g, index ((i * n + j) * n + k) * n + l. Only for n <= 16.
    std::vector<double> dense_f() const;
    std::vector<double> dense_g() const;
    /// Nonzero f_ijkl as (i, j, k, l, value) for larger bases.
    struct Entry4 {
        int i, j, k, l;
        double value;
    };
    std::vector<Entry4> sparse_f() const;
    std::vector<Entry4> sparse_g() const;

   private:
    size_t n_;
    std::vector<std::vector<Entry>> comm_;  // [(k, l)] -> nonzero m; also column l of A_k
};

/// Piecewise-constant Hamiltonian with exact per-piece exponentials.
class PiecewisePropagator {
   public:
    /// durations[j] > 0; hamiltonians[j] Hermitian d x d.
    PiecewisePropagator(std::vector<double> durations, std::vector<CMat> hamiltonians);

    size_t num_pieces() const { return durations_.size(); }
    size_t dim() const { return static_cast<size_t>(eigvals_.front().size()); }
    double duration() const { return starts_.back(); }
    double piece_start(size_t j) const { return starts_[j]; }
    double piece_end(size_t j) const { return starts_[j + 1]; }
    /// Piece containing local time tau, preferring the earlier piece at a boundary.
    size_t piece_at(double tau) const;
    /// U(tau, 0) for tau in piece j.
    CMat propagator(size_t j, double tau) const;
    CMat propagator(double tau) const { return propagator(piece_at(tau), tau); }
    CMat total() const { return propagator(num_pieces() - 1, duration()); }

   private:
    std::vector<double> durations_;
    std::vector<double> starts_;
    std::vector<RVec> eigvals_;
    std::vector<CMat> eigvecs_;
    std::vector<CMat> start_props_;  // U(start_j, 0)
};

/// Exact exp(-i H t) of a Hermitian matrix through its eigendecomposition.
CMat expm_hermitian(const CMat &h, double t);

/// B~_k(tau) = Tr(B(tau) U(tau) P_k U(tau)^dagger) at each node; rows are
/// nodes, columns basis indices. ops[j] is B on piece j, node_piece[n] is
/// the piece assigned to node n.
RMat btilde(const std::vector<CMat> &ops, const PiecewisePropagator &prop, const OperatorBasis &basis,
            const std::vector<double> &nodes, const std::vector<size_t> &node_piece);
/// Several channels at once, sharing one propagator evaluation per node.
std::vector<RMat> btilde(const std::vector<std::vector<CMat>> &channel_ops, const PiecewisePropagator &prop,
                         const OperatorBasis &basis, const std::vector<double> &nodes,
                         const std::vector<size_t> &node_piece);

}  // namespace tcg

#endif
