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

#ifndef TCG_COARSE_GRAIN_HPP
#define TCG_COARSE_GRAIN_HPP

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tcg/liouville.hpp"
#include "tcg/stochastic.hpp"

// Second-order cumulant generators for one coarse segment.
//
// Between two coarse grid points each noise component is an OU bridge: a
// deterministic conditional mean fixed by the boundary values plus a
// zero-boundary Gaussian residual. Everything that does not depend on the
// boundary values is integrated once per segment shape (precompute_segment);
// per trajectory only a small contraction remains (assemble_generator).
//
// Frame convention: the ideal Hamiltonian of a piece is H_j + frame_rate * G
// with G diagonal and commuting with every H_j. When the frame rotation is
// fast (frame_rate * duration above QuadratureSettings::secular_threshold) the
// rotation is integrated analytically and second-order products of terms
// rotating at opposite frequencies are kept while co-rotating sums that
// oscillate at twice the frame rate are dropped.

namespace tcg {

struct NoiseChannel {
    std::string name;
    /// Coupling operator on each piece (Hermitian, d x d). The channel adds
    /// eta(t) * ops[j] to the Hamiltonian during piece j.
    std::vector<CMat> ops;
    OuSum process;
};

struct SegmentSpec {
    std::vector<double> durations;
    std::vector<CMat> hamiltonians;
    double frame_rate = 0.0;
    CMat frame_generator;  // empty when frame_rate == 0
    std::vector<NoiseChannel> channels;

    double duration() const;
    size_t dim() const;
    /// Throws std::invalid_argument on inconsistent shapes, non-Hermitian
    /// operators, a non-diagonal frame generator or one that does not commute
    /// with the Hamiltonians, and nonzero process means.
    void validate() const;
};

struct QuadratureSettings {
    int order = 8;
    double max_cell_ns = 0.5;
    /// Smallest cell next to the segment ends, in units of 1 / gamma_max.
    double layer_scale = 2.0;
    double rel_tol = 1e-8;
    int max_refinements = 6;
    double compression_tol = 1e-10;
    double secular_threshold = 200.0;
};

/// Boundary values of one channel: (start, end) per OU component.
using ChannelBoundary = std::vector<std::pair<double, double>>;

struct SegmentPrecompute {
    static constexpr uint32_t kFormatVersion = 1;

    std::string basis_name;
    size_t dim = 0;
    size_t size = 0;  // d^2
    double duration = 0.0;
    uint64_t key = 0;  // content hash of the spec, basis and settings

    /// Superoperator of the ideal evolution over the segment.
    RMat ideal;
    /// Stochastic generator parts; gamma_s is the symmetric dissipator.
    RMat gamma_s;
    RMat delta_s;

    /// Per channel: maps [x_start(0..N-1), x_end(0..N-1)] to compressed
    /// coefficients c (rows = compressed functions of that channel).
    std::vector<RMat> coeff_maps;
    /// First-order vectors, one column per compressed function (all channels
    /// stacked in channel order).
    RMat lin;
    /// Second-order vectors, one column per unordered pair i <= j of
    /// compressed functions, ordered (0,0), (0,1), ..., (0,R-1), (1,1), ...
    RMat pairs;

    int refinements = 0;
    size_t num_cells = 0;
    double convergence = 0.0;  // last relative change

    size_t num_functions() const { return static_cast<size_t>(lin.cols()); }
    bool operator==(const SegmentPrecompute &) const = default;
};

/// Throws std::runtime_error if the quadrature does not converge after
/// settings.max_refinements refinements.
SegmentPrecompute precompute_segment(const SegmentSpec &spec, const OperatorBasis &basis,
                                     const StructureConstants &sc, const QuadratureSettings &settings = {});

/// Content hash used for deduplication and the cache key.
uint64_t segment_key(const SegmentSpec &spec, const OperatorBasis &basis, const QuadratureSettings &settings);

/// Coefficient vector phi of the coherent part of the generator, so that
/// K = ad(phi) + gamma_s + delta_s.
RVec coherent_vector(const SegmentPrecompute &pre, std::span<const ChannelBoundary> boundary);

/// Throws std::invalid_argument when boundary values are missing.
RMat assemble_generator(const SegmentPrecompute &pre, const StructureConstants &sc,
                        std::span<const ChannelBoundary> boundary);

/// exp(m) for small dense matrices (scaling and squaring).
RMat expm(const RMat &m);

/// exp(m) v by truncated Taylor series with 1-norm scaling.
RVec expm_action(const RMat &m, const RVec &v, double tol = 1e-10);

/// Full segment map: ideal * exp(k).
RMat segment_map(const SegmentPrecompute &pre, const RMat &k);

struct LiouvilleState {
    RVec coeffs;
};

LiouvilleState state_from_density(const CMat &rho, const OperatorBasis &basis);
CMat density_from_state(const LiouvilleState &s, const OperatorBasis &basis);

/// Applies exp(k) and then the ideal segment map. Dense exponentials are
/// used for d^2 <= 256 and the Taylor action above that. Throws
/// std::runtime_error if the Hilbert-Schmidt norm grows beyond 1 + 1e-6.
LiouvilleState propagate(const LiouvilleState &state, const SegmentPrecompute &pre, const RMat &k);

/// One coarse segment of a run: a precompute, the segment's grid interval
/// [grid[index], grid[index + 1]], and for each of its channels the
/// trajectory channel that drives it.
struct RunSegment {
    const SegmentPrecompute *pre = nullptr;
    size_t index = 0;
    std::vector<size_t> channel_map;
};

/// Boundary values of a run segment's channels read from a trajectory.
std::vector<ChannelBoundary> segment_boundary(const RunSegment &seg, const CoarseTrajectory &traj);

/// Throws std::invalid_argument if a segment does not match the grid.
LiouvilleState concatenate_run(std::span<const RunSegment> segments, const StructureConstants &sc,
                               const CoarseTrajectory &traj, const LiouvilleState &state);

/// Brute-force reference: averages the exact superoperator of fine-grained
/// bridge realisations conditioned on the boundary values. The fine step is
/// uniform and must satisfy gamma_max * fine_dt <= 0.01; Hamiltonian pieces
/// are split at their boundaries. Returns the mean and the entrywise
/// standard error of the mean. With antithetic set, every path is paired
/// with its sign-flipped residual and the pair average counts as one sample,
/// which cancels odd orders of the residual in the mean.
struct OracleResult {
    RMat mean;
    RMat std_error;
};
OracleResult oracle_average(const SegmentSpec &spec, const OperatorBasis &basis,
                            std::span<const ChannelBoundary> boundary, size_t n_paths, double fine_dt,
                            uint64_t seed, bool antithetic = false);

/// Versioned binary container. load_precompute throws std::runtime_error on
/// a version or key mismatch.
void save_precompute(std::ostream &out, const SegmentPrecompute &pre);
SegmentPrecompute load_precompute(std::istream &in);

/// Directory-backed cache keyed by segment_key. An empty directory string
/// disables the disk layer; the in-memory layer is always active.
class PrecomputeCache {
   public:
    explicit PrecomputeCache(std::string directory = {}, QuadratureSettings settings = {});

    const SegmentPrecompute &get(const SegmentSpec &spec, const OperatorBasis &basis, const StructureConstants &sc);
    size_t size() const { return entries_.size(); }
    size_t computed() const { return computed_; }

   private:
    std::string directory_;
    QuadratureSettings settings_;
    std::vector<std::pair<uint64_t, std::unique_ptr<SegmentPrecompute>>> entries_;
    size_t computed_ = 0;
};

/// CSV dump of a generator: row,col,value.
void write_generator_csv(std::ostream &out, const RMat &k);

}  // namespace tcg

#endif
