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

#include "tcg/circuits.hpp"

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include <unsupported/Eigen/KroneckerProduct>

#include "gtest/gtest.h"

using namespace tcg;

namespace {


CMat cnot_8(int control, int target) {
    CMat m = CMat::Zero(8, 8);
    for (int i = 0; i < 8; ++i) {
        int c = (i >> (2 - control)) & 1;
        int j = c ? i ^ (1 << (2 - target)) : i;
        m(j, i) = 1.0;
    }
    return m;
}

CMat random_density(int dim, uint64_t seed) {
    RandomStream rng(seed);
    CMat a(dim, dim);
    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) {
            a(i, j) = cplx(rng.normal(), rng.normal());
        }
    }
    CMat rho = a * a.adjoint();
    return rho / rho.trace().real();
}

CMat pure(const CVec &psi) { return psi * psi.adjoint(); }

SpinChainConfig pair_config(double delta_mhz, double field) {
    SpinChainConfig cfg;
    cfg.n_spins = 2;
    cfg.deltas_mhz = {delta_mhz};
    cfg.field_tesla = field;
    cfg.ancilla_first_spin = 0;
    return cfg;
}

ParityNoiseModel strong_noise() {
    ParityNoiseModel m;
    m.name = "strong";
    double b = 2.0 * kPi * 4e-4;
    m.magnetic = quasi_static(b * b);
    m.exchange = quasi_static(0.02 * 0.02);
    return m;
}

}  // namespace

TEST(SpinAlgebra, Commutators) {
    for (int i = 0; i < 3; ++i) {
        CMat x = spin_operator(3, i, 'x');
        CMat y = spin_operator(3, i, 'y');
        CMat z = spin_operator(3, i, 'z');
        EXPECT_LT((x * y - y * x - cplx(0, 1) * z).norm(), 1e-14);
    }
    CMat s = exchange_operator(2, 0, 1);
    Eigen::SelfAdjointEigenSolver<CMat> es(s);
    EXPECT_NEAR(es.eigenvalues()(0), -0.75, 1e-14);
    EXPECT_NEAR(es.eigenvalues()(3), 0.25, 1e-14);
}

TEST(SpinAlgebra, EncodedZOnCodeAndLeakage) {
    CMat z = encoded_z(2, 0);
    CVec s = encoded_state(2, {0});
    CVec t0 = encoded_state(2, {1});
    EXPECT_NEAR((s.adjoint() * z * s)(0).real(), 1.0, 1e-14);
    EXPECT_NEAR((t0.adjoint() * z * t0)(0).real(), -1.0, 1e-14);
    EXPECT_NEAR(std::abs(z(0, 0)), 0.0, 1e-14);  // |up up>
    EXPECT_NEAR(std::abs(z(3, 3)), 0.0, 1e-14);
}

TEST(SpinChain, ZeemanRateAndOffsets) {
    SpinChainConfig cfg;
    EXPECT_NEAR(cfg.zeeman_rate(), 2.0 * kPi * 2.0 * 13.996244936 * 0.50005, 1e-9);
    auto f = cfg.offsets();
    double mean = 0.0;
    for (double v : f) {
        mean += v / f.size();
    }
    EXPECT_NEAR(mean, 0.0, 1e-15);
    for (size_t i = 0; i + 1 < f.size(); ++i) {
        EXPECT_NEAR(f[i] - f[i + 1], 2.0 * kPi * 1e-3 * cfg.deltas_mhz[i], 1e-15);
    }
}

TEST(GateLibrary, CompiledDurations) {
    SpinChainConfig cfg;
    EXPECT_DOUBLE_EQ(compile_gate("CNOT12", cfg).duration(), 360.0);
    EXPECT_DOUBLE_EQ(compile_gate("CNOT32", cfg).duration(), 360.0);
    for (const char *id : {"IDENTITY_Q1", "IDENTITY_Q2", "IDENTITY_Q3"}) {
        EXPECT_DOUBLE_EQ(compile_gate(id, cfg).duration(), 120.0);
    }
    EXPECT_DOUBLE_EQ(parity_round_schedule(cfg).duration(), 720.0);
}

TEST(GateLibrary, RejectsUnknownAndMismatch) {
    SpinChainConfig cfg;
    EXPECT_THROW(compile_gate("CNOT13", cfg), std::invalid_argument);
    SpinChainConfig other = cfg;
    other.deltas_mhz[0] = 12.0;
    EXPECT_THROW(compile_gate("CNOT12", other), std::invalid_argument);
    other = cfg;
    other.pulse_ns = 10.0;
    EXPECT_THROW(compile_gate("CNOT12", other), std::invalid_argument);
}

TEST(GateLibrary, JsonRoundTrip) {
    const GateLibrary &lib = default_gate_library();
    std::stringstream ss;
    write_gate_library(ss, lib);
    GateLibrary back = read_gate_library(ss);
    ASSERT_EQ(back.gates.size(), lib.gates.size());
    for (const auto &[name, g] : lib.gates) {
        const auto &h = back.gates.at(name);
        ASSERT_EQ(h.groups.size(), g.groups.size());
        for (size_t k = 0; k < g.groups.size(); ++k) {
            for (const auto &[b, j] : g.groups[k]) {
                EXPECT_DOUBLE_EQ(h.groups[k].at(b), j);
            }
        }
    }
}

TEST(Gates, NoiselessCnot12WithIdleQubit3) {
    SpinChainConfig cfg;
    PulseSchedule s = compile_gate("CNOT12", cfg);
    PulseSchedule id = compile_gate("IDENTITY_Q3", cfg);
    PulseSchedule idle;
    for (int k = 0; k < 3; ++k) {
        idle.append(id);
    }
    CMat u = schedule_unitary(parallel(s, idle), cfg);
    EXPECT_LT((u.adjoint() * u - CMat::Identity(64, 64)).norm(), 1e-12);
    CMat e = encoded_isometry(3);
    CMat m = e.adjoint() * u * e;
    EXPECT_GE(encoded_process_fidelity(m, cnot_8(0, 1), true), 1.0 - 1e-4);

    CVec in = encoded_state(6, {1, 0, 0});
    CVec out = encoded_state(6, {1, 1, 0});
    EXPECT_GE(std::norm(out.dot(u * in)), 1.0 - 1e-4);
}

TEST(Gates, NoiselessCnot32WithIdleQubit1) {
    SpinChainConfig cfg;
    PulseSchedule idle;
    for (int k = 0; k < 3; ++k) {
        idle.append(compile_gate("IDENTITY_Q1", cfg));
    }
    CMat u = schedule_unitary(parallel(idle, compile_gate("CNOT32", cfg)), cfg);
    CMat e = encoded_isometry(3);
    CMat m = e.adjoint() * u * e;
    EXPECT_GE(encoded_process_fidelity(m, cnot_8(2, 1), true), 1.0 - 1e-4);
}

TEST(Gates, IdentityReturnsBlochVector) {
    SpinChainConfig cfg;
    for (int q = 0; q < 3; ++q) {
        const auto &g = default_gate_library().gates.at("IDENTITY_Q" + std::to_string(q + 1));
        CMat m = gate_encoded_block(g, cfg);
        EXPECT_GE(encoded_process_fidelity(m, CMat::Identity(2, 2), false), 1.0 - 1e-4) << g.name;
        // |+> returns to |+>
        CVec plus(2);
        plus << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
        EXPECT_GE(std::norm(plus.dot(m * plus)), 1.0 - 1e-4) << g.name;
    }
}

TEST(Gates, ExchangePulseSwapsAtHalfTurn) {
    SpinChainConfig cfg = pair_config(0.0, 0.0);
    ScheduleSegment seg{5.0, {100.0}, {}};
    CMat u = ideal_segment_unitary(seg, cfg);
    CMat swap = CMat::Zero(4, 4);
    swap(0, 0) = swap(3, 3) = swap(1, 2) = swap(2, 1) = 1.0;
    cplx phase = u(0, 0);
    EXPECT_NEAR(std::abs(phase), 1.0, 1e-12);
    EXPECT_LT((u - phase * swap).norm(), 1e-12);
}

TEST(Gates, GradientRotatesSingletIntoTriplet) {
    SpinChainConfig cfg = pair_config(10.0, 0.50005);
    CVec s = encoded_state(2, {0});
    for (double t : {5.0, 25.0, 40.0, 77.0}) {
        CMat u = ideal_segment_unitary({t, {0.0}, {}}, cfg);
        double p = std::norm(s.dot(u * s));
        EXPECT_NEAR(p, std::pow(std::cos(kPi * 10e-3 * t), 2), 1e-12) << t;
    }
}

TEST(Gates, StaticSensitivityMatchesFiniteDifference) {
    SpinChainConfig cfg;
    for (const char *name : {"CNOT12", "IDENTITY_Q2"}) {
        const GateDefinition &g = default_gate_library().gates.at(name);
        CMat m0 = gate_encoded_block(g, cfg);
        std::set<int> bonds;
        for (const auto &grp : g.groups) {
            for (const auto &[b, j] : grp) {
                bonds.insert(b);
            }
        }
        double eps = 1e-5;
        double fd = 0.0;
        for (int b : bonds) {
            GateDefinition p = g;
            for (auto &grp : p.groups) {
                if (grp.count(b)) {
                    grp[b] *= 1.0 + eps;
                }
            }
            CMat x = m0.adjoint() * gate_encoded_block(p, cfg);
            for (Eigen::Index j = 0; j < x.rows(); ++j) {
                fd += (1.0 - std::norm(x(j, j))) / x.rows() / (eps * eps);
            }
        }
        double analytic = static_error_estimate(g, cfg, 0.0, 1.0);
        EXPECT_NEAR(analytic, fd, 0.01 * fd) << name;
    }
}

TEST(Calibration, RobustFitLowersStaticError) {
    SpinChainConfig cfg;
    CalibrationTarget t = standard_calibration_targets(cfg)[2];
    ASSERT_EQ(t.name, "IDENTITY_Q1");
    CalibrationOptions plain;
    plain.starts = 4;
    GateDefinition a = calibrate_gate(t, cfg, 150.0, plain);
    CalibrationOptions robust = plain;
    robust.field_static_rms = 3e-4;
    robust.exchange_static_rms = 4.5e-3;
    robust.gate_weight = 10.0;
    GateDefinition b = calibrate_gate(t, cfg, 150.0, robust);
    EXPECT_LE(a.infidelity, 1e-9);
    EXPECT_LE(b.infidelity, 1e-6);
    EXPECT_LT(static_error_estimate(b, cfg, 3e-4, 4.5e-3), static_error_estimate(a, cfg, 3e-4, 4.5e-3));
}

TEST(StateOps, LocalSuperopMatchesEmbedding) {
    CMat rho = random_density(64, 11);
    CMat a = random_density(4, 12) * cplx(0.0, 3.0);
    Eigen::SelfAdjointEigenSolver<CMat> es((a + a.adjoint()).eval());
    CMat u = es.eigenvectors();
    CMat natural = Eigen::kroneckerProduct(u.conjugate(), u).eval();
    CMat got = rho;
    apply_local_superop(got, 6, 2, 2, natural);
    CMat big = embed_operator(u, {2, 3}, 6);
    EXPECT_LT((got - big * rho * big.adjoint()).norm(), 1e-12);
}

TEST(StateOps, MeasureAndResetPair) {
    CVec s = encoded_state(2, {0});
    CVec t0 = encoded_state(2, {1});
    RandomStream rng(3);
    auto m0 = measure_pair(pure(s), 2, 0, rng);
    EXPECT_EQ(m0.outcome, 0);
    EXPECT_NEAR(m0.p0, 1.0, 1e-14);
    auto m1 = measure_pair(pure(t0), 2, 0, rng);
    EXPECT_EQ(m1.outcome, 1);
    EXPECT_NEAR(m1.p0, 0.0, 1e-14);

    CMat mixed = 0.5 * pure(s) + 0.5 * pure(t0);
    int ones = 0;
    const int n = 4000;
    for (int k = 0; k < n; ++k) {
        auto m = measure_pair(mixed, 2, 0, rng);
        ones += m.outcome;
        EXPECT_NEAR(m.state.trace().real(), 1.0, 1e-12);
        EXPECT_NEAR(singlet_probability(m.state, 2, 0), m.outcome ? 0.0 : 1.0, 1e-12);
    }
    EXPECT_NEAR(static_cast<double>(ones) / n, 0.5, 4.0 * 0.5 / std::sqrt(n));

    // reset keeps the rest of a product state
    CVec psi = encoded_state(4, {1, 1});
    CMat r = reset_pair(pure(psi), 4, 2);
    CMat expect = pure(encoded_state(4, {1, 0}));
    EXPECT_LT((r - expect).norm(), 1e-12);
    EXPECT_THROW(measure_pair(2.0 * pure(s), 2, 0, rng), std::runtime_error);
}

TEST(StateOps, IdealParityCheckLeaksThreeEighths) {
    // maximally mixed data pairs (spins 0-1 and 4-5), ancilla singlet
    CMat pair_mixed = CMat::Identity(4, 4) / 4.0;
    CMat anc = pure(encoded_state(2, {0}));
    CMat rho = Eigen::kroneckerProduct(pair_mixed, Eigen::kroneckerProduct(anc, pair_mixed).eval()).eval();
    CMat c1 = encoded_cnot(6, 0, 1);
    CMat c2 = encoded_cnot(6, 2, 1);
    rho = c2 * c1 * rho * c1.adjoint() * c2.adjoint();
    EXPECT_NEAR(1.0 - singlet_probability(rho, 6, 2), 3.0 / 8.0, 1e-12);
}

TEST(StateOps, ParityExpectationOfBasisStates) {
    for (int a : {0, 1}) {
        for (int b : {0, 1}) {
            CMat rho = pure(encoded_state(6, {a, 0, b}));
            EXPECT_NEAR(parity_expectation(rho, 6, 0, 4), a ^ b, 1e-12);
        }
    }
}

TEST(Parity, InstantaneousControlIsSilent) {
    PrecomputeCache cache;
    ParityOptions o;
    o.mode = ParityMode::instantaneous;
    o.rounds = 50;
    ParityExperiment exp(SpinChainConfig{}, quasi_static_noise(), o, cache);
    for (uint64_t r = 0; r < 3; ++r) {
        auto rec = exp.run(5, r);
        for (int v : rec.outcomes) {
            EXPECT_EQ(v, 0);
        }
    }
}

TEST(Parity, NoiselessFiniteRoundsAreSilent) {
    PrecomputeCache cache;
    ParityOptions o;
    o.rounds = 4;
    ParityExperiment exp(SpinChainConfig{}, no_noise(), o, cache);
    EXPECT_EQ(exp.steps_per_round(), 18u);
    auto rec = exp.run(1, 0);
    for (size_t j = 0; j < o.rounds; ++j) {
        EXPECT_EQ(rec.outcomes[j], 0);
        EXPECT_GT(rec.p0[j], 1.0 - 1e-4);
        EXPECT_LT(rec.parity[j], 1e-4);
    }
}

TEST(Parity, OddDataParityReadsOne) {
    PrecomputeCache cache;
    ParityOptions o;
    o.rounds = 2;
    o.data_bits = {1, 0};
    ParityExperiment exp(SpinChainConfig{}, no_noise(), o, cache);
    auto rec = exp.run(1, 0);
    EXPECT_EQ(rec.outcomes[0], 1);
    EXPECT_EQ(rec.outcomes[1], 1);
}

TEST(Parity, MisalignedCoarseGridThrows) {
    PrecomputeCache cache;
    ParityOptions o;
    o.coarse_ns = 30.0;
    EXPECT_THROW(ParityExperiment(SpinChainConfig{}, no_noise(), o, cache), std::invalid_argument);
}

class NoisyParity : public ::testing::Test {
   protected:
    static void SetUpTestSuite() {
        cache_ = new PrecomputeCache();
        ParityOptions o;
        o.rounds = 3;
        exp_ = new ParityExperiment(SpinChainConfig{}, strong_noise(), o, *cache_);
    }
    static void TearDownTestSuite() {
        delete exp_;
        delete cache_;
    }
    static PrecomputeCache *cache_;
    static ParityExperiment *exp_;
};
PrecomputeCache *NoisyParity::cache_ = nullptr;
ParityExperiment *NoisyParity::exp_ = nullptr;

TEST_F(NoisyParity, DeterministicPerRealization) {
    auto a = exp_->run(9, 4);
    auto b = exp_->run(9, 4);
    EXPECT_EQ(a.outcomes, b.outcomes);
    EXPECT_EQ(a.p0, b.p0);
    EXPECT_EQ(a.noise_digest, b.noise_digest);
    EXPECT_NE(a.noise_digest, exp_->run(9, 5).noise_digest);
}

TEST_F(NoisyParity, NoiseIndependentOfMeasurement) {
    PrecomputeCache cache;
    ParityOptions o;
    o.rounds = 3;
    o.measure = false;
    ParityExperiment silent(SpinChainConfig{}, strong_noise(), o, *cache_);
    EXPECT_EQ(silent.run(9, 4).noise_digest, exp_->run(9, 4).noise_digest);
}

TEST_F(NoisyParity, StatesStayPhysical) {
    ParityOptions o;
    o.rounds = 2;
    o.check_states = true;
    ParityExperiment checked(SpinChainConfig{}, strong_noise(), o, *cache_);
    EXPECT_NO_THROW(checked.run(2, 0));
}

TEST_F(NoisyParity, FirstOutcomeFollowsBornRule) {
    const int n = 300;
    double ones = 0.0;
    double expected = 0.0;
    for (int r = 0; r < n; ++r) {
        auto rec = exp_->run(17, r);
        ones += rec.outcomes[0];
        expected += 1.0 - rec.p0[0];
    }
    double q = expected / n;
    EXPECT_GT(q, 0.02);
    double se = std::sqrt(q * (1.0 - q) / n);
    EXPECT_NEAR(ones / n, q, 4.0 * se);
}

TEST_F(NoisyParity, MeasurementDoesNotRestoreDataParity) {
    // the ancilla readout projects the data only partially, so the recorded
    // post-measurement parity is not pinned to the outcome
    double spread = 0.0;
    for (int r = 0; r < 20; ++r) {
        auto rec = exp_->run(23, r);
        for (size_t j = 0; j < rec.parity.size(); ++j) {
            spread = std::max(spread, std::min(rec.parity[j], 1.0 - rec.parity[j]));
        }
    }
    EXPECT_GT(spread, 1e-4);
}

TEST(Bernoulli, FlipRate) {
    RandomStream rng(4);
    const size_t n = 20000;
    auto x = bernoulli_outcomes(0.1, n, rng);
    size_t flips = x[0];
    for (size_t i = 1; i < n; ++i) {
        flips += x[i] != x[i - 1];
    }
    double rate = static_cast<double>(flips) / n;
    EXPECT_NEAR(rate, 0.1, 4.0 * std::sqrt(0.09 / n));
}
