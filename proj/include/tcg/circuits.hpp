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


#ifndef TCG_CIRCUITS_HPP
#define TCG_CIRCUITS_HPP

#include <array>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "tcg/coarse_grain.hpp"
#include "tcg/liouville.hpp"
#include "tcg/random.hpp"
#include "tcg/stochastic.hpp"

// Singlet-triplet qubits on a linear spin chain.
//
// Conventions: spins are 0-based in code (spin 0 is "spin 1" in printed
// names such as J12 or CNOT12), spin 0 is the most significant tensor
// factor and |up> is index 0. Qubit q lives on spins (2q, 2q + 1) with
// |0> = |S> and |1> = |T0>. Bond b couples spins b and b + 1.

namespace tcg {

struct SpinChainConfig {
    int n_spins = 6;
    double g_factor = 2.0;
    double field_tesla = 0.50005;
    std::vector<double> deltas_mhz{10.0, 10.0, -10.0, -10.0, 10.0};
    double pulse_ns = 20.0;
    double idle_ns = 20.0;
    /// First spin of the ancilla pair.
    int ancilla_first_spin = 2;

    /// Uniform Zeeman rate g mu_B B / hbar in rad/ns.
    double zeeman_rate() const;
    /// Per-spin Zeeman offsets in rad/ns with zero mean, so that
    /// offset[i] - offset[i + 1] = 2 pi Delta_{i,i+1}.
    std::vector<double> offsets() const;
    void validate() const;
};

/// S^axis on spin i of an n-spin register, axis in {'x', 'y', 'z'}.
CMat spin_operator(int n_spins, int i, char axis);
/// S_i . S_j.
CMat exchange_operator(int n_spins, int i, int j);
/// Encoded sigma^z on the pair (first, first + 1): 2 (S1z S2z - S1 . S2).
CMat encoded_z(int n_spins, int first);

struct ScheduleEvent {
    enum class Kind { measure, reset };
    Kind kind = Kind::measure;
    int first_spin = 2;
    bool operator==(const ScheduleEvent &) const = default;
};

/// Square exchange pulse of constant amplitude per bond. Events fire at the
/// end of the segment in the listed order.
struct ScheduleSegment {
    double duration_ns = 0.0;
    std::vector<double> exchange_mhz;
    std::vector<ScheduleEvent> events;
    bool operator==(const ScheduleSegment &) const = default;
};

struct PulseSchedule {
    std::vector<ScheduleSegment> segments;

    double duration() const;
    size_t measurement_count() const;
    void append(const PulseSchedule &other);
    /// Throws std::invalid_argument for non-positive durations or a wrong
    /// number of bonds.
    void validate(int n_spins) const;
};

/// Runs two schedules side by side. Throws std::invalid_argument unless the
/// segment durations agree and no bond is driven by both.
PulseSchedule parallel(const PulseSchedule &a, const PulseSchedule &b);

/// One calibrated gate: a list of pulse+idle groups, each with exchange
/// amplitudes in MHz on chain bonds.
struct GateDefinition {
    std::string name;
    std::vector<int> spins;
    std::vector<std::map<int, double>> groups;  // bond -> J (MHz)
    double infidelity = 0.0;
    std::vector<double> frame_phases;  // local Z phases (rad) absorbed by the fit

    double duration(const SpinChainConfig &cfg) const;
};

struct GateLibrary {
    static constexpr int kFormatVersion = 1;
    std::vector<double> deltas_mhz;
    double pulse_ns = 20.0;
    double idle_ns = 20.0;
    double max_exchange_mhz = 150.0;
    std::map<std::string, GateDefinition> gates;
};

GateLibrary read_gate_library(std::istream &in);
GateLibrary load_gate_library(const std::string &path);
void write_gate_library(std::ostream &out, const GateLibrary &lib);
/// The library shipped in data/gate_library.json, read once.
const GateLibrary &default_gate_library();

/// Throws std::invalid_argument for unknown names or a library calibrated
/// for a different Delta pattern or timing.
PulseSchedule compile_gate(const std::string &name, const SpinChainConfig &cfg,
                           const GateLibrary &lib = default_gate_library());

/// Full lab-frame chain Hamiltonian for exchange amplitudes j_mhz per bond.
CMat chain_hamiltonian(const SpinChainConfig &cfg, const std::vector<double> &j_mhz);
/// exp(-i H T) of one segment.
CMat ideal_segment_unitary(const ScheduleSegment &segment, const SpinChainConfig &cfg);
CMat schedule_unitary(const PulseSchedule &schedule, const SpinChainConfig &cfg);

/// Encoded computational state of n_spins / 2 qubits; bits[q] in {0, 1}.
CVec encoded_state(int n_spins, const std::vector<int> &bits);
/// Columns are the encoded basis states of n_qubits adjacent pairs, in a
/// register of 2 * n_qubits spins.
CMat encoded_isometry(int n_qubits);
/// Embeds an operator on the listed spins (in that tensor order) into an
/// n-spin register.
CMat embed_operator(const CMat &op, const std::vector<int> &spins, int n_spins);
/// Encoded CNOT acting as identity outside the code space.
CMat encoded_cnot(int n_spins, int control_qubit, int target_qubit);

/// |Tr(V^dagger M)|^2 / 4^q for the encoded block M, maximized over a
/// global phase and, if local_z is set, over local Z frame phases.
double encoded_process_fidelity(const CMat &m_encoded, const CMat &target, bool local_z);

struct CalibrationTarget {
    std::string name;
    std::vector<int> spins;                  // contiguous chain spins
    std::vector<std::vector<int>> layout;    // bonds pulsed in each group
    CMat target;                             // encoded 2^q x 2^q unitary
    bool local_z = false;
};

struct CalibrationOptions {
    int starts = 40;
    uint64_t seed = 1;
    double target_infidelity = 1e-10;  // early exit, plain fits only
    // Static noise rms for first-order robustness terms (rad/ns for the
    // field, dimensionless for the relative exchange error). Zero disables.
    double field_static_rms = 0.0;
    double exchange_static_rms = 0.0;
    double gate_weight = 1.0;
    double max_infidelity = 1e-6;  // robust fits must reach this
    double initial_max_mhz = 0.0;  // range of random starting amplitudes, 0 means the bound
};

/// Least-squares fit of the group amplitudes J = J_max sin^2(x).
/// The restriction to the zero-magnetization sector of the listed spins is
/// exact because every term conserves total S^z.
GateDefinition calibrate_gate(const CalibrationTarget &target, const SpinChainConfig &cfg,
                              double max_exchange_mhz, const CalibrationOptions &options = {});

/// Settings used for the shipped library: first-order robustness against the
/// quasi-static part of the 1/f model (all magnetic components, exchange
/// components below 1 MHz), low-amplitude starts.
CalibrationOptions robust_calibration_options();

/// CNOT12, CNOT32 and IDENTITY_Q1..Q3 for the default chain layout.
std::vector<CalibrationTarget> standard_calibration_targets(const SpinChainConfig &cfg);
GateLibrary calibrate_library(const SpinChainConfig &cfg, double max_exchange_mhz = 150.0,
                              const CalibrationOptions &options = {});

/// Encoded block of a gate's noiseless evolution on its own spins.
CMat gate_encoded_block(const GateDefinition &gate, const SpinChainConfig &cfg);

/// First-order probability, averaged over code inputs, that static field
/// errors along z (rms per spin) and relative exchange errors (rms per bond)
/// move a code state off its encoded basis state.
double static_error_estimate(const GateDefinition &gate, const SpinChainConfig &cfg, double field_rms,
                             double exchange_rms);

/// Applies a superoperator in natural (column-stacked) form to spins
/// [first, first + m) of an n-spin density matrix.
void apply_local_superop(CMat &rho, int n_spins, int first, int m, const CMat &natural);

double singlet_probability(const CMat &rho, int n_spins, int first);

struct PairMeasurement {
    int outcome = 0;
    double p0 = 0.0;
    CMat state;
};
/// Projective singlet (0) versus triplet (1) measurement. Throws
/// std::runtime_error if p0 lies outside [-1e-9, 1 + 1e-9].
PairMeasurement measure_pair(const CMat &rho, int n_spins, int first, RandomStream &rng);
/// Replaces the pair by |S><S|, keeping the reduced state of the rest.
CMat reset_pair(const CMat &rho, int n_spins, int first);
/// <(1 - Z_a Z_b) / 2> for the encoded qubits on pairs starting at spins a, b.
double parity_expectation(const CMat &rho, int n_spins, int pair_a, int pair_b);

struct StateCheck {
    double hermiticity = 0.0;
    double trace_error = 0.0;
    double min_eigenvalue = 0.0;
    bool valid() const { return hermiticity <= 1e-10 && trace_error <= 1e-10 && min_eigenvalue >= -1e-8; }
};
StateCheck check_state(const CMat &rho);

/// Magnetic fluctuations (rad/ns) drive S^x, S^y, S^z of every spin; the
/// relative exchange fluctuation xi multiplies each J_{i,i+1}.
struct ParityNoiseModel {
    std::string name;
    OuSum magnetic;
    OuSum exchange;
};
ParityNoiseModel one_over_f_noise();
ParityNoiseModel quasi_static_noise();
ParityNoiseModel no_noise();

/// Channel layout of a chain trajectory: magnetic (spin i, axis a) is
/// channel 3 i + a, exchange bond b is channel 3 n + b.
std::vector<OuSum> chain_channels(const SpinChainConfig &cfg, const ParityNoiseModel &noise);

enum class ParityMode {
    /// Both CNOTs executed by their pulse sequences.
    finite,
    /// Ideal CNOTs taking no time: nothing evolves.
    instantaneous,
    /// Ideal instantaneous CNOTs and a noiseless ancilla, while the data
    /// qubits run identity gates for the duration of two CNOTs.
    perfect_measurement,
};

struct ParityOptions {
    ParityMode mode = ParityMode::finite;
    size_t rounds = 100;
    double coarse_ns = 40.0;
    /// Data qubit inputs (qubits 1 and 3).
    std::array<int, 2> data_bits{0, 0};
    /// Disabling measurements keeps the reset but skips sampling.
    bool measure = true;
    /// Full eigenvalue check after every segment (slow).
    bool check_states = false;
};

struct MeasurementRecord {
    std::vector<int> outcomes;
    std::vector<double> parity;  // post-measurement <(1 - Z1 Z3) / 2>
    std::vector<double> p0;      // singlet probability before each measurement
    uint64_t noise_digest = 0;   // hash of the coarse trajectory values
};

/// Precomputes every coarse segment of one parity round once; run() is then
/// const and safe to call concurrently.
class ParityExperiment {
   public:
    ParityExperiment(SpinChainConfig cfg, ParityNoiseModel noise, ParityOptions options,
                     PrecomputeCache &cache, const GateLibrary &lib = default_gate_library());
    ~ParityExperiment();
    ParityExperiment(ParityExperiment &&) noexcept;

    MeasurementRecord run(uint64_t seed, uint64_t realization) const;
    CoarseTrajectory trajectory(uint64_t seed, uint64_t realization) const;
    const PulseSchedule &round_schedule() const { return round_; }
    double round_duration() const;
    size_t steps_per_round() const;
    size_t distinct_segments() const;

   private:
    struct Plan;
    SpinChainConfig cfg_;
    ParityNoiseModel noise_;
    ParityOptions options_;
    PulseSchedule round_;
    std::unique_ptr<Plan> plan_;
};

MeasurementRecord run_parity_experiment(const SpinChainConfig &cfg, const ParityNoiseModel &noise,
                                        const ParityOptions &options, uint64_t seed, uint64_t realization = 0);

/// Reference telegraph outcomes: the parity flips with probability q at
/// every measurement, starting from 0.
std::vector<int> bernoulli_outcomes(double q, size_t n, RandomStream &rng);

/// The standard round: CNOT12 with qubit 3 idling through identities, then
/// CNOT32 with qubit 1 idling, then measure and reset the ancilla.
PulseSchedule parity_round_schedule(const SpinChainConfig &cfg, const GateLibrary &lib = default_gate_library());

enum class DecayKind {
    /// Two spins from a singlet, exchange off.
    free_induction,
    /// Three spins from S (x) |+>, J_23 on; the first pair is read out.
    exchange,
};

struct DecayOptions {
    DecayKind kind = DecayKind::free_induction;
    double field_tesla = 50e-6;
    double g_factor = 2.0;
    double exchange_mhz = 100.0;
    double step_ns = 100.0;
    size_t steps = 100;
    size_t trajectories = 1000;
};

struct DecayCurve {
    std::vector<double> t_ns;
    std::vector<double> probability;  // singlet probability of spins 1-2
    std::vector<double> std_error;
};

/// Ensemble-averaged singlet probability on the coarse grid k * step_ns.
/// Magnetic noise drives every spin; the exchange fluctuation multiplies J_23.
DecayCurve simulate_decay(const DecayOptions &options, const ParityNoiseModel &noise, uint64_t seed,
                          PrecomputeCache &cache);

}  // namespace tcg

#endif
