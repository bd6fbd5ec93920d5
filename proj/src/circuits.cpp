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

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "tcg/least_squares.hpp"

#ifndef TCG_DATA_DIR
#define TCG_DATA_DIR "data"
#endif

namespace tcg {

namespace {

void require(bool ok, const std::string &msg) {
    if (!ok) {
        throw std::invalid_argument(msg);
    }
}

int bit_of(size_t index, int n_spins, int spin) { return static_cast<int>((index >> (n_spins - 1 - spin)) & 1u); }

std::string bond_name(int b) { return "J" + std::to_string(b + 1) + std::to_string(b + 2); }

int parse_bond(const std::string &key) {
    require(key.size() == 3 && key[0] == 'J', "gate library: bad bond key " + key);
    int a = key[1] - '0';
    int b = key[2] - '0';
    require(a >= 1 && b == a + 1, "gate library: bad bond key " + key);
    return a - 1;
}

CVec pair_state(int bit) {
    CVec v = CVec::Zero(4);
    double h = 1.0 / std::sqrt(2.0);
    v(1) = h;  // up down
    v(2) = bit == 0 ? -h : h;
    return v;
}

CMat kron(const CMat &a, const CMat &b) {
    CMat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

// Local register Hamiltonian of consecutive spins [first, first + m).
CMat local_hamiltonian(const SpinChainConfig &cfg, int first, int m, const std::vector<double> &j_mhz,
                       bool include_uniform) {
    std::vector<double> off = cfg.offsets();
    double w0 = include_uniform ? cfg.zeeman_rate() : 0.0;
    size_t d = size_t{1} << m;
    CMat h = CMat::Zero(d, d);
    for (int i = 0; i < m; ++i) {
        h += (w0 + off[first + i]) * spin_operator(m, i, 'z');
    }
    for (int i = 0; i + 1 < m; ++i) {
        double j = j_mhz[first + i];
        if (j != 0.0) {
            h += mhz_to_rad_per_ns(j) * exchange_operator(m, i, i + 1);
        }
    }
    return h;
}

uint64_t fnv_bytes(uint64_t h, const void *data, size_t n) {
    const auto *p = static_cast<const unsigned char *>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

double SpinChainConfig::zeeman_rate() const { return ghz_to_rad_per_ns(g_factor * kMuBOverHGhzPerTesla * field_tesla); }

std::vector<double> SpinChainConfig::offsets() const {
    std::vector<double> f(n_spins, 0.0);
    for (int i = 0; i + 1 < n_spins; ++i) {
        f[i + 1] = f[i] - deltas_mhz[i];
    }
    double mean = 0.0;
    for (double v : f) {
        mean += v;
    }
    mean /= n_spins;
    for (double &v : f) {
        v = mhz_to_rad_per_ns(v - mean);
    }
    return f;
}

void SpinChainConfig::validate() const {
    require(n_spins >= 2 && n_spins <= 8, "chain: n_spins must be in [2, 8]");
    require(static_cast<int>(deltas_mhz.size()) == n_spins - 1, "chain: need one Delta per bond");
    require(pulse_ns > 0.0 && idle_ns >= 0.0, "chain: pulse width must be positive, idle width non-negative");
    require(ancilla_first_spin >= 0 && ancilla_first_spin + 1 < n_spins, "chain: ancilla pair outside the chain");
}

CMat spin_operator(int n_spins, int i, char axis) {
    require(i >= 0 && i < n_spins, "spin_operator: spin out of range");
    size_t d = size_t{1} << n_spins;
    size_t mask = size_t{1} << (n_spins - 1 - i);
    CMat s = CMat::Zero(d, d);
    for (size_t b = 0; b < d; ++b) {
        bool up = (b & mask) == 0;
        switch (axis) {
            case 'z':
                s(b, b) = up ? 0.5 : -0.5;
                break;
            case 'x':
                s(b ^ mask, b) = 0.5;
                break;
            case 'y':
                s(b ^ mask, b) = up ? cplx(0.0, 0.5) : cplx(0.0, -0.5);
                break;
            default:
                throw std::invalid_argument("spin_operator: axis must be x, y or z");
        }
    }
    return s;
}

CMat exchange_operator(int n_spins, int i, int j) {
    CMat out = spin_operator(n_spins, i, 'x') * spin_operator(n_spins, j, 'x');
    out += spin_operator(n_spins, i, 'y') * spin_operator(n_spins, j, 'y');
    out += spin_operator(n_spins, i, 'z') * spin_operator(n_spins, j, 'z');
    return out;
}

CMat encoded_z(int n_spins, int first) {
    return 2.0 * (spin_operator(n_spins, first, 'z') * spin_operator(n_spins, first + 1, 'z') -
                  exchange_operator(n_spins, first, first + 1));
}

double PulseSchedule::duration() const {
    double t = 0.0;
    for (const auto &s : segments) {
        t += s.duration_ns;
    }
    return t;
}

size_t PulseSchedule::measurement_count() const {
    size_t n = 0;
    for (const auto &s : segments) {
        for (const auto &e : s.events) {
            n += e.kind == ScheduleEvent::Kind::measure;
        }
    }
    return n;
}

void PulseSchedule::append(const PulseSchedule &other) {
    segments.insert(segments.end(), other.segments.begin(), other.segments.end());
}

void PulseSchedule::validate(int n_spins) const {
    for (const auto &s : segments) {
        require(s.duration_ns > 0.0, "schedule: segment durations must be positive");
        require(static_cast<int>(s.exchange_mhz.size()) == n_spins - 1, "schedule: one exchange value per bond");
        for (const auto &e : s.events) {
            require(e.first_spin >= 0 && e.first_spin + 1 < n_spins, "schedule: event pair outside the chain");
        }
    }
}

PulseSchedule parallel(const PulseSchedule &a, const PulseSchedule &b) {
    require(a.segments.size() == b.segments.size(), "parallel: schedules have different segment counts");
    PulseSchedule out = a;
    for (size_t k = 0; k < a.segments.size(); ++k) {
        const ScheduleSegment &sb = b.segments[k];
        ScheduleSegment &so = out.segments[k];
        require(std::abs(so.duration_ns - sb.duration_ns) <= 1e-9, "parallel: segment durations differ");
        require(so.exchange_mhz.size() == sb.exchange_mhz.size(), "parallel: chains differ");
        for (size_t j = 0; j < sb.exchange_mhz.size(); ++j) {
            if (sb.exchange_mhz[j] != 0.0) {
                require(so.exchange_mhz[j] == 0.0, "parallel: bond " + bond_name(static_cast<int>(j)) + " driven twice");
                so.exchange_mhz[j] = sb.exchange_mhz[j];
            }
        }
        so.events.insert(so.events.end(), sb.events.begin(), sb.events.end());
    }
    return out;
}

double GateDefinition::duration(const SpinChainConfig &cfg) const {
    return static_cast<double>(groups.size()) * (cfg.pulse_ns + cfg.idle_ns);
}

GateLibrary read_gate_library(std::istream &in) {
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception &e) {
        throw std::runtime_error(std::string("gate library: ") + e.what());
    }
    try {
        int version = j.at("format_version").get<int>();
        if (version != GateLibrary::kFormatVersion) {
            throw std::runtime_error("gate library: unsupported format_version " + std::to_string(version));
        }
        GateLibrary lib;
        lib.deltas_mhz = j.at("deltas_mhz").get<std::vector<double>>();
        lib.pulse_ns = j.at("pulse_ns").get<double>();
        lib.idle_ns = j.at("idle_ns").get<double>();
        lib.max_exchange_mhz = j.at("max_exchange_mhz").get<double>();
        for (const auto &g : j.at("gates")) {
            GateDefinition def;
            def.name = g.at("name").get<std::string>();
            for (int s : g.at("spins").get<std::vector<int>>()) {
                def.spins.push_back(s - 1);
            }
            for (const auto &grp : g.at("groups")) {
                std::map<int, double> m;
                for (auto it = grp.begin(); it != grp.end(); ++it) {
                    std::string key = it.key();
                    const std::string suffix = "_mhz";
                    require(key.size() > suffix.size() && key.ends_with(suffix),
                            "gate library: group keys must end in _mhz");
                    m[parse_bond(key.substr(0, key.size() - suffix.size()))] = it.value().get<double>();
                }
                def.groups.push_back(std::move(m));
            }
            def.infidelity = g.at("infidelity").get<double>();
            def.frame_phases = g.at("frame_phases_rad").get<std::vector<double>>();
            lib.gates[def.name] = std::move(def);
        }
        return lib;
    } catch (const nlohmann::json::exception &e) {
        throw std::runtime_error(std::string("gate library: ") + e.what());
    }
}

GateLibrary load_gate_library(const std::string &path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("gate library: cannot open " + path);
    }
    return read_gate_library(in);
}

void write_gate_library(std::ostream &out, const GateLibrary &lib) {
    nlohmann::ordered_json j;
    j["format_version"] = GateLibrary::kFormatVersion;
    j["deltas_mhz"] = lib.deltas_mhz;
    j["pulse_ns"] = lib.pulse_ns;
    j["idle_ns"] = lib.idle_ns;
    j["max_exchange_mhz"] = lib.max_exchange_mhz;
    j["gates"] = nlohmann::ordered_json::array();
    for (const auto &[name, def] : lib.gates) {
        nlohmann::ordered_json g;
        g["name"] = name;
        std::vector<int> spins;
        for (int s : def.spins) {
            spins.push_back(s + 1);
        }
        g["spins"] = spins;
        g["groups"] = nlohmann::ordered_json::array();
        for (const auto &grp : def.groups) {
            nlohmann::ordered_json o = nlohmann::ordered_json::object();
            for (const auto &[b, v] : grp) {
                o[bond_name(b) + "_mhz"] = v;
            }
            g["groups"].push_back(o);
        }
        g["infidelity"] = def.infidelity;
        g["frame_phases_rad"] = def.frame_phases;
        j["gates"].push_back(g);
    }
    out << j.dump(2) << '\n';
}

const GateLibrary &default_gate_library() {
    static const GateLibrary lib = load_gate_library(std::string(TCG_DATA_DIR) + "/gate_library.json");
    return lib;
}

PulseSchedule compile_gate(const std::string &name, const SpinChainConfig &cfg, const GateLibrary &lib) {
    cfg.validate();
    auto it = lib.gates.find(name);
    require(it != lib.gates.end(), "compile_gate: unknown gate " + name);
    require(lib.deltas_mhz.size() == cfg.deltas_mhz.size(), "compile_gate: library calibrated for another chain");
    for (size_t k = 0; k < cfg.deltas_mhz.size(); ++k) {
        require(std::abs(lib.deltas_mhz[k] - cfg.deltas_mhz[k]) <= 1e-9,
                "compile_gate: library calibrated for another Delta pattern");
    }
    require(std::abs(lib.pulse_ns - cfg.pulse_ns) <= 1e-9 && std::abs(lib.idle_ns - cfg.idle_ns) <= 1e-9,
            "compile_gate: library calibrated for other pulse timing");
    PulseSchedule out;
    for (const auto &grp : it->second.groups) {
        ScheduleSegment pulse{cfg.pulse_ns, std::vector<double>(cfg.n_spins - 1, 0.0), {}};
        for (const auto &[b, v] : grp) {
            require(b >= 0 && b < cfg.n_spins - 1, "compile_gate: bond outside the chain");
            pulse.exchange_mhz[b] = v;
        }
        out.segments.push_back(pulse);
        if (cfg.idle_ns > 0.0) {
            out.segments.push_back({cfg.idle_ns, std::vector<double>(cfg.n_spins - 1, 0.0), {}});
        }
    }
    return out;
}

CMat chain_hamiltonian(const SpinChainConfig &cfg, const std::vector<double> &j_mhz) {
    require(static_cast<int>(j_mhz.size()) == cfg.n_spins - 1, "chain_hamiltonian: one exchange value per bond");
    return local_hamiltonian(cfg, 0, cfg.n_spins, j_mhz, true);
}

CMat ideal_segment_unitary(const ScheduleSegment &segment, const SpinChainConfig &cfg) {
    return expm_hermitian(chain_hamiltonian(cfg, segment.exchange_mhz), segment.duration_ns);
}

CMat schedule_unitary(const PulseSchedule &schedule, const SpinChainConfig &cfg) {
    size_t d = size_t{1} << cfg.n_spins;
    CMat u = CMat::Identity(d, d);
    for (const auto &s : schedule.segments) {
        u = ideal_segment_unitary(s, cfg) * u;
    }
    return u;
}

CVec encoded_state(int n_spins, const std::vector<int> &bits) {
    require(n_spins % 2 == 0 && static_cast<int>(bits.size()) == n_spins / 2, "encoded_state: one bit per pair");
    CMat v = CMat::Ones(1, 1);
    for (int b : bits) {
        require(b == 0 || b == 1, "encoded_state: bits must be 0 or 1");
        v = kron(v, pair_state(b));
    }
    return v.col(0);
}

CMat encoded_isometry(int n_qubits) {
    size_t d = size_t{1} << (2 * n_qubits);
    size_t k = size_t{1} << n_qubits;
    CMat e(d, k);
    for (size_t c = 0; c < k; ++c) {
        std::vector<int> bits(n_qubits);
        for (int q = 0; q < n_qubits; ++q) {
            bits[q] = static_cast<int>((c >> (n_qubits - 1 - q)) & 1u);
        }
        e.col(c) = encoded_state(2 * n_qubits, bits);
    }
    return e;
}

CMat embed_operator(const CMat &op, const std::vector<int> &spins, int n_spins) {
    int m = static_cast<int>(spins.size());
    require(op.rows() == (Eigen::Index{1} << m) && op.cols() == op.rows(), "embed_operator: size mismatch");
    size_t d = size_t{1} << n_spins;
    size_t rest_mask = d - 1;
    for (int s : spins) {
        require(s >= 0 && s < n_spins, "embed_operator: spin out of range");
        rest_mask &= ~(size_t{1} << (n_spins - 1 - s));
    }
    auto sub = [&](size_t b) {
        size_t x = 0;
        for (int k = 0; k < m; ++k) {
            x = (x << 1) | static_cast<size_t>(bit_of(b, n_spins, spins[k]));
        }
        return x;
    };
    CMat out = CMat::Zero(d, d);
    for (size_t c = 0; c < d; ++c) {
        size_t sc = sub(c);
        for (size_t r = 0; r < d; ++r) {
            if ((r & rest_mask) == (c & rest_mask)) {
                out(r, c) = op(sub(r), sc);
            }
        }
    }
    return out;
}

CMat encoded_cnot(int n_spins, int control_qubit, int target_qubit) {
    require(control_qubit != target_qubit, "encoded_cnot: control equals target");
    CMat e = encoded_isometry(2);
    CMat v = CMat::Zero(4, 4);
    for (int c = 0; c < 2; ++c) {
        for (int t = 0; t < 2; ++t) {
            v(2 * c + (t ^ c), 2 * c + t) = 1.0;
        }
    }
    CMat local = CMat::Identity(16, 16) - e * e.adjoint() + e * v * e.adjoint();
    std::vector<int> spins{2 * control_qubit, 2 * control_qubit + 1, 2 * target_qubit, 2 * target_qubit + 1};
    return embed_operator(local, spins, n_spins);
}

double encoded_process_fidelity(const CMat &m_encoded, const CMat &target, bool local_z) {
    Eigen::Index k = target.rows();
    CVec w = (m_encoded * target.adjoint()).diagonal();
    double norm = static_cast<double>(k * k);
    if (!local_z) {
        return std::norm(w.sum()) / norm;
    }
    int nq = 0;
    while ((Eigen::Index{1} << nq) < k) {
        ++nq;
    }
    // Coordinate ascent over the frame phases; each step is exact.
    double best = 0.0;
    for (int start = 0; start < 4; ++start) {
        std::vector<double> phi(nq, start * kHalfPi);
        for (int sweep = 0; sweep < 100; ++sweep) {
            for (int q = 0; q < nq; ++q) {
                cplx a = 0.0;
                cplx b = 0.0;
                for (Eigen::Index i = 0; i < k; ++i) {
                    double theta = 0.0;
                    for (int p = 0; p < nq; ++p) {
                        if (p != q && ((i >> (nq - 1 - p)) & 1)) {
                            theta += phi[p];
                        }
                    }
                    cplx term = std::polar(1.0, -theta) * w(i);
                    if ((i >> (nq - 1 - q)) & 1) {
                        b += term;
                    } else {
                        a += term;
                    }
                }
                phi[q] = std::arg(b) - std::arg(a);
            }
        }
        cplx total = 0.0;
        for (Eigen::Index i = 0; i < k; ++i) {
            double theta = 0.0;
            for (int p = 0; p < nq; ++p) {
                if ((i >> (nq - 1 - p)) & 1) {
                    theta += phi[p];
                }
            }
            total += std::polar(1.0, -theta) * w(i);
        }
        best = std::max(best, std::norm(total) / norm);
    }
    return best;
}

namespace {

// Noiseless gate evolution restricted to the zero-magnetization sector of
// the gate's spins.
struct SectorModel {
    std::vector<size_t> sector;
    CMat h0;
    std::vector<CMat> bond_ops;  // indexed by local bond
    CMat isometry;               // sector rows of the encoded isometry
    double pulse = 0.0;
    double idle = 0.0;
    CMat idle_u;

    SectorModel(const SpinChainConfig &cfg, const std::vector<int> &spins) {
        int m = static_cast<int>(spins.size());
        require(m % 2 == 0, "calibration: gates act on whole pairs");
        for (size_t k = 1; k < spins.size(); ++k) {
            require(spins[k] == spins[k - 1] + 1, "calibration: spins must be contiguous");
        }
        size_t d = size_t{1} << m;
        for (size_t b = 0; b < d; ++b) {
            if (std::popcount(b) == m / 2) {
                sector.push_back(b);
            }
        }
        auto restrict = [&](const CMat &full) {
            CMat r(sector.size(), sector.size());
            for (size_t i = 0; i < sector.size(); ++i) {
                for (size_t j = 0; j < sector.size(); ++j) {
                    r(i, j) = full(sector[i], sector[j]);
                }
            }
            return r;
        };
        h0 = restrict(local_hamiltonian(cfg, spins.front(), m, std::vector<double>(cfg.n_spins - 1, 0.0), false));
        for (int i = 0; i + 1 < m; ++i) {
            bond_ops.push_back(restrict(exchange_operator(m, i, i + 1)));
        }
        CMat e = encoded_isometry(m / 2);
        isometry.resize(sector.size(), e.cols());
        for (size_t i = 0; i < sector.size(); ++i) {
            isometry.row(i) = e.row(sector[i]);
        }
        pulse = cfg.pulse_ns;
        idle = cfg.idle_ns;
        idle_u = expm_hermitian(h0, idle);
    }

    CMat encoded(const std::vector<std::map<int, double>> &groups, int first_bond) const {
        CMat u = CMat::Identity(sector.size(), sector.size());
        for (const auto &grp : groups) {
            CMat h = h0;
            for (const auto &[b, j] : grp) {
                h += mhz_to_rad_per_ns(j) * bond_ops[b - first_bond];
            }
            u = idle_u * expm_hermitian(h, pulse) * u;
        }
        return isometry.adjoint() * u * isometry;
    }

    // First-order toggling-frame generators int_0^T U0(t)^dag V U0(t) dt for a
    // static relative exchange error on each gate bond, then a static field
    // error along z on each spin.
    std::vector<CMat> sensitivities(const std::vector<std::map<int, double>> &groups, int first_bond) const {
        size_t n_bond = bond_ops.size();
        size_t n_spin = n_bond + 1;
        std::vector<CMat> acc(n_bond + n_spin, CMat::Zero(sector.size(), sector.size()));
        std::vector<CMat> sz;
        for (size_t i = 0; i < n_spin; ++i) {
            CMat full = spin_operator(static_cast<int>(n_spin), static_cast<int>(i), 'z');
            CMat r(sector.size(), sector.size());
            for (size_t a = 0; a < sector.size(); ++a) {
                for (size_t b = 0; b < sector.size(); ++b) {
                    r(a, b) = full(sector[a], sector[b]);
                }
            }
            sz.push_back(std::move(r));
        }
        CMat u = CMat::Identity(sector.size(), sector.size());
        auto piece = [&](const CMat &h, double tau, const std::map<int, double> *grp) {
            Eigen::SelfAdjointEigenSolver<CMat> es(h);
            const CMat &w = es.eigenvectors();
            const RVec &d = es.eigenvalues();
            Eigen::Index k = d.size();
            CMat kernel(k, k);
            for (Eigen::Index m = 0; m < k; ++m) {
                for (Eigen::Index n = 0; n < k; ++n) {
                    double dw = d(m) - d(n);
                    kernel(m, n) = std::abs(dw * tau) < 1e-9 ? cplx(tau, 0.0)
                                                             : (std::polar(1.0, dw * tau) - 1.0) / cplx(0.0, dw);
                }
            }
            CMat frame = w.adjoint() * u;
            auto add = [&](CMat &target, const CMat &v) {
                CMat vt = w.adjoint() * v * w;
                target += frame.adjoint() * vt.cwiseProduct(kernel) * frame;
            };
            if (grp != nullptr) {
                for (const auto &[b, j] : *grp) {
                    add(acc[b - first_bond], mhz_to_rad_per_ns(j) * bond_ops[b - first_bond]);
                }
            }
            for (size_t i = 0; i < n_spin; ++i) {
                add(acc[n_bond + i], sz[i]);
            }
            u = w * (d * (-tau)).unaryExpr([](double x) { return std::polar(1.0, x); }).asDiagonal() * frame;
        };
        for (const auto &grp : groups) {
            CMat h = h0;
            for (const auto &[b, j] : grp) {
                h += mhz_to_rad_per_ns(j) * bond_ops[b - first_bond];
            }
            piece(h, pulse, &grp);
            piece(h0, idle, nullptr);
        }
        return acc;
    }

    // Components of a generator acting on code states that are not diagonal
    // in the encoded computational basis, scaled so that the squared norm is
    // the input-averaged transition probability per unit error variance.
    CMat harmful(const CMat &a) const {
        CMat b = a * isometry;
        for (Eigen::Index j = 0; j < isometry.cols(); ++j) {
            cplx c = isometry.col(j).dot(b.col(j));
            b.col(j) -= c * isometry.col(j);
        }
        return b / std::sqrt(static_cast<double>(isometry.cols()));
    }

    double static_error(const std::vector<std::map<int, double>> &groups, int first_bond, double field_rms,
                        double exchange_rms) const {
        auto gens = sensitivities(groups, first_bond);
        double total = 0.0;
        for (size_t c = 0; c < gens.size(); ++c) {
            double s = c < bond_ops.size() ? exchange_rms : field_rms;
            total += s * s * harmful(gens[c]).squaredNorm();
        }
        return total;
    }
};

}  // namespace

GateDefinition calibrate_gate(const CalibrationTarget &target, const SpinChainConfig &cfg, double max_exchange_mhz,
                              const CalibrationOptions &options) {
    cfg.validate();
    SectorModel model(cfg, target.spins);
    int first_bond = target.spins.front();
    int nq = static_cast<int>(target.spins.size()) / 2;
    require(target.target.rows() == (Eigen::Index{1} << nq), "calibration: target size does not match the spins");
    int n_slots = 0;
    for (const auto &grp : target.layout) {
        for (int b : grp) {
            require(b >= first_bond && b < target.spins.back(), "calibration: bond outside the gate's spins");
        }
        n_slots += static_cast<int>(grp.size());
    }
    int n_phase = target.local_z ? nq : 0;
    int n_par = n_slots + n_phase + 1;

    auto groups_of = [&](const RVec &x) {
        std::vector<std::map<int, double>> groups;
        int k = 0;
        for (const auto &grp : target.layout) {
            std::map<int, double> m;
            for (int b : grp) {
                double s = std::sin(x(k++));
                m[b] = max_exchange_mhz * s * s;
            }
            groups.push_back(std::move(m));
        }
        return groups;
    };
    Eigen::Index kdim = target.target.rows();
    bool robust = options.field_static_rms > 0.0 || options.exchange_static_rms > 0.0;
    double gate_weight = options.gate_weight;
    bool with_noise = robust;
    auto residual = [&](const RVec &x) {
        CMat m = model.encoded(groups_of(x), first_bond);
        CMat v = target.target;
        for (Eigen::Index i = 0; i < kdim; ++i) {
            double theta = x(n_par - 1);
            for (int q = 0; q < n_phase; ++q) {
                if ((i >> (nq - 1 - q)) & 1) {
                    theta += x(n_slots + q);
                }
            }
            v.row(i) *= std::polar(1.0, theta);
        }
        CMat diff = gate_weight * (m - v);
        std::vector<CMat> parts{diff};
        if (with_noise) {
            auto gens = model.sensitivities(groups_of(x), first_bond);
            for (size_t c = 0; c < gens.size(); ++c) {
                double s = c < model.bond_ops.size() ? options.exchange_static_rms : options.field_static_rms;
                parts.push_back(s * model.harmful(gens[c]));
            }
        }
        Eigen::Index total = 0;
        for (const auto &p : parts) {
            total += p.size();
        }
        RVec r(2 * total);
        Eigen::Index at = 0;
        for (const auto &p : parts) {
            for (Eigen::Index i = 0; i < p.size(); ++i) {
                r(at++) = p.data()[i].real();
                r(at++) = p.data()[i].imag();
            }
        }
        return r;
    };
    auto jac = [&](const RVec &x) { return numeric_jacobian(residual, x, 1e-7); };

    RandomStream rng(stream_seed(options.seed, hash_name(target.name)));
    GateDefinition best;
    best.infidelity = 2.0;
    constexpr double kInf = std::numeric_limits<double>::infinity();
    double best_cost = kInf;
    LmOptions lm;
    lm.max_iterations = 400;
    for (int s = 0; s < options.starts; ++s) {
        RVec x0(n_par);
        double start_range = options.initial_max_mhz > 0.0
                                 ? std::asin(std::sqrt(std::min(options.initial_max_mhz / max_exchange_mhz, 1.0)))
                                 : 1.5;
        for (int k = 0; k < n_slots; ++k) {
            x0(k) = start_range * rng.uniform();
        }
        for (int k = n_slots; k < n_par; ++k) {
            x0(k) = kTwoPi * rng.uniform();
        }
        gate_weight = options.gate_weight;
        LmResult r = levenberg_marquardt(residual, jac, x0, lm);
        if (robust) {
            // tighten the gate while staying near the robust point
            for (double boost : {30.0, 1000.0}) {
                gate_weight = options.gate_weight * boost;
                r = levenberg_marquardt(residual, jac, r.x, lm);
            }
            with_noise = false;
            gate_weight = 1.0;
            r = levenberg_marquardt(residual, jac, r.x, lm);
            with_noise = true;
        }
        GateDefinition def;
        def.name = target.name;
        def.spins = target.spins;
        def.groups = groups_of(r.x);
        def.infidelity = 1.0 - encoded_process_fidelity(model.encoded(def.groups, first_bond), target.target,
                                                        target.local_z);
        def.infidelity = std::max(def.infidelity, 0.0);
        for (int q = 0; q < n_phase; ++q) {
            def.frame_phases.push_back(std::remainder(r.x(n_slots + q), kTwoPi));
        }
        if (robust) {
            double err = model.static_error(def.groups, first_bond, options.field_static_rms,
                                            options.exchange_static_rms);
            if (def.infidelity <= options.max_infidelity && err < best_cost) {
                best_cost = err;
                best = std::move(def);
            } else if (best_cost == kInf && def.infidelity < best.infidelity) {
                best = std::move(def);
            }
            continue;
        }
        if (def.infidelity < best.infidelity) {
            best = std::move(def);
        }
        if (best.infidelity < options.target_infidelity) {
            break;
        }
    }
    return best;
}

CalibrationOptions robust_calibration_options() {
    CalibrationOptions o;
    o.starts = 60;
    o.seed = 1;
    o.field_static_rms = 2.93e-4;
    o.exchange_static_rms = 4.5e-3;
    o.gate_weight = 10.0;
    o.max_infidelity = 1e-6;
    o.initial_max_mhz = 30.0;
    return o;
}

std::vector<CalibrationTarget> standard_calibration_targets(const SpinChainConfig &cfg) {
    require(cfg.n_spins == 6, "standard targets assume a six-spin chain");
    std::vector<CalibrationTarget> out;
    CMat cnot_ct = CMat::Zero(4, 4);  // control first
    cnot_ct(0, 0) = cnot_ct(1, 1) = cnot_ct(3, 2) = cnot_ct(2, 3) = 1.0;
    CMat cnot_tc = CMat::Zero(4, 4);  // target first
    cnot_tc(0, 0) = cnot_tc(3, 1) = cnot_tc(2, 2) = cnot_tc(1, 3) = 1.0;
    auto sandwich = [](int outer_a, int outer_b, int inner) {
        std::vector<std::vector<int>> layout(3, {outer_a, outer_b});
        for (int k = 0; k < 3; ++k) {
            layout.push_back({inner});
        }
        for (int k = 0; k < 3; ++k) {
            layout.push_back({outer_a, outer_b});
        }
        return layout;
    };
    out.push_back({"CNOT12", {0, 1, 2, 3}, sandwich(0, 2, 1), cnot_ct, true});
    out.push_back({"CNOT32", {2, 3, 4, 5}, sandwich(2, 4, 3), cnot_tc, true});
    for (int q = 0; q < 3; ++q) {
        out.push_back({"IDENTITY_Q" + std::to_string(q + 1),
                       {2 * q, 2 * q + 1},
                       std::vector<std::vector<int>>(3, {2 * q}),
                       CMat::Identity(2, 2),
                       false});
    }
    return out;
}

GateLibrary calibrate_library(const SpinChainConfig &cfg, double max_exchange_mhz, const CalibrationOptions &options) {
    GateLibrary lib;
    lib.deltas_mhz = cfg.deltas_mhz;
    lib.pulse_ns = cfg.pulse_ns;
    lib.idle_ns = cfg.idle_ns;
    lib.max_exchange_mhz = max_exchange_mhz;
    for (const auto &t : standard_calibration_targets(cfg)) {
        GateDefinition def = calibrate_gate(t, cfg, max_exchange_mhz, options);
        lib.gates[def.name] = std::move(def);
    }
    return lib;
}

CMat gate_encoded_block(const GateDefinition &gate, const SpinChainConfig &cfg) {
    SectorModel model(cfg, gate.spins);
    return model.encoded(gate.groups, gate.spins.front());
}

double static_error_estimate(const GateDefinition &gate, const SpinChainConfig &cfg, double field_rms,
                             double exchange_rms) {
    SectorModel model(cfg, gate.spins);
    return model.static_error(gate.groups, gate.spins.front(), field_rms, exchange_rms);
}

void apply_local_superop(CMat &rho, int n_spins, int first, int m, const CMat &natural) {
    size_t d = size_t{1} << m;
    size_t right = size_t{1} << (n_spins - first - m);
    size_t left = size_t{1} << first;
    size_t spect = left * right;
    require(natural.rows() == static_cast<Eigen::Index>(d * d) && natural.cols() == natural.rows(),
            "apply_local_superop: size mismatch");
    auto index = [&](size_t sp, size_t s) { return ((sp / right) * d + s) * right + sp % right; };
    CMat x(d * d, spect * spect);
    for (size_t sb = 0; sb < spect; ++sb) {
        for (size_t sk = 0; sk < spect; ++sk) {
            size_t col = sk + spect * sb;
            for (size_t s2 = 0; s2 < d; ++s2) {
                for (size_t s1 = 0; s1 < d; ++s1) {
                    x(s1 + d * s2, col) = rho(index(sk, s1), index(sb, s2));
                }
            }
        }
    }
    CMat y = natural * x;
    for (size_t sb = 0; sb < spect; ++sb) {
        for (size_t sk = 0; sk < spect; ++sk) {
            size_t col = sk + spect * sb;
            for (size_t s2 = 0; s2 < d; ++s2) {
                for (size_t s1 = 0; s1 < d; ++s1) {
                    rho(index(sk, s1), index(sb, s2)) = y(s1 + d * s2, col);
                }
            }
        }
    }
}

namespace {

CMat singlet_projector(int n_spins, int first) {
    CVec s = pair_state(0);
    return embed_operator(s * s.adjoint(), {first, first + 1}, n_spins);
}

}  // namespace

double singlet_probability(const CMat &rho, int n_spins, int first) {
    CMat p = singlet_projector(n_spins, first);
    return (p.cwiseProduct(rho.transpose())).sum().real();
}

PairMeasurement measure_pair(const CMat &rho, int n_spins, int first, RandomStream &rng) {
    CMat p = singlet_projector(n_spins, first);
    double p0 = (p.cwiseProduct(rho.transpose())).sum().real();
    if (!(p0 >= -1e-9 && p0 <= 1.0 + 1e-9)) {
        throw std::runtime_error("measure_pair: outcome probability " + std::to_string(p0) + " outside [0, 1]");
    }
    p0 = std::clamp(p0, 0.0, 1.0);
    PairMeasurement out;
    out.p0 = p0;
    out.outcome = rng.uniform() < p0 ? 0 : 1;
    if (out.outcome == 1) {
        p = CMat::Identity(p.rows(), p.cols()) - p;
    }
    CMat projected = p * rho * p;
    double tr = projected.trace().real();
    if (!(tr > 0.0)) {
        throw std::runtime_error("measure_pair: sampled an outcome of zero probability");
    }
    out.state = projected / tr;
    return out;
}

CMat reset_pair(const CMat &rho, int n_spins, int first) {
    size_t right = size_t{1} << (n_spins - first - 2);
    size_t left = size_t{1} << first;
    size_t spect = left * right;
    auto index = [&](size_t sp, size_t s) { return ((sp / right) * 4 + s) * right + sp % right; };
    CMat reduced = CMat::Zero(spect, spect);
    for (size_t a = 0; a < spect; ++a) {
        for (size_t b = 0; b < spect; ++b) {
            cplx acc = 0.0;
            for (size_t s = 0; s < 4; ++s) {
                acc += rho(index(a, s), index(b, s));
            }
            reduced(a, b) = acc;
        }
    }
    CVec sv = pair_state(0);
    CMat out(rho.rows(), rho.cols());
    for (size_t a = 0; a < spect; ++a) {
        for (size_t b = 0; b < spect; ++b) {
            for (size_t s = 0; s < 4; ++s) {
                for (size_t t = 0; t < 4; ++t) {
                    out(index(a, s), index(b, t)) = reduced(a, b) * sv(s) * std::conj(sv(t));
                }
            }
        }
    }
    return out;
}

double parity_expectation(const CMat &rho, int n_spins, int pair_a, int pair_b) {
    CMat zz = encoded_z(n_spins, pair_a) * encoded_z(n_spins, pair_b);
    CMat op = 0.5 * (CMat::Identity(zz.rows(), zz.cols()) - zz);
    return (op.cwiseProduct(rho.transpose())).sum().real();
}

StateCheck check_state(const CMat &rho) {
    StateCheck c;
    c.hermiticity = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
    c.trace_error = std::abs(rho.trace() - cplx(1.0, 0.0));
    CMat h = 0.5 * (rho + rho.adjoint());
    Eigen::SelfAdjointEigenSolver<CMat> es(h, Eigen::EigenvaluesOnly);
    c.min_eigenvalue = es.eigenvalues().minCoeff();
    return c;
}

ParityNoiseModel one_over_f_noise() {
    ParityNoiseModel m;
    m.name = "one_over_f";
    m.magnetic = make_one_over_f(1e-3, 1e5, 9, std::pow(ghz_to_rad_per_ns(2.2e-5), 2));
    m.magnetic.unit = "rad/ns";
    m.exchange = make_one_over_f(1e-3, 1e10, 14, 4e-6);
    m.exchange.unit = "1";
    return m;
}

ParityNoiseModel quasi_static_noise() {
    ParityNoiseModel m;
    m.name = "quasi_static";
    m.magnetic = quasi_static(std::pow(ghz_to_rad_per_ns(6.431e-5), 2));
    m.magnetic.unit = "rad/ns";
    m.exchange = quasi_static(std::pow(6.099e-3, 2));
    m.exchange.unit = "1";
    return m;
}

ParityNoiseModel no_noise() {
    ParityNoiseModel m;
    m.name = "none";
    return m;
}

std::vector<OuSum> chain_channels(const SpinChainConfig &cfg, const ParityNoiseModel &noise) {
    std::vector<OuSum> out;
    for (int i = 0; i < cfg.n_spins; ++i) {
        for (int a = 0; a < 3; ++a) {
            out.push_back(noise.magnetic);
        }
    }
    for (int b = 0; b + 1 < cfg.n_spins; ++b) {
        out.push_back(noise.exchange);
    }
    return out;
}

PulseSchedule parity_round_schedule(const SpinChainConfig &cfg, const GateLibrary &lib) {
    PulseSchedule idle3;
    PulseSchedule idle1;
    for (int k = 0; k < 3; ++k) {
        idle3.append(compile_gate("IDENTITY_Q3", cfg, lib));
        idle1.append(compile_gate("IDENTITY_Q1", cfg, lib));
    }
    PulseSchedule round = parallel(compile_gate("CNOT12", cfg, lib), idle3);
    round.append(parallel(compile_gate("CNOT32", cfg, lib), idle1));
    auto &last = round.segments.back().events;
    last.push_back({ScheduleEvent::Kind::measure, cfg.ancilla_first_spin});
    last.push_back({ScheduleEvent::Kind::reset, cfg.ancilla_first_spin});
    return round;
}

struct ParityExperiment::Plan {
    struct Block {
        int first = 0;
        int m = 0;
        const SegmentPrecompute *pre = nullptr;
        std::vector<size_t> channel_map;
    };
    struct Step {
        std::vector<Block> blocks;
        std::vector<CMat> unitaries;  // applied after the blocks, before events
        std::vector<ScheduleEvent> events;
    };
    std::vector<Step> steps;
    std::vector<std::unique_ptr<OperatorBasis>> bases;  // index m
    std::vector<std::unique_ptr<StructureConstants>> structure;
    std::vector<OuSum> channels;
    CMat initial;
    int data_a = 0;
    int data_b = 4;
};

ParityExperiment::~ParityExperiment() = default;
ParityExperiment::ParityExperiment(ParityExperiment &&) noexcept = default;

ParityExperiment::ParityExperiment(SpinChainConfig cfg, ParityNoiseModel noise, ParityOptions options,
                                   PrecomputeCache &cache, const GateLibrary &lib)
    : cfg_(std::move(cfg)), noise_(std::move(noise)), options_(options), plan_(std::make_unique<Plan>()) {
    cfg_.validate();
    require(cfg_.n_spins == 6, "parity experiment needs a six-spin chain");
    require(options_.coarse_ns > 0.0, "parity experiment: coarse_ns must be positive");
    require(options_.rounds >= 1, "parity experiment: need at least one round");
    Plan &plan = *plan_;
    int n = cfg_.n_spins;
    int anc = cfg_.ancilla_first_spin;
    plan.data_a = anc == 0 ? 2 : 0;
    plan.data_b = anc == 4 ? 2 : 4;
    plan.channels = chain_channels(cfg_, noise_);
    plan.bases.resize(3);
    plan.structure.resize(3);
    for (int m = 1; m <= 2; ++m) {
        plan.bases[m] = std::make_unique<OperatorBasis>(pauli_basis(m));
        plan.structure[m] = std::make_unique<StructureConstants>(*plan.bases[m]);
    }
    std::vector<int> bits(n / 2, 0);
    bits[plan.data_a / 2] = options_.data_bits[0];
    bits[plan.data_b / 2] = options_.data_bits[1];
    CVec psi = encoded_state(n, bits);
    plan.initial = psi * psi.adjoint();

    std::vector<CMat> instant_cnots{encoded_cnot(n, plan.data_a / 2, anc / 2), encoded_cnot(n, plan.data_b / 2, anc / 2)};
    std::vector<ScheduleEvent> round_events{{ScheduleEvent::Kind::measure, anc}, {ScheduleEvent::Kind::reset, anc}};

    if (options_.mode == ParityMode::instantaneous) {
        Plan::Step step;
        step.unitaries = instant_cnots;
        step.events = round_events;
        plan.steps.push_back(std::move(step));
        return;
    }
    if (options_.mode == ParityMode::finite) {
        require(anc == 2, "finite CNOT compilations assume the ancilla on spins 3-4");
        round_ = parity_round_schedule(cfg_, lib);
    } else {
        PulseSchedule idle_a;
        PulseSchedule idle_b;
        for (int k = 0; k < 6; ++k) {
            idle_a.append(compile_gate("IDENTITY_Q" + std::to_string(plan.data_a / 2 + 1), cfg_, lib));
            idle_b.append(compile_gate("IDENTITY_Q" + std::to_string(plan.data_b / 2 + 1), cfg_, lib));
        }
        round_ = parallel(idle_a, idle_b);
        round_.segments.back().events = round_events;
    }
    round_.validate(n);

    // Group schedule segments into coarse steps.
    std::vector<std::vector<const ScheduleSegment *>> groups;
    std::vector<const ScheduleSegment *> current;
    double acc = 0.0;
    for (const auto &seg : round_.segments) {
        require(current.empty() || current.back()->events.empty(),
                "parity experiment: event inside a coarse segment (trajectory/schedule misalignment)");
        current.push_back(&seg);
        acc += seg.duration_ns;
        if (acc > options_.coarse_ns + 1e-9) {
            throw std::invalid_argument("parity experiment: schedule does not align with the coarse grid");
        }
        if (std::abs(acc - options_.coarse_ns) <= 1e-9) {
            groups.push_back(std::move(current));
            current.clear();
            acc = 0.0;
        }
    }
    require(current.empty(), "parity experiment: round is not a whole number of coarse segments");

    double w0 = cfg_.zeeman_rate();
    for (const auto &grp : groups) {
        Plan::Step step;
        std::vector<bool> active(n - 1, false);
        for (const ScheduleSegment *s : grp) {
            for (int b = 0; b < n - 1; ++b) {
                active[b] = active[b] || s->exchange_mhz[b] != 0.0;
            }
        }
        int start = 0;
        while (start < n) {
            int end = start;
            while (end < n - 1 && active[end]) {
                ++end;
            }
            int m = end - start + 1;
            bool touches_ancilla = start <= anc + 1 && end >= anc;
            bool skip = options_.mode == ParityMode::perfect_measurement && touches_ancilla;
            if (!skip) {
                require(m <= 2, "parity experiment: blocks larger than two spins are not supported");
                SegmentSpec spec;
                spec.frame_rate = w0;
                spec.frame_generator = CMat::Zero(size_t{1} << m, size_t{1} << m);
                for (int i = 0; i < m; ++i) {
                    spec.frame_generator += spin_operator(m, i, 'z');
                }
                for (const ScheduleSegment *s : grp) {
                    spec.durations.push_back(s->duration_ns);
                    spec.hamiltonians.push_back(local_hamiltonian(cfg_, start, m, s->exchange_mhz, false));
                }
                Plan::Block block;
                block.first = start;
                block.m = m;
                if (!noise_.magnetic.components.empty()) {
                    const char axes[3] = {'x', 'y', 'z'};
                    for (int i = 0; i < m; ++i) {
                        for (int a = 0; a < 3; ++a) {
                            NoiseChannel ch;
                            ch.name = std::string("B") + std::to_string(start + i + 1) + axes[a];
                            ch.ops.assign(grp.size(), spin_operator(m, i, axes[a]));
                            ch.process = noise_.magnetic;
                            spec.channels.push_back(std::move(ch));
                            block.channel_map.push_back(static_cast<size_t>(3 * (start + i) + a));
                        }
                    }
                }
                if (!noise_.exchange.components.empty()) {
                    for (int i = 0; i + 1 < m; ++i) {
                        int b = start + i;
                        NoiseChannel ch;
                        ch.name = "xi" + std::to_string(b + 1) + std::to_string(b + 2);
                        CMat ss = exchange_operator(m, i, i + 1);
                        for (const ScheduleSegment *s : grp) {
                            ch.ops.push_back(mhz_to_rad_per_ns(s->exchange_mhz[b]) * ss);
                        }
                        ch.process = noise_.exchange;
                        spec.channels.push_back(std::move(ch));
                        block.channel_map.push_back(static_cast<size_t>(3 * n + b));
                    }
                }
                block.pre = &cache.get(spec, *plan.bases[m], *plan.structure[m]);
                step.blocks.push_back(std::move(block));
            }
            start = end + 1;
        }
        step.events = grp.back()->events;
        if (options_.mode == ParityMode::perfect_measurement && !step.events.empty()) {
            step.unitaries = instant_cnots;
        }
        plan.steps.push_back(std::move(step));
    }
}

double ParityExperiment::round_duration() const {
    return options_.mode == ParityMode::instantaneous ? 0.0 : round_.duration();
}

size_t ParityExperiment::steps_per_round() const {
    return options_.mode == ParityMode::instantaneous ? 0 : plan_->steps.size();
}

size_t ParityExperiment::distinct_segments() const {
    std::set<const SegmentPrecompute *> seen;
    for (const auto &s : plan_->steps) {
        for (const auto &b : s.blocks) {
            seen.insert(b.pre);
        }
    }
    return seen.size();
}

CoarseTrajectory ParityExperiment::trajectory(uint64_t seed, uint64_t realization) const {
    size_t n_steps = steps_per_round() * options_.rounds;
    std::vector<double> grid(n_steps + 1);
    for (size_t k = 0; k <= n_steps; ++k) {
        grid[k] = options_.coarse_ns * static_cast<double>(k);
    }
    return sample_coarse(plan_->channels, grid, stream_seed(seed, hash_name("noise"), realization));
}

MeasurementRecord ParityExperiment::run(uint64_t seed, uint64_t realization) const {
    const Plan &plan = *plan_;
    int n = cfg_.n_spins;
    CoarseTrajectory traj = trajectory(seed, realization);
    RandomStream mrng(stream_seed(seed, hash_name("measurement"), realization));
    MeasurementRecord rec;
    uint64_t h = 0xcbf29ce484222325ULL;
    for (size_t a = 0; a < traj.num_channels(); ++a) {
        for (size_t c = 0; c < traj.num_components(a); ++c) {
            auto s = traj.series(a, c);
            h = fnv_bytes(h, s.data(), s.size() * sizeof(double));
        }
    }
    rec.noise_digest = h;

    CMat rho = plan.initial;
    size_t spr = steps_per_round();
    std::vector<ChannelBoundary> boundary;
    for (size_t r = 0; r < options_.rounds; ++r) {
        for (size_t s = 0; s < plan.steps.size(); ++s) {
            const Plan::Step &step = plan.steps[s];
            size_t idx = r * spr + s;
            for (const Plan::Block &blk : step.blocks) {
                boundary.assign(blk.channel_map.size(), {});
                for (size_t c = 0; c < blk.channel_map.size(); ++c) {
                    size_t ch = blk.channel_map[c];
                    ChannelBoundary &cb = boundary[c];
                    cb.resize(traj.num_components(ch));
                    for (size_t k = 0; k < cb.size(); ++k) {
                        cb[k] = {traj.value(ch, k, idx), traj.value(ch, k, idx + 1)};
                    }
                }
                RMat k = assemble_generator(*blk.pre, *plan.structure[blk.m], boundary);
                CMat natural = to_natural(segment_map(*blk.pre, k), *plan.bases[blk.m]);
                apply_local_superop(rho, n, blk.first, blk.m, natural);
            }
            for (const CMat &u : step.unitaries) {
                rho = u * rho * u.adjoint();
            }
            rho = 0.5 * (rho + rho.adjoint()).eval();
            if (options_.check_states) {
                StateCheck c = check_state(rho);
                if (!c.valid()) {
                    throw std::runtime_error("parity experiment: invalid state after segment (min eigenvalue " +
                                             std::to_string(c.min_eigenvalue) + ", trace error " +
                                             std::to_string(c.trace_error) + ")");
                }
            } else if (std::abs(rho.trace().real() - 1.0) > 1e-8) {
                throw std::runtime_error("parity experiment: trace drifted");
            }
            for (const ScheduleEvent &e : step.events) {
                if (e.kind == ScheduleEvent::Kind::measure) {
                    if (!options_.measure) {
                        continue;
                    }
                    PairMeasurement pm = measure_pair(rho, n, e.first_spin, mrng);
                    rho = pm.state;
                    rec.outcomes.push_back(pm.outcome);
                    rec.p0.push_back(pm.p0);
                    rec.parity.push_back(parity_expectation(rho, n, plan.data_a, plan.data_b));
                    if (options_.check_states && !check_state(rho).valid()) {
                        throw std::runtime_error("parity experiment: invalid state after measurement");
                    }
                } else {
                    rho = reset_pair(rho, n, e.first_spin);
                }
            }
        }
    }
    return rec;
}

MeasurementRecord run_parity_experiment(const SpinChainConfig &cfg, const ParityNoiseModel &noise,
                                        const ParityOptions &options, uint64_t seed, uint64_t realization) {
    PrecomputeCache cache;
    ParityExperiment exp(cfg, noise, options, cache);
    return exp.run(seed, realization);
}

std::vector<int> bernoulli_outcomes(double q, size_t n, RandomStream &rng) {
    require(q >= 0.0 && q <= 1.0, "bernoulli_outcomes: q must lie in [0, 1]");
    std::vector<int> out(n);
    int m = 0;
    for (size_t j = 0; j < n; ++j) {
        if (rng.uniform() < q) {
            m ^= 1;
        }
        out[j] = m;
    }
    return out;
}

DecayCurve simulate_decay(const DecayOptions &options, const ParityNoiseModel &noise, uint64_t seed,
                          PrecomputeCache &cache) {
    require(options.step_ns > 0.0 && options.steps >= 1 && options.trajectories >= 1,
            "simulate_decay: need a positive step, steps and trajectories");
    bool ex = options.kind == DecayKind::exchange;
    int m = ex ? 3 : 2;
    size_t d = size_t{1} << m;
    OperatorBasis basis = pauli_basis(m);
    StructureConstants sc(basis);

    double w0 = ghz_to_rad_per_ns(options.g_factor * kMuBOverHGhzPerTesla * options.field_tesla);
    SegmentSpec spec;
    spec.durations = {options.step_ns};
    spec.frame_rate = w0;
    spec.frame_generator = CMat::Zero(d, d);
    for (int i = 0; i < m; ++i) {
        spec.frame_generator += spin_operator(m, i, 'z');
    }
    CMat ss = exchange_operator(m, m - 2, m - 1);
    spec.hamiltonians = {ex ? (mhz_to_rad_per_ns(options.exchange_mhz) * ss).eval() : CMat::Zero(d, d).eval()};
    std::vector<OuSum> processes;
    const char axes[3] = {'x', 'y', 'z'};
    if (!noise.magnetic.components.empty()) {
        for (int i = 0; i < m; ++i) {
            for (int a = 0; a < 3; ++a) {
                spec.channels.push_back({std::string("B") + std::to_string(i + 1) + axes[a],
                                         {spin_operator(m, i, axes[a])},
                                         noise.magnetic});
                processes.push_back(noise.magnetic);
            }
        }
    }
    if (ex && !noise.exchange.components.empty() && options.exchange_mhz != 0.0) {
        spec.channels.push_back({"xi23", {mhz_to_rad_per_ns(options.exchange_mhz) * ss}, noise.exchange});
        processes.push_back(noise.exchange);
    }
    const SegmentPrecompute &pre = cache.get(spec, basis, sc);

    CVec psi = encoded_state(2, {0});
    if (ex) {
        CVec plus(2);
        plus << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
        psi = kron(psi, plus);
    }
    LiouvilleState init = state_from_density(psi * psi.adjoint(), basis);
    CMat projector = singlet_projector(m, 0);

    std::vector<double> grid(options.steps + 1);
    for (size_t k = 0; k <= options.steps; ++k) {
        grid[k] = options.step_ns * static_cast<double>(k);
    }
    std::vector<double> sum(options.steps + 1, 0.0), sum2(options.steps + 1, 0.0);
    std::vector<ChannelBoundary> boundary(processes.size());
    for (size_t r = 0; r < options.trajectories; ++r) {
        LiouvilleState state = init;
        auto record = [&](size_t k) {
            CMat rho = density_from_state(state, basis);
            double p = (projector.cwiseProduct(rho.transpose())).sum().real();
            sum[k] += p;
            sum2[k] += p * p;
        };
        record(0);
        if (processes.empty()) {
            RMat k0 = assemble_generator(pre, sc, boundary);
            for (size_t k = 0; k < options.steps; ++k) {
                state = propagate(state, pre, k0);
                record(k + 1);
            }
            continue;
        }
        CoarseTrajectory traj = sample_coarse(processes, grid, stream_seed(seed, hash_name("decay"), r));
        for (size_t k = 0; k < options.steps; ++k) {
            for (size_t c = 0; c < processes.size(); ++c) {
                boundary[c].resize(traj.num_components(c));
                for (size_t j = 0; j < boundary[c].size(); ++j) {
                    boundary[c][j] = {traj.value(c, j, k), traj.value(c, j, k + 1)};
                }
            }
            state = propagate(state, pre, assemble_generator(pre, sc, boundary));
            record(k + 1);
        }
    }
    DecayCurve out;
    double n = static_cast<double>(options.trajectories);
    for (size_t k = 0; k <= options.steps; ++k) {
        double mean = sum[k] / n;
        double var = std::max(0.0, sum2[k] / n - mean * mean);
        out.t_ns.push_back(grid[k]);
        out.probability.push_back(mean);
        out.std_error.push_back(n > 1.0 ? std::sqrt(var / (n - 1.0)) : 0.0);
    }
    return out;
}

}  // namespace tcg
