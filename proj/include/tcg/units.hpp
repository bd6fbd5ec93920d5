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

#ifndef TCG_UNITS_HPP
#define TCG_UNITS_HPP

// Internal units: hbar = 1, time in ns, angular rates in rad/ns.

namespace tcg {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr double kHalfPi = 0.5 * kPi;

/// Bohr magneton over Planck's constant, GHz per tesla.
inline constexpr double kMuBOverHGhzPerTesla = 13.996244936;

constexpr double hz_to_rad_per_ns(double f) { return kTwoPi * f * 1e-9; }
constexpr double mhz_to_rad_per_ns(double f) { return kTwoPi * f * 1e-3; }
constexpr double ghz_to_rad_per_ns(double f) { return kTwoPi * f; }
constexpr double rad_per_ns_to_hz(double w) { return w / kTwoPi * 1e9; }

}  // namespace tcg

#endif
