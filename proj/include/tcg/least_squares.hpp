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


#ifndef TCG_LEAST_SQUARES_HPP
#define TCG_LEAST_SQUARES_HPP

#include <functional>

#include "tcg/liouville.hpp"

namespace tcg {

using ResidualFn = std::function<RVec(const RVec &)>;
using JacobianFn = std::function<RMat(const RVec &)>;

struct LmOptions {
    int max_iterations = 200;
    double xtol = 1e-12;
    double ftol = 1e-14;
    double gtol = 1e-12;
    double initial_damping = 1e-3;
};

struct LmResult {
    RVec x;
    RVec residual;
    RMat jacobian;
    double cost = 0.0;  // 0.5 |r|^2
    int iterations = 0;
    bool converged = false;
};

/// Levenberg-Marquardt with Marquardt diagonal scaling.
LmResult levenberg_marquardt(const ResidualFn &residual, const JacobianFn &jacobian, RVec x0,
                             const LmOptions &options = {});

/// Central differences with relative step h.
RMat numeric_jacobian(const ResidualFn &residual, const RVec &x, double h = 1e-7);

}  // namespace tcg

#endif
