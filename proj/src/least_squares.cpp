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


#include "tcg/least_squares.hpp"

#include <algorithm>
#include <cmath>

namespace tcg {

LmResult levenberg_marquardt(const ResidualFn &residual, const JacobianFn &jacobian, RVec x0,
                             const LmOptions &options) {
    LmResult out;
    out.x = std::move(x0);
    out.residual = residual(out.x);
    out.cost = 0.5 * out.residual.squaredNorm();
    double mu = options.initial_damping;
    for (int it = 0; it < options.max_iterations; ++it) {
        out.iterations = it + 1;
        out.jacobian = jacobian(out.x);
        const RMat &j = out.jacobian;
        RMat jtj = j.transpose() * j;
        RVec g = j.transpose() * out.residual;
        if (g.lpNorm<Eigen::Infinity>() <= options.gtol) {
            out.converged = true;
            return out;
        }
        RVec diag = jtj.diagonal().cwiseMax(1e-300);
        bool stepped = false;
        for (int attempt = 0; attempt < 40; ++attempt) {
            RMat a = jtj;
            a.diagonal() += mu * diag;
            RVec step = a.ldlt().solve(-g);
            RVec trial = out.x + step;
            RVec r = residual(trial);
            double cost = 0.5 * r.squaredNorm();
            if (std::isfinite(cost) && cost <= out.cost) {
                double drop = out.cost - cost;
                out.x = trial;
                out.residual = r;
                mu = std::max(mu / 3.0, 1e-15);
                stepped = true;
                bool small_step = step.norm() <= options.xtol * (out.x.norm() + options.xtol);
                bool small_drop = drop <= options.ftol * std::max(out.cost, 1e-300);
                out.cost = cost;
                if (small_step || small_drop || cost == 0.0) {
                    out.jacobian = jacobian(out.x);
                    out.converged = true;
                    return out;
                }
                break;
            }
            mu *= 4.0;
        }
        if (!stepped) {
            // No descent direction left at machine precision.
            out.converged = true;
            return out;
        }
    }
    return out;
}

RMat numeric_jacobian(const ResidualFn &residual, const RVec &x, double h) {
    RVec r0 = residual(x);
    RMat j(r0.size(), x.size());
    RVec xp = x;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        double step = h * std::max(1.0, std::abs(x(k)));
        xp(k) = x(k) + step;
        RVec rp = residual(xp);
        xp(k) = x(k) - step;
        RVec rm = residual(xp);
        xp(k) = x(k);
        j.col(k) = (rp - rm) / (2.0 * step);
    }
    return j;
}

}  // namespace tcg
