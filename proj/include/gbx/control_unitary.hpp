// Copyright 2026 The Graybox Control Authors
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

// Time-ordered closed-system propagator for
//   H_ctrl(t) = 1/2 omega_s sz + 1/2 f_x(t) sx + 1/2 f_y(t) sy
// with piecewise-constant controls on the midpoint grid, and its adjoint
// (vector-Jacobian product) with respect to the control samples.

#pragma once

#include <cmath>
#include <vector>

#include "gbx/core.hpp"
#include "gbx/pulses.hpp"

namespace gbx {

inline Eigen::Vector3d control_generator(double omega_s, double fx, double fy) {
    return {0.5 * fx, 0.5 * fy, 0.5 * omega_s};
}

/// Step factors U_k = exp(-i H_k dt), k = 0..M-1.
inline std::vector<Mat2> control_steps(const Waveform& w, double omega_s) {
    std::vector<Mat2> steps(static_cast<std::size_t>(w.steps()));
    const double dt = w.dt();
    for (int k = 0; k < w.steps(); ++k) {
        steps[k] = su2_exp(control_generator(omega_s, w.value(ControlAxis::x, k), w.value(ControlAxis::y, k)), dt);
    }
    return steps;
}

/// U = U_{M-1} ... U_1 U_0 (latest time leftmost).
inline Mat2 control_unitary_matrix(const Waveform& w, double omega_s) {
    Mat2 u = Mat2::Identity();
    const double dt = w.dt();
    for (int k = 0; k < w.steps(); ++k) {
        u = su2_exp(control_generator(omega_s, w.value(ControlAxis::x, k), w.value(ControlAxis::y, k)), dt) * u;
    }
    return u;
}

inline UnitaryOperator control_unitary(const Waveform& w, double omega_s, double horizon, int steps) {
    if (w.steps() != steps) throw InvalidInput("waveform length does not match the time grid");
    if (std::abs(w.horizon - horizon) > 1e-12 * std::max(1.0, horizon)) {
        throw InvalidInput("waveform horizon does not match");
    }
    return UnitaryOperator(Operator(control_unitary_matrix(w, omega_s)));
}

/// Given a 2x2 cotangent C with dL = 2 Re tr(dU C), returns dL/df for every
/// active axis and time step (same shape as w.samples).
inline Eigen::MatrixXd control_unitary_vjp(const Waveform& w, double omega_s, const Mat2& cot) {
    const int m = w.steps();
    const double dt = w.dt();
    const std::vector<Mat2> steps = control_steps(w, omega_s);

    // prefix[k] = U_{k-1} ... U_0
    std::vector<Mat2> prefix(static_cast<std::size_t>(m));
    Mat2 acc = Mat2::Identity();
    for (int k = 0; k < m; ++k) {
        prefix[k] = acc;
        acc = steps[k] * acc;
    }

    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(w.samples.rows(), m);
    Mat2 suffix = Mat2::Identity();  // U_{M-1} ... U_{k+1}
    for (int k = m - 1; k >= 0; --k) {
        const Mat2 d = prefix[k] * cot * suffix;
        const auto du = su2_exp_derivative(
            control_generator(omega_s, w.value(ControlAxis::x, k), w.value(ControlAxis::y, k)), dt);
        for (std::size_t r = 0; r < w.axes.size(); ++r) {
            const int j = w.axes[r] == ControlAxis::x ? 0 : 1;
            // a_j = f_j / 2
            grad(static_cast<Eigen::Index>(r), k) = (du[j] * d).trace().real();
        }
        suffix = suffix * steps[k];
    }
    return grad;
}

}  // namespace gbx
