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

// Dense complex linear algebra shared by the lab simulator and the graybox
// model. Basis convention: sigma_z = diag(1, -1), |0> is the +1 eigenstate,
// sigma_+ = |1><0|. Composite spaces are ordered system (x) auxiliary.

#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "gbx/errors.hpp"

namespace gbx {

using cplx = std::complex<double>;
using Operator = Eigen::MatrixXcd;
using Mat2 = Eigen::Matrix2cd;

inline constexpr cplx kI{0.0, 1.0};

enum class PauliAxis { x, y, z, plus, minus, identity };

/// Fixed-size 2x2 Pauli-family matrix in the computational basis.
inline Mat2 pauli2(PauliAxis axis) {
    Mat2 m = Mat2::Zero();
    switch (axis) {
        case PauliAxis::x:
            m(0, 1) = 1.0;
            m(1, 0) = 1.0;
            break;
        case PauliAxis::y:
            m(0, 1) = -kI;
            m(1, 0) = kI;
            break;
        case PauliAxis::z:
            m(0, 0) = 1.0;
            m(1, 1) = -1.0;
            break;
        case PauliAxis::plus:
            m(1, 0) = 1.0;
            break;
        case PauliAxis::minus:
            m(0, 1) = 1.0;
            break;
        case PauliAxis::identity:
            m = Mat2::Identity();
            break;
    }
    return m;
}

inline Operator pauli(PauliAxis axis) { return Operator(pauli2(axis)); }

/// Truncated bosonic ladder operator: a(k, k+1) = sqrt(k+1).
inline Operator bosonic_annihilation(int trunc_dim) {
    if (trunc_dim < 2) {
        throw InvalidInput("bosonic truncation must be >= 2, got " + std::to_string(trunc_dim));
    }
    Operator a = Operator::Zero(trunc_dim, trunc_dim);
    for (int k = 0; k + 1 < trunc_dim; ++k) a(k, k + 1) = std::sqrt(static_cast<double>(k + 1));
    return a;
}

/// Single fermionic mode c = |0><1| in the occupation basis {empty, occupied}.
inline Operator fermionic_annihilation() {
    Operator c = Operator::Zero(2, 2);
    c(0, 1) = 1.0;
    return c;
}

inline Operator kron(const Operator& a, const Operator& b) {
    Operator out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

/// Reduces a square operator on the ordered tensor product of `dims`
/// to the factors flagged in `keep`.
inline Operator reduce(const Operator& m, std::span<const int> dims, std::span<const bool> keep) {
    if (dims.size() != keep.size()) throw InvalidInput("reduce: dims and keep differ in length");
    Eigen::Index total = 1;
    for (int d : dims) {
        if (d < 1) throw InvalidInput("reduce: factor dimension must be positive");
        total *= d;
    }
    if (m.rows() != total || m.cols() != total) {
        throw InvalidInput("reduce: operator dimension " + std::to_string(m.rows()) +
                           " does not match product of factor dimensions " + std::to_string(total));
    }
    const std::size_t n = dims.size();
    Eigen::Index kept_dim = 1;
    for (std::size_t f = 0; f < n; ++f)
        if (keep[f]) kept_dim *= dims[f];

    Operator out = Operator::Zero(kept_dim, kept_dim);
    auto kept_index = [&](Eigen::Index flat, std::vector<int>& buf) {
        for (std::size_t f = n; f-- > 0;) {
            buf[f] = static_cast<int>(flat % dims[f]);
            flat /= dims[f];
        }
        Eigen::Index idx = 0;
        for (std::size_t f = 0; f < n; ++f)
            if (keep[f]) idx = idx * dims[f] + buf[f];
        return idx;
    };
    std::vector<int> row_digits(n), col_digits(n);
    for (Eigen::Index r = 0; r < total; ++r) {
        const Eigen::Index kr = kept_index(r, row_digits);
        for (Eigen::Index c = 0; c < total; ++c) {
            const Eigen::Index kc = kept_index(c, col_digits);
            bool diagonal_in_traced = true;
            for (std::size_t f = 0; f < n && diagonal_in_traced; ++f)
                if (!keep[f] && row_digits[f] != col_digits[f]) diagonal_in_traced = false;
            if (diagonal_in_traced) out(kr, kc) += m(r, c);
        }
    }
    return out;
}

enum class Keep { sys, aux };

inline Operator partial_trace(const Operator& m, int d_sys, int d_aux, Keep keep) {
    const std::array<int, 2> dims{d_sys, d_aux};
    const std::array<bool, 2> mask{keep == Keep::sys, keep == Keep::aux};
    return reduce(m, dims, mask);
}

inline double hermiticity_error(const Operator& m) { return (m - m.adjoint()).cwiseAbs().maxCoeff(); }

struct DensityReport {
    double hermiticity = 0.0;
    double trace_error = 0.0;
    double min_eigenvalue = 0.0;
};

inline DensityReport inspect_density(const Operator& rho) {
    DensityReport r;
    r.hermiticity = hermiticity_error(rho);
    r.trace_error = std::abs(rho.trace() - cplx(1.0));
    const Operator h = 0.5 * (rho + rho.adjoint());
    Eigen::SelfAdjointEigenSolver<Operator> es(h, Eigen::EigenvaluesOnly);
    r.min_eigenvalue = es.eigenvalues().minCoeff();
    return r;
}

class DensityMatrix {
public:
    static constexpr double kHermiticityTol = 1e-10;
    static constexpr double kTraceTol = 1e-10;
    static constexpr double kEigenvalueTol = -1e-8;

    explicit DensityMatrix(Operator op) : op_(std::move(op)) {
        if (op_.rows() != op_.cols()) throw InvalidInput("density matrix must be square");
        if (!op_.allFinite()) throw InvalidInput("density matrix has non-finite entries");
        const auto r = inspect_density(op_);
        if (r.hermiticity > kHermiticityTol) throw InvalidInput("density matrix is not Hermitian");
        if (r.trace_error > kTraceTol) throw InvalidInput("density matrix trace differs from 1");
        if (r.min_eigenvalue < kEigenvalueTol) throw InvalidInput("density matrix has a negative eigenvalue");
    }

    const Operator& op() const { return op_; }
    Eigen::Index dim() const { return op_.rows(); }
    double purity() const { return (op_ * op_).trace().real(); }

private:
    Operator op_;
};

class UnitaryOperator {
public:
    static constexpr double kTol = 1e-9;

    explicit UnitaryOperator(Operator op) : op_(std::move(op)) {
        if (op_.rows() != op_.cols()) throw InvalidInput("unitary must be square");
        const Operator id = Operator::Identity(op_.rows(), op_.cols());
        if ((op_.adjoint() * op_ - id).cwiseAbs().maxCoeff() > kTol) {
            throw InvalidInput("operator is not unitary");
        }
    }

    const Operator& op() const { return op_; }
    Eigen::Index dim() const { return op_.rows(); }

private:
    Operator op_;
};

/// exp(-i t a.sigma) for a real 3-vector a.
inline Mat2 su2_exp(const Eigen::Vector3d& a, double t) {
    const double r = a.norm();
    const double theta = r * t;
    const double c = std::cos(theta);
    // sin(theta)/r, finite as r -> 0
    const double s = std::abs(theta) < 1e-8 ? t * (1.0 - theta * theta / 6.0) : std::sin(theta) / r;
    Mat2 u;
    u(0, 0) = cplx(c, -s * a.z());
    u(1, 1) = cplx(c, s * a.z());
    // -i s (a_x sx + a_y sy): off-diagonals
    u(0, 1) = -kI * s * cplx(a.x(), -a.y());
    u(1, 0) = -kI * s * cplx(a.x(), a.y());
    return u;
}

/// Partial derivatives of su2_exp(a, t) with respect to a_x, a_y, a_z.
inline std::array<Mat2, 3> su2_exp_derivative(const Eigen::Vector3d& a, double t) {
    const double r = a.norm();
    const double theta = r * t;
    const double c = std::cos(theta);
    double s;    // sin(theta)/r
    double q;    // (t cos(theta) - sin(theta)/r) / r^2
    if (std::abs(theta) < 1e-4) {
        s = t * (1.0 - theta * theta / 6.0);
        q = -t * t * t / 3.0 * (1.0 - theta * theta / 10.0);
    } else {
        s = std::sin(theta) / r;
        q = (t * c - s) / (r * r);
    }
    const Mat2 adot = a.x() * pauli2(PauliAxis::x) + a.y() * pauli2(PauliAxis::y) + a.z() * pauli2(PauliAxis::z);
    const std::array<Mat2, 3> sig{pauli2(PauliAxis::x), pauli2(PauliAxis::y), pauli2(PauliAxis::z)};
    std::array<Mat2, 3> out;
    for (int j = 0; j < 3; ++j) {
        out[j] = (-t * a(j) * s) * Mat2::Identity() - kI * (s * sig[j] + (a(j) * q) * adot);
    }
    return out;
}

/// exp(-i H t) for Hermitian 2x2 H via H = a0 I + a.sigma.
inline UnitaryOperator expm_2x2(const Operator& h, double t) {
    if (h.rows() != 2 || h.cols() != 2) throw InvalidInput("expm_2x2 requires a 2x2 operator");
    if (hermiticity_error(h) > 1e-10) throw InvalidInput("expm_2x2 requires a Hermitian operator");
    const double a0 = 0.5 * h.trace().real();
    const Eigen::Vector3d a(h(0, 1).real(), -h(0, 1).imag(), 0.5 * (h(0, 0) - h(1, 1)).real());
    const Mat2 u = std::exp(cplx(0.0, -a0 * t)) * su2_exp(a, t);
    return UnitaryOperator(Operator(u));
}

/// exp(scale * M) by scaling and squaring (Pade approximant).
inline Operator expm_dense(const Operator& m, cplx scale) {
    if (m.rows() != m.cols()) throw InvalidInput("expm_dense requires a square operator");
    if (!m.allFinite()) throw InvalidInput("expm_dense requires finite entries");
    const Operator scaled = scale * m;
    return scaled.exp();
}

enum class BathKind { fermionic, bosonic, bare };

inline std::string to_string(BathKind kind) {
    switch (kind) {
        case BathKind::fermionic: return "fermionic";
        case BathKind::bosonic: return "bosonic";
        case BathKind::bare: return "bare";
    }
    return "?";
}

inline BathKind bath_kind_from_string(const std::string& s) {
    if (s == "fermionic") return BathKind::fermionic;
    if (s == "bosonic") return BathKind::bosonic;
    if (s == "bare") return BathKind::bare;
    throw ConfigError("unknown bath kind '" + s + "'");
}

struct ThermalParams {
    double beta = 1.0;        // fermionic inverse temperature
    double mu_chem = 3.0;     // fermionic chemical potential
    double omega_d = 5.0;     // auxiliary level spacing
    double n_mean = 1.0;      // bosonic mean occupation
    int trunc_dim = 20;       // bosonic truncation
};

/// Fermi-Dirac occupation 1 / (1 + exp(beta (omega_d - mu))).
inline double fermi_occupation(double beta, double omega_d, double mu_chem) {
    return 1.0 / (1.0 + std::exp(beta * (omega_d - mu_chem)));
}

inline DensityMatrix thermal_state(BathKind kind, const ThermalParams& p) {
    switch (kind) {
        case BathKind::fermionic: {
            const double f = fermi_occupation(p.beta, p.omega_d, p.mu_chem);
            Operator rho = Operator::Zero(2, 2);
            rho(0, 0) = 1.0 - f;
            rho(1, 1) = f;
            return DensityMatrix(rho);
        }
        case BathKind::bosonic: {
            if (p.n_mean < 0.0) throw InvalidInput("thermal occupation must be non-negative");
            if (p.trunc_dim < 2) throw InvalidInput("bosonic truncation must be >= 2");
            const double ratio = p.n_mean / (p.n_mean + 1.0);
            Eigen::VectorXd probs(p.trunc_dim);
            double w = 1.0;
            for (int k = 0; k < p.trunc_dim; ++k) {
                probs(k) = w;
                w *= ratio;
            }
            probs /= probs.sum();
            Operator rho = Operator::Zero(p.trunc_dim, p.trunc_dim);
            rho.diagonal() = probs.cast<cplx>();
            return DensityMatrix(rho);
        }
        case BathKind::bare:
            return DensityMatrix(Operator::Identity(1, 1));
    }
    throw InvalidInput("unknown bath kind");
}

/// Bloch vector (<X>, <Y>, <Z>) of a qubit operator.
inline Eigen::Vector3d bloch_vector(const Mat2& rho) {
    return {2.0 * rho(1, 0).real(), 2.0 * rho(1, 0).imag(), (rho(0, 0) - rho(1, 1)).real()};
}

/// SO(3) rotation R with U (r.sigma) U^dagger = (R r).sigma.
inline Eigen::Matrix3d bloch_rotation(const Mat2& u) {
    const std::array<Mat2, 3> sig{pauli2(PauliAxis::x), pauli2(PauliAxis::y), pauli2(PauliAxis::z)};
    Eigen::Matrix3d r;
    for (int j = 0; j < 3; ++j) {
        const Mat2 rotated = u * sig[j] * u.adjoint();
        for (int i = 0; i < 3; ++i) r(i, j) = 0.5 * (sig[i] * rotated).trace().real();
    }
    return r;
}

}  // namespace gbx
