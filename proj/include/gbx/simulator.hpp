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

// Ground-truth physics for a qubit coupled to a single-mode auxiliary that is
// itself damped by two Markovian channels. The joint qubit+auxiliary state
// follows
//
//   d rho/dt = -i [H_sa(t), rho] + sum_j (L_j rho L_j^+ - 1/2 {L_j^+ L_j, rho})
//   H_sa     = H_ctrl (x) I + I (x) omega_d b^+ b + V s+ (x) b + V* s- (x) b^+
//   L        = { sqrt(gamma_L) I (x) b, sqrt(gamma_R) I (x) b^+ }
//
// integrated with fixed-step RK4, S substeps per control step.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "gbx/control_unitary.hpp"
#include "gbx/core.hpp"
#include "gbx/pulses.hpp"
#include "json.hpp"

namespace gbx {

struct LabConfig {
    double omega_s = 12.0;
    BathKind bath = BathKind::fermionic;
    double omega_d = 5.0;
    cplx coupling{2.0, 0.0};
    double gamma_l = 0.7;
    double gamma_r = 0.7;
    double beta = 1.0;
    double mu_chem = 3.0;
    double n_mean = 1.0;
    int trunc_dim = 20;
    double horizon = 1.0;
    int steps = 128;
    int substeps = 0;  // 0: calibrate on first use

    int aux_dim() const {
        switch (bath) {
            case BathKind::fermionic: return 2;
            case BathKind::bosonic: return trunc_dim;
            case BathKind::bare: return 1;
        }
        return 1;
    }
    int joint_dim() const { return 2 * aux_dim(); }

    ThermalParams thermal() const { return {beta, mu_chem, omega_d, n_mean, trunc_dim}; }

    void validate() const {
        if (gamma_l < 0.0 || gamma_r < 0.0) throw ConfigError("decay rates must be non-negative");
        if (bath == BathKind::bosonic && trunc_dim < 2) throw ConfigError("bosonic truncation must be >= 2");
        if (bath == BathKind::bosonic && n_mean < 0.0) throw ConfigError("thermal occupation must be >= 0");
        if (steps < 1 || !(horizon > 0.0)) throw ConfigError("invalid time grid");
        if (substeps < 0) throw ConfigError("substeps must be >= 0");
    }

    static LabConfig fermionic_default() { return LabConfig{}; }

    static LabConfig bosonic_default() {
        LabConfig c;
        c.bath = BathKind::bosonic;
        c.coupling = 1.3;
        return c;
    }
};

inline nlohmann::ordered_json to_json(const LabConfig& c) {
    nlohmann::ordered_json j;
    j["omega_s"] = c.omega_s;
    j["bath"] = to_string(c.bath);
    j["omega_d"] = c.omega_d;
    j["V"] = {c.coupling.real(), c.coupling.imag()};
    j["gamma_L"] = c.gamma_l;
    j["gamma_R"] = c.gamma_r;
    j["beta"] = c.beta;
    j["mu_chem"] = c.mu_chem;
    j["n_mean"] = c.n_mean;
    j["trunc_dim"] = c.trunc_dim;
    j["T"] = c.horizon;
    j["M"] = c.steps;
    j["substeps"] = c.substeps;
    return j;
}

inline LabConfig lab_config_from_json(const nlohmann::ordered_json& j) {
    // Missing keys take the defaults of the named bath.
    const BathKind kind = j.contains("bath") ? bath_kind_from_string(j.at("bath").get<std::string>()) : BathKind::fermionic;
    LabConfig c = kind == BathKind::bosonic ? LabConfig::bosonic_default() : LabConfig::fermionic_default();
    c.bath = kind;
    c.omega_s = j.value("omega_s", c.omega_s);
    if (j.contains("V")) {
        const auto& v = j.at("V");
        c.coupling = v.is_array() ? cplx(v.at(0).get<double>(), v.at(1).get<double>()) : cplx(v.get<double>(), 0.0);
    }
    c.omega_d = j.value("omega_d", c.omega_d);
    c.gamma_l = j.value("gamma_L", c.gamma_l);
    c.gamma_r = j.value("gamma_R", c.gamma_r);
    c.beta = j.value("beta", c.beta);
    c.mu_chem = j.value("mu_chem", c.mu_chem);
    c.n_mean = j.value("n_mean", c.n_mean);
    c.trunc_dim = j.value("trunc_dim", c.trunc_dim);
    c.horizon = j.value("T", c.horizon);
    c.steps = j.value("M", c.steps);
    c.substeps = j.value("substeps", c.substeps);
    return c;
}

/// Hamiltonian pieces and jump operators on qubit (x) auxiliary.
struct JointGenerator {
    int aux_dim = 1;
    Operator drift;    // 1/2 omega_s sz (x) I + I (x) omega_d n + coupling
    Operator x_term;   // 1/2 sx (x) I
    Operator y_term;   // 1/2 sy (x) I
    std::vector<Operator> jumps;

    Operator hamiltonian(double fx, double fy) const { return drift + fx * x_term + fy * y_term; }
    Operator hamiltonian_at(const Waveform& w, int k) const {
        return hamiltonian(w.value(ControlAxis::x, k), w.value(ControlAxis::y, k));
    }
};

inline JointGenerator build_joint_generator(const LabConfig& cfg) {
    cfg.validate();
    JointGenerator g;
    g.aux_dim = cfg.aux_dim();
    const Operator id_aux = Operator::Identity(g.aux_dim, g.aux_dim);
    const Operator id_sys = Operator::Identity(2, 2);
    g.drift = kron(0.5 * cfg.omega_s * pauli(PauliAxis::z), id_aux);
    g.x_term = kron(0.5 * pauli(PauliAxis::x), id_aux);
    g.y_term = kron(0.5 * pauli(PauliAxis::y), id_aux);

    if (cfg.bath == BathKind::bare) {
        // No auxiliary: the two channels act on the qubit directly. The
        // first one relaxes toward |1>, the lower level of 1/2 omega_s sz.
        if (cfg.gamma_l > 0.0) g.jumps.push_back(std::sqrt(cfg.gamma_l) * pauli(PauliAxis::plus));
        if (cfg.gamma_r > 0.0) g.jumps.push_back(std::sqrt(cfg.gamma_r) * pauli(PauliAxis::minus));
        return g;
    }

    const Operator b =
        cfg.bath == BathKind::fermionic ? fermionic_annihilation() : bosonic_annihilation(cfg.trunc_dim);
    const Operator bd = b.adjoint();
    g.drift += kron(id_sys, cfg.omega_d * bd * b);
    g.drift += kron(cfg.coupling * pauli(PauliAxis::plus), b) + kron(std::conj(cfg.coupling) * pauli(PauliAxis::minus), bd);
    if (cfg.gamma_l > 0.0) g.jumps.push_back(std::sqrt(cfg.gamma_l) * kron(id_sys, b));
    if (cfg.gamma_r > 0.0) g.jumps.push_back(std::sqrt(cfg.gamma_r) * kron(id_sys, bd));
    return g;
}

/// Sparse form of the master equation, optionally tensored with an idle
/// reference space on the right.
class LindbladSolver {
public:
    using Sparse = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;

    explicit LindbladSolver(const JointGenerator& g, int reference_dim = 1) {
        auto lift = [&](const Operator& op) -> Operator {
            return reference_dim == 1 ? op : kron(op, Operator::Identity(reference_dim, reference_dim));
        };
        Operator heff = lift(g.drift);
        dim_ = heff.rows();
        for (const auto& l : g.jumps) {
            const Operator ll = lift(l);
            heff -= 0.5 * kI * (ll.adjoint() * ll);
            jumps_.push_back(ll.sparseView(0.0, 0.0));
        }
        heff_drift_ = heff.sparseView(0.0, 0.0);
        x_term_ = lift(g.x_term).sparseView(0.0, 0.0);
        y_term_ = lift(g.y_term).sparseView(0.0, 0.0);
    }

    Eigen::Index dim() const { return dim_; }

    /// Effective non-Hermitian Hamiltonian for one control step.
    Sparse effective_hamiltonian(double fx, double fy) const {
        Sparse h = heff_drift_;
        if (fx != 0.0) h += cplx(fx) * x_term_;
        if (fy != 0.0) h += cplx(fy) * y_term_;
        return h;
    }

    /// Right-hand side for a Hermitian state.
    void rhs(const Sparse& heff, const Operator& rho, Operator& out) const {
        const Operator k = heff * rho;
        out.noalias() = -kI * k;
        out.noalias() += kI * k.adjoint();
        for (const auto& l : jumps_) {
            const Operator lr = l * rho;
            out.noalias() += l * lr.adjoint();
        }
    }

    void rk4_step(const Sparse& heff, Operator& rho, double h) const {
        Operator k1(dim_, dim_), k2(dim_, dim_), k3(dim_, dim_), k4(dim_, dim_);
        rhs(heff, rho, k1);
        rhs(heff, rho + (0.5 * h) * k1, k2);
        rhs(heff, rho + (0.5 * h) * k2, k3);
        rhs(heff, rho + h * k3, k4);
        rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }

private:
    Eigen::Index dim_ = 0;
    Sparse heff_drift_, x_term_, y_term_;
    std::vector<Sparse> jumps_;
};

struct PhysicalityLog {
    double max_trace_drift = 0.0;
    double max_hermiticity = 0.0;
    double min_eigenvalue = 1.0;
};

struct PropagateOptions {
    bool record_trajectory = false;   // reduced qubit state at every grid boundary
    bool check_physicality = false;   // per-step trace/Hermiticity/eigenvalue scan
    double trace_tolerance = 1e-6;
};

struct Propagation {
    Operator final_joint;
    Mat2 final_system;
    std::vector<Mat2> system_trajectory;  // M + 1 states at t = k T / M
    PhysicalityLog log;
};

namespace detail {

inline Mat2 trace_out_aux(const Operator& joint, int aux_dim) {
    Mat2 r = Mat2::Zero();
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int n = 0; n < aux_dim; ++n) r(i, j) += joint(i * aux_dim + n, j * aux_dim + n);
    return r;
}

inline void scan(const Operator& rho, double trace0, PhysicalityLog& log) {
    log.max_trace_drift = std::max(log.max_trace_drift, std::abs(rho.trace() - cplx(trace0)));
    log.max_hermiticity = std::max(log.max_hermiticity, hermiticity_error(rho));
    const Operator h = 0.5 * (rho + rho.adjoint());
    Eigen::SelfAdjointEigenSolver<Operator> es(h, Eigen::EigenvaluesOnly);
    log.min_eigenvalue = std::min(log.min_eigenvalue, es.eigenvalues().minCoeff());
}

}  // namespace detail

/// Propagates a Hermitian joint state through the M control steps.
inline Propagation propagate_joint(const LindbladSolver& solver, const Waveform& w, Operator rho, int substeps,
                                   int aux_dim, const PropagateOptions& opts = {}) {
    if (rho.rows() != solver.dim()) throw InvalidInput("initial state dimension does not match generator");
    if (substeps < 1) throw InvalidInput("substeps must be >= 1");
    Propagation out;
    const double trace0 = rho.trace().real();
    const double h = w.dt() / substeps;
    const bool track_system = opts.record_trajectory && rho.rows() == 2 * aux_dim;
    if (track_system) out.system_trajectory.push_back(detail::trace_out_aux(rho, aux_dim));
    if (opts.check_physicality) detail::scan(rho, trace0, out.log);
    for (int k = 0; k < w.steps(); ++k) {
        const auto heff = solver.effective_hamiltonian(w.value(ControlAxis::x, k), w.value(ControlAxis::y, k));
        for (int s = 0; s < substeps; ++s) solver.rk4_step(heff, rho, h);
        if (track_system) out.system_trajectory.push_back(detail::trace_out_aux(rho, aux_dim));
        if (opts.check_physicality) detail::scan(rho, trace0, out.log);
    }
    const double drift = std::abs(rho.trace() - cplx(trace0));
    if (!std::isfinite(drift) || drift > opts.trace_tolerance) {
        throw NumericalFailure("Lindblad integration lost trace (" + std::to_string(drift) +
                               "); increase substeps (currently " + std::to_string(substeps) + ")");
    }
    out.log.max_trace_drift = std::max(out.log.max_trace_drift, drift);
    if (rho.rows() == 2 * aux_dim) out.final_system = detail::trace_out_aux(rho, aux_dim);
    out.final_joint = std::move(rho);
    return out;
}

// ---------------------------------------------------------------------------
// Prepare-control-measure protocol

enum class PauliState { x_plus, x_minus, y_plus, y_minus, z_plus, z_minus };
inline constexpr std::array<PauliState, 6> kPauliStates{PauliState::x_plus, PauliState::x_minus, PauliState::y_plus,
                                                        PauliState::y_minus, PauliState::z_plus, PauliState::z_minus};
inline constexpr std::array<PauliAxis, 3> kObservables{PauliAxis::x, PauliAxis::y, PauliAxis::z};
inline constexpr int kRecordSize = 18;

inline const char* state_label(PauliState s) {
    static constexpr const char* names[] = {"x+", "x-", "y+", "y-", "z+", "z-"};
    return names[static_cast<int>(s)];
}

/// Bloch vector of a Pauli eigenstate.
inline Eigen::Vector3d pauli_state_bloch(PauliState s) {
    const int i = static_cast<int>(s);
    Eigen::Vector3d r = Eigen::Vector3d::Zero();
    r(i / 2) = (i % 2 == 0) ? 1.0 : -1.0;
    return r;
}

inline Mat2 pauli_state(PauliState s) {
    const Eigen::Vector3d r = pauli_state_bloch(s);
    return 0.5 * (Mat2::Identity() + r.x() * pauli2(PauliAxis::x) + r.y() * pauli2(PauliAxis::y) +
                  r.z() * pauli2(PauliAxis::z));
}

/// Canonical index of (initial state, observable): 3 * state + observable.
inline int record_index(PauliState s, int observable) { return 3 * static_cast<int>(s) + observable; }

struct MeasurementRecord {
    std::array<double, kRecordSize> values{};
    std::optional<int> shots;  // nullopt: exact expectations
};

namespace detail {

inline Operator joint_initial(const Mat2& rho_s, const Operator& rho_aux) { return kron(Operator(rho_s), rho_aux); }

}  // namespace detail

/// Simulator bound to one configuration; caches the sparse generator.
class LabSimulator {
public:
    explicit LabSimulator(LabConfig cfg)
        : cfg_(std::move(cfg)), generator_(build_joint_generator(cfg_)), solver_(generator_),
          aux_state_(thermal_state(cfg_.bath, cfg_.thermal()).op()) {}

    const LabConfig& config() const { return cfg_; }
    const JointGenerator& generator() const { return generator_; }

    int substeps() const { return cfg_.substeps > 0 ? cfg_.substeps : kDefaultSubsteps; }
    void set_substeps(int s) { cfg_.substeps = s; }

    void check_waveform(const Waveform& w) const {
        if (w.steps() != cfg_.steps) throw InvalidInput("waveform length does not match config steps");
        if (std::abs(w.horizon - cfg_.horizon) > 1e-12 * std::max(1.0, cfg_.horizon)) {
            throw InvalidInput("waveform horizon does not match config");
        }
    }

    Propagation propagate(const Waveform& w, const Mat2& rho_s0, const PropagateOptions& opts = {},
                          int substeps_override = 0) const {
        check_waveform(w);
        const int s = substeps_override > 0 ? substeps_override : substeps();
        return propagate_joint(solver_, w, detail::joint_initial(rho_s0, aux_state_), s, cfg_.aux_dim(), opts);
    }

    /// Exact 18 expectations. Only z+, z-, x+, y+ are propagated; x- and y-
    /// follow from rho(x-) = rho(z+) + rho(z-) - rho(x+) by linearity.
    std::array<double, kRecordSize> expectations(const Waveform& w, int substeps_override = 0,
                                                 PhysicalityLog* log = nullptr,
                                                 bool check_physicality = false) const {
        PropagateOptions opts;
        opts.check_physicality = check_physicality;
        std::array<Mat2, 6> finals;
        for (PauliState s : {PauliState::z_plus, PauliState::z_minus, PauliState::x_plus, PauliState::y_plus}) {
            auto p = propagate(w, pauli_state(s), opts, substeps_override);
            if (log) merge(*log, p.log);
            finals[static_cast<int>(s)] = p.final_system;
        }
        const Mat2 id_image = finals[4] + finals[5];
        finals[1] = id_image - finals[0];
        finals[3] = id_image - finals[2];
        std::array<double, kRecordSize> out{};
        for (PauliState s : kPauliStates) {
            const Eigen::Vector3d b = bloch_vector(finals[static_cast<int>(s)]);
            for (int o = 0; o < 3; ++o) out[record_index(s, o)] = b(o);
        }
        return out;
    }

    /// Doubles S from `start` until halving the substep moves no expectation
    /// by more than `tol` on any probe waveform.
    int calibrate_substeps(const std::vector<Waveform>& probes, double tol = 1e-6, int start = 2,
                           int max_substeps = 1024) {
        int s = start;
        auto eval = [&](int sub) {
            std::vector<std::array<double, kRecordSize>> v;
            for (const auto& w : probes) v.push_back(expectations(w, sub));
            return v;
        };
        auto current = eval(s);
        while (s < max_substeps) {
            auto finer = eval(2 * s);
            double diff = 0.0;
            for (std::size_t i = 0; i < probes.size(); ++i)
                for (int j = 0; j < kRecordSize; ++j) diff = std::max(diff, std::abs(finer[i][j] - current[i][j]));
            if (diff <= tol) {
                cfg_.substeps = s;
                return s;
            }
            s *= 2;
            current = std::move(finer);
        }
        throw NumericalFailure("substep calibration did not converge");
    }

    /// Reduced qubit state after tracing out the auxiliary, for every Pauli
    /// initial state, at every grid boundary (zero control when `w` is null).
    std::array<std::vector<Mat2>, 6> trajectories(const Waveform& w) const {
        PropagateOptions opts;
        opts.record_trajectory = true;
        std::array<std::vector<Mat2>, 6> out;
        for (PauliState s : kPauliStates) out[static_cast<int>(s)] = propagate(w, pauli_state(s), opts).system_trajectory;
        return out;
    }

    /// Normalized Choi state: EPR pair on qubit (x) reference, the qubit
    /// evolving with the auxiliary while the reference idles.
    Operator choi(const Waveform& w) const {
        check_waveform(w);
        const int da = cfg_.aux_dim();
        const LindbladSolver extended(generator_, 2);
        // joint ordering: qubit (x) auxiliary (x) reference
        Operator rho0 = Operator::Zero(4 * da, 4 * da);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                Operator qi = Operator::Zero(2, 2), ri = Operator::Zero(2, 2);
                qi(i, j) = 1.0;
                ri(i, j) = 1.0;
                rho0 += 0.5 * kron(kron(qi, aux_state_), ri);
            }
        auto p = propagate_joint(extended, w, rho0, substeps(), /*aux_dim=*/-1);
        const std::array<int, 3> dims{2, da, 2};
        const std::array<bool, 3> keep{true, false, true};
        Operator c = reduce(p.final_joint, dims, keep);
        c /= c.trace();
        return c;
    }

    static void merge(PhysicalityLog& into, const PhysicalityLog& from) {
        into.max_trace_drift = std::max(into.max_trace_drift, from.max_trace_drift);
        into.max_hermiticity = std::max(into.max_hermiticity, from.max_hermiticity);
        into.min_eigenvalue = std::min(into.min_eigenvalue, from.min_eigenvalue);
    }

    static constexpr int kDefaultSubsteps = 8;

private:
    LabConfig cfg_;
    JointGenerator generator_;
    LindbladSolver solver_;
    Operator aux_state_;
};

inline UnitaryOperator control_unitary(const LabConfig& cfg, const Waveform& w) {
    return control_unitary(w, cfg.omega_s, cfg.horizon, cfg.steps);
}

inline Propagation lindblad_propagate(const LabConfig& cfg, const Waveform& w, const DensityMatrix& rho_s0,
                                      const PropagateOptions& opts = {}) {
    if (rho_s0.dim() != 2) throw InvalidInput("initial state must be a qubit state");
    return LabSimulator(cfg).propagate(w, Mat2(rho_s0.op()), opts);
}

/// Replaces each expectation by (2k/N) - 1 with k ~ Binomial(N, (1 + <O>)/2).
template <class Rng>
std::array<double, kRecordSize> sample_shots(const std::array<double, kRecordSize>& exact, int shots, Rng& rng) {
    if (shots < 1) throw InvalidInput("shot count must be positive");
    std::array<double, kRecordSize> out{};
    for (int i = 0; i < kRecordSize; ++i) {
        const double p = std::clamp(0.5 * (1.0 + exact[i]), 0.0, 1.0);
        std::binomial_distribution<int> dist(shots, p);
        out[i] = 2.0 * dist(rng) / shots - 1.0;
    }
    return out;
}

template <class Rng>
MeasurementRecord measure_all(const LabSimulator& sim, const Waveform& w, std::optional<int> shots, Rng& rng) {
    MeasurementRecord r;
    r.shots = shots;
    r.values = sim.expectations(w);
    if (shots) r.values = sample_shots(r.values, *shots, rng);
    return r;
}

template <class Rng>
MeasurementRecord measure_all(const LabConfig& cfg, const Waveform& w, std::optional<int> shots, Rng& rng) {
    return measure_all(LabSimulator(cfg), w, shots, rng);
}

// ---------------------------------------------------------------------------
// Process evaluation

class ChoiMatrix {
public:
    explicit ChoiMatrix(Operator op) : state_(std::move(op)) {
        if (state_.dim() != 4) throw InvalidInput("Choi state must be 4x4");
    }
    const Operator& op() const { return state_.op(); }

    /// Reduced state of the reference half; I/2 for trace-preserving channels.
    Operator reference_marginal() const { return partial_trace(op(), 2, 2, Keep::aux); }

private:
    DensityMatrix state_;
};

inline ChoiMatrix choi_state(const LabConfig& cfg, const Waveform& w) { return ChoiMatrix(LabSimulator(cfg).choi(w)); }

/// (G (x) I)(|00> + |11>)/sqrt(2).
inline Eigen::Vector4cd bell_image(const Mat2& g) {
    Eigen::Vector4cd v = Eigen::Vector4cd::Zero();
    const double s = 1.0 / std::sqrt(2.0);
    for (int i = 0; i < 2; ++i)
        for (int r = 0; r < 2; ++r) v(2 * i + r) = s * g(i, r);
    return v;
}

inline double process_fidelity(const ChoiMatrix& choi, const UnitaryOperator& g) {
    if (g.dim() != 2) throw InvalidInput("target gate must be 2x2");
    const Eigen::Vector4cd phi = bell_image(Mat2(g.op()));
    return (phi.adjoint() * choi.op() * phi)(0, 0).real();
}

/// Choi state of the unitary channel rho -> U rho U^+.
inline Operator unitary_choi(const Mat2& u) {
    const Eigen::Vector4cd phi = bell_image(u);
    return phi * phi.adjoint();
}

inline std::vector<double> purity_trajectory(const LabConfig& cfg, PauliState initial) {
    LabSimulator sim(cfg);
    Waveform zero;
    zero.horizon = cfg.horizon;
    zero.samples = Eigen::MatrixXd::Zero(0, cfg.steps);
    PropagateOptions opts;
    opts.record_trajectory = true;
    const auto p = sim.propagate(zero, pauli_state(initial), opts);
    std::vector<double> out;
    out.reserve(p.system_trajectory.size());
    for (const auto& r : p.system_trajectory) out.push_back((r * r).trace().real());
    return out;
}

inline Waveform zero_waveform(const LabConfig& cfg) {
    Waveform w;
    w.horizon = cfg.horizon;
    w.samples = Eigen::MatrixXd::Zero(0, cfg.steps);
    return w;
}

// ---------------------------------------------------------------------------
// Exports

/// CSV: t, the 18 "<state>_<observable>" expectations, then one purity column
/// per initial state.
inline void write_trajectory_csv(std::ostream& os, const LabSimulator& sim, const Waveform& w) {
    const auto traj = sim.trajectories(w);
    static constexpr const char* obs[] = {"X", "Y", "Z"};
    os << "t";
    for (PauliState s : kPauliStates)
        for (const char* o : obs) os << ',' << state_label(s) << '_' << o;
    for (PauliState s : kPauliStates) os << ",purity_" << state_label(s);
    os << '\n';
    const std::size_t n = traj[0].size();
    os.precision(17);
    for (std::size_t k = 0; k < n; ++k) {
        os << sim.config().horizon * static_cast<double>(k) / static_cast<double>(n - 1);
        for (PauliState s : kPauliStates) {
            const Eigen::Vector3d b = bloch_vector(traj[static_cast<int>(s)][k]);
            for (int o = 0; o < 3; ++o) os << ',' << b(o);
        }
        for (PauliState s : kPauliStates) {
            const Mat2& r = traj[static_cast<int>(s)][k];
            os << ',' << (r * r).trace().real();
        }
        os << '\n';
    }
}

inline nlohmann::ordered_json to_json(const Operator& m) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back({m(i, j).real(), m(i, j).imag()});
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Operator operator_from_json(const nlohmann::ordered_json& j) {
    const auto n = static_cast<Eigen::Index>(j.size());
    Operator m(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (static_cast<Eigen::Index>(j.at(i).size()) != n) throw InvalidInput("operator JSON is not square");
        for (Eigen::Index k = 0; k < n; ++k) m(i, k) = cplx(j.at(i).at(k).at(0).get<double>(), j.at(i).at(k).at(1).get<double>());
    }
    return m;
}

inline nlohmann::ordered_json to_json(const ChoiMatrix& c) { return to_json(c.op()); }

}  // namespace gbx
