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

// Gate synthesis against a trained graybox model. The cost
//
//   J = sum over (rho0, O) of (tr(G rho0 G^+ O) - E{O})^2
//
// is minimized by Adam on tanh-reparameterized pulse parameters (gradient
// route) or by a real-valued genetic algorithm (global route).

#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "gbx/model.hpp"
#include "gbx/pulses.hpp"
#include "gbx/simulator.hpp"

namespace gbx {

struct GateTarget {
    std::string name;
    Mat2 matrix;
};

inline const std::vector<std::string>& gate_names() {
    static const std::vector<std::string> names{"I", "X", "Y", "Z", "H", "RX_PI4"};
    return names;
}

inline GateTarget gate_target(const std::string& name) {
    if (name == "I") return {name, Mat2::Identity()};
    if (name == "X") return {name, pauli2(PauliAxis::x)};
    if (name == "Y") return {name, pauli2(PauliAxis::y)};
    if (name == "Z") return {name, pauli2(PauliAxis::z)};
    if (name == "H") return {name, (pauli2(PauliAxis::x) + pauli2(PauliAxis::z)) / std::sqrt(2.0)};
    if (name == "RX_PI4") return {name, su2_exp(Eigen::Vector3d(std::numbers::pi / 8.0, 0.0, 0.0), 1.0)};
    throw UsageError("unknown gate '" + name + "' (expected I, X, Y, Z, H or RX_PI4)");
}

/// tr(G rho0 G^+ O) for the 18 (state, observable) pairs.
inline Eigen::Matrix<double, 18, 1> target_record(const Mat2& g) {
    const Eigen::Matrix3d r = bloch_rotation(g);
    Eigen::Matrix<double, 18, 1> t;
    for (int i = 0; i < 3; ++i)
        for (int o = 0; o < 3; ++o) {
            t(3 * (2 * i) + o) = r(o, i);
            t(3 * (2 * i + 1) + o) = -r(o, i);
        }
    return t;
}

inline double cost_from_prediction(const Eigen::Ref<const Eigen::VectorXd>& pred, const Mat2& g) {
    return (target_record(g) - pred).squaredNorm();
}

inline double cost_J(const GrayboxModel& model, const PulseSequence& pulse, const Mat2& g) {
    const auto f = model.forward(make_batch(model.config(), {render(pulse)}));
    return cost_from_prediction(f.pred.col(0), g);
}

struct ControlResult {
    std::string gate;
    std::string optimizer;
    PulseSequence pulse;
    double cost = 0.0;
    Eigen::Matrix<double, 18, 1> predicted = Eigen::Matrix<double, 18, 1>::Zero();
    std::vector<double> trace;  // best J per iteration or generation
    int winner = 0;             // restart or individual index
    std::optional<Operator> choi;
    std::optional<double> fidelity;
};

// ---------------------------------------------------------------------------
// Gradient route

struct GdOptions {
    double lr = 0.05;
    int iterations = 400;
    int restarts = 10;
    std::uint64_t seed = 1;
    bool optimize_centers = true;
};

namespace detail {

/// Costs and predictions of a population of sequences.
struct Evaluation {
    std::vector<Waveform> waveforms;
    Batch batch;
    ForwardResult forward;
    std::vector<double> cost;
};

inline Evaluation evaluate_population(const GrayboxModel& model, const std::vector<PulseSequence>& seqs,
                                      const Eigen::Matrix<double, 18, 1>& target) {
    Evaluation e;
    for (const auto& s : seqs) e.waveforms.push_back(render(s));
    e.batch = make_batch(model.config(), e.waveforms);
    e.forward = model.forward(e.batch);
    for (int b = 0; b < e.forward.batch; ++b) e.cost.push_back((target - e.forward.pred.col(b)).squaredNorm());
    return e;
}

/// Lowest cost, ties to the lowest index; non-finite costs never win.
inline int argmin_cost(const std::vector<double>& c) {
    int best = -1;
    for (int i = 0; i < static_cast<int>(c.size()); ++i)
        if (std::isfinite(c[i]) && (best < 0 || c[i] < c[best])) best = i;
    return best;
}

}  // namespace detail

/// Multi-restart Adam. Restarts start from random feasible sequences and are
/// advanced together as one model batch.
inline ControlResult optimize_gd(const GrayboxModel& model, const GateTarget& gate, const PulseConstraints& c,
                                 const GdOptions& opts = {}) {
    c.validate();
    if (opts.restarts < 1 || opts.iterations < 0) throw ConfigError("invalid gradient-descent options");
    if (c.steps != model.config().steps) throw ConfigError("pulse grid and model grid differ");
    const int np = c.n_params();
    const int nr = opts.restarts;
    const auto target = target_record(gate.matrix);

    std::mt19937_64 rng(opts.seed);
    Eigen::MatrixXd u(np, nr), v(np, nr);
    for (int r = 0; r < nr; ++r) {
        const RawPulseParams raw = unproject(random_sequence(rng, c), c, 1e-6);
        u.col(r) = raw.amp_logits;
        v.col(r) = opts.optimize_centers ? raw.center_logits : Eigen::VectorXd::Zero(np);
    }

    auto sequences = [&]() {
        std::vector<PulseSequence> seqs;
        for (int r = 0; r < nr; ++r) seqs.push_back(project_constraints({u.col(r), v.col(r)}, c));
        return seqs;
    };

    std::vector<double> best_cost(nr, std::numeric_limits<double>::infinity());
    std::vector<PulseSequence> best_seq(nr);
    std::vector<Eigen::Matrix<double, 18, 1>> best_pred(nr);
    std::vector<double> trace;
    Adam adam({opts.lr});

    for (int it = 0;; ++it) {
        const auto seqs = sequences();
        auto ev = detail::evaluate_population(model, seqs, target);
        for (int r = 0; r < nr; ++r) {
            if (std::isfinite(ev.cost[r]) && ev.cost[r] < best_cost[r]) {
                best_cost[r] = ev.cost[r];
                best_seq[r] = seqs[r];
                best_pred[r] = ev.forward.pred.col(r);
            }
        }
        const int lead = detail::argmin_cost(best_cost);
        trace.push_back(lead < 0 ? std::numeric_limits<double>::quiet_NaN() : best_cost[lead]);
        if (it == opts.iterations) break;

        Eigen::MatrixXd dpred(18, nr);
        for (int r = 0; r < nr; ++r) {
            dpred.col(r) = std::isfinite(ev.cost[r]) ? Eigen::VectorXd(-2.0 * (target - ev.forward.pred.col(r)))
                                                     : Eigen::VectorXd::Zero(18);
        }
        const auto gw = input_gradient(model, ev.waveforms, ev.batch, ev.forward, dpred);
        Eigen::MatrixXd gu = Eigen::MatrixXd::Zero(np, nr), gv = Eigen::MatrixXd::Zero(np, nr);
        for (int r = 0; r < nr; ++r) {
            if (!std::isfinite(ev.cost[r]) || !gw[r].allFinite()) continue;
            const PulseGradient pg = render_gradient(seqs[r]);
            for (int p = 0; p < np; ++p) {
                const auto row = gw[r].row(pg.axis_row[p]);
                const double ta = std::tanh(u(p, r)), tv = std::tanh(v(p, r));
                gu(p, r) = row.dot(pg.d_amplitude.row(p)) * c.amp_max * (1.0 - ta * ta);
                if (opts.optimize_centers) gv(p, r) = row.dot(pg.d_center.row(p)) * c.center_halfwidth() * (1.0 - tv * tv);
            }
        }
        adam.step({&u, &v}, {&gu, &gv});
    }

    const int win = detail::argmin_cost(best_cost);
    if (win < 0) throw NumericalFailure("every gradient-descent restart produced a non-finite cost");
    ControlResult res;
    res.gate = gate.name;
    res.optimizer = "gd";
    res.pulse = best_seq[win];
    res.cost = best_cost[win];
    res.predicted = best_pred[win];
    res.trace = std::move(trace);
    res.winner = win;
    return res;
}

// ---------------------------------------------------------------------------
// Genetic route

struct GaOptions {
    int population = 50;
    int generations = 200;
    int tournament = 3;
    int elitism = 2;
    double mutation_scale = 0.05;  // Gaussian sigma as a fraction of each gene's range
    double mutation_decay = 0.99;  // per generation
    double mutation_rate = 0.2;    // probability that a gene mutates
    std::uint64_t seed = 1;
    std::vector<PulseSequence> initial;  // optional seed population
};

namespace detail {

/// Genome: amplitudes then centers, axis-major.
struct GenomeSpace {
    Eigen::VectorXd lo, hi;

    explicit GenomeSpace(const PulseConstraints& c) {
        const int np = c.n_params();
        lo.resize(2 * np);
        hi.resize(2 * np);
        for (int p = 0; p < np; ++p) {
            const int i = p % c.n_pulses;
            lo(p) = -c.amp_max;
            hi(p) = c.amp_max;
            lo(np + p) = c.center_lo(i);
            hi(np + p) = c.center_hi(i);
        }
    }

    static Eigen::VectorXd encode(const PulseSequence& s) {
        std::vector<double> a, m;
        for (const auto& t : s.trains)
            for (const auto& p : t.pulses) {
                a.push_back(p.amplitude);
                m.push_back(p.center);
            }
        Eigen::VectorXd g(2 * a.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            g(static_cast<Eigen::Index>(i)) = a[i];
            g(static_cast<Eigen::Index>(a.size() + i)) = m[i];
        }
        return g;
    }

    static PulseSequence decode(const Eigen::VectorXd& g, const PulseConstraints& c) {
        PulseSequence s = empty_sequence(c);
        const int np = c.n_params();
        int p = 0;
        for (auto& t : s.trains)
            for (auto& pulse : t.pulses) {
                pulse.amplitude = g(p);
                pulse.center = g(np + p);
                ++p;
            }
        return s;
    }
};

}  // namespace detail

inline ControlResult optimize_ga(const GrayboxModel& model, const GateTarget& gate, const PulseConstraints& c,
                                 const GaOptions& opts = {}) {
    c.validate();
    if (opts.population < 2 || opts.generations < 0 || opts.tournament < 1 || opts.elitism < 0 ||
        opts.elitism > opts.population) {
        throw ConfigError("invalid genetic-algorithm options");
    }
    if (c.steps != model.config().steps) throw ConfigError("pulse grid and model grid differ");
    const auto target = target_record(gate.matrix);
    const detail::GenomeSpace space(c);
    const Eigen::Index ng = space.lo.size();
    std::mt19937_64 rng(opts.seed);

    std::vector<Eigen::VectorXd> pop;
    for (const auto& s : opts.initial) {
        check_feasible(s, c);
        if (static_cast<int>(pop.size()) < opts.population) pop.push_back(detail::GenomeSpace::encode(s));
    }
    while (static_cast<int>(pop.size()) < opts.population) pop.push_back(detail::GenomeSpace::encode(random_sequence(rng, c)));

    auto score = [&](const std::vector<Eigen::VectorXd>& genomes, std::vector<Eigen::Matrix<double, 18, 1>>& preds) {
        std::vector<PulseSequence> seqs;
        for (const auto& g : genomes) seqs.push_back(detail::GenomeSpace::decode(g, c));
        auto ev = detail::evaluate_population(model, seqs, target);
        preds.resize(genomes.size());
        for (std::size_t i = 0; i < genomes.size(); ++i) preds[i] = ev.forward.pred.col(static_cast<Eigen::Index>(i));
        for (auto& j : ev.cost)
            if (!std::isfinite(j)) j = std::numeric_limits<double>::infinity();
        return ev.cost;
    };

    std::vector<Eigen::Matrix<double, 18, 1>> preds;
    std::vector<double> cost = score(pop, preds);
    std::vector<double> trace;
    std::uniform_int_distribution<int> pick(0, opts.population - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    double sigma = opts.mutation_scale;

    auto ranked = [&]() {
        std::vector<int> order(pop.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return cost[a] < cost[b]; });
        return order;
    };

    for (int gen = 0;; ++gen) {
        const auto order = ranked();
        trace.push_back(cost[order[0]]);
        if (gen == opts.generations) break;

        auto select = [&]() {
            int best = pick(rng);
            for (int k = 1; k < opts.tournament; ++k) {
                const int cand = pick(rng);
                if (cost[cand] < cost[best] || (cost[cand] == cost[best] && cand < best)) best = cand;
            }
            return best;
        };

        std::vector<Eigen::VectorXd> next;
        std::vector<double> next_cost;
        std::vector<Eigen::Matrix<double, 18, 1>> next_pred;
        for (int e = 0; e < opts.elitism; ++e) {
            next.push_back(pop[order[e]]);
            next_cost.push_back(cost[order[e]]);
            next_pred.push_back(preds[order[e]]);
        }
        std::vector<Eigen::VectorXd> children;
        while (static_cast<int>(next.size() + children.size()) < opts.population) {
            const Eigen::VectorXd& a = pop[select()];
            const Eigen::VectorXd& b = pop[select()];
            Eigen::VectorXd child(ng);
            for (Eigen::Index k = 0; k < ng; ++k) {
                child(k) = unit(rng) < 0.5 ? a(k) : b(k);
                if (unit(rng) < opts.mutation_rate) {
                    child(k) += sigma * (space.hi(k) - space.lo(k)) * normal(rng);
                    child(k) = std::clamp(child(k), space.lo(k), space.hi(k));
                }
            }
            children.push_back(std::move(child));
        }
        if (!children.empty()) {
            std::vector<Eigen::Matrix<double, 18, 1>> child_pred;
            const auto child_cost = score(children, child_pred);
            for (std::size_t i = 0; i < children.size(); ++i) {
                next.push_back(std::move(children[i]));
                next_cost.push_back(child_cost[i]);
                next_pred.push_back(child_pred[i]);
            }
        }
        pop = std::move(next);
        cost = std::move(next_cost);
        preds = std::move(next_pred);
        sigma *= opts.mutation_decay;
    }

    const int win = ranked()[0];
    if (!std::isfinite(cost[win])) throw NumericalFailure("genetic algorithm found no finite cost");
    ControlResult res;
    res.gate = gate.name;
    res.optimizer = "ga";
    res.pulse = detail::GenomeSpace::decode(pop[win], c);
    res.cost = cost[win];
    res.predicted = preds[win];
    res.trace = std::move(trace);
    res.winner = win;
    return res;
}

// ---------------------------------------------------------------------------
// Ground-truth evaluation and export

struct LabScore {
    ChoiMatrix choi;
    double fidelity;
};

inline LabScore evaluate_on_lab(const LabSimulator& sim, const PulseSequence& pulse, const PulseConstraints& c,
                                const Mat2& g) {
    check_feasible(pulse, c);
    ChoiMatrix choi(sim.choi(render(pulse)));
    const double f = process_fidelity(choi, UnitaryOperator(Operator(g)));
    return {std::move(choi), f};
}

inline void attach_lab_score(ControlResult& r, const LabSimulator& sim, const PulseConstraints& c) {
    const auto score = evaluate_on_lab(sim, r.pulse, c, gate_target(r.gate).matrix);
    r.choi = score.choi.op();
    r.fidelity = score.fidelity;
}

inline nlohmann::ordered_json to_json(const ControlResult& r) {
    nlohmann::ordered_json j;
    j["gate"] = r.gate;
    j["optimizer"] = r.optimizer;
    j["pulse"] = to_json(r.pulse);
    j["cost"] = r.cost;
    j["predicted"] = std::vector<double>(r.predicted.data(), r.predicted.data() + 18);
    j["winner"] = r.winner;
    j["trace"] = r.trace;
    j["choi"] = r.choi ? to_json(*r.choi) : nlohmann::ordered_json(nullptr);
    j["fidelity"] = r.fidelity ? nlohmann::ordered_json(*r.fidelity) : nlohmann::ordered_json(nullptr);
    return j;
}

inline ControlResult control_result_from_json(const nlohmann::ordered_json& j) {
    ControlResult r;
    r.gate = j.at("gate").get<std::string>();
    r.optimizer = j.at("optimizer").get<std::string>();
    r.pulse = pulse_sequence_from_json(j.at("pulse"));
    r.cost = j.at("cost").get<double>();
    const auto p = j.at("predicted").get<std::vector<double>>();
    if (p.size() != 18) throw ParseError("predicted record must have 18 values", 1);
    for (int i = 0; i < 18; ++i) r.predicted(i) = p[static_cast<std::size_t>(i)];
    r.winner = j.value("winner", 0);
    r.trace = j.at("trace").get<std::vector<double>>();
    if (!j.at("choi").is_null()) r.choi = operator_from_json(j.at("choi"));
    if (!j.at("fidelity").is_null()) r.fidelity = j.at("fidelity").get<double>();
    return r;
}

inline std::string shots_label(const std::optional<int>& shots) { return shots ? std::to_string(*shots) : "inf"; }

inline void write_fidelity_csv(std::ostream& os, const std::vector<ControlResult>& results,
                               const std::optional<int>& shots) {
    os.precision(17);
    os << "gate,optimizer,shots,fidelity\n";
    for (const auto& r : results) {
        os << r.gate << ',' << r.optimizer << ',' << shots_label(shots) << ',';
        if (r.fidelity) os << *r.fidelity;
        os << '\n';
    }
}

}  // namespace gbx
