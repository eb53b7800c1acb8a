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

// Gaussian pulse trains f(t) = sum_i A_i exp(-(t - mu_i)^2 / sigma^2).
//
// Non-overlap is enforced with a slot scheme: [0, T] is split into N_p equal
// slots and pulse i lives in slot i shrunk by 3 sigma on each side, so any two
// centers on one axis are at least 6 sigma apart.

#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gbx/errors.hpp"
#include "json.hpp"

namespace gbx {

enum class ControlAxis { x, y };

inline std::string to_string(ControlAxis a) { return a == ControlAxis::x ? "x" : "y"; }

inline ControlAxis control_axis_from_string(const std::string& s) {
    if (s == "x") return ControlAxis::x;
    if (s == "y") return ControlAxis::y;
    throw ConfigError("unknown control axis '" + s + "'");
}

struct PulseConstraints {
    int n_pulses = 5;
    double horizon = 1.0;
    int steps = 128;
    double width = 0.0;  // <= 0 selects T / (12 N_p)
    double amp_max = 25.0;
    std::vector<ControlAxis> axes{ControlAxis::x};

    double sigma() const { return width > 0.0 ? width : horizon / (12.0 * n_pulses); }
    double slot_width() const { return horizon / n_pulses; }
    double slot_mid(int i) const { return (i + 0.5) * slot_width(); }
    double center_halfwidth() const { return 0.5 * slot_width() - 3.0 * sigma(); }
    double center_lo(int i) const { return slot_mid(i) - center_halfwidth(); }
    double center_hi(int i) const { return slot_mid(i) + center_halfwidth(); }
    int n_axes() const { return static_cast<int>(axes.size()); }
    int n_params() const { return n_axes() * n_pulses; }

    void validate() const {
        if (n_pulses < 1) throw ConfigError("need at least one pulse");
        if (steps < 1) throw ConfigError("need at least one time step");
        if (!(horizon > 0.0)) throw ConfigError("horizon must be positive");
        if (!(amp_max > 0.0)) throw ConfigError("amplitude bound must be positive");
        if (axes.empty() || axes.size() > 2) throw ConfigError("axes must be {x}, {y} or {x, y}");
        if (axes.size() == 2 && axes[0] == axes[1]) throw ConfigError("duplicate control axis");
        if (!(n_pulses * 6.0 * sigma() < horizon)) {
            throw ConfigError("infeasible pulse constraints: N_p * 6 sigma >= T");
        }
    }
};

struct Pulse {
    double amplitude = 0.0;
    double center = 0.0;
};

struct AxisTrain {
    ControlAxis axis = ControlAxis::x;
    std::vector<Pulse> pulses;
};

struct PulseSequence {
    double horizon = 1.0;
    int steps = 128;
    double width = 1.0 / 60.0;
    std::vector<AxisTrain> trains;

    const AxisTrain* train(ControlAxis a) const {
        for (const auto& t : trains)
            if (t.axis == a) return &t;
        return nullptr;
    }
};

inline bool operator==(const Pulse& a, const Pulse& b) {
    return a.amplitude == b.amplitude && a.center == b.center;
}
inline bool operator==(const AxisTrain& a, const AxisTrain& b) { return a.axis == b.axis && a.pulses == b.pulses; }
inline bool operator==(const PulseSequence& a, const PulseSequence& b) {
    return a.horizon == b.horizon && a.steps == b.steps && a.width == b.width && a.trains == b.trains;
}

/// Midpoint-sampled control samples, one row per active axis.
struct Waveform {
    double horizon = 1.0;
    std::vector<ControlAxis> axes;
    Eigen::MatrixXd samples;  // n_axes x steps

    int steps() const { return static_cast<int>(samples.cols()); }
    double dt() const { return horizon / steps(); }
    double time(int k) const { return (k + 0.5) * dt(); }

    int row(ControlAxis a) const {
        for (std::size_t i = 0; i < axes.size(); ++i)
            if (axes[i] == a) return static_cast<int>(i);
        return -1;
    }
    double value(ControlAxis a, int k) const {
        const int r = row(a);
        return r < 0 ? 0.0 : samples(r, k);
    }
};

inline double sample_time(double horizon, int steps, int k) { return (k + 0.5) * horizon / steps; }

inline Waveform render(const PulseSequence& seq) {
    Waveform w;
    w.horizon = seq.horizon;
    w.samples = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(seq.trains.size()), seq.steps);
    const double inv_s2 = 1.0 / (seq.width * seq.width);
    for (std::size_t r = 0; r < seq.trains.size(); ++r) {
        w.axes.push_back(seq.trains[r].axis);
        for (int k = 0; k < seq.steps; ++k) {
            const double t = sample_time(seq.horizon, seq.steps, k);
            double f = 0.0;
            for (const auto& p : seq.trains[r].pulses) {
                const double d = t - p.center;
                f += p.amplitude * std::exp(-d * d * inv_s2);
            }
            w.samples(static_cast<Eigen::Index>(r), k) = f;
        }
    }
    return w;
}

/// d f / d A_i and d f / d mu_i sampled on the grid. Row p indexes the flat
/// parameter (axis-major, then pulse); each row only touches `axis_row[p]`.
struct PulseGradient {
    Eigen::MatrixXd d_amplitude;
    Eigen::MatrixXd d_center;
    std::vector<int> axis_row;
};

inline PulseGradient render_gradient(const PulseSequence& seq) {
    std::size_t n = 0;
    for (const auto& t : seq.trains) n += t.pulses.size();
    PulseGradient g;
    g.d_amplitude.resize(static_cast<Eigen::Index>(n), seq.steps);
    g.d_center.resize(static_cast<Eigen::Index>(n), seq.steps);
    const double inv_s2 = 1.0 / (seq.width * seq.width);
    Eigen::Index p = 0;
    for (std::size_t r = 0; r < seq.trains.size(); ++r) {
        for (const auto& pulse : seq.trains[r].pulses) {
            g.axis_row.push_back(static_cast<int>(r));
            for (int k = 0; k < seq.steps; ++k) {
                const double d = sample_time(seq.horizon, seq.steps, k) - pulse.center;
                const double e = std::exp(-d * d * inv_s2);
                g.d_amplitude(p, k) = e;
                g.d_center(p, k) = pulse.amplitude * 2.0 * d * inv_s2 * e;
            }
            ++p;
        }
    }
    return g;
}

/// Throws ConfigError unless every amplitude and center respects the
/// constraints (bound, ordering, slot windows, 6 sigma gap).
inline void check_feasible(const PulseSequence& seq, const PulseConstraints& c, double slack = 1e-12) {
    for (const auto& t : seq.trains) {
        if (static_cast<int>(t.pulses.size()) != c.n_pulses) throw ConfigError("wrong pulse count");
        for (int i = 0; i < c.n_pulses; ++i) {
            const auto& p = t.pulses[i];
            if (std::abs(p.amplitude) > c.amp_max + slack) throw ConfigError("amplitude exceeds bound");
            if (p.center < c.center_lo(i) - slack || p.center > c.center_hi(i) + slack) {
                throw ConfigError("pulse center outside its slot");
            }
            if (i > 0 && p.center - t.pulses[i - 1].center < 6.0 * c.sigma() - slack) {
                throw ConfigError("pulses overlap");
            }
        }
    }
}

inline bool is_feasible(const PulseSequence& seq, const PulseConstraints& c) {
    try {
        check_feasible(seq, c);
        return true;
    } catch (const ConfigError&) {
        return false;
    }
}

inline PulseSequence empty_sequence(const PulseConstraints& c) {
    PulseSequence s;
    s.horizon = c.horizon;
    s.steps = c.steps;
    s.width = c.sigma();
    for (auto a : c.axes) {
        AxisTrain t;
        t.axis = a;
        for (int i = 0; i < c.n_pulses; ++i) t.pulses.push_back({0.0, c.slot_mid(i)});
        s.trains.push_back(std::move(t));
    }
    return s;
}

/// Amplitudes uniform in [-A_max, A_max], centers uniform within their slots.
template <class Rng>
PulseSequence random_sequence(Rng& rng, const PulseConstraints& c) {
    c.validate();
    PulseSequence s = empty_sequence(c);
    std::uniform_real_distribution<double> amp(-c.amp_max, c.amp_max);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (auto& t : s.trains) {
        for (int i = 0; i < c.n_pulses; ++i) {
            t.pulses[i].amplitude = amp(rng);
            t.pulses[i].center = c.center_lo(i) + unit(rng) * (c.center_hi(i) - c.center_lo(i));
        }
    }
    return s;
}

/// Unconstrained optimizer coordinates: A = A_max tanh(u), mu = mid + h tanh(v).
struct RawPulseParams {
    Eigen::VectorXd amp_logits;
    Eigen::VectorXd center_logits;
};

inline PulseSequence project_constraints(const RawPulseParams& raw, const PulseConstraints& c) {
    if (raw.amp_logits.size() != c.n_params() || raw.center_logits.size() != c.n_params()) {
        throw InvalidInput("raw pulse parameter count does not match constraints");
    }
    PulseSequence s = empty_sequence(c);
    Eigen::Index p = 0;
    for (auto& t : s.trains) {
        for (int i = 0; i < c.n_pulses; ++i, ++p) {
            t.pulses[i].amplitude = c.amp_max * std::tanh(raw.amp_logits(p));
            t.pulses[i].center = c.slot_mid(i) + c.center_halfwidth() * std::tanh(raw.center_logits(p));
        }
    }
    return s;
}

/// Inverse of project_constraints; values on the boundary are pulled inside
/// by `edge` (relative) so the logits stay finite.
inline RawPulseParams unproject(const PulseSequence& seq, const PulseConstraints& c, double edge = 1e-9) {
    RawPulseParams raw;
    raw.amp_logits.resize(c.n_params());
    raw.center_logits.resize(c.n_params());
    const double lim = 1.0 - edge;
    Eigen::Index p = 0;
    for (const auto& t : seq.trains) {
        for (int i = 0; i < c.n_pulses; ++i, ++p) {
            const double a = std::clamp(t.pulses[i].amplitude / c.amp_max, -lim, lim);
            const double m = std::clamp((t.pulses[i].center - c.slot_mid(i)) / c.center_halfwidth(), -lim, lim);
            raw.amp_logits(p) = std::atanh(a);
            raw.center_logits(p) = std::atanh(m);
        }
    }
    return raw;
}

using ordered_json = nlohmann::ordered_json;

inline ordered_json to_json(const PulseSequence& s) {
    ordered_json j;
    j["T"] = s.horizon;
    j["M"] = s.steps;
    j["sigma"] = s.width;
    ordered_json axes = ordered_json::object();
    for (const auto& t : s.trains) {
        ordered_json list = ordered_json::array();
        for (const auto& p : t.pulses) list.push_back({p.amplitude, p.center});
        axes[to_string(t.axis)] = std::move(list);
    }
    j["axes"] = std::move(axes);
    return j;
}

inline PulseSequence pulse_sequence_from_json(const ordered_json& j) {
    PulseSequence s;
    s.horizon = j.at("T").get<double>();
    s.steps = j.at("M").get<int>();
    s.width = j.at("sigma").get<double>();
    for (const auto& [key, list] : j.at("axes").items()) {
        AxisTrain t;
        t.axis = control_axis_from_string(key);
        for (const auto& p : list) t.pulses.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        s.trains.push_back(std::move(t));
    }
    return s;
}

inline ordered_json to_json(const PulseConstraints& c) {
    ordered_json j;
    j["n_pulses"] = c.n_pulses;
    j["T"] = c.horizon;
    j["M"] = c.steps;
    j["sigma"] = c.sigma();
    j["amp_max"] = c.amp_max;
    ordered_json axes = ordered_json::array();
    for (auto a : c.axes) axes.push_back(to_string(a));
    j["axes"] = axes;
    return j;
}

inline PulseConstraints pulse_constraints_from_json(const ordered_json& j) {
    PulseConstraints c;
    c.n_pulses = j.value("n_pulses", c.n_pulses);
    c.horizon = j.value("T", c.horizon);
    c.steps = j.value("M", c.steps);
    c.width = j.value("sigma", 0.0);
    c.amp_max = j.value("amp_max", c.amp_max);
    if (j.contains("axes")) {
        c.axes.clear();
        for (const auto& a : j.at("axes")) c.axes.push_back(control_axis_from_string(a.get<std::string>()));
    }
    return c;
}

}  // namespace gbx
