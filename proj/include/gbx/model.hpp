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

// Graybox model: a two-layer GRU reads the control waveform, a dense head
// emits the parameters of one noise operator per Pauli observable, and a
// fixed whitebox layer evaluates
//
//   E{O} = tr(V_O U rho0 U^+ O),   V_O = O W_O,
//   W_O  = Q diag(tanh d1, -tanh d2) Q^+,   Q = E_O U3(theta, phi, lambda)
//
// where E_O maps |0> to the +1 eigenvector of O. W_O is Hermitian with
// spectrum in [-1, 1], so every prediction tr(W_O U rho0 U^+) lies in
// [-1, 1]. When d1, d2 -> inf and theta -> 0, W_O -> O and V_O -> I.
//
// Batches are stored column-wise: column t * B + b is example b at step t.

#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gbx/control_unitary.hpp"
#include "gbx/core.hpp"
#include "gbx/pulses.hpp"
#include "json.hpp"

namespace gbx {

inline constexpr int kHeadParams = 6;  // theta, phi, lambda, phase, d1, d2
inline constexpr int kHeadOutputs = 3 * kHeadParams;

// ---------------------------------------------------------------------------
// Recurrent stack

/// One GRU layer, gate order (z, r, n):
///   z = sig(Wz x + Uz h + bz), r = sig(Wr x + Ur h + br)
///   n = tanh(Wn x + Un (r * h) + bn),  h' = (1 - z) h + z n
template <class Scalar>
struct GruLayer {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    Matrix w;  // 3H x in
    Matrix u;  // 3H x H
    Matrix b;  // 3H x 1

    int hidden() const { return static_cast<int>(u.cols()); }
    int inputs() const { return static_cast<int>(w.cols()); }

    static GruLayer zeros(int in, int h) {
        return {Matrix::Zero(3 * h, in), Matrix::Zero(3 * h, h), Matrix::Zero(3 * h, 1)};
    }
};

template <class Scalar>
struct GruLayerCache {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    Matrix hs;  // H x MB, h_t
    Matrix z, r, n, rh;
};

namespace detail {

template <class Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& a) {
    return (1.0 + (-a).exp()).inverse();
}

}  // namespace detail

template <class Scalar>
void gru_forward(const GruLayer<Scalar>& p, const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& x, int steps,
                 int batch, GruLayerCache<Scalar>& c) {
    using Matrix = typename GruLayer<Scalar>::Matrix;
    const int h = p.hidden();
    const Eigen::Index mb = static_cast<Eigen::Index>(steps) * batch;
    Matrix xw = p.w * x;
    xw.colwise() += p.b.col(0);
    c.hs.resize(h, mb);
    c.z.resize(h, mb);
    c.r.resize(h, mb);
    c.n.resize(h, mb);
    c.rh.resize(h, mb);
    Matrix hprev = Matrix::Zero(h, batch);
    Matrix a_zr(2 * h, batch), a_n(h, batch);
    for (int t = 0; t < steps; ++t) {
        const Eigen::Index col = static_cast<Eigen::Index>(t) * batch;
        a_zr.noalias() = p.u.topRows(2 * h) * hprev;
        a_zr += xw.block(0, col, 2 * h, batch);
        auto z = c.z.middleCols(col, batch);
        auto r = c.r.middleCols(col, batch);
        z = detail::sigmoid(a_zr.topRows(h).array()).matrix();
        r = detail::sigmoid(a_zr.bottomRows(h).array()).matrix();
        auto rh = c.rh.middleCols(col, batch);
        rh = r.cwiseProduct(hprev);
        a_n.noalias() = p.u.bottomRows(h) * rh;
        a_n += xw.block(2 * h, col, h, batch);
        auto n = c.n.middleCols(col, batch);
        n = a_n.array().tanh().matrix();
        auto hs = c.hs.middleCols(col, batch);
        hs = hprev + z.cwiseProduct(n - hprev);
        hprev = hs;
    }
}

/// Backpropagates dL/dh_t (all steps) through one layer. Accumulates weight
/// gradients into `grad` when non-null and returns dL/dx when `want_dx`.
template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> gru_backward(
    const GruLayer<Scalar>& p, const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& x,
    const GruLayerCache<Scalar>& c, const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& dhs, int steps,
    int batch, GruLayer<Scalar>* grad, bool want_dx) {
    using Matrix = typename GruLayer<Scalar>::Matrix;
    const int h = p.hidden();
    const Eigen::Index mb = static_cast<Eigen::Index>(steps) * batch;
    Matrix da(3 * h, mb);
    Matrix dh = Matrix::Zero(h, batch);
    const Matrix zeros = Matrix::Zero(h, batch);
    Matrix drh(h, batch);
    for (int t = steps - 1; t >= 0; --t) {
        const Eigen::Index col = static_cast<Eigen::Index>(t) * batch;
        dh += dhs.middleCols(col, batch);
        const auto hprev = t > 0 ? c.hs.middleCols(col - batch, batch) : zeros.middleCols(0, batch);
        const auto z = c.z.middleCols(col, batch).array();
        const auto r = c.r.middleCols(col, batch).array();
        const auto n = c.n.middleCols(col, batch).array();
        auto daz = da.block(0, col, h, batch);
        auto dar = da.block(h, col, h, batch);
        auto dan = da.block(2 * h, col, h, batch);
        dan = (dh.array() * z * (1.0 - n * n)).matrix();
        daz = (dh.array() * (n - hprev.array()) * z * (1.0 - z)).matrix();
        drh.noalias() = p.u.bottomRows(h).transpose() * dan;
        dar = (drh.array() * hprev.array() * r * (1.0 - r)).matrix();
        dh = (dh.array() * (1.0 - z) + drh.array() * r).matrix();
        dh.noalias() += p.u.topRows(2 * h).transpose() * da.block(0, col, 2 * h, batch);
    }
    if (grad) {
        grad->w.noalias() += da * x.transpose();
        grad->b.col(0) += da.rowwise().sum();
        if (steps > 1) {
            const Eigen::Index tail = mb - batch;
            grad->u.topRows(2 * h).noalias() +=
                da.block(0, batch, 2 * h, tail) * c.hs.leftCols(tail).transpose();
        }
        grad->u.bottomRows(h).noalias() += da.bottomRows(h) * c.rh.transpose();
    }
    if (!want_dx) return Matrix();
    return p.w.transpose() * da;
}

// ---------------------------------------------------------------------------
// Model configuration and parameters

struct ModelConfig {
    std::vector<ControlAxis> axes{ControlAxis::x};
    int steps = 128;
    double horizon = 1.0;
    double omega_s = 12.0;
    double input_scale = 1.0 / 25.0;  // waveform samples are multiplied by this
    std::vector<int> hidden{32, 32};

    int inputs() const { return static_cast<int>(axes.size()); }

    void validate() const {
        if (axes.empty()) throw ConfigError("model needs at least one input axis");
        if (steps < 1 || !(horizon > 0.0)) throw ConfigError("model time grid is invalid");
        if (hidden.size() != 2) throw ConfigError("model uses exactly two recurrent layers");
        for (int hsz : hidden)
            if (hsz < 1) throw ConfigError("hidden sizes must be positive");
    }
};

inline nlohmann::ordered_json to_json(const ModelConfig& c) {
    nlohmann::ordered_json j;
    nlohmann::ordered_json axes = nlohmann::ordered_json::array();
    for (auto a : c.axes) axes.push_back(to_string(a));
    j["axes"] = axes;
    j["M"] = c.steps;
    j["T"] = c.horizon;
    j["omega_s"] = c.omega_s;
    j["input_scale"] = c.input_scale;
    j["hidden"] = c.hidden;
    return j;
}

inline ModelConfig model_config_from_json(const nlohmann::ordered_json& j) {
    ModelConfig c;
    c.axes.clear();
    for (const auto& a : j.at("axes")) c.axes.push_back(control_axis_from_string(a.get<std::string>()));
    c.steps = j.at("M").get<int>();
    c.horizon = j.at("T").get<double>();
    c.omega_s = j.at("omega_s").get<double>();
    c.input_scale = j.at("input_scale").get<double>();
    c.hidden = j.at("hidden").get<std::vector<int>>();
    return c;
}

struct Parameters {
    std::vector<GruLayer<double>> gru;
    Eigen::MatrixXd head_w;  // 18 x H
    Eigen::MatrixXd head_b;  // 18 x 1

    static Parameters zeros(const ModelConfig& c) {
        Parameters p;
        p.gru.push_back(GruLayer<double>::zeros(c.inputs(), c.hidden[0]));
        p.gru.push_back(GruLayer<double>::zeros(c.hidden[0], c.hidden[1]));
        p.head_w = Eigen::MatrixXd::Zero(kHeadOutputs, c.hidden[1]);
        p.head_b = Eigen::MatrixXd::Zero(kHeadOutputs, 1);
        return p;
    }

    /// Visits every tensor with a stable name: gru0.W, gru0.U, gru0.b, ...
    template <class F>
    void for_each(F&& f) {
        for (std::size_t l = 0; l < gru.size(); ++l) {
            const std::string pre = "gru" + std::to_string(l) + ".";
            f(pre + "W", gru[l].w);
            f(pre + "U", gru[l].u);
            f(pre + "b", gru[l].b);
        }
        f(std::string("head.W"), head_w);
        f(std::string("head.b"), head_b);
    }
    template <class F>
    void for_each(F&& f) const {
        const_cast<Parameters*>(this)->for_each([&](const std::string& n, Eigen::MatrixXd& m) {
            f(n, static_cast<const Eigen::MatrixXd&>(m));
        });
    }

    /// Pairs tensors of two identically shaped parameter sets.
    template <class F>
    void zip(Parameters& other, F&& f) {
        std::vector<Eigen::MatrixXd*> mine, theirs;
        for_each([&](const std::string&, Eigen::MatrixXd& m) { mine.push_back(&m); });
        other.for_each([&](const std::string&, Eigen::MatrixXd& m) { theirs.push_back(&m); });
        for (std::size_t i = 0; i < mine.size(); ++i) f(*mine[i], *theirs[i]);
    }

    std::size_t size() const {
        std::size_t n = 0;
        for_each([&](const std::string&, const Eigen::MatrixXd& m) { n += static_cast<std::size_t>(m.size()); });
        return n;
    }
};

/// Rotation taking the z axis of the Bloch sphere to the axis of O.
inline Eigen::Matrix3d observable_frame(int o) {
    Eigen::Matrix3d r;
    if (o == 0) r << 0, 0, 1, 0, -1, 0, 1, 0, 0;       // Hadamard
    else if (o == 1) r << 0, 1, 0, 0, 0, 1, 1, 0, 0;   // S H
    else r.setIdentity();
    return r;
}

// ---------------------------------------------------------------------------
// Batches

/// Model inputs for a batch: scaled waveform samples and the Bloch rotation
/// of each example's control unitary.
struct Batch {
    int size = 0;
    int steps = 0;
    Eigen::MatrixXd x;                  // inputs x (steps * size)
    std::vector<Eigen::Matrix3d> rot;   // R(U_ctrl) per example
};

/// Per-example model inputs, reusable across batches.
struct PreparedExample {
    Eigen::MatrixXd x;    // inputs x steps, scaled
    Eigen::Matrix3d rot;
};

inline void check_waveform(const ModelConfig& c, const Waveform& w) {
    if (w.steps() != c.steps) throw InvalidInput("waveform length does not match model steps");
    if (std::abs(w.horizon - c.horizon) > 1e-12 * std::max(1.0, c.horizon)) {
        throw InvalidInput("waveform horizon does not match model");
    }
}

inline PreparedExample prepare(const ModelConfig& c, const Waveform& w) {
    check_waveform(c, w);
    PreparedExample e;
    e.x.resize(c.inputs(), c.steps);
    for (int a = 0; a < c.inputs(); ++a)
        for (int k = 0; k < c.steps; ++k) e.x(a, k) = c.input_scale * w.value(c.axes[a], k);
    e.rot = bloch_rotation(control_unitary_matrix(w, c.omega_s));
    return e;
}

inline Batch make_batch(const std::vector<const PreparedExample*>& items) {
    Batch b;
    b.size = static_cast<int>(items.size());
    if (b.size == 0) throw InvalidInput("empty batch");
    b.steps = static_cast<int>(items[0]->x.cols());
    b.x.resize(items[0]->x.rows(), static_cast<Eigen::Index>(b.steps) * b.size);
    for (int i = 0; i < b.size; ++i) {
        for (int t = 0; t < b.steps; ++t) b.x.col(static_cast<Eigen::Index>(t) * b.size + i) = items[i]->x.col(t);
        b.rot.push_back(items[i]->rot);
    }
    return b;
}

inline Batch make_batch(const ModelConfig& c, const std::vector<Waveform>& ws) {
    std::vector<PreparedExample> prepared;
    prepared.reserve(ws.size());
    for (const auto& w : ws) prepared.push_back(prepare(c, w));
    std::vector<const PreparedExample*> ptrs;
    for (const auto& p : prepared) ptrs.push_back(&p);
    return make_batch(ptrs);
}

/// Decoded head output for one observable of one example.
struct NoiseParams {
    double theta = 0, phi = 0, lambda = 0, phase = 0, d1 = 0, d2 = 0;
    double e1 = 0, e2 = 0;        // eigenvalues of W_O
    Eigen::Vector3d axis;         // Bloch axis of the e1 eigenvector

    double mean() const { return 0.5 * (e1 + e2); }
    double half_gap() const { return 0.5 * (e1 - e2); }
};

inline NoiseParams decode_head(const Eigen::Ref<const Eigen::VectorXd>& raw, int o) {
    NoiseParams p;
    const int base = kHeadParams * o;
    p.theta = raw(base);
    p.phi = raw(base + 1);
    p.lambda = raw(base + 2);
    p.phase = raw(base + 3);
    p.d1 = raw(base + 4);
    p.d2 = raw(base + 5);
    p.e1 = std::tanh(p.d1);
    p.e2 = -std::tanh(p.d2);
    const Eigen::Vector3d n(std::sin(p.theta) * std::cos(p.phi), std::sin(p.theta) * std::sin(p.phi), std::cos(p.theta));
    p.axis = observable_frame(o) * n;
    return p;
}

/// W_O as a 2x2 matrix.
inline Mat2 noise_hermitian(const NoiseParams& p) {
    return p.mean() * Mat2::Identity() +
           p.half_gap() * (p.axis.x() * pauli2(PauliAxis::x) + p.axis.y() * pauli2(PauliAxis::y) +
                           p.axis.z() * pauli2(PauliAxis::z));
}

/// V_O = O W_O.
inline Mat2 noise_operator(const NoiseParams& p, int o) {
    return pauli2(static_cast<PauliAxis>(o)) * noise_hermitian(p);
}

struct ForwardResult {
    int batch = 0;
    std::vector<GruLayerCache<double>> layers;
    Eigen::MatrixXd last_hidden;  // H x B
    Eigen::MatrixXd raw;          // 18 x B head outputs
    Eigen::MatrixXd pred;         // 18 x B, canonical record order

    NoiseParams noise(int b, int o) const { return decode_head(raw.col(b), o); }
};

struct BackwardResult {
    std::optional<Parameters> grad;
    Eigen::MatrixXd dx;                // inputs x (steps * B), dL/d(scaled input)
    std::vector<Eigen::Matrix3d> drot; // dL/dR per example
};

// ---------------------------------------------------------------------------
// Model

class GrayboxModel {
public:
    explicit GrayboxModel(ModelConfig cfg) : cfg_(std::move(cfg)), params_(Parameters::zeros(cfg_)) {
        cfg_.validate();
    }

    template <class Rng>
    static GrayboxModel initialized(ModelConfig cfg, Rng& rng) {
        GrayboxModel m(std::move(cfg));
        m.randomize(rng);
        return m;
    }

    /// Weights uniform in +-1/sqrt(fan_in); recurrent biases zero; the
    /// eigenvalue-logit biases start at +2 so V_O starts near I.
    template <class Rng>
    void randomize(Rng& rng) {
        auto fill = [&](Eigen::MatrixXd& m, int fan_in) {
            std::uniform_real_distribution<double> u(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
        };
        for (auto& l : params_.gru) {
            fill(l.w, l.inputs());
            fill(l.u, l.hidden());
            l.b.setZero();
        }
        fill(params_.head_w, cfg_.hidden[1]);
        params_.head_b.setZero();
        for (int o = 0; o < 3; ++o) {
            params_.head_b(kHeadParams * o + 4, 0) = 2.0;
            params_.head_b(kHeadParams * o + 5, 0) = 2.0;
        }
    }

    /// Closed-system limit: head ignores the recurrent state and emits V_O = I.
    void set_identity_noise(double logit = 20.0) {
        params_.head_w.setZero();
        params_.head_b.setZero();
        for (int o = 0; o < 3; ++o) {
            params_.head_b(kHeadParams * o + 4, 0) = logit;
            params_.head_b(kHeadParams * o + 5, 0) = logit;
        }
    }

    const ModelConfig& config() const { return cfg_; }
    Parameters& params() { return params_; }
    const Parameters& params() const { return params_; }

    ForwardResult forward(const Batch& batch) const {
        if (batch.steps != cfg_.steps) throw InvalidInput("batch steps do not match model");
        if (batch.x.rows() != cfg_.inputs()) throw InvalidInput("batch input width does not match model axes");
        ForwardResult f;
        f.batch = batch.size;
        f.layers.resize(2);
        gru_forward(params_.gru[0], batch.x, batch.steps, batch.size, f.layers[0]);
        gru_forward(params_.gru[1], f.layers[0].hs, batch.steps, batch.size, f.layers[1]);
        f.last_hidden = f.layers[1].hs.rightCols(batch.size);
        f.raw = params_.head_w * f.last_hidden;
        f.raw.colwise() += params_.head_b.col(0);
        f.pred.resize(18, batch.size);
        for (int b = 0; b < batch.size; ++b) {
            const Eigen::Matrix3d& rot = batch.rot[b];
            for (int o = 0; o < 3; ++o) {
                const NoiseParams p = decode_head(f.raw.col(b), o);
                const Eigen::RowVector3d proj = p.axis.transpose() * rot;
                for (int i = 0; i < 3; ++i) {
                    f.pred(3 * (2 * i) + o, b) = p.mean() + p.half_gap() * proj(i);
                    f.pred(3 * (2 * i + 1) + o, b) = p.mean() - p.half_gap() * proj(i);
                }
            }
        }
        return f;
    }

    std::vector<Eigen::Array<double, 18, 1>> predict(const std::vector<Waveform>& ws) const {
        const auto f = forward(make_batch(cfg_, ws));
        std::vector<Eigen::Array<double, 18, 1>> out(ws.size());
        for (std::size_t b = 0; b < ws.size(); ++b) out[b] = f.pred.col(static_cast<Eigen::Index>(b)).array();
        return out;
    }

    /// Reverse pass for an upstream gradient dL/dpred (18 x B).
    BackwardResult backward(const Batch& batch, const ForwardResult& f, const Eigen::MatrixXd& dpred,
                            bool want_weights, bool want_inputs) const {
        const int nb = f.batch;
        BackwardResult out;
        Eigen::MatrixXd draw = Eigen::MatrixXd::Zero(kHeadOutputs, nb);
        if (want_inputs) out.drot.assign(nb, Eigen::Matrix3d::Zero());
        for (int b = 0; b < nb; ++b) {
            const Eigen::Matrix3d& rot = batch.rot[b];
            for (int o = 0; o < 3; ++o) {
                const NoiseParams p = decode_head(f.raw.col(b), o);
                double s = 0.0;
                Eigen::Vector3d v = Eigen::Vector3d::Zero();
                for (int i = 0; i < 3; ++i) {
                    const double gp = dpred(3 * (2 * i) + o, b);
                    const double gm = dpred(3 * (2 * i + 1) + o, b);
                    s += gp + gm;
                    v += (gp - gm) * rot.col(i);
                    if (want_inputs) out.drot[b].col(i) += (gp - gm) * p.half_gap() * p.axis;
                }
                const double dgap = p.axis.dot(v);
                const double de1 = 0.5 * (s + dgap);
                const double de2 = 0.5 * (s - dgap);
                const Eigen::Vector3d dn = observable_frame(o).transpose() * (p.half_gap() * v);
                const double st = std::sin(p.theta), ct = std::cos(p.theta);
                const double sp = std::sin(p.phi), cp = std::cos(p.phi);
                const int base = kHeadParams * o;
                draw(base, b) = dn.dot(Eigen::Vector3d(ct * cp, ct * sp, -st));
                draw(base + 1, b) = dn.dot(Eigen::Vector3d(-st * sp, st * cp, 0.0));
                draw(base + 4, b) = de1 * (1.0 - p.e1 * p.e1);
                draw(base + 5, b) = -de2 * (1.0 - p.e2 * p.e2);
            }
        }
        if (want_weights) {
            out.grad = Parameters::zeros(cfg_);
            out.grad->head_w.noalias() = draw * f.last_hidden.transpose();
            out.grad->head_b = draw.rowwise().sum();
        }
        const int h1 = cfg_.hidden[1];
        const Eigen::Index mb = static_cast<Eigen::Index>(batch.steps) * nb;
        Eigen::MatrixXd dh2 = Eigen::MatrixXd::Zero(h1, mb);
        dh2.rightCols(nb).noalias() = params_.head_w.transpose() * draw;
        GruLayer<double>* g1 = out.grad ? &out.grad->gru[1] : nullptr;
        GruLayer<double>* g0 = out.grad ? &out.grad->gru[0] : nullptr;
        const Eigen::MatrixXd dh1 =
            gru_backward(params_.gru[1], f.layers[0].hs, f.layers[1], dh2, batch.steps, nb, g1, true);
        out.dx = gru_backward(params_.gru[0], batch.x, f.layers[0], dh1, batch.steps, nb, g0, want_inputs);
        return out;
    }

private:
    ModelConfig cfg_;
    Parameters params_;
};

/// Mean over examples and the 18 outputs of the squared error.
inline double mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& labels) {
    if (pred.rows() != labels.rows() || pred.cols() != labels.cols() || pred.size() == 0) {
        throw InvalidInput("prediction and label shapes differ");
    }
    return (pred - labels).squaredNorm() / static_cast<double>(pred.size());
}

inline Eigen::MatrixXd mse_gradient(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& labels) {
    return 2.0 * (pred - labels) / static_cast<double>(pred.size());
}

/// Cotangent C with dL = 2 Re tr(dU C) from dL/dR, R the Bloch rotation of U.
inline Mat2 rotation_cotangent(const Mat2& u, const Eigen::Matrix3d& drot) {
    const std::array<Mat2, 3> sig{pauli2(PauliAxis::x), pauli2(PauliAxis::y), pauli2(PauliAxis::z)};
    const Mat2 ud = u.adjoint();
    Mat2 c = Mat2::Zero();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (drot(i, j) != 0.0) c += (0.5 * drot(i, j)) * (sig[j] * ud * sig[i]);
    return c;
}

/// dL/d(waveform samples) for each example, combining the recurrent path and
/// the control-unitary path. `dpred` is dL/dpred (18 x B).
inline std::vector<Eigen::MatrixXd> input_gradient(const GrayboxModel& model, const std::vector<Waveform>& ws,
                                                   const Batch& batch, const ForwardResult& f,
                                                   const Eigen::MatrixXd& dpred) {
    const auto& cfg = model.config();
    const BackwardResult back = model.backward(batch, f, dpred, false, true);
    std::vector<Eigen::MatrixXd> out;
    out.reserve(ws.size());
    for (int b = 0; b < static_cast<int>(ws.size()); ++b) {
        const Waveform& w = ws[b];
        const Mat2 u = control_unitary_matrix(w, cfg.omega_s);
        Eigen::MatrixXd g = control_unitary_vjp(w, cfg.omega_s, rotation_cotangent(u, back.drot[b]));
        for (int a = 0; a < cfg.inputs(); ++a) {
            const int r = w.row(cfg.axes[a]);
            if (r < 0) continue;
            for (int t = 0; t < cfg.steps; ++t) {
                g(r, t) += cfg.input_scale * back.dx(a, static_cast<Eigen::Index>(t) * batch.size + b);
            }
        }
        out.push_back(std::move(g));
    }
    return out;
}

/// Jacobian of the 18 predictions with respect to the samples of one
/// waveform: entry [i] has the shape of w.samples.
inline std::vector<Eigen::MatrixXd> input_jacobian(const GrayboxModel& model, const Waveform& w) {
    const Batch batch = make_batch(model.config(), {w});
    const ForwardResult f = model.forward(batch);
    std::vector<Eigen::MatrixXd> jac;
    for (int i = 0; i < 18; ++i) {
        Eigen::MatrixXd d = Eigen::MatrixXd::Zero(18, 1);
        d(i, 0) = 1.0;
        jac.push_back(input_gradient(model, {w}, batch, f, d)[0]);
    }
    return jac;
}

// ---------------------------------------------------------------------------
// Optimizer

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam over a fixed list of Eigen tensors.
class Adam {
public:
    explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

    void step(std::vector<Eigen::MatrixXd*> params, const std::vector<const Eigen::MatrixXd*>& grads) {
        if (m_.empty()) {
            for (auto* p : params) {
                m_.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
                v_.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
            }
        }
        ++t_;
        const double c1 = 1.0 - std::pow(opts_.beta1, t_);
        const double c2 = 1.0 - std::pow(opts_.beta2, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * *grads[i];
            v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * grads[i]->cwiseAbs2();
            params[i]->array() -= opts_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + opts_.eps);
        }
    }

    void step(Parameters& p, Parameters& g) {
        std::vector<Eigen::MatrixXd*> ps;
        std::vector<const Eigen::MatrixXd*> gs;
        p.zip(g, [&](Eigen::MatrixXd& a, Eigen::MatrixXd& b) {
            ps.push_back(&a);
            gs.push_back(&b);
        });
        step(ps, gs);
    }

    long iterations() const { return t_; }

private:
    AdamOptions opts_;
    std::vector<Eigen::MatrixXd> m_, v_;
    long t_ = 0;
};

// ---------------------------------------------------------------------------
// Persistence

inline nlohmann::ordered_json tensor_to_json(const Eigen::MatrixXd& m) {
    nlohmann::ordered_json j;
    j["shape"] = {m.rows(), m.cols()};
    std::vector<double> data(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index k = 0; k < m.cols(); ++k) data[static_cast<std::size_t>(i * m.cols() + k)] = m(i, k);
    j["data"] = data;
    return j;
}

inline nlohmann::ordered_json to_json(const GrayboxModel& m, const std::string& data_hash) {
    nlohmann::ordered_json j;
    j["format"] = "gbx-model";
    j["version"] = 1;
    j["config"] = to_json(m.config());
    j["config_hash"] = data_hash;
    nlohmann::ordered_json tensors;
    m.params().for_each([&](const std::string& name, const Eigen::MatrixXd& t) { tensors[name] = tensor_to_json(t); });
    j["tensors"] = tensors;
    return j;
}

struct LoadedModel {
    GrayboxModel model;
    std::string config_hash;
};

inline LoadedModel model_from_json(const nlohmann::ordered_json& j, const ModelConfig* expected = nullptr) {
    if (j.value("format", std::string()) != "gbx-model") throw ParseError("not a graybox model file", 1);
    const ModelConfig file_cfg = model_config_from_json(j.at("config"));
    GrayboxModel m(expected ? *expected : file_cfg);
    const auto& tensors = j.at("tensors");
    m.params().for_each([&](const std::string& name, Eigen::MatrixXd& t) {
        if (!tensors.contains(name)) throw ShapeError(name, "missing from model file");
        const auto& e = tensors.at(name);
        const auto rows = e.at("shape").at(0).get<Eigen::Index>();
        const auto cols = e.at("shape").at(1).get<Eigen::Index>();
        if (rows != t.rows() || cols != t.cols()) {
            throw ShapeError(name, "shape " + std::to_string(rows) + "x" + std::to_string(cols) + ", expected " +
                                       std::to_string(t.rows()) + "x" + std::to_string(t.cols()));
        }
        const auto& data = e.at("data");
        if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw ShapeError(name, "data length mismatch");
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index k = 0; k < cols; ++k) t(i, k) = data.at(static_cast<std::size_t>(i * cols + k)).get<double>();
    });
    return {std::move(m), j.at("config_hash").get<std::string>()};
}

inline void save_model(const GrayboxModel& m, const std::string& data_hash, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << to_json(m, data_hash).dump() << '\n';
}

inline LoadedModel load_model(const std::string& path, const ModelConfig* expected = nullptr) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("malformed model file: ") + e.what(), 1);
    }
    return model_from_json(j, expected);
}

}  // namespace gbx
