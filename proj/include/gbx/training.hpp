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

#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <vector>

#include "gbx/dataset.hpp"
#include "gbx/model.hpp"

namespace gbx {

struct TrainOptions {
    double lr = 1e-3;
    int batch = 128;
    int iterations = 3000;
    int eval_every = 50;
    std::uint64_t seed = 1;
};

struct CurvePoint {
    int iteration = 0;
    double train_mse = 0.0;
    std::optional<double> test_mse;
};

struct TrainResult {
    std::vector<CurvePoint> curve;
    double best_test_mse = std::numeric_limits<double>::infinity();
    int best_iteration = 0;
};

/// Model inputs and labels for a whole dataset.
struct PreparedSet {
    std::vector<PreparedExample> inputs;
    Eigen::MatrixXd labels;  // 18 x n

    std::size_t size() const { return inputs.size(); }
};

inline ModelConfig model_config_for(const DatasetConfig& d, std::vector<int> hidden = {32, 32}) {
    ModelConfig m;
    m.axes = d.pulses.axes;
    m.steps = d.pulses.steps;
    m.horizon = d.pulses.horizon;
    m.omega_s = d.lab.omega_s;
    m.input_scale = 1.0 / d.pulses.amp_max;
    m.hidden = std::move(hidden);
    return m;
}

inline PreparedSet prepare(const ModelConfig& cfg, const Dataset& ds) {
    PreparedSet s;
    s.inputs.reserve(ds.size());
    for (const auto& ex : ds.examples) s.inputs.push_back(prepare(cfg, ex.waveform));
    s.labels = ds.labels();
    return s;
}

inline void check_compatible(const std::string& model_hash, const Dataset& ds) {
    if (model_hash != ds.hash()) {
        throw CompatibilityError("model was trained on configuration " + model_hash + " but dataset has " +
                                 ds.hash());
    }
}

inline Batch batch_of(const PreparedSet& s, const std::vector<std::size_t>& idx) {
    std::vector<const PreparedExample*> ptrs;
    ptrs.reserve(idx.size());
    for (auto i : idx) ptrs.push_back(&s.inputs[i]);
    return make_batch(ptrs);
}

inline Eigen::MatrixXd labels_of(const PreparedSet& s, const std::vector<std::size_t>& idx) {
    Eigen::MatrixXd y(kRecordSize, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) y.col(static_cast<Eigen::Index>(k)) = s.labels.col(static_cast<Eigen::Index>(idx[k]));
    return y;
}

/// Predictions for a whole set, evaluated in chunks.
inline Eigen::MatrixXd predict_all(const GrayboxModel& m, const PreparedSet& s, std::size_t chunk = 256) {
    Eigen::MatrixXd out(kRecordSize, static_cast<Eigen::Index>(s.size()));
    for (std::size_t begin = 0; begin < s.size(); begin += chunk) {
        std::vector<std::size_t> idx;
        for (std::size_t i = begin; i < std::min(s.size(), begin + chunk); ++i) idx.push_back(i);
        const auto f = m.forward(batch_of(s, idx));
        out.middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(idx.size())) = f.pred;
    }
    return out;
}

inline double evaluate_mse(const GrayboxModel& m, const PreparedSet& s) { return mse(predict_all(m, s), s.labels); }

/// Mean Frobenius distance ||V_O - I|| over a set and the three observables.
inline double mean_noise_distance(const GrayboxModel& m, const PreparedSet& s) {
    double total = 0.0;
    for (std::size_t begin = 0; begin < s.size(); begin += 256) {
        std::vector<std::size_t> idx;
        for (std::size_t i = begin; i < std::min(s.size(), begin + 256); ++i) idx.push_back(i);
        const auto f = m.forward(batch_of(s, idx));
        for (int b = 0; b < f.batch; ++b)
            for (int o = 0; o < 3; ++o) total += (noise_operator(f.noise(b, o), o) - Mat2::Identity()).norm();
    }
    return total / (3.0 * static_cast<double>(s.size()));
}

/// Adam on mini-batches drawn from reshuffled epochs. Test MSE is measured
/// every `eval_every` iterations and after the last one; the model is left at
/// the snapshot with the lowest test MSE.
inline TrainResult train(GrayboxModel& model, const PreparedSet& train_set, const PreparedSet& test_set,
                         const TrainOptions& opts) {
    if (train_set.size() == 0) throw InvalidInput("training set is empty");
    if (opts.batch < 1 || opts.iterations < 0 || opts.eval_every < 1) throw ConfigError("invalid training options");
    Adam adam({opts.lr});
    std::mt19937_64 rng(opts.seed);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();
    const std::size_t bsz = std::min<std::size_t>(static_cast<std::size_t>(opts.batch), train_set.size());

    TrainResult res;
    Parameters best = model.params();
    auto evaluate = [&](int it, CurvePoint& pt) {
        if (test_set.size() == 0) return;
        const double t = evaluate_mse(model, test_set);
        pt.test_mse = t;
        if (t < res.best_test_mse) {
            res.best_test_mse = t;
            res.best_iteration = it;
            best = model.params();
        }
    };

    for (int it = 0; it < opts.iterations; ++it) {
        std::vector<std::size_t> idx;
        idx.reserve(bsz);
        while (idx.size() < bsz) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            idx.push_back(order[cursor++]);
        }
        const Batch batch = batch_of(train_set, idx);
        const Eigen::MatrixXd y = labels_of(train_set, idx);
        const ForwardResult f = model.forward(batch);
        CurvePoint pt;
        pt.iteration = it;
        pt.train_mse = mse(f.pred, y);
        if (!std::isfinite(pt.train_mse)) {
            long bad = 0;
            for (int b = 0; b < f.batch; ++b)
                if (!f.pred.col(b).allFinite()) {
                    bad = static_cast<long>(idx[static_cast<std::size_t>(b)]);
                    break;
                }
            throw TrainingError("non-finite training loss", it, bad);
        }
        if (it % opts.eval_every == 0) evaluate(it, pt);
        auto back = model.backward(batch, f, mse_gradient(f.pred, y), true, false);
        adam.step(model.params(), *back.grad);
        res.curve.push_back(pt);
    }
    CurvePoint last;
    last.iteration = opts.iterations;
    {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < std::min<std::size_t>(bsz, train_set.size()); ++i) idx.push_back(i);
        last.train_mse = mse(model.forward(batch_of(train_set, idx)).pred, labels_of(train_set, idx));
    }
    evaluate(opts.iterations, last);
    res.curve.push_back(last);
    if (test_set.size() > 0) model.params() = best;
    return res;
}

inline void write_curve_csv(std::ostream& os, const TrainResult& r) {
    os.precision(17);
    os << "iteration,train_mse,test_mse\n";
    for (const auto& p : r.curve) {
        os << p.iteration << ',' << p.train_mse << ',';
        if (p.test_mse) os << *p.test_mse;
        os << '\n';
    }
}

}  // namespace gbx
