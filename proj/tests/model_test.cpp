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


#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "gbx/training.hpp"

namespace gbx {
namespace {

PulseConstraints small_grid(int steps = 16) {
    PulseConstraints c;
    c.axes = {ControlAxis::x, ControlAxis::y};
    c.steps = steps;
    return c;
}

ModelConfig small_model(int steps = 16) {
    ModelConfig m;
    m.axes = {ControlAxis::x, ControlAxis::y};
    m.steps = steps;
    m.hidden = {8, 8};
    return m;
}

std::vector<Waveform> random_waveforms(int n, const PulseConstraints& c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Waveform> ws;
    for (int i = 0; i < n; ++i) ws.push_back(render(random_sequence(rng, c)));
    return ws;
}

// Scalar probe L = <g, pred> for a fixed cotangent g.
double probe(const GrayboxModel& m, const std::vector<Waveform>& ws, const Eigen::MatrixXd& g) {
    return m.forward(make_batch(m.config(), ws)).pred.cwiseProduct(g).sum();
}

bool close(double analytic, double numeric) {
    return std::abs(analytic - numeric) <= std::max(1e-4, 1e-3 * std::abs(numeric));
}

TEST(Model, IdentityNoiseGivesClosedSystemRecord) {
    std::mt19937_64 rng(1);
    auto m = GrayboxModel::initialized(small_model(128), rng);
    m.set_identity_noise();
    auto ws = random_waveforms(4, small_grid(128), 2);
    ws.push_back(render(empty_sequence(small_grid(128))));
    const auto pred = m.predict(ws);
    for (std::size_t b = 0; b < ws.size(); ++b) {
        const Mat2 u = control_unitary_matrix(ws[b], 12.0);
        for (auto s : kPauliStates) {
            const Mat2 rho = u * pauli_state(s) * u.adjoint();
            for (int o = 0; o < 3; ++o) {
                EXPECT_NEAR(pred[b](record_index(s, o)), (pauli2(kObservables[o]) * rho).trace().real(), 1e-12);
            }
        }
    }
    // Free precession: x+ measured along X gives cos(omega_s T).
    EXPECT_NEAR(pred.back()(record_index(PauliState::x_plus, 0)), std::cos(12.0), 1e-12);
    const auto f = m.forward(make_batch(m.config(), ws));
    for (int o = 0; o < 3; ++o) {
        EXPECT_LT((noise_operator(f.noise(0, o), o) - Mat2::Identity()).norm(), 1e-12);
    }
}

TEST(Model, PredictionsStayInRange) {
    std::mt19937_64 rng(3);
    auto ws = random_waveforms(16, small_grid(), 4);
    for (int rep = 0; rep < 20; ++rep) {
        auto m = GrayboxModel::initialized(small_model(), rng);
        m.params().for_each([&](const std::string&, Eigen::MatrixXd& t) { t *= 1.0 + rep; });
        const auto f = m.forward(make_batch(m.config(), ws));
        EXPECT_TRUE(f.pred.allFinite());
        EXPECT_LE(f.pred.cwiseAbs().maxCoeff(), 1.0 + 1e-12);
    }
}

TEST(Model, NoiseOperatorSharedAcrossStates) {
    std::mt19937_64 rng(5);
    auto m = GrayboxModel::initialized(small_model(), rng);
    const auto ws = random_waveforms(3, small_grid(), 6);
    const auto f = m.forward(make_batch(m.config(), ws));
    for (int b = 0; b < 3; ++b) {
        for (int o = 0; o < 3; ++o) {
            const auto p = f.noise(b, o);
            const Mat2 w = noise_hermitian(p);
            EXPECT_LT((w - w.adjoint()).norm(), 1e-14);
            // One V_O serves all six states: each +/- pair averages to tr(W_O)/2.
            for (int i = 0; i < 3; ++i) {
                const double avg = 0.5 * (f.pred(3 * (2 * i) + o, b) + f.pred(3 * (2 * i + 1) + o, b));
                EXPECT_NEAR(avg, 0.5 * w.trace().real(), 1e-14);
            }
            // The record entry equals tr(V_O U rho U^dagger O) computed directly.
            const Mat2 u = control_unitary_matrix(ws[b], 12.0);
            const Mat2 v = noise_operator(p, o);
            for (auto s : kPauliStates) {
                const cplx e = (v * u * pauli_state(s) * u.adjoint() * pauli2(kObservables[o])).trace();
                EXPECT_NEAR(f.pred(record_index(s, o), b), e.real(), 1e-12);
                EXPECT_NEAR(e.imag(), 0.0, 1e-12);
            }
        }
    }
}

TEST(Loss, MatchesNaiveSum) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1, 1);
    Eigen::MatrixXd a(18, 5), b(18, 5);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        a(i) = u(rng);
        b(i) = u(rng);
    }
    double s = 0.0;
    for (int j = 0; j < 5; ++j)
        for (int i = 0; i < 18; ++i) s += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
    EXPECT_NEAR(mse(a, b), s / 90.0, 1e-15);
    EXPECT_EQ(mse(a, a), 0.0);
    EXPECT_EQ(mse_gradient(a, a).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_THROW(mse(a, b.leftCols(4)), InvalidInput);
}

TEST(Gradient, ZeroLossGivesZeroWeightGradient) {
    std::mt19937_64 rng(8);
    auto m = GrayboxModel::initialized(small_model(), rng);
    const auto ws = random_waveforms(2, small_grid(), 9);
    const auto batch = make_batch(m.config(), ws);
    const auto f = m.forward(batch);
    const auto back = m.backward(batch, f, mse_gradient(f.pred, f.pred), true, false);
    back.grad->for_each([](const std::string& name, const Eigen::MatrixXd& g) {
        EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0) << name;
    });
}

TEST(Gradient, WeightsMatchFiniteDifferences) {
    std::mt19937_64 rng(10);
    auto m = GrayboxModel::initialized(small_model(), rng);
    const auto ws = random_waveforms(2, small_grid(), 11);
    Eigen::MatrixXd g(18, 2);
    std::normal_distribution<double> n(0, 1);
    for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = n(rng);

    const auto batch = make_batch(m.config(), ws);
    const auto back = m.backward(batch, m.forward(batch), g, true, false);
    std::vector<const Eigen::MatrixXd*> analytic;
    back.grad->for_each([&](const std::string&, const Eigen::MatrixXd& t) { analytic.push_back(&t); });

    const double h = 1e-6;
    std::size_t k = 0;
    int checked = 0;
    m.params().for_each([&](const std::string& name, Eigen::MatrixXd& t) {
        const Eigen::MatrixXd& a = *analytic[k++];
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            const double keep = t(i);
            t(i) = keep + h;
            const double lp = probe(m, ws, g);
            t(i) = keep - h;
            const double lm = probe(m, ws, g);
            t(i) = keep;
            const double fd = (lp - lm) / (2 * h);
            EXPECT_PRED2(close, a(i), fd) << name << "[" << i << "]";
            ++checked;
        }
    });
    EXPECT_EQ(static_cast<std::size_t>(checked), m.params().size());
}

TEST(Gradient, WaveformSamplesMatchFiniteDifferences) {
    std::mt19937_64 rng(12);
    auto m = GrayboxModel::initialized(small_model(), rng);
    auto ws = random_waveforms(2, small_grid(), 13);
    Eigen::MatrixXd g(18, 2);
    std::normal_distribution<double> n(0, 1);
    for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = n(rng);

    const auto batch = make_batch(m.config(), ws);
    const auto grads = input_gradient(m, ws, batch, m.forward(batch), g);
    const double h = 1e-6;
    for (std::size_t b = 0; b < ws.size(); ++b) {
        ASSERT_EQ(grads[b].rows(), ws[b].samples.rows());
        for (Eigen::Index r = 0; r < ws[b].samples.rows(); ++r) {
            for (Eigen::Index t = 0; t < ws[b].samples.cols(); ++t) {
                const double keep = ws[b].samples(r, t);
                ws[b].samples(r, t) = keep + h;
                const double lp = probe(m, ws, g);
                ws[b].samples(r, t) = keep - h;
                const double lm = probe(m, ws, g);
                ws[b].samples(r, t) = keep;
                EXPECT_PRED2(close, grads[b](r, t), (lp - lm) / (2 * h)) << "example " << b << " sample " << r << "," << t;
            }
        }
    }
}

TEST(Gradient, JacobianRowsMatchSingleOutputProbes) {
    std::mt19937_64 rng(14);
    auto m = GrayboxModel::initialized(small_model(), rng);
    auto w = random_waveforms(1, small_grid(), 15)[0];
    const auto jac = input_jacobian(m, w);
    ASSERT_EQ(jac.size(), 18u);
    const double h = 1e-6;
    for (int i : {0, 7, 17}) {
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(18, 1);
        g(i, 0) = 1.0;
        for (Eigen::Index t = 0; t < 16; t += 5) {
            const double keep = w.samples(1, t);
            w.samples(1, t) = keep + h;
            const double lp = probe(m, {w}, g);
            w.samples(1, t) = keep - h;
            const double lm = probe(m, {w}, g);
            w.samples(1, t) = keep;
            EXPECT_PRED2(close, jac[i](1, t), (lp - lm) / (2 * h));
        }
    }
}

TEST(Gradient, RotationCotangentMatchesFiniteDifferences) {
    std::mt19937_64 rng(16);
    std::normal_distribution<double> n(0, 1);
    const Mat2 u = su2_exp({n(rng), n(rng), n(rng)}, 1.0);
    Eigen::Matrix3d g;
    for (int i = 0; i < 9; ++i) g(i) = n(rng);
    const Mat2 c = rotation_cotangent(u, g);
    // dL = 2 Re tr(dU C) along dU = -i h a.sigma U.
    for (int rep = 0; rep < 5; ++rep) {
        const Eigen::Vector3d a(n(rng), n(rng), n(rng));
        const double h = 1e-6;
        const Mat2 up = su2_exp(a, h) * u, um = su2_exp(a, -h) * u;
        const double fd = ((bloch_rotation(up) - bloch_rotation(um)).cwiseProduct(g).sum()) / (2 * h);
        const Mat2 du = -kI * (a.x() * pauli2(PauliAxis::x) + a.y() * pauli2(PauliAxis::y) + a.z() * pauli2(PauliAxis::z)) * u;
        EXPECT_NEAR(2.0 * (du * c).trace().real(), fd, 1e-7);
    }
}

TEST(Adam, FirstStepMovesByLearningRate) {
    Eigen::MatrixXd p(1, 2), g(1, 2);
    p << 1.0, -2.0;
    g << 0.3, -4.0;
    Adam adam({0.01});
    adam.step({&p}, {&g});
    EXPECT_NEAR(p(0), 1.0 - 0.01, 1e-9);
    EXPECT_NEAR(p(1), -2.0 + 0.01, 1e-9);
}

class TrainingFixture : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        DatasetConfig c;
        c.lab = LabConfig::fermionic_default();
        c.lab.coupling = 0.0;
        c.lab.steps = 16;
        c.pulses = small_grid();
        cfg_ = c;
        train_ = generate(c, 48, 1, Split::train);
        test_ = generate(c, 16, 1, Split::test);
    }
    static inline DatasetConfig cfg_;
    static inline Dataset train_, test_;
};

TEST_F(TrainingFixture, ZeroLearningRateLeavesWeights) {
    const auto mc = model_config_for(cfg_, {8, 8});
    std::mt19937_64 rng(1);
    auto m = GrayboxModel::initialized(mc, rng);
    const Parameters before = m.params();
    TrainOptions o;
    o.lr = 0.0;
    o.iterations = 5;
    o.batch = 8;
    train(m, prepare(mc, train_), prepare(mc, test_), o);
    std::size_t k = 0;
    std::vector<Eigen::MatrixXd> ref;
    before.for_each([&](const std::string&, const Eigen::MatrixXd& t) { ref.push_back(t); });
    m.params().for_each([&](const std::string& name, const Eigen::MatrixXd& t) {
        EXPECT_EQ((t - ref[k++]).cwiseAbs().maxCoeff(), 0.0) << name;
    });
}

TEST_F(TrainingFixture, LossDecreasesAndBestSnapshotKept) {
    const auto mc = model_config_for(cfg_, {8, 8});
    std::mt19937_64 rng(2);
    auto m = GrayboxModel::initialized(mc, rng);
    const auto tr = prepare(mc, train_), te = prepare(mc, test_);
    const double initial = evaluate_mse(m, te);
    TrainOptions o;
    o.lr = 1e-2;
    o.iterations = 150;
    o.batch = 16;
    o.eval_every = 10;
    const auto res = train(m, tr, te, o);
    EXPECT_LT(res.best_test_mse, 0.5 * initial);
    EXPECT_NEAR(evaluate_mse(m, te), res.best_test_mse, 1e-12);
    EXPECT_EQ(res.curve.size(), 151u);
    std::ostringstream os;
    write_curve_csv(os, res);
    EXPECT_EQ(os.str().substr(0, 30), "iteration,train_mse,test_mse\n0");
}

TEST_F(TrainingFixture, NonFiniteLossRaisesTrainingError) {
    const auto mc = model_config_for(cfg_, {8, 8});
    std::mt19937_64 rng(3);
    auto m = GrayboxModel::initialized(mc, rng);
    m.params().head_b(0, 0) = std::nan("");
    TrainOptions o;
    o.iterations = 3;
    o.batch = 4;
    try {
        train(m, prepare(mc, train_), prepare(mc, test_), o);
        FAIL() << "expected TrainingError";
    } catch (const TrainingError& e) {
        EXPECT_EQ(e.iteration(), 0);
    }
}

TEST_F(TrainingFixture, CompatibilityCheckedByHash) {
    EXPECT_NO_THROW(check_compatible(train_.hash(), test_));
    auto other = cfg_;
    other.shots = 1024;
    EXPECT_THROW(check_compatible(config_hash(other), test_), CompatibilityError);
}

TEST(Persistence, RoundTripIsBitwise) {
    std::mt19937_64 rng(20);
    auto m = GrayboxModel::initialized(small_model(), rng);
    const auto path = (std::filesystem::temp_directory_path() / "gbx_model_test.json").string();
    save_model(m, "0123456789abcdef", path);
    const auto back = load_model(path);
    EXPECT_EQ(back.config_hash, "0123456789abcdef");
    const auto ws = random_waveforms(3, small_grid(), 21);
    const auto a = m.forward(make_batch(m.config(), ws)).pred;
    const auto b = back.model.forward(make_batch(back.model.config(), ws)).pred;
    EXPECT_EQ((a - b).cwiseAbs().maxCoeff(), 0.0);

    auto wrong = small_model();
    wrong.hidden = {8, 4};
    try {
        load_model(path, &wrong);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        EXPECT_EQ(e.tensor(), "gru1.W");
    }
    std::remove(path.c_str());
}

TEST(Config, RejectsMismatchedInputs) {
    std::mt19937_64 rng(22);
    auto m = GrayboxModel::initialized(small_model(), rng);
    EXPECT_THROW(m.predict(random_waveforms(1, small_grid(32), 1)), InvalidInput);
    auto bad = small_model();
    bad.hidden = {8};
    EXPECT_THROW(GrayboxModel{bad}, ConfigError);
}

}  // namespace
}  // namespace gbx
