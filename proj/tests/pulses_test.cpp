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

#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gbx/pulses.hpp"

namespace gbx {
namespace {

PulseConstraints two_axis() {
    PulseConstraints c;
    c.axes = {ControlAxis::x, ControlAxis::y};
    return c;
}

// Asymptotic Kolmogorov survival function.
double kolmogorov_pvalue(double d, std::size_t n) {
    const double sn = std::sqrt(static_cast<double>(n));
    const double lambda = (sn + 0.12 + 0.11 / sn) * d;
    double sum = 0.0;
    for (int k = 1; k < 100; ++k) sum += 2.0 * std::pow(-1.0, k - 1) * std::exp(-2.0 * k * k * lambda * lambda);
    return std::clamp(sum, 0.0, 1.0);
}

TEST(Constraints, DefaultWidthAndFeasibility) {
    PulseConstraints c;
    EXPECT_DOUBLE_EQ(c.sigma(), 1.0 / 60.0);
    EXPECT_NO_THROW(c.validate());
    c.width = 0.05;  // 5 * 6 * 0.05 = 1.5 > T
    EXPECT_THROW(c.validate(), ConfigError);
    std::mt19937_64 rng(1);
    EXPECT_THROW(random_sequence(rng, c), ConfigError);
}

TEST(Render, ZeroAmplitudes) {
    const auto w = render(empty_sequence(two_axis()));
    EXPECT_EQ(w.samples.rows(), 2);
    EXPECT_EQ(w.steps(), 128);
    EXPECT_EQ(w.samples.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Render, SingleCenteredGaussian) {
    PulseConstraints c;
    c.n_pulses = 1;
    c.steps = 129;
    auto s = empty_sequence(c);
    s.trains[0].pulses[0] = {1.0, 0.5};
    const auto w = render(s);
    EXPECT_NEAR(w.samples(0, 64), 1.0, 1e-15);
    for (int k = 0; k < 64; ++k) EXPECT_NEAR(w.samples(0, k), w.samples(0, 128 - k), 1e-14);
}

TEST(Render, TermByTermOracle) {
    std::mt19937_64 rng(2);
    const auto c = two_axis();
    for (int rep = 0; rep < 10; ++rep) {
        const auto s = random_sequence(rng, c);
        const auto w = render(s);
        for (std::size_t r = 0; r < s.trains.size(); ++r) {
            for (int k = 0; k < c.steps; ++k) {
                const double t = (k + 0.5) * c.horizon / c.steps;
                double f = 0.0;
                for (const auto& p : s.trains[r].pulses) {
                    f += p.amplitude * std::exp(-(t - p.center) * (t - p.center) / (c.sigma() * c.sigma()));
                }
                EXPECT_NEAR(w.samples(static_cast<Eigen::Index>(r), k), f, 1e-14);
            }
        }
    }
}

TEST(Render, LinearInAmplitude) {
    std::mt19937_64 rng(3);
    auto s = random_sequence(rng, two_axis());
    const auto w1 = render(s);
    for (auto& t : s.trains)
        for (auto& p : t.pulses) p.amplitude *= -0.3;
    const auto w2 = render(s);
    EXPECT_LT((w2.samples + 0.3 * w1.samples).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(RenderGradient, ExtremaAndFiniteDifferences) {
    std::mt19937_64 rng(4);
    PulseConstraints c = two_axis();
    c.steps = 300;
    const auto s = random_sequence(rng, c);
    const auto g = render_gradient(s);
    ASSERT_EQ(g.d_amplitude.rows(), c.n_params());

    // A sample placed exactly on a center.
    PulseConstraints one;
    one.n_pulses = 1;
    one.steps = 129;
    auto s1 = empty_sequence(one);
    s1.trains[0].pulses[0] = {3.0, 0.5};
    const auto g1 = render_gradient(s1);
    EXPECT_NEAR(g1.d_amplitude(0, 64), 1.0, 1e-15);
    EXPECT_NEAR(g1.d_center(0, 64), 0.0, 1e-12);

    const double h = 1e-6;
    int p = 0;
    for (std::size_t r = 0; r < s.trains.size(); ++r) {
        for (int i = 0; i < c.n_pulses; ++i, ++p) {
            EXPECT_EQ(g.axis_row[p], static_cast<int>(r));
            for (int which = 0; which < 2; ++which) {
                auto sp = s, sm = s;
                double& vp = which == 0 ? sp.trains[r].pulses[i].amplitude : sp.trains[r].pulses[i].center;
                double& vm = which == 0 ? sm.trains[r].pulses[i].amplitude : sm.trains[r].pulses[i].center;
                vp += h;
                vm -= h;
                const Eigen::VectorXd fd = (render(sp).samples.row(r) - render(sm).samples.row(r)).transpose() / (2 * h);
                const Eigen::VectorXd an = (which == 0 ? g.d_amplitude : g.d_center).row(p).transpose();
                EXPECT_LE((fd - an).norm(), 1e-5 * std::max(1.0, an.norm())) << "param " << p << " kind " << which;
            }
        }
    }
}

TEST(RandomSequence, ConstraintsHoldOverManyDraws) {
    std::mt19937_64 rng(5);
    const PulseConstraints c;
    std::vector<double> amps;
    for (int n = 0; n < 10000; ++n) {
        const auto s = random_sequence(rng, c);
        const auto& ps = s.trains[0].pulses;
        ASSERT_EQ(static_cast<int>(ps.size()), 5);
        for (int i = 0; i < 5; ++i) {
            ASSERT_LE(std::abs(ps[i].amplitude), 25.0);
            ASSERT_GT(ps[i].center, 0.0);
            ASSERT_LT(ps[i].center, 1.0);
            for (int j = 0; j < i; ++j) ASSERT_GE(std::abs(ps[i].center - ps[j].center), 6.0 * c.sigma() - 1e-12);
            amps.push_back(ps[i].amplitude);
        }
        ASSERT_TRUE(is_feasible(s, c));
    }
    std::sort(amps.begin(), amps.end());
    double d = 0.0;
    const double n = static_cast<double>(amps.size());
    for (std::size_t i = 0; i < amps.size(); ++i) {
        const double cdf = (amps[i] + 25.0) / 50.0;
        d = std::max({d, std::abs(cdf - i / n), std::abs((i + 1) / n - cdf)});
    }
    EXPECT_GT(kolmogorov_pvalue(d, amps.size()), 0.01);
}

TEST(RandomSequence, Deterministic) {
    std::mt19937_64 a(42), b(42);
    EXPECT_EQ(random_sequence(a, two_axis()), random_sequence(b, two_axis()));
}

TEST(Feasibility, DetectsViolations) {
    const PulseConstraints c;
    auto s = empty_sequence(c);
    EXPECT_TRUE(is_feasible(s, c));
    s.trains[0].pulses[2].amplitude = 25.5;
    EXPECT_FALSE(is_feasible(s, c));
    s = empty_sequence(c);
    s.trains[0].pulses[1].center = s.trains[0].pulses[0].center + 0.01;
    EXPECT_FALSE(is_feasible(s, c));
}

TEST(Reparameterization, TanhMapAndInverse) {
    const PulseConstraints c = two_axis();
    RawPulseParams raw{Eigen::VectorXd::Zero(c.n_params()), Eigen::VectorXd::Zero(c.n_params())};
    auto s = project_constraints(raw, c);
    for (const auto& t : s.trains)
        for (int i = 0; i < c.n_pulses; ++i) {
            EXPECT_EQ(t.pulses[i].amplitude, 0.0);
            EXPECT_NEAR(t.pulses[i].center, c.slot_mid(i), 1e-15);
        }
    raw.amp_logits.setConstant(40.0);
    s = project_constraints(raw, c);
    EXPECT_DOUBLE_EQ(s.trains[0].pulses[0].amplitude, 25.0);

    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-0.999, 0.999);
    for (int k = 0; k < 200; ++k) {
        RawPulseParams r{Eigen::VectorXd(c.n_params()), Eigen::VectorXd(c.n_params())};
        for (int p = 0; p < c.n_params(); ++p) {
            r.amp_logits(p) = std::atanh(u(rng));
            r.center_logits(p) = std::atanh(u(rng));
        }
        const auto seq = project_constraints(r, c);
        EXPECT_TRUE(is_feasible(seq, c));
        const auto back = unproject(seq, c);
        EXPECT_LT((back.amp_logits - r.amp_logits).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_LT((back.center_logits - r.center_logits).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(Json, RoundTripAndFieldOrder) {
    std::mt19937_64 rng(7);
    const auto s = random_sequence(rng, two_axis());
    const auto j = to_json(s);
    std::vector<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.push_back(k);
    EXPECT_EQ(keys, (std::vector<std::string>{"T", "M", "sigma", "axes"}));
    const auto back = pulse_sequence_from_json(ordered_json::parse(j.dump()));
    EXPECT_EQ(back, s);
    const auto c = pulse_constraints_from_json(to_json(two_axis()));
    EXPECT_EQ(c.axes, two_axis().axes);
    EXPECT_DOUBLE_EQ(c.sigma(), two_axis().sigma());
}

}  // namespace
}  // namespace gbx
