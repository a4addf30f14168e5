#include <gtest/gtest.h>

#include <cmath>

#include "mfp/errors.hpp"
#include "mfp/forward.hpp"
#include "mfp/models.hpp"
#include "mfp/parallel.hpp"
#include "mfp/rng.hpp"

using namespace mfp;

namespace {

ParametricModel make(ModelParams p) { return ParametricModel(std::move(p)); }

ModelParams zero1d() {
    ModelParams p;
    p.U = ControlSet::interval(-10, 10);
    return p;
}

} // namespace

TEST(TimeGrid, Knots) {
    TimeGrid g(2.0, 8);
    EXPECT_DOUBLE_EQ(g.dt(), 0.25);
    EXPECT_DOUBLE_EQ(g.t(8), 2.0);
    EXPECT_THROW(TimeGrid(1.0, 0), ArgumentError);
    EXPECT_THROW(TimeGrid(0.0, 4), ArgumentError);
}

TEST(Brownian, IncrementsAreCentred) {
    int N = 400, M = 50, d = 2;
    double dt = 0.02;
    Path dW = brownian_increments(3, N, M, d, dt);
    for (int a = 0; a < d; ++a) {
        double s = 0;
        for (auto& b : dW) s += b.col(a).sum();
        double mean = s / (N * M);
        EXPECT_LE(std::abs(mean), 4 * std::sqrt(dt) / std::sqrt(double(N) * M * d));
    }
}

TEST(Brownian, CoarsenSumsIncrements) {
    Path dW = brownian_increments(9, 5, 8, 1, 0.1);
    Path c = coarsen(dW, 2);
    ASSERT_EQ(c.size(), 4u);
    EXPECT_DOUBLE_EQ(c[1](3, 0), dW[2](3, 0) + dW[3](3, 0));
    EXPECT_THROW(coarsen(dW, 3), AlignmentError);
}

TEST(Simulate, ZeroDynamicsStayAtStart) {
    auto model = make(zero1d());
    Vec x0 = Vec::Constant(1, 0.7);
    auto e = simulate_mv_sde(model, TimeGrid(1.0, 10), ControlLaw::constant(0.0), x0, 5, 1);
    for (auto& X : e.X) EXPECT_TRUE((X.array() == 0.7).all());
}

TEST(Simulate, PureMeanFieldGrowth) {
    ModelParams p = zero1d();
    p.abar = 1.0;
    auto model = make(p);
    auto e = simulate_mv_sde(model, TimeGrid(1.0, 100), ControlLaw::constant(0.0), Vec::Ones(1), 4, 1);
    double xT = e.X[100](0, 0);
    EXPECT_NEAR(xT, std::pow(1.01, 100), 1e-12);
    EXPECT_NEAR(xT, std::exp(1.0), 0.015);
}

TEST(Simulate, BrownianVariance) {
    ModelParams p = zero1d();
    p.sigma = 1.0;
    auto model = make(p);
    int N = 4000;
    auto e = simulate_mv_sde(model, TimeGrid(1.0, 20), ControlLaw::constant(0.0), Vec::Zero(1), N, 5);
    Vec xT = e.X[20].col(0);
    double mean = xT.mean();
    double var = (xT.array() - mean).square().sum() / (N - 1);
    EXPECT_NEAR(var, 1.0, 4 / std::sqrt(double(N)) * std::sqrt(2.0));
}

TEST(Simulate, SeedDeterminismAcrossWorkers) {
    auto model = make(tp3_params());
    TimeGrid g(1.0, 30);
    set_workers(1);
    auto a = simulate_mv_sde(model, g, ControlLaw::constant(0.2), Vec::Constant(1, 0.5), 64, 42);
    set_workers(4);
    auto b = simulate_mv_sde(model, g, ControlLaw::constant(0.2), Vec::Constant(1, 0.5), 64, 42);
    set_workers(1);
    for (int k = 0; k <= g.M; ++k) EXPECT_TRUE(a.X[k] == b.X[k]);
}

TEST(Simulate, ExchangeablePermutation) {
    auto model = make(tp1_params());
    TimeGrid g(1.0, 20);
    int N = 6;
    Path dW = brownian_increments(8, N, g.M, 1, g.dt());
    Path perm = dW;
    for (auto& b : perm) b.col(0).reverseInPlace();
    ControlLaw c = ControlLaw::feedback([](double, const Vec& x, const Vec&) { return -x(0); });
    auto a = simulate_with_noise(model, g, c, Vec::Constant(1, 1.0), dW);
    auto b = simulate_with_noise(model, g, c, Vec::Constant(1, 1.0), perm);
    for (int k = 0; k <= g.M; ++k)
        for (int i = 0; i < N; ++i) EXPECT_NEAR(a.X[k](i, 0), b.X[k](N - 1 - i, 0), 1e-12);
}

TEST(Simulate, MeanFieldConvergence) {
    // mean of TP1 under zero control follows m' = (a + abar) m
    ModelParams p = tp1_params();
    auto model = make(p);
    TimeGrid g(1.0, 50);
    double exact = std::pow(1 + (p.a + p.abar) * g.dt(), g.M);
    std::vector<double> err;
    for (int N : {100, 400, 1600}) {
        double e2 = 0;
        int reps = 20;
        for (int s = 0; s < reps; ++s) {
            auto e = simulate_mv_sde(model, g, ControlLaw::constant(0.0), Vec::Ones(1), N, 100 + s);
            double d = e.m[g.M](0) - exact;
            e2 += d * d;
        }
        err.push_back(std::sqrt(e2 / reps) * std::sqrt(double(N)));
    }
    // sqrt(N) * rms error stays bounded
    for (double c : err) EXPECT_LE(c, 3 * err[0] + 1.0);
}

TEST(Simulate, DivergenceNamesStep) {
    ModelParams p = zero1d();
    p.a = 1e200;
    auto model = make(p);
    try {
        simulate_mv_sde(model, TimeGrid(1.0, 10), ControlLaw::constant(0.0), Vec::Ones(1), 3, 1);
        FAIL();
    } catch (const DivergenceError& e) {
        EXPECT_EQ(e.step(), 2);
    }
}

TEST(Simulate, ControlOutsideSetThrows) {
    auto model = make(tp2_params());
    EXPECT_THROW(simulate_mv_sde(model, TimeGrid(1.0, 4), ControlLaw::constant(0.5), Vec::Zero(1), 3, 1),
                 ControlError);
}

TEST(Spike, SplicesAlignedCells) {
    TimeGrid g(1.0, 10);
    SpikeVariation s{0.2, 0.1, ControlLaw::constant(1.0)};
    ControlLaw c = apply_spike(ControlLaw::constant(0.0), s, g);
    Vec x = Vec::Zero(1);
    for (int k = 0; k < 10; ++k) EXPECT_EQ(c(0, k, g.t(k), x, x), k == 2 ? 1.0 : 0.0);

    ControlLaw base = ControlLaw::constant(0.3);
    ControlLaw same = apply_spike(base, SpikeVariation{0.2, 0.3, base}, g);
    ControlLaw empty = apply_spike(base, SpikeVariation{0.5, 0.0, ControlLaw::constant(9.0)}, g);
    for (int k = 0; k < 10; ++k) {
        EXPECT_EQ(same(0, k, 0, x, x), 0.3);
        EXPECT_EQ(empty(0, k, 0, x, x), 0.3);
    }
    EXPECT_THROW(apply_spike(base, SpikeVariation{0.2, 0.15, base}, g), AlignmentError);
    EXPECT_THROW(apply_spike(base, SpikeVariation{0.25, 0.1, base}, g), AlignmentError);
    EXPECT_THROW(apply_spike(base, SpikeVariation{0.9, 0.2, base}, g), ArgumentError);
}

TEST(Spike, TableBaseIsSplicedPerParticle) {
    TimeGrid g(1.0, 4);
    Mat t(2, 4);
    t << 1, 2, 3, 4, 5, 6, 7, 8;
    ControlLaw c = apply_spike(ControlLaw::table(t), SpikeVariation{0.25, 0.5, ControlLaw::constant(0.0)}, g);
    Vec x = Vec::Zero(1);
    EXPECT_EQ(c(1, 0, 0, x, x), 5.0);
    EXPECT_EQ(c(1, 1, 0, x, x), 0.0);
    EXPECT_EQ(c(1, 2, 0, x, x), 0.0);
    EXPECT_EQ(c(1, 3, 0, x, x), 8.0);
}

TEST(TildeAverage, Examples) {
    int N = 5;
    Mat xs(N, 1);
    xs << 0.1, -0.4, 1.2, 0.8, -2.0;
    TildeKernel constant = [](int, int) { return Mat::Constant(1, 1, 2.5); };
    Mat r = tilde_average(TildeMode::CoefficientAtCopy, constant, N, Mat::Ones(N, 1));
    EXPECT_TRUE((r.array() == 2.5).all());
    r = tilde_average(TildeMode::CopyAtCoefficient, constant, N, Mat::Zero(N, 1));
    EXPECT_TRUE((r.array() == 0.0).all());

    TildeKernel sep = [&](int i, int j) { return Mat::Constant(1, 1, std::cos(xs(i, 0)) * xs(j, 0) * xs(j, 0)); };
    r = tilde_average(TildeMode::CoefficientAtCopy, sep, N, Mat::Ones(N, 1));
    double mb = xs.array().square().mean();
    for (int i = 0; i < N; ++i) EXPECT_NEAR(r(i, 0), std::cos(xs(i, 0)) * mb, 1e-14);

    // copy-at-coefficient reads the kernel with the arguments swapped
    r = tilde_average(TildeMode::CopyAtCoefficient, sep, N, Mat::Ones(N, 1));
    double ma = xs.array().cos().mean();
    for (int i = 0; i < N; ++i) EXPECT_NEAR(r(i, 0), ma * xs(i, 0) * xs(i, 0), 1e-14);

    EXPECT_THROW(parse_tilde_mode("sideways"), ArgumentError);
    EXPECT_THROW(tilde_average(TildeMode::CoefficientAtCopy, constant, N, Mat::Ones(3, 1)), DimensionError);
}
