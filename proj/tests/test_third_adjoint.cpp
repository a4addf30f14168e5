#include <gtest/gtest.h>

#include <cmath>

#include "mfp/errors.hpp"
#include "mfp/models.hpp"
#include "mfp/riccati.hpp"
#include "mfp/third_adjoint.hpp"

using namespace mfp;

namespace {

struct Side {
    ParticleEnsemble e;
    Mat alpha;
    FirstOrderAdjoint first;
    SecondOrderAdjoint second;
    AdjointSide view() const { return {&e, &alpha, &first, &second}; }
};

Side make_side(const CoefficientModel& m, int N, int M, double x0, std::uint64_t seed, std::uint64_t stream_base,
               bool symmetrize = false, double u = 0.0) {
    Side s{simulate_mv_sde(m, TimeGrid(1.0, M), ControlLaw::constant(u), Vec::Constant(m.dim(), x0), N, seed,
                           stream_base),
           Mat(), {}, {}};
    s.alpha = s.e.u;
    s.first = solve_first_adjoint(m, s.e, s.alpha, {});
    s.second = solve_second_adjoint(m, s.e, s.alpha, s.first, symmetrize, {});
    return s;
}

// scalar oracle for TP1: P' = -(2a P + c), PP' = -(2(a+abar) PP + 2 abar P + cbar)
double tp1_oracle(const ModelParams& p, double t0) {
    auto P = [&](double t) { return (p.s + p.c / (2 * p.a)) * std::exp(2 * p.a * (1 - t)) - p.c / (2 * p.a); };
    auto F = [&](double t, double y) { return -(2 * (p.a + p.abar) * y + 2 * p.abar * P(t) + p.cbar); };
    std::vector<double> y = rk4_backward(F, p.sbar, 1.0, 4000);
    return y[std::size_t(std::lround(t0 * 4000))];
}

} // namespace

TEST(ThirdAdjoint, ZeroMeasureDependenceVanishes) {
    ModelParams p;
    p.a = 0.3;
    p.b = 1.0;
    p.sigma = 0.4;
    p.c = 1.0;
    p.s = 1.0;
    ParametricModel m(p);
    Side one = make_side(m, 6, 20, 0.5, 1, 0), two = make_side(m, 6, 20, 0.5, 2, 0);
    PicardTrace tr;
    ProductAdjoint X = solve_third_adjoint_picard(m, one.view(), two.view(), {}, &tr);
    EXPECT_EQ(tr.iterations(), 1);
    EXPECT_TRUE(tr.converged);
    for (const Mat& P : X.P) EXPECT_EQ(P.cwiseAbs().maxCoeff(), 0.0);
}

TEST(ThirdAdjoint, TP1MatchesScalarOracle) {
    ModelParams p = tp1_params();
    ParametricModel m(p);
    Side one = make_side(m, 6, 400, 1.0, 3, 0), two = make_side(m, 6, 400, 1.0, 4, 0);
    PicardTrace tr;
    ProductAdjoint X = solve_third_adjoint_picard(m, one.view(), two.view(), {}, &tr);
    EXPECT_TRUE(tr.converged);
    EXPECT_LE(tr.max_ratio(), 0.5);
    for (double t : {0.0, 0.5, 1.0}) {
        int k = int(std::lround(t * 400));
        double ref = tp1_oracle(p, t);
        EXPECT_LE((X.P[k].array() - ref).abs().maxCoeff() / std::abs(ref), 3e-3) << "t=" << t;
    }
    for (int k = 0; k < 400; ++k) {
        EXPECT_LE(X.Q1[k][0].cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_LE(X.Q2[k][0].cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(ThirdAdjoint, SymmetrizedVariantIsPairSymmetric) {
    ModelParams p = tp3_params();
    p.d = 2;
    p.sigma_x = 0.2;
    p.tau = 0.1;
    p.w = 0.3;
    ParametricModel m(p);
    Side one = make_side(m, 24, 20, 0.7, 5, 0, true);
    ThirdAdjointOptions opt;
    opt.allow_shared_noise = true;
    opt.variant = ThirdVariant::Symmetrized;
    opt.adjoint.backend = Backend::Regression;
    ProductAdjoint X = solve_third_adjoint_picard(m, one.view(), one.view(), opt);
    double asym = 0, scale = 0;
    for (int k = 0; k <= 20; k += 5)
        for (int i = 0; i < 24; ++i)
            for (int j = 0; j < 24; ++j) {
                asym = std::max(asym, (X.P_at(i, j, k) - X.P_at(j, i, k).transpose()).cwiseAbs().maxCoeff());
                scale = std::max(scale, X.P_at(i, j, k).cwiseAbs().maxCoeff());
                if (k < 20)
                    for (int c = 0; c < 2; ++c)
                        asym = std::max(asym,
                                        (X.Q1_at(i, j, k, c) - X.Q2_at(j, i, k, c).transpose()).cwiseAbs().maxCoeff());
            }
    EXPECT_GT(scale, 0.1);
    EXPECT_LE(asym, 1e-8);

    opt.variant = ThirdVariant::Plain;
    ProductAdjoint Y = solve_third_adjoint_picard(m, one.view(), one.view(), opt);
    double plain = 0;
    for (int i = 0; i < 24; ++i)
        for (int j = 0; j < 24; ++j)
            plain = std::max(plain, (Y.P_at(i, j, 0) - Y.P_at(j, i, 0).transpose()).cwiseAbs().maxCoeff());
    EXPECT_GT(plain, 1e-6);
}

TEST(ThirdAdjoint, SharedNoiseIsRejected) {
    ParametricModel m(tp1_params());
    Side one = make_side(m, 4, 10, 1.0, 7, 0);
    EXPECT_THROW(solve_third_adjoint_picard(m, one.view(), one.view(), {}), IndependenceError);
    Side two = make_side(m, 4, 10, 1.0, 7, 1000);
    EXPECT_NO_THROW(solve_third_adjoint_picard(m, one.view(), two.view(), {}));
}

TEST(ThirdAdjoint, RhoMetric) {
    TimeGrid g(1.0, 2);
    ProductAdjoint a;
    a.N1 = 1;
    a.N2 = 2;
    a.P.assign(3, Mat::Zero(2, 1));
    a.Q1.assign(2, Path(1, Mat::Zero(2, 1)));
    a.Q2 = a.Q1;
    ProductAdjoint b = a;
    EXPECT_EQ(rho_metric(a, b, g, 1.0), 0.0);
    b.P[1](0, 0) = 2.0;  // mean over pairs of |dP|^2 = 2 at t = 0.5
    EXPECT_NEAR(rho_metric(a, b, g, 1.0), 2.0 * std::exp(0.5), 1e-14);
    b.P[1](0, 0) = 0.0;
    b.Q1[0][0](1, 0) = 1.0;
    // 3/4 * dt * e^0 * 1/2
    EXPECT_NEAR(rho_metric(a, b, g, 1.0), 0.75 * 0.5 * 0.5, 1e-14);
    b.P.pop_back();
    EXPECT_THROW(rho_metric(a, b, g, 1.0), DimensionError);
    EXPECT_EQ(parse_variant("symmetrized"), ThirdVariant::Symmetrized);
    EXPECT_THROW(parse_variant("odd"), ArgumentError);
}
