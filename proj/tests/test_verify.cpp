#include <gtest/gtest.h>

#include <cmath>

#include "mfp/errors.hpp"
#include "mfp/models.hpp"
#include "mfp/riccati.hpp"
#include "mfp/rng.hpp"
#include "mfp/verify.hpp"

using namespace mfp;

namespace {

struct Case {
    ParticleEnsemble e;
    FirstOrderAdjoint first;
    SecondOrderAdjoint second;
};

Case run(const CoefficientModel& m, const ControlLaw& law, int N, int M, double x0, std::uint64_t seed,
         std::uint64_t stream_base = 0) {
    Case c{simulate_mv_sde(m, TimeGrid(1.0, M), law, Vec::Constant(m.dim(), x0), N, seed, stream_base), {}, {}};
    c.first = solve_first_adjoint(m, c.e, c.e.u, {});
    c.second = solve_second_adjoint(m, c.e, c.e.u, c.first, false, {});
    return c;
}

ModelParams interval_tp2() {
    ModelParams p = tp2_params();
    p.U = ControlSet::interval(-3, 3);
    return p;
}

} // namespace

TEST(Cost, ConstantRunningCost) {
    ModelParams p;
    p.r = 1.0;  // f = u^2 / 2 = 1 at u = sqrt(2)
    ParametricModel m(p);
    auto e = simulate_mv_sde(m, TimeGrid(1.0, 10), ControlLaw::constant(std::sqrt(2.0)), Vec::Zero(1), 4, 1);
    EXPECT_NEAR(cost_functional(m, e).value, 1.0, 1e-14);
}

TEST(Cost, TerminalOnly) {
    ModelParams p;
    p.s = 1.0;
    ParametricModel m(p);
    auto e = simulate_mv_sde(m, TimeGrid(1.0, 10), ControlLaw::constant(0.0), Vec::Constant(1, 2.0), 4, 1);
    EXPECT_NEAR(cost_functional(m, e).value, 2.0, 1e-14);
}

TEST(Cost, RiccatiValue) {
    ModelParams p = tp1_params();
    ParametricModel m(p);
    RiccatiSolution ric = solve_mflq_riccati(p, 1.0);
    auto e = simulate_mv_sde(m, TimeGrid(1.0, 200), ric.feedback(), Vec::Constant(1, 1.0), 4000, 3);
    double v = ric.value(Vec::Constant(1, 1.0));
    EXPECT_LE(std::abs(cost_functional(m, e).value - v) / v, 0.02);
}

TEST(Duality, ZeroSpikeGivesExactZeros) {
    ModelParams p = tp3_params();
    p.sigma_u = 0.2;
    ParametricModel m(p);
    Case c = run(m, ControlLaw::constant(0.5), 200, 40, 1.0, 2);
    SpikeVariation sp{0.25, 0.1, ControlLaw::constant(0.5)};
    auto b = make_bundle(m, c.e, ControlLaw::constant(0.5), sp);
    for (const DualityResidual& r : {check_duality_pY(m, b, c.first), check_duality_pZ(m, b, c.first),
                                     check_duality_PYY(m, b, c.first, c.second)}) {
        EXPECT_EQ(r.lhs, 0.0) << r.name;
        EXPECT_EQ(r.rhs, 0.0) << r.name;
        EXPECT_EQ(r.residual, 0.0) << r.name;
    }
    ExpansionCheck x = check_expansion(m, b, c.first, c.second);
    EXPECT_EQ(x.lhs, 0.0);
    EXPECT_EQ(x.rhs, 0.0);
}

TEST(Duality, ZeroCostGivesZeroSides) {
    ModelParams p;
    p.a = 0.2;
    p.b = 1.0;
    p.sigma = 0.3;
    ParametricModel m(p);
    Case c = run(m, ControlLaw::constant(0.0), 100, 20, 1.0, 3);
    auto b = make_bundle(m, c.e, ControlLaw::constant(0.0), {0.2, 0.1, ControlLaw::constant(1.0)});
    DualityResidual r = check_duality_pY(m, b, c.first);
    EXPECT_EQ(r.lhs, 0.0);
    EXPECT_EQ(r.rhs, 0.0);
}

TEST(Duality, FirstOrderOnTP1) {
    ParametricModel m(tp1_params());
    Case c = run(m, ControlLaw::constant(0.0), 2000, 100, 1.0, 4);
    auto b = make_bundle(m, c.e, ControlLaw::constant(0.0), {0.3, 0.05, ControlLaw::constant(1.0)});
    DualityResidual r = check_duality_pY(m, b, c.first);
    EXPECT_GT(r.lhs, 0.1);
    EXPECT_TRUE(r.within()) << r.residual << " vs " << r.paired_stderr;
}

TEST(Duality, DeterministicComponentIsFirstOrderInDt) {
    ParametricModel m(tp1_params());
    Path fine = brownian_increments(5, 1000, 200, 1, 1.0 / 200);
    double res[2];
    for (int level = 0; level < 2; ++level) {
        int M = level ? 200 : 100;
        Path dW = level ? fine : coarsen(fine, 2);
        auto e = simulate_with_noise(m, TimeGrid(1.0, M), ControlLaw::constant(0.0), Vec::Constant(1, 1.0), dW, 5);
        auto first = solve_first_adjoint(m, e, e.u, {});
        auto b = make_bundle(m, e, ControlLaw::constant(0.0), {0.3, 0.05, ControlLaw::constant(1.0)});
        res[level] = check_duality_pY(m, b, first).cv_residual;
    }
    double ratio = res[0] / res[1];
    EXPECT_GE(ratio, 1.5);
    EXPECT_LE(ratio, 3.0);
}

TEST(Duality, QuadraticVariationTermScalesWithSpikeHeight) {
    ModelParams p = interval_tp2();
    p.b = 0.0;
    ParametricModel m(p);
    Case c = run(m, ControlLaw::constant(-1.0), 300, 40, 1.0, 6);
    auto b1 = make_bundle(m, c.e, ControlLaw::constant(-1.0), {0.25, 0.1, ControlLaw::constant(0.0)});
    auto b2 = make_bundle(m, c.e, ControlLaw::constant(-1.0), {0.25, 0.1, ControlLaw::constant(1.0)});
    double q1 = check_duality_PYY(m, b1, c.first, c.second).spike_quadratic;
    double q2 = check_duality_PYY(m, b2, c.first, c.second).spike_quadratic;
    EXPECT_GT(q1, 0.0);
    EXPECT_NEAR(q2 / q1, 4.0, 1e-10);
}

TEST(Duality, ThirdWithoutMeasureDependenceVanishes) {
    ModelParams p;
    p.a = 0.3;
    p.b = 1.0;
    p.sigma = 0.3;
    p.c = 1.0;
    p.s = 1.0;
    ParametricModel m(p);
    Case one = run(m, ControlLaw::constant(0.0), 8, 20, 1.0, 7, 0), two = run(m, ControlLaw::constant(0.0), 8, 20, 1.0, 7, 100);
    SpikeVariation sp{0.2, 0.1, ControlLaw::constant(1.0)};
    auto b1 = make_bundle(m, one.e, ControlLaw::constant(0.0), sp);
    auto b2 = make_bundle(m, two.e, ControlLaw::constant(0.0), sp);
    AdjointSide s1{&one.e, &b1.alpha, &one.first, &one.second}, s2{&two.e, &b2.alpha, &two.first, &two.second};
    ProductAdjoint X = solve_third_adjoint_picard(m, s1, s2, {});
    DualityResidual r = check_duality_third(m, b1, b2, s1, s2, X);
    EXPECT_EQ(r.lhs, 0.0);
    EXPECT_EQ(r.rhs, 0.0);
    EXPECT_EQ(r.spike_quadratic, 0.0);
    EXPECT_THROW(check_duality_third(m, b1, b1, s1, s1, X), IndependenceError);
}

TEST(Expansion, CascadeBalancesExactly) {
    ModelParams p = tp3_params();
    p.sigma_u = 0.3;
    p.sigma_x = 0.1;
    ParametricModel m(p);
    Case c = run(m, ControlLaw::constant(0.0), 300, 40, 1.0, 8);
    auto b = make_bundle(m, c.e, ControlLaw::constant(0.0), {0.25, 0.1, ControlLaw::constant(1.0)});
    ExpansionCheck x = check_expansion(m, b, c.first, c.second);
    EXPECT_LE(x.cascade_gap, 1e-10);
    EXPECT_NE(x.rhs, 0.0);
}

TEST(MaxPrinciple, ZeroOffsetIsExactlyZero) {
    ParametricModel m(interval_tp2());
    Case c = run(m, ControlLaw::constant(-1.0), 50, 20, 1.0, 9);
    MaxPrincipleResult r = check_max_principle(m, c.e, c.e.u, c.first, c.second, c.e.u, {0.0}, knot_subset(20, 10));
    EXPECT_EQ(r.min_value, 0.0);
    EXPECT_EQ(r.table.rows(), 10);
    EXPECT_THROW(check_max_principle(m, c.e, c.e.u, c.first, c.second, c.e.u, {}, {0}), ArgumentError);
}

TEST(MaxPrinciple, DetectsPerturbedControl) {
    ModelParams p = tp1_params();
    ParametricModel m(p);
    RiccatiSolution ric = solve_mflq_riccati(p, 1.0);
    std::vector<double> offsets;
    for (int j = 0; j <= 40; ++j) offsets.push_back(-2.0 + 0.1 * j);
    for (double shift : {0.0, 0.5}) {
        Case c = run(m, ric.feedback(shift), 500, 50, 1.0, 10);
        Mat center = c.e.u.array() - shift;
        MaxPrincipleResult r =
            check_max_principle(m, c.e, c.e.u, c.first, c.second, center, offsets, knot_subset(50, 50));
        if (shift == 0.0) EXPECT_GE(r.min_value, -0.01 * r.scale);
        else EXPECT_LT(r.min_value, -0.05 * r.scale);
    }
}

TEST(Verify, KnotSubset) {
    EXPECT_EQ(knot_subset(100, 50).size(), 50u);
    EXPECT_EQ(knot_subset(100, 50)[1], 2);
    EXPECT_EQ(knot_subset(10, 50).size(), 10u);
}
