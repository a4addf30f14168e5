#include <gtest/gtest.h>

#include <cmath>

#include "mfp/coeffs.hpp"
#include "mfp/errors.hpp"
#include "mfp/models.hpp"

using namespace mfp;

namespace {

Mat col(std::initializer_list<double> v) {
    Mat s(v.size(), 1);
    int i = 0;
    for (double x : v) s(i++, 0) = x;
    return s;
}

MomentFunctional square_of_mean() {
    MomentFunctional phi;
    phi.psi = MomentMap::identity(1);
    phi.F = [](const Vec& m) { return m(0) * m(0); };
    phi.dF = [](const Vec& m) { return Vec::Constant(1, 2 * m(0)); };
    phi.d2F = [](const Vec&) { return Mat::Constant(1, 1, 2.0); };
    return phi;
}

MomentFunctional power_of_mean(int n) {
    MomentFunctional phi;
    phi.psi = MomentMap::identity(1);
    phi.F = [n](const Vec& m) { return std::pow(m(0), n); };
    phi.dF = [n](const Vec& m) { return Vec::Constant(1, n * std::pow(m(0), n - 1)); };
    phi.d2F = [n](const Vec& m) { return Mat::Constant(1, 1, n * (n - 1) * std::pow(m(0), n - 2)); };
    return phi;
}

MomentFunctional exp_of_mean() {
    MomentFunctional phi;
    phi.psi = MomentMap::identity(1);
    phi.F = [](const Vec& m) { return std::exp(m(0)); };
    phi.dF = [](const Vec& m) { return Vec::Constant(1, std::exp(m(0))); };
    phi.d2F = [](const Vec& m) { return Mat::Constant(1, 1, std::exp(m(0))); };
    return phi;
}

} // namespace

TEST(MomentMap, EmpiricalMoments) {
    EXPECT_DOUBLE_EQ(empirical_moments(col({1, 2, 3}), MomentMap::identity(1))(0), 2.0);
    EXPECT_DOUBLE_EQ(empirical_moments(col({-1, 1}), MomentMap::squares(1))(0), 1.0);
    Vec m = empirical_moments(col({0, 2}), MomentMap::first_second(1));
    EXPECT_DOUBLE_EQ(m(0), 1.0);
    EXPECT_DOUBLE_EQ(m(1), 2.0);
    EXPECT_THROW(empirical_moments(Mat(0, 1), MomentMap::identity(1)), DimensionError);
    EXPECT_THROW(empirical_moments(Mat::Zero(3, 2), MomentMap::identity(1)), DimensionError);
}

TEST(MomentMap, DerivativesMatchFiniteDifferences) {
    for (auto mm : {MomentMap::identity(2), MomentMap::squares(2), MomentMap::first_second(3)}) {
        MomentCheck c = check_moment_map(mm, 100, 1e-5, 7);
        EXPECT_LE(c.dpsi_err, 1e-6);
        EXPECT_LE(c.d2psi_err, 1e-6);
    }
}

TEST(LionsDerivative, ChainRuleExamples) {
    EXPECT_NEAR(lions_derivative(square_of_mean(), col({1, 2, 3}), Vec::Constant(1, 0.3))(0, 0), 4.0, 1e-14);

    MomentFunctional mean;
    mean.psi = MomentMap::identity(1);
    mean.F = [](const Vec& m) { return m(0); };
    mean.dF = [](const Vec&) { return Vec::Ones(1); };
    mean.d2F = [](const Vec&) { return Mat::Zero(1, 1); };
    EXPECT_DOUBLE_EQ(lions_derivative(mean, col({5, -1}), Vec::Constant(1, 9))(0, 0), 1.0);

    MomentFunctional sinsq;
    sinsq.psi = MomentMap::squares(1);
    sinsq.F = [](const Vec& m) { return std::sin(m(0)); };
    sinsq.dF = [](const Vec& m) { return Vec::Constant(1, std::cos(m(0))); };
    sinsq.d2F = [](const Vec& m) { return Mat::Constant(1, 1, -std::sin(m(0))); };
    double v = lions_derivative(sinsq, col({0.5, 1.0}), Vec::Constant(1, 1.0))(0, 0);
    EXPECT_NEAR(v, std::cos(0.625) * 2.0, 1e-14);
    EXPECT_NEAR(v, 1.6221, 5e-4);
    EXPECT_LE(check_lions_fd(sinsq, col({0.5, 1.0}), col({0.3, -0.7}), 1e-5), 1e-8);
}

TEST(LionsDerivative, Errors) {
    EXPECT_THROW(lions_derivative(square_of_mean(), Mat(0, 1), Vec::Zero(1)), DimensionError);
    EXPECT_THROW(lions_derivative(square_of_mean(), col({1, NAN}), Vec::Zero(1)), NumericError);
    EXPECT_THROW(check_lions_fd(square_of_mean(), col({1}), col({1}), 0.0), ArgumentError);
}

TEST(LionsDerivative, FiniteDifferenceCheck) {
    MomentFunctional lin;
    lin.psi = MomentMap::first_second(1);
    lin.F = [](const Vec& m) { return 2 * m(0) - 3 * m(1); };
    lin.dF = [](const Vec&) { Vec g(2); g << 2, -3; return g; };
    lin.d2F = [](const Vec&) { return Mat::Zero(2, 2); };
    // psi has a quadratic coordinate, so central differences are still exact
    EXPECT_LE(check_lions_fd(lin, col({0.1, 1.5, -2}), col({1, 0.5, 2}), 1e-3), 1e-12);
    EXPECT_EQ(check_lions_fd(square_of_mean(), col({1, 2}), col({0, 0}), 1e-4), 0.0);
    EXPECT_LE(check_lions_fd(power_of_mean(3), col({1, 1}), col({1, 1}), 1e-4), 1e-7);
}

TEST(LionsDerivative, MeasureLipschitzInMoments) {
    // |d_mu phi(m) - d_mu phi(m')| <= sup|F''| |m - m'| with F = exp on [-1, 1]
    MomentFunctional phi = exp_of_mean();
    Mat s1 = col({-0.5, 0.2, 0.9}), s2 = col({0.1, -0.3, 0.4});
    Vec y = Vec::Constant(1, 0.7);
    double dm = std::abs(empirical_moments(s1, phi.psi)(0) - empirical_moments(s2, phi.psi)(0));
    double dd = std::abs(lions_derivative(phi, s1, y)(0, 0) - lions_derivative(phi, s2, y)(0, 0));
    EXPECT_LE(dd, std::exp(1.0) * dm + 1e-15);
}

TEST(TaylorExpansion, Examples) {
    Mat base = col({-0.4, 0.1, 0.3});
    TaylorTerms z = taylor_expand_measure(exp_of_mean(), base, base);
    EXPECT_EQ(z.first, 0.0);
    EXPECT_EQ(z.second_mixed, 0.0);
    EXPECT_EQ(z.second_y, 0.0);
    EXPECT_EQ(z.remainder, 0.0);

    Mat shifted = base.array() + 0.25;
    EXPECT_LE(std::abs(taylor_expand_measure(square_of_mean(), base, shifted).remainder), 1e-12);

    TaylorTerms e = taylor_expand_measure(exp_of_mean(), col({-1, 1}), col({-0.9, 1.1}));
    EXPECT_NEAR(e.remainder, std::exp(0.1) - 1 - 0.1 - 0.005, 1e-12);
    EXPECT_NEAR(e.remainder, 1.709e-4, 1e-7);

    EXPECT_THROW(taylor_expand_measure(exp_of_mean(), col({1, 2}), col({1})), DimensionError);
}

TEST(TaylorExpansion, PairAverageFactorizes) {
    // For a separable pair kernel the N x N average is the product of marginal means.
    MomentFunctional phi;
    phi.psi = MomentMap::first_second(1);
    phi.F = [](const Vec& m) { return m(0) * m(1); };
    phi.dF = [](const Vec& m) { Vec g(2); g << m(1), m(0); return g; };
    phi.d2F = [](const Vec&) { Mat h(2, 2); h << 0, 1, 1, 0; return h; };
    Mat base = col({0.3, -1.2, 0.8, 2.0}), next = col({0.5, -1.0, 0.1, 2.2});
    TaylorTerms t = taylor_expand_measure(phi, base, next);
    Vec a1 = Vec::Zero(2);
    for (int i = 0; i < 4; ++i) {
        double e = next(i, 0) - base(i, 0);
        a1(0) += e / 4;
        a1(1) += 2 * base(i, 0) * e / 4;
    }
    EXPECT_NEAR(t.second_mixed, 0.5 * 2 * a1(0) * a1(1), 1e-14);
}

TEST(Hamiltonian, ZeroCoefficients) {
    ModelParams p;
    p.U = ControlSet::interval(-1, 1);
    ParametricModel zero(p);
    Vec x = Vec::Constant(1, 0.7), m = Vec::Zero(2);
    EXPECT_EQ(hamiltonian(zero, 0, x, m, 0.5, Vec::Ones(1), Mat::Ones(1, 1)).value, 0.0);
}

TEST(Hamiltonian, DirectSubstitution) {
    // A = x u, B = 1, f = u^2 / 2 with the running cost entering with a plus sign
    class Toy : public CoefficientModel {
    public:
        Toy() : mm_(MomentMap::identity(1)), U_(ControlSet::interval(-5, 5)) {}
        int dim() const override { return 1; }
        const MomentMap& moments() const override { return mm_; }
        const ControlSet& controls() const override { return U_; }
        Jet blank(int n, int order) const {
            Jet j;
            j.v = Vec::Zero(n);
            if (order >= 1) { j.x = Mat::Zero(n, 1); j.m = Mat::Zero(n, 1); }
            if (order >= 2) { j.xx = Mat::Zero(n, 1); j.xm = Mat::Zero(n, 1); j.mm = Mat::Zero(n, 1); }
            return j;
        }
        Jet drift(double, const Vec& x, const Vec&, double u, int o) const override {
            Jet j = blank(1, o);
            j.v(0) = x(0) * u;
            if (o >= 1) j.x(0, 0) = u;
            return j;
        }
        Jet diffusion(double, const Vec&, const Vec&, double, int o) const override {
            Jet j = blank(1, o);
            j.v(0) = 1;
            return j;
        }
        Jet running(double, const Vec&, const Vec&, double u, int o) const override {
            Jet j = blank(1, o);
            j.v(0) = 0.5 * u * u;
            return j;
        }
        Jet terminal(const Vec&, const Vec&, int o) const override { return blank(1, o); }
    private:
        MomentMap mm_;
        ControlSet U_;
    } toy;
    Vec x = Vec::Constant(1, 2.0), m = Vec::Zero(1), p = Vec::Constant(1, 3.0);
    Mat q = Mat::Constant(1, 1, 0.5);
    HamiltonianEval h = hamiltonian(toy, 0, x, m, 1.0, p, q);
    EXPECT_DOUBLE_EQ(h.value, 2 * 3 + 0.5 + 0.5);
    EXPECT_DOUBLE_EQ(h.H_x(0), 3.0);
    EXPECT_EQ(h.H_xx(0, 0), 0.0);
    EXPECT_THROW(hamiltonian(toy, 0, x, m, 6.0, p, q), ControlError);
}

TEST(Hamiltonian, LinearityInAdjoints) {
    ParametricModel model(tp3_params());
    Vec x = Vec::Constant(1, 0.4), m(2);
    m << 0.2, 0.5;
    Vec p = Vec::Constant(1, -1.3);
    Mat q = Mat::Constant(1, 1, 0.8);
    HamiltonianEval h = hamiltonian(model, 0.1, x, m, 0.3, p, q);
    double A = model.drift(0.1, x, m, 0.3, 0).v(0);
    double B = model.diffusion(0.1, x, m, 0.3, 0).v(0);
    double f = model.running(0.1, x, m, 0.3, 0).v(0);
    EXPECT_NEAR(h.value, A * p(0) + B * q(0, 0) + f, 1e-15);
}

TEST(ModelDerivatives, AllPresetsMatchFiniteDifferences) {
    for (std::string id : {"TP1", "TP2", "TP3", "sharp"}) {
        for (int d : {1, 2}) {
            ModelParams p = preset_params(id);
            p.d = d;
            p.gamma = 0.4;
            p.lambda = 0.3;
            p.w = 0.2;
            p.sigma_x = 0.1;
            p.sigma_m = 0.2;
            p.tau = 0.15;
            p.c2 = 0.1;
            p.cxm = 0.2;
            ParametricModel model(p);
            auto errs = check_model_derivatives(model, 100, 1e-4, 11);
            EXPECT_FALSE(errs.empty());
            for (auto& [name, e] : errs) EXPECT_LE(e, 1e-5) << id << " d=" << d << " " << name;
        }
    }
}

TEST(ControlSet, MembershipAndGrid) {
    ControlSet f = ControlSet::finite({-1, 1});
    EXPECT_TRUE(f.contains(1));
    EXPECT_FALSE(f.contains(0));
    ControlSet I = ControlSet::interval(-2, 2, 5);
    EXPECT_EQ(I.grid(), (std::vector<double>{-2, -1, 0, 1, 2}));
    EXPECT_FALSE(I.contains(2.5));
    EXPECT_THROW(preset_params("nope"), ConfigError);
}
