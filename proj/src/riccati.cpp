#include "mfp/riccati.hpp"

#include <cmath>

#include "mfp/errors.hpp"

namespace mfp {

std::vector<double> rk4_backward(const std::function<double(double, double)>& F, double yT, double T, int steps) {
    if (steps < 1) throw ArgumentError("rk4 needs at least one step");
    std::vector<double> y(steps + 1);
    double h = T / steps;
    y[steps] = yT;
    for (int n = steps; n > 0; --n) {
        double t = n * h, v = y[n];
        double k1 = F(t, v);
        double k2 = F(t - h / 2, v - h / 2 * k1);
        double k3 = F(t - h / 2, v - h / 2 * k2);
        double k4 = F(t - h, v - h * k3);
        y[n - 1] = v - h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return y;
}

namespace {

double interp(const std::vector<double>& y, double T, double t) {
    int n = int(y.size()) - 1;
    double s = std::clamp(t / T, 0.0, 1.0) * n;
    int i = std::min(int(s), n - 1);
    double w = s - i;
    return (1 - w) * y[i] + w * y[i + 1];
}

} // namespace

double RiccatiSolution::eta_at(double t) const { return interp(eta, T, t); }
double RiccatiSolution::pi_at(double t) const { return interp(pi, T, t); }

double RiccatiSolution::value(const Vec& x0) const {
    double h = T / steps, acc = 0;
    for (int n = 0; n < steps; ++n) acc += 0.5 * h * (eta[n] + eta[n + 1]);
    const ModelParams& p = params;
    return 0.5 * pi[0] * x0.squaredNorm() + 0.5 * p.d * p.sigma * p.sigma * acc;
}

ControlLaw RiccatiSolution::feedback(double shift) const {
    RiccatiSolution self = *this;
    double k = params.b / params.r;
    int d = params.d;
    if (d != 1) throw ArgumentError("scalar control feedback needs d = 1");
    return ControlLaw::feedback([self, k, shift](double t, const Vec& x, const Vec& m) {
        double e = self.eta_at(t), pv = self.pi_at(t);
        return -k * (e * (x(0) - m(0)) + pv * m(0)) + shift;
    });
}

RiccatiSolution solve_mflq_riccati(const ModelParams& p, double T, int steps) {
    if (p.kappa != 0 || p.kappa2 != 0 || p.gamma != 0 || p.lambda != 0 || p.w != 0 || p.sigma_u != 0 ||
        p.sigma_x != 0 || p.sigma_m != 0 || p.tau != 0 || p.c2 != 0 || p.cxm != 0 || p.s2 != 0 || p.s22 != 0)
        throw ArgumentError("Riccati oracle needs a linear-quadratic model without extra terms");
    if (!(p.r > 0)) throw ArgumentError("Riccati oracle needs r > 0");
    RiccatiSolution s;
    s.params = p;
    s.T = T;
    s.steps = steps;
    double q = p.b * p.b / p.r;
    s.eta = rk4_backward([&](double, double e) { return -2 * p.a * e + q * e * e - p.c; }, p.s, T, steps);
    s.pi = rk4_backward([&](double, double v) { return -2 * (p.a + p.abar) * v + q * v * v - (p.c + p.cbar); },
                        p.s + p.sbar, T, steps);
    return s;
}

} // namespace mfp
