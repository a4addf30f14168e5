#include "mfp/models.hpp"

#include <cmath>

#include "mfp/errors.hpp"

namespace mfp {

namespace {

Jet make_jet(int n, int d, int K, int order) {
    Jet j;
    j.v = Vec::Zero(n);
    if (order >= 1) {
        j.x = Mat::Zero(n, d);
        j.m = Mat::Zero(n, K);
    }
    if (order >= 2) {
        j.xx = Mat::Zero(n, d * d);
        j.xm = Mat::Zero(n, d * K);
        j.mm = Mat::Zero(n, K * K);
    }
    return j;
}

double sech2(double z) {
    double c = std::cosh(z);
    return 1.0 / (c * c);
}

double tanh2(double z) { return -2.0 * std::tanh(z) * sech2(z); }

} // namespace

ParametricModel::ParametricModel(ModelParams p) : p_(std::move(p)), mm_(MomentMap::first_second(p_.d)) {
    if (p_.d < 1) throw ArgumentError("model dimension must be positive");
}

Jet ParametricModel::drift(double, const Vec& x, const Vec& m, double u, int order) const {
    const int d = p_.d, K = d + 1;
    Jet j = make_jet(d, d, K, order);
    const double m2 = m(d);
    for (int i = 0; i < d; ++i) {
        int nb = (i + 1) % d;
        double xi = x(i), mi = m(i);
        j.v(i) = p_.a * xi + p_.abar * mi + p_.kappa * std::tanh(mi) + p_.kappa2 * std::tanh(m2) +
                 p_.b * u + p_.gamma * std::sin(xi) + p_.lambda * xi * mi + (d > 1 ? p_.w * x(nb) : 0.0);
        if (order < 1) continue;
        j.x(i, i) += p_.a + p_.gamma * std::cos(xi) + p_.lambda * mi;
        if (d > 1) j.x(i, nb) += p_.w;
        j.m(i, i) += p_.abar + p_.kappa * sech2(mi) + p_.lambda * xi;
        j.m(i, d) += p_.kappa2 * sech2(m2);
        if (order < 2) continue;
        j.xx(i, i + d * i) = -p_.gamma * std::sin(xi);
        j.xm(i, i + d * i) = p_.lambda;
        j.mm(i, i + K * i) += p_.kappa * tanh2(mi);
        j.mm(i, d + K * d) += p_.kappa2 * tanh2(m2);
    }
    return j;
}

Jet ParametricModel::diffusion(double, const Vec& x, const Vec& m, double u, int order) const {
    const int d = p_.d, K = d + 1;
    Jet j = make_jet(d * d, d, K, order);
    for (int k = 0; k < d; ++k)
        for (int i = 0; i < d; ++i) {
            int r = i + d * k;
            if (i == k) {
                j.v(r) = p_.sigma + p_.sigma_u * u + p_.sigma_x * x(i) + p_.sigma_m * m(i);
                if (order >= 1) {
                    j.x(r, i) = p_.sigma_x;
                    j.m(r, i) = p_.sigma_m;
                }
            } else {
                j.v(r) = p_.tau * x(k);
                if (order >= 1) j.x(r, k) = p_.tau;
            }
        }
    return j;
}

Jet ParametricModel::running(double, const Vec& x, const Vec& m, double u, int order) const {
    const int d = p_.d, K = d + 1;
    Jet j = make_jet(1, d, K, order);
    Vec m1 = m.head(d);
    j.v(0) = 0.5 * p_.r * u * u + 0.5 * p_.c * x.squaredNorm() + 0.5 * p_.cbar * m1.squaredNorm() +
             p_.c2 * m(d) + p_.cxm * x.dot(m1);
    if (order < 1) return j;
    j.x.row(0) = (p_.c * x + p_.cxm * m1).transpose();
    j.m.block(0, 0, 1, d) = (p_.cbar * m1 + p_.cxm * x).transpose();
    j.m(0, d) = p_.c2;
    if (order < 2) return j;
    for (int a = 0; a < d; ++a) {
        j.xx(0, a + d * a) = p_.c;
        j.xm(0, a + d * a) = p_.cxm;
        j.mm(0, a + K * a) = p_.cbar;
    }
    return j;
}

Jet ParametricModel::terminal(const Vec& x, const Vec& m, int order) const {
    const int d = p_.d, K = d + 1;
    Jet j = make_jet(1, d, K, order);
    Vec m1 = m.head(d);
    double m2 = m(d);
    j.v(0) = 0.5 * p_.s * x.squaredNorm() + 0.5 * p_.sbar * m1.squaredNorm() + p_.s2 * m2 +
             0.5 * p_.s22 * m2 * m2;
    if (order < 1) return j;
    j.x.row(0) = (p_.s * x).transpose();
    j.m.block(0, 0, 1, d) = (p_.sbar * m1).transpose();
    j.m(0, d) = p_.s2 + p_.s22 * m2;
    if (order < 2) return j;
    for (int a = 0; a < d; ++a) {
        j.xx(0, a + d * a) = p_.s;
        j.mm(0, a + K * a) = p_.sbar;
    }
    j.mm(0, d + K * d) = p_.s22;
    return j;
}

ModelParams tp1_params() {
    ModelParams p;
    p.label = "TP1";
    p.a = 0.2;
    p.abar = 0.3;
    p.b = 1.0;
    p.sigma = 0.3;
    p.r = 1.0;
    p.c = 1.0;
    p.cbar = 0.5;
    p.s = 1.0;
    p.sbar = 0.5;
    p.U = ControlSet::interval(-10.0, 10.0, 41);
    return p;
}

ModelParams tp2_params() {
    ModelParams p;
    p.label = "TP2";
    p.a = 0.3;
    p.abar = 0.2;
    p.b = 0.5;
    p.sigma_u = 0.5;
    p.r = 1.0;
    p.c = 1.0;
    p.cbar = 0.5;
    p.s = 1.0;
    p.sbar = 0.5;
    p.U = ControlSet::finite({-1.0, 1.0});
    return p;
}

ModelParams tp3_params() {
    ModelParams p;
    p.label = "TP3";
    p.a = 0.2;
    p.kappa = 0.8;
    p.kappa2 = 0.3;
    p.b = 1.0;
    p.sigma = 0.3;
    p.r = 1.0;
    p.c = 1.0;
    p.cbar = 0.5;
    p.s = 1.0;
    p.sbar = 0.5;
    p.s2 = 0.2;
    p.s22 = 0.3;
    p.U = ControlSet::interval(-10.0, 10.0, 41);
    return p;
}

ModelParams sharp_params() {
    ModelParams p;
    p.label = "sharp";
    p.a = 0.2;
    p.abar = 0.2;
    p.b = 0.3;
    p.gamma = 0.5;
    p.sigma = 0.3;
    p.sigma_u = 0.5;
    p.r = 1.0;
    p.c = 1.0;
    p.cbar = 0.5;
    p.s = 1.0;
    p.sbar = 0.5;
    p.U = ControlSet::interval(-2.0, 2.0, 41);
    return p;
}

ModelParams preset_params(const std::string& id) {
    if (id == "TP1" || id == "tp1") return tp1_params();
    if (id == "TP2" || id == "tp2") return tp2_params();
    if (id == "TP3" || id == "tp3") return tp3_params();
    if (id == "sharp") return sharp_params();
    if (id == "custom") return ModelParams{};
    throw ConfigError("unknown problem id '" + id + "'");
}

} // namespace mfp
