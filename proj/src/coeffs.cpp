#include "mfp/coeffs.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "mfp/errors.hpp"

namespace mfp {

ControlSet ControlSet::finite(std::vector<double> pts) {
    if (pts.empty()) throw ArgumentError("finite control set needs at least one point");
    ControlSet U;
    U.kind = Kind::Finite;
    U.points = std::move(pts);
    return U;
}

ControlSet ControlSet::interval(double lo, double hi, int grid_points) {
    if (!(lo <= hi)) throw ArgumentError("control interval with lo > hi");
    if (grid_points < 1) throw ArgumentError("control grid needs at least one point");
    ControlSet U;
    U.kind = Kind::Interval;
    U.lo = lo;
    U.hi = hi;
    U.grid_points = grid_points;
    return U;
}

bool ControlSet::contains(double u, double tol) const {
    if (!std::isfinite(u)) return false;
    if (kind == Kind::Interval) return u >= lo - tol && u <= hi + tol;
    for (double p : points)
        if (std::abs(p - u) <= tol * std::max(1.0, std::abs(p))) return true;
    return false;
}

std::vector<double> ControlSet::grid() const {
    if (kind == Kind::Finite) return points;
    if (!std::isfinite(lo) || !std::isfinite(hi))
        throw ArgumentError("unbounded control interval has no grid");
    std::vector<double> g(grid_points);
    for (int i = 0; i < grid_points; ++i)
        g[i] = grid_points == 1 ? lo : lo + (hi - lo) * i / (grid_points - 1);
    return g;
}

Mat Jet::xx_of(int r, int d) const {
    Mat out(d, d);
    for (int b = 0; b < d; ++b)
        for (int a = 0; a < d; ++a) out(a, b) = xx(r, a + d * b);
    return out;
}

Mat Jet::xm_of(int r, int d, int K) const {
    Mat out(d, K);
    for (int k = 0; k < K; ++k)
        for (int a = 0; a < d; ++a) out(a, k) = xm(r, a + d * k);
    return out;
}

Mat Jet::mm_of(int r, int K) const {
    Mat out(K, K);
    for (int l = 0; l < K; ++l)
        for (int k = 0; k < K; ++k) out(k, l) = mm(r, k + K * l);
    return out;
}

Mat CoefficientModel::diffusion_matrix(double t, const Vec& x, const Vec& m, double u) const {
    int d = dim();
    Jet B = diffusion(t, x, m, u, 0);
    return Eigen::Map<const Mat>(B.v.data(), d, d);
}

Mat jet_mu(const Jet& j, const MomentMap& mm, int r, const Vec& y) {
    return j.m.row(r) * mm.dpsi(y);
}

Mat jet_mu_all(const Jet& j, const MomentMap& mm, const Vec& y) {
    return j.m * mm.dpsi(y);
}

Mat jet_ymu(const Jet& j, const MomentMap& mm, int r, const Vec& y) {
    Mat out = Mat::Zero(mm.d, mm.d);
    if (mm.linear) return out;
    for (int k = 0; k < mm.K; ++k)
        if (j.m(r, k) != 0.0) out += j.m(r, k) * mm.d2psi(y, k);
    return out;
}

Mat jet_xmu(const Jet& j, const MomentMap& mm, int r, const Vec& y) {
    return j.xm_of(r, mm.d, mm.K) * mm.dpsi(y);
}

Mat jet_mumu(const Jet& j, const MomentMap& mm, int r, const Vec& y, const Vec& z) {
    return mm.dpsi(y).transpose() * j.mm_of(r, mm.K) * mm.dpsi(z);
}

Vec HamiltonianEval::mu(const MomentMap& mm, const Vec& y) const {
    return mm.dpsi(y).transpose() * H_m;
}

Mat HamiltonianEval::xmu(const MomentMap& mm, const Vec& y) const {
    return H_xm * mm.dpsi(y);
}

Mat HamiltonianEval::ymu(const MomentMap& mm, const Vec& y) const {
    Mat out = Mat::Zero(mm.d, mm.d);
    if (mm.linear) return out;
    for (int k = 0; k < mm.K; ++k)
        if (H_m(k) != 0.0) out += H_m(k) * mm.d2psi(y, k);
    return out;
}

Mat HamiltonianEval::mumu(const MomentMap& mm, const Vec& y, const Vec& z) const {
    return mm.dpsi(y).transpose() * H_mm * mm.dpsi(z);
}

HamiltonianEval hamiltonian_from_jets(const Jet& A, const Jet& B, const Jet& f, const Vec& p,
                                      const Mat& q, int d, int K) {
    Eigen::Map<const Vec> vq(q.data(), d * d);
    HamiltonianEval H;
    H.value = A.v.dot(p) + B.v.dot(vq) + f.v(0);
    if (A.x.size() == 0) return H;
    H.H_x = A.x.transpose() * p + B.x.transpose() * vq + f.x.row(0).transpose();
    H.H_m = A.m.transpose() * p + B.m.transpose() * vq + f.m.row(0).transpose();
    if (A.xx.size() == 0) return H;
    Eigen::RowVectorXd xx = p.transpose() * A.xx + vq.transpose() * B.xx + f.xx.row(0);
    Eigen::RowVectorXd xm = p.transpose() * A.xm + vq.transpose() * B.xm + f.xm.row(0);
    Eigen::RowVectorXd mmv = p.transpose() * A.mm + vq.transpose() * B.mm + f.mm.row(0);
    H.H_xx = Eigen::Map<const Mat>(xx.data(), d, d);
    H.H_xm = Eigen::Map<const Mat>(xm.data(), d, K);
    H.H_mm = Eigen::Map<const Mat>(mmv.data(), K, K);
    return H;
}

HamiltonianEval hamiltonian(const CoefficientModel& model, double t, const Vec& x, const Vec& m,
                            double u, const Vec& p, const Mat& q, int order) {
    int d = model.dim();
    if (x.size() != d || p.size() != d || q.rows() != d || q.cols() != d || m.size() != model.K())
        throw DimensionError("hamiltonian: argument dimensions do not match the model");
    if (!model.controls().contains(u)) throw ControlError("hamiltonian: control point outside U");
    return hamiltonian_from_jets(model.drift(t, x, m, u, order), model.diffusion(t, x, m, u, order),
                                 model.running(t, x, m, u, order), p, q, d, model.K());
}

namespace {

void check_states(const Mat& states, int d) {
    if (states.rows() == 0) throw DimensionError("empty ensemble");
    if (states.cols() != d) throw DimensionError("state dimension mismatch");
    if (!states.allFinite()) throw NumericError("non-finite particle state");
}

} // namespace

Mat lions_derivative(const MomentFunctional& phi, const Mat& states, const Vec& y) {
    check_states(states, phi.psi.d);
    if (!y.allFinite()) throw NumericError("non-finite evaluation point");
    Vec m = empirical_moments(states, phi.psi);
    return phi.dF(m).transpose() * phi.psi.dpsi(y);
}

double check_lions_fd(const MomentFunctional& phi, const Mat& states, const Mat& direction, double h) {
    if (!(h > 0)) throw ArgumentError("check_lions_fd: step must be positive");
    check_states(states, phi.psi.d);
    if (direction.rows() != states.rows() || direction.cols() != states.cols())
        throw DimensionError("check_lions_fd: direction shape mismatch");
    Vec m = empirical_moments(states, phi.psi);
    Vec g = phi.dF(m);
    double analytic = 0;
    for (Eigen::Index i = 0; i < states.rows(); ++i) {
        Vec x = states.row(i).transpose();
        analytic += (g.transpose() * phi.psi.dpsi(x) * direction.row(i).transpose())(0);
    }
    analytic /= double(states.rows());
    double fd = (phi(states + h * direction) - phi(states - h * direction)) / (2 * h);
    return std::abs(analytic - fd) / std::max(1.0, std::abs(fd));
}

TaylorTerms taylor_expand_measure(const MomentFunctional& phi, const Mat& base, const Mat& next) {
    if (base.rows() != next.rows() || base.cols() != next.cols())
        throw DimensionError("taylor_expand_measure: ensembles differ in shape");
    check_states(base, phi.psi.d);
    const MomentMap& mm = phi.psi;
    int N = int(base.rows());
    Mat eta = next - base;
    Vec m = empirical_moments(base, mm);
    Vec g = phi.dF(m);
    Mat G2 = phi.d2F(m);

    std::vector<Mat> J(N);
    std::vector<Vec> a(N);  // Dpsi(x_i) eta_i
    TaylorTerms t;
    double e2 = 0, e3 = 0;
    for (int i = 0; i < N; ++i) {
        Vec x = base.row(i).transpose();
        Vec e = eta.row(i).transpose();
        J[i] = mm.dpsi(x);
        a[i] = J[i] * e;
        t.first += g.dot(a[i]);
        if (!mm.linear) {
            double s = 0;
            for (int k = 0; k < mm.K; ++k) s += g(k) * e.dot(mm.d2psi(x, k) * e);
            t.second_y += s;
        }
        double n2 = e.squaredNorm();
        e2 += n2;
        e3 += n2 * std::sqrt(n2);
    }
    // double-copy term as the plain N x N pair average
    double pair = 0;
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) pair += a[j].dot(G2 * a[i]);
    t.first /= N;
    t.second_y *= 0.5 / N;
    t.second_mixed = 0.5 * pair / (double(N) * N);
    e2 /= N;
    e3 /= N;
    t.moment_bound = std::pow(e2, 1.5) + e3;
    t.remainder = phi(next) - phi(base) - t.first - t.second_mixed - t.second_y;
    return t;
}

namespace {

using JetFn = std::function<Jet(const Vec&, const Vec&, int)>;

double rel(double a, double f) { return std::abs(a - f) / std::max(1.0, std::abs(f)); }

void fd_family(const std::string& name, const JetFn& fn, const Vec& x, const Vec& m,
               const MomentMap& mm, double h, std::map<std::string, double>& out) {
    int d = int(x.size()), K = int(m.size());
    Jet j = fn(x, m, 2);
    int n = int(j.v.size());
    auto upd = [&](const std::string& key, double e) {
        double& slot = out[name + key];
        slot = std::max(slot, e);
    };
    for (int b = 0; b < d; ++b) {
        Vec xp = x, xn = x;
        xp(b) += h;
        xn(b) -= h;
        Jet jp = fn(xp, m, 2), jn = fn(xn, m, 2);
        for (int r = 0; r < n; ++r) {
            upd("_x", rel(j.x(r, b), (jp.v(r) - jn.v(r)) / (2 * h)));
            for (int a = 0; a < d; ++a)
                upd("_xx", rel(j.xx(r, a + d * b), (jp.x(r, a) - jn.x(r, a)) / (2 * h)));
            // d/dx of the measure gradient must agree with xm (Schwarz)
            for (int k = 0; k < K; ++k)
                upd("_xmu_schwarz", rel(j.xm(r, b + d * k), (jp.m(r, k) - jn.m(r, k)) / (2 * h)));
        }
        // y-derivative of the Lions derivative at the point x itself
        Mat Mp = jet_mu_all(j, mm, xp), Mn = jet_mu_all(j, mm, xn);
        for (int r = 0; r < n; ++r) {
            Mat Y = jet_ymu(j, mm, r, x);
            for (int a = 0; a < d; ++a) upd("_ymu", rel(Y(a, b), (Mp(r, a) - Mn(r, a)) / (2 * h)));
        }
    }
    for (int k = 0; k < K; ++k) {
        Vec mp = m, mn = m;
        mp(k) += h;
        mn(k) -= h;
        Jet jp = fn(x, mp, 2), jn = fn(x, mn, 2);
        for (int r = 0; r < n; ++r) {
            upd("_mu", rel(j.m(r, k), (jp.v(r) - jn.v(r)) / (2 * h)));
            for (int a = 0; a < d; ++a)
                upd("_xmu", rel(j.xm(r, a + d * k), (jp.x(r, a) - jn.x(r, a)) / (2 * h)));
            for (int l = 0; l < K; ++l)
                upd("_mumu", rel(j.mm(r, l + K * k), (jp.m(r, l) - jn.m(r, l)) / (2 * h)));
        }
    }
}

} // namespace

std::map<std::string, double> check_model_derivatives(const CoefficientModel& model, int points,
                                                      double step, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    int d = model.dim(), K = model.K();
    const MomentMap& mm = model.moments();
    std::vector<double> ugrid;
    const ControlSet& U = model.controls();
    if (U.kind == ControlSet::Kind::Finite || (std::isfinite(U.lo) && std::isfinite(U.hi)))
        ugrid = U.grid();
    else
        ugrid = {-1.0, 0.0, 1.0};
    std::map<std::string, double> out;
    for (int p = 0; p < points; ++p) {
        Vec x(d), m(K);
        for (int a = 0; a < d; ++a) x(a) = unif(rng);
        for (int k = 0; k < K; ++k) m(k) = unif(rng);
        double t = 0.5 * (unif(rng) + 2.0);
        double u = ugrid[std::size_t(p) % ugrid.size()];
        fd_family("A", [&](const Vec& xx, const Vec& mv, int o) { return model.drift(t, xx, mv, u, o); },
                  x, m, mm, step, out);
        fd_family("B", [&](const Vec& xx, const Vec& mv, int o) { return model.diffusion(t, xx, mv, u, o); },
                  x, m, mm, step, out);
        fd_family("f", [&](const Vec& xx, const Vec& mv, int o) { return model.running(t, xx, mv, u, o); },
                  x, m, mm, step, out);
        fd_family("g", [&](const Vec& xx, const Vec& mv, int o) { return model.terminal(xx, mv, o); },
                  x, m, mm, step, out);
    }
    return out;
}

} // namespace mfp
