#include "mfp/moments.hpp"

#include <cmath>
#include <random>

#include "mfp/errors.hpp"

namespace mfp {

MomentMap MomentMap::identity(int d) {
    MomentMap mm;
    mm.d = d;
    mm.K = d;
    mm.linear = true;
    mm.psi = [](const Vec& x) { return x; };
    mm.dpsi = [d](const Vec&) { return Mat(Mat::Identity(d, d)); };
    mm.d2psi = [d](const Vec&, int) { return Mat(Mat::Zero(d, d)); };
    return mm;
}

MomentMap MomentMap::squares(int d) {
    MomentMap mm;
    mm.d = d;
    mm.K = d;
    mm.psi = [](const Vec& x) { return Vec(x.array().square()); };
    mm.dpsi = [](const Vec& x) { return Mat((2.0 * x).asDiagonal()); };
    mm.d2psi = [d](const Vec&, int k) {
        Mat h = Mat::Zero(d, d);
        h(k, k) = 2.0;
        return h;
    };
    return mm;
}

MomentMap MomentMap::first_second(int d) {
    MomentMap mm;
    mm.d = d;
    mm.K = d + 1;
    mm.psi = [d](const Vec& x) {
        Vec v(d + 1);
        v.head(d) = x;
        v(d) = x.squaredNorm();
        return v;
    };
    mm.dpsi = [d](const Vec& x) {
        Mat j = Mat::Zero(d + 1, d);
        j.topRows(d).setIdentity();
        j.row(d) = 2.0 * x.transpose();
        return j;
    };
    mm.d2psi = [d](const Vec&, int k) {
        if (k < d) return Mat(Mat::Zero(d, d));
        return Mat(2.0 * Mat::Identity(d, d));
    };
    return mm;
}

Vec empirical_moments(const Mat& states, const MomentMap& mm) {
    if (states.rows() == 0) throw DimensionError("empirical_moments: empty ensemble");
    if (states.cols() != mm.d) throw DimensionError("empirical_moments: state dimension mismatch");
    Vec m = Vec::Zero(mm.K);
    for (Eigen::Index i = 0; i < states.rows(); ++i) m += mm.psi(states.row(i).transpose());
    return m / double(states.rows());
}

MomentCheck check_moment_map(const MomentMap& mm, int points, double step, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    MomentCheck out;
    auto rel = [](double a, double f) { return std::abs(a - f) / std::max(1.0, std::abs(f)); };
    for (int p = 0; p < points; ++p) {
        Vec x(mm.d);
        for (int a = 0; a < mm.d; ++a) x(a) = unif(rng);
        Mat J = mm.dpsi(x);
        for (int b = 0; b < mm.d; ++b) {
            Vec xp = x, xm = x;
            xp(b) += step;
            xm(b) -= step;
            Vec fd = (mm.psi(xp) - mm.psi(xm)) / (2 * step);
            Mat Jp = mm.dpsi(xp), Jm = mm.dpsi(xm);
            for (int k = 0; k < mm.K; ++k) {
                out.dpsi_err = std::max(out.dpsi_err, rel(J(k, b), fd(k)));
                Mat H = mm.d2psi(x, k);
                for (int a = 0; a < mm.d; ++a) {
                    double fd2 = (Jp(k, a) - Jm(k, a)) / (2 * step);
                    out.d2psi_err = std::max(out.d2psi_err, rel(H(a, b), fd2));
                }
            }
        }
    }
    return out;
}

double MomentFunctional::operator()(const Mat& states) const {
    return F(empirical_moments(states, psi));
}

} // namespace mfp
