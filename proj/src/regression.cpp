#include "mfp/regression.hpp"

#include <cmath>
#include <functional>

#include "mfp/errors.hpp"
#include "mfp/parallel.hpp"

namespace mfp {

std::vector<std::vector<int>> RegressionBasis::exponents(int dim, int degree) {
    std::vector<std::vector<int>> out;
    std::vector<int> e(dim, 0);
    // graded order: total degree 0, 1, 2, ...
    for (int tot = 0; tot <= degree; ++tot) {
        std::function<void(int, int)> rec = [&](int pos, int left) {
            if (pos == dim - 1) {
                e[pos] = left;
                out.push_back(e);
                return;
            }
            for (int v = left; v >= 0; --v) {
                e[pos] = v;
                rec(pos + 1, left - v);
            }
        };
        if (dim == 0) {
            if (tot == 0) out.push_back({});
            continue;
        }
        rec(0, tot);
    }
    return out;
}

Mat RegressionBasis::features(const Mat& z) const {
    auto ex = exponents(int(z.cols()), degree);
    Mat F(z.rows(), Eigen::Index(ex.size()));
    for (std::size_t c = 0; c < ex.size(); ++c) {
        for (Eigen::Index r = 0; r < z.rows(); ++r) {
            double v = 1;
            for (Eigen::Index a = 0; a < z.cols(); ++a)
                for (int p = 0; p < ex[c][a]; ++p) v *= z(r, a);
            F(r, Eigen::Index(c)) = v;
        }
    }
    return F;
}

Standardizer Standardizer::fit(const Mat& x) {
    Standardizer s;
    s.center = x.colwise().mean().transpose();
    s.scale = Vec::Ones(x.cols());
    for (Eigen::Index a = 0; a < x.cols(); ++a) {
        double sd = std::sqrt((x.col(a).array() - s.center(a)).square().mean());
        if (sd > 1e-12 * std::max(1.0, std::abs(s.center(a)))) s.scale(a) = sd;
    }
    return s;
}

Mat Standardizer::apply(const Mat& x) const {
    return (x.rowwise() - center.transpose()).array().rowwise() / scale.transpose().array();
}

namespace {

Mat ridge_solve(const Mat& F, const Mat& T, double ridge, int step) {
    if (F.rows() < F.cols())
        throw SolverError("regression is under-determined (" + std::to_string(F.rows()) + " samples, " +
                              std::to_string(F.cols()) + " features)",
                          step);
    Mat G = F.transpose() * F;
    double lam = ridge * G.trace() / double(G.cols());
    G.diagonal().array() += lam;
    Eigen::LDLT<Mat> ldlt(G);
    if (ldlt.info() != Eigen::Success) throw SolverError("regression normal equations are singular", step);
    Mat rhs = F.transpose() * T;
    Mat c = ldlt.solve(rhs);
    // iterated Tikhonov: removes the ridge bias along well-determined directions
    G.diagonal().array() -= lam;
    for (int it = 0; it < 2; ++it) c += ldlt.solve(rhs - G * c);
    if (!c.allFinite()) throw SolverError("regression produced non-finite coefficients", step);
    return c;
}

} // namespace

Mat ConditionalFit::operator()(const Mat& inputs) const {
    return basis.features(standardizer.apply(inputs)) * coef;
}

ConditionalFit regress_conditional(const Mat& targets, const Mat& inputs, const RegressionBasis& basis) {
    if (targets.rows() != inputs.rows()) throw DimensionError("targets and inputs differ in sample count");
    ConditionalFit f;
    f.basis = basis;
    f.standardizer = Standardizer::fit(inputs);
    Mat F = basis.features(f.standardizer.apply(inputs));
    f.coef = ridge_solve(F, targets, basis.ridge, -1);
    f.fitted = F * f.coef;
    f.residual = targets - f.fitted;
    return f;
}

Backend parse_backend(const std::string& s) {
    if (s == "deterministic") return Backend::Deterministic;
    if (s == "regression") return Backend::Regression;
    throw ArgumentError("unknown backend: " + s);
}

std::string to_string(Backend b) { return b == Backend::Deterministic ? "deterministic" : "regression"; }

namespace {

StepProjection project_deterministic(const Mat& T, const StepSamples& s) {
    int n = int(T.rows()), nout = int(T.cols()), D = int(s.next.cols()), L = int(s.dW.cols());
    Standardizer st = Standardizer::fit(s.next);
    RegressionBasis quad{2, 0.0};
    auto ex = RegressionBasis::exponents(D, 2);
    Mat F = quad.features(st.apply(s.next));
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(F);
    Mat coef = cod.solve(T);
    double scale = std::max(1.0, T.cwiseAbs().maxCoeff());
    double res = n > 0 ? (F * coef - T).cwiseAbs().maxCoeff() : 0.0;
    if (!(res <= 1e-8 * scale))
        throw SolverError("deterministic backend: target is not quadratic in the state (residual " +
                              std::to_string(res) + ")",
                          s.step);

    // unpack into intercept, gradient and symmetric quadratic form per output
    std::vector<double> c0(nout);
    Mat g = Mat::Zero(D, nout);
    std::vector<Mat> H(nout, Mat::Zero(D, D));
    for (std::size_t c = 0; c < ex.size(); ++c) {
        std::vector<int> idx;
        for (int a = 0; a < D; ++a)
            for (int p = 0; p < ex[c][a]; ++p) idx.push_back(a);
        for (int o = 0; o < nout; ++o) {
            double v = coef(Eigen::Index(c), o);
            if (idx.empty()) c0[o] = v;
            else if (idx.size() == 1) g(idx[0], o) = v;
            else if (idx[0] == idx[1]) H[o](idx[0], idx[0]) = v;
            else {
                H[o](idx[0], idx[1]) = 0.5 * v;
                H[o](idx[1], idx[0]) = 0.5 * v;
            }
        }
    }

    StepProjection out;
    out.E.resize(n, nout);
    out.Z.assign(L, Mat(n, nout));
    Vec inv = st.scale.cwiseInverse();
    parallel_for(n, [&](int r) {
        Vec z = (s.mean.row(r).transpose() - st.center).cwiseProduct(inv);
        Mat Sz = inv.asDiagonal() * s.S(r);
        Mat SS = Sz * Sz.transpose();
        for (int o = 0; o < nout; ++o) {
            Vec grad = g.col(o) + 2 * H[o] * z;
            out.E(r, o) = c0[o] + g.col(o).dot(z) + z.dot(H[o] * z) + s.dt * (H[o].cwiseProduct(SS)).sum();
            Vec zl = Sz.transpose() * grad;
            for (int l = 0; l < L; ++l) out.Z[l](r, o) = zl(l);
        }
    });
    return out;
}

StepProjection project_regression(const RegressionBasis& basis, const Mat& T, const StepSamples& s) {
    int n = int(T.rows()), L = int(s.dW.cols());
    Standardizer st = Standardizer::fit(s.cur);
    Mat phi = basis.features(st.apply(s.cur));
    int P = int(phi.cols());
    double sq = std::sqrt(s.dt);
    Mat F(n, P * (1 + L));
    F.leftCols(P) = phi;
    for (int l = 0; l < L; ++l)
        F.middleCols(P * (1 + l), P) = phi.array().colwise() * (s.dW.col(l).array() / sq);
    Mat c = ridge_solve(F, T, basis.ridge, s.step);
    StepProjection out;
    out.E = phi * c.topRows(P);
    out.Z.resize(L);
    for (int l = 0; l < L; ++l) out.Z[l] = phi * c.middleRows(P * (1 + l), P) / sq;
    return out;
}

} // namespace

StepProjection project_step(Backend backend, const RegressionBasis& basis, const Mat& targets,
                            const StepSamples& s) {
    if (targets.rows() != s.next.rows() || s.cur.rows() != s.next.rows() || s.mean.rows() != s.next.rows() ||
        s.dW.rows() != s.next.rows())
        throw DimensionError("step samples have inconsistent sizes");
    if (backend == Backend::Deterministic) return project_deterministic(targets, s);
    return project_regression(basis, targets, s);
}

} // namespace mfp
