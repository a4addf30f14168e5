#include "mfp/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mfp/errors.hpp"
#include "mfp/parallel.hpp"

namespace mfp {

namespace {

double frob(const Mat& a, const Mat& b) { return a.cwiseProduct(b).sum(); }

double mean(const Vec& v) { return v.size() ? v.mean() : 0.0; }

double stderr_of(const Vec& v, double n_eff) {
    if (v.size() < 2) return 0.0;
    double m = v.mean();
    double var = (v.array() - m).square().sum() / double(v.size() - 1);
    return std::sqrt(var / n_eff);
}

// Coefficients along the base path at step k plus the spike increments (order 1).
struct VarStep {
    StepCoefficients c;
    std::vector<Jet> dA, dB;
    std::vector<double> df;
    bool spike = false;
};

VarStep var_step(const CoefficientModel& model, const VariationalBundle& b, int k, int order) {
    const ParticleEnsemble& e = b.base;
    VarStep s;
    s.c = step_coefficients(model, e, b.alpha, k, order);
    s.spike = b.in_spike(k);
    if (!s.spike) return s;
    int N = e.N;
    s.dA.resize(N);
    s.dB.resize(N);
    s.df.resize(N);
    double t = e.grid.t(k);
    parallel_for(N, [&](int i) {
        Vec x = e.state(i, k);
        double u = b.beta(i, k);
        Jet A = model.drift(t, x, e.m[k], u, 1), B = model.diffusion(t, x, e.m[k], u, 1);
        Jet f = model.running(t, x, e.m[k], u, 0);
        const Jet& A0 = s.c.A[i];
        const Jet& B0 = s.c.B[i];
        s.dA[i].v = A.v - A0.v;
        s.dA[i].x = A.x - A0.x;
        s.dA[i].m = A.m - A0.m;
        s.dB[i].v = B.v - B0.v;
        s.dB[i].x = B.x - B0.x;
        s.dB[i].m = B.m - B0.m;
        s.df[i] = f.v(0) - s.c.f[i].v(0);
    });
    return s;
}

Mat fm_bar(const StepCoefficients& c) {
    Mat acc = Mat::Zero(1, c.f[0].m.cols());
    for (const Jet& f : c.f) acc += f.m;
    return acc / double(c.f.size());
}

void check_bundle(const VariationalBundle& b, const FirstOrderAdjoint& first) {
    int M = b.base.grid.M;
    if (int(first.p.size()) != M + 1 || int(first.q.size()) != M || first.p[0].rows() != b.base.N)
        throw ArgumentError("adjoint does not belong to the bundle's base ensemble");
    if (int(b.Y.size()) != M + 1) throw ArgumentError("bundle has no first variation");
}

void finish(DualityResidual& r, const Vec& lhs, const Vec& rhs, const Vec& cv, const Vec& full, const Vec& quad,
            double n_eff) {
    r.lhs = mean(lhs);
    r.rhs = mean(rhs);
    Vec diff = lhs - rhs;
    r.residual = mean(diff);
    r.paired_stderr = stderr_of(diff, n_eff);
    r.cv_residual = mean(cv);
    r.cv_stderr = stderr_of(cv, n_eff);
    r.full_rhs = mean(full);
    Vec fd = lhs - full;
    r.full_residual = mean(fd);
    r.full_stderr = stderr_of(fd, n_eff);
    r.spike_quadratic = mean(quad);
    r.spike_quadratic_stderr = stderr_of(quad, n_eff);
    r.noise = diff - cv;
}

// values at u of H, with q as a d x d matrix
double ham_value(const CoefficientModel& model, double t, const Vec& x, const Vec& m, double u, const Vec& p,
                 const Mat& q) {
    return hamiltonian(model, t, x, m, u, p, q, 0).value;
}

} // namespace

bool DualityResidual::within(double rel, double k) const {
    return std::abs(residual) <= k * paired_stderr + rel * std::abs(lhs);
}

CostEstimate cost_functional(const CoefficientModel& model, const ParticleEnsemble& e) {
    int N = e.N, M = e.grid.M;
    double dt = e.grid.dt();
    if (e.u.rows() != N || e.u.cols() != M) throw DimensionError("ensemble carries no control table");
    CostEstimate c;
    c.per_particle = Vec::Zero(N);
    parallel_for(N, [&](int i) {
        double acc = 0;
        for (int k = 0; k < M; ++k) {
            double u = e.u(i, k);
            double f0 = model.running(e.grid.t(k), e.state(i, k), e.m[k], u, 0).v(0);
            double f1 = model.running(e.grid.t(k + 1), e.state(i, k + 1), e.m[k + 1], u, 0).v(0);
            acc += 0.5 * dt * (f0 + f1);
        }
        acc += model.terminal(e.state(i, M), e.m[M], 0).v(0);
        c.per_particle(i) = acc;
    });
    if (!c.per_particle.allFinite()) throw NumericError("cost functional is not finite");
    c.value = c.per_particle.mean();
    c.stderr_ = stderr_of(c.per_particle, N);
    return c;
}

DualityResidual check_duality_pY(const CoefficientModel& model, const VariationalBundle& b,
                                 const FirstOrderAdjoint& first) {
    check_bundle(b, first);
    const ParticleEnsemble& e = b.base;
    const MomentMap& mm = model.moments();
    int N = e.N, M = e.grid.M;
    double dt = e.grid.dt();
    Vec lhs(N), rhs = Vec::Zero(N), cv = Vec::Zero(N);
    for (int k = 0; k < M; ++k) {
        VarStep s = var_step(model, b, k, 1);
        Vec nu = mean_dpsi(mm, e.X[k], b.Y[k]);
        Mat fm = fm_bar(s.c);
        parallel_for(N, [&](int i) {
            Vec y = b.Y[k].row(i).transpose(), p = first.p_at(i, k), Ep = first.Ep[k].row(i).transpose();
            Vec q = first.q[k].row(i).transpose();
            Mat Dpsi = mm.dpsi(e.state(i, k));
            double integrand = -(s.c.f[i].x.row(0).dot(y) + (fm * Dpsi * y)(0));
            Vec a = s.c.A[i].x * y + s.c.A[i].m * nu;
            Vec bb = s.c.B[i].x * y + s.c.B[i].m * nu;
            if (s.spike) {
                integrand += p.dot(s.dA[i].v) + q.dot(s.dB[i].v);
                a += s.dA[i].v;
                bb += s.dB[i].v;
            }
            double drift = Ep.dot(y + a * dt) + dt * q.dot(bb) - p.dot(y);
            rhs(i) += dt * integrand;
            cv(i) += drift - dt * integrand;
        });
    }
    for (int i = 0; i < N; ++i) lhs(i) = first.p_at(i, M).dot(b.Y[M].row(i).transpose());
    DualityResidual r;
    r.name = "pY";
    r.eps = b.spike.eps;
    finish(r, lhs, rhs, cv, rhs, Vec::Zero(N), N);
    return r;
}

DualityResidual check_duality_pZ(const CoefficientModel& model, const VariationalBundle& b,
                                 const FirstOrderAdjoint& first) {
    check_bundle(b, first);
    if (int(b.Z.size()) != b.base.grid.M + 1) throw ArgumentError("bundle has no second variation");
    const ParticleEnsemble& e = b.base;
    const MomentMap& mm = model.moments();
    int N = e.N, M = e.grid.M, d = e.d, K = model.K();
    double dt = e.grid.dt();
    Vec lhs(N), rhs = Vec::Zero(N), cv = Vec::Zero(N), full = Vec::Zero(N);
    for (int k = 0; k < M; ++k) {
        VarStep s = var_step(model, b, k, 2);
        Vec nuY = mean_dpsi(mm, e.X[k], b.Y[k]), nu2 = mean_quad(mm, e.X[k], b.Y[k]);
        Vec nuZ = mean_dpsi(mm, e.X[k], b.Z[k]);
        Mat fm = fm_bar(s.c);
        parallel_for(N, [&](int i) {
            Vec y = b.Y[k].row(i).transpose(), z = b.Z[k].row(i).transpose();
            Vec p = first.p_at(i, k), Ep = first.Ep[k].row(i).transpose(), q = first.q[k].row(i).transpose();
            const Jet& A = s.c.A[i];
            const Jet& B = s.c.B[i];
            Mat Dpsi = mm.dpsi(e.state(i, k));
            Vec srcA(d), srcB(d * d);
            for (int r = 0; r < d; ++r) srcA(r) = second_order_source(A, d, K, r, y, nuY, nu2);
            for (int r = 0; r < d * d; ++r) srcB(r) = second_order_source(B, d, K, r, y, nuY, nu2);
            double integrand = -(s.c.f[i].x.row(0).dot(z) + (fm * Dpsi * z)(0)) + p.dot(srcA) + q.dot(srcB);
            Vec a = A.x * z + A.m * nuZ + srcA;
            Vec bb = B.x * z + B.m * nuZ + srcB;
            double extra = 0;
            if (s.spike) {
                Vec eA = s.dA[i].x * y + s.dA[i].m * nuY, eB = s.dB[i].x * y + s.dB[i].m * nuY;
                a += eA;
                bb += eB;
                extra = p.dot(eA) + q.dot(eB);
            }
            double drift = Ep.dot(z + a * dt) + dt * q.dot(bb) - p.dot(z);
            rhs(i) += dt * integrand;
            full(i) += dt * (integrand + extra);
            cv(i) += drift - dt * integrand;
        });
    }
    for (int i = 0; i < N; ++i) lhs(i) = first.p_at(i, M).dot(b.Z[M].row(i).transpose());
    DualityResidual r;
    r.name = "pZ";
    r.eps = b.spike.eps;
    finish(r, lhs, rhs, cv, full, Vec::Zero(N), N);
    return r;
}

DualityResidual check_duality_PYY(const CoefficientModel& model, const VariationalBundle& b,
                                  const FirstOrderAdjoint& first, const SecondOrderAdjoint& second) {
    check_bundle(b, first);
    const ParticleEnsemble& e = b.base;
    int N = e.N, M = e.grid.M, d = e.d, K = model.K();
    if (int(second.P.size()) != M + 1 || second.P[0].rows() != N)
        throw ArgumentError("second adjoint does not belong to the bundle's base ensemble");
    const MomentMap& mm = model.moments();
    double dt = e.grid.dt();
    Vec lhs(N), rhs = Vec::Zero(N), cv = Vec::Zero(N), full = Vec::Zero(N), quad = Vec::Zero(N);
    for (int k = 0; k < M; ++k) {
        VarStep s = var_step(model, b, k, 1);
        std::vector<HamiltonianEval> H = hamiltonian_step(model, e, b.alpha, &first, k);
        Vec Hm = Vec::Zero(K);
        for (const auto& h : H) Hm += h.H_m / double(N);
        Vec nu = mean_dpsi(mm, e.X[k], b.Y[k]);
        parallel_for(N, [&](int i) {
            Vec y = b.Y[k].row(i).transpose(), x = e.state(i, k);
            Mat P = second.P_at(i, k), EP = vec_to_mat(second.EP[k].row(i).transpose(), d);
            std::vector<Mat> Q(d);
            for (int c = 0; c < d; ++c) Q[c] = second.Q_at(i, k, c);
            Mat Hyy = H[i].H_xx;
            if (!mm.linear)
                for (int kk = 0; kk < K; ++kk) Hyy += Hm(kk) * mm.d2psi(x, kk);
            Vec nuA = s.c.A[i].m * nu;
            Mat nuB = vec_to_mat(s.c.B[i].m * nu, d), BxY = vec_to_mat(s.c.B[i].x * y, d);
            double integrand = -y.dot(Hyy * y) +
                               frob(P, nuA * y.transpose() + y * nuA.transpose() + BxY * nuB.transpose() +
                                           nuB * nuB.transpose() + nuB * BxY.transpose());
            for (int c = 0; c < d; ++c)
                integrand += frob(Q[c], nuB.col(c) * y.transpose() + y * nuB.col(c).transpose());
            Vec a = s.c.A[i].x * y + nuA;
            Mat bm = BxY + nuB;
            double extra = 0;
            if (s.spike) {
                Vec dA = s.dA[i].v;
                Mat dB = vec_to_mat(s.dB[i].v, d);
                double dd = frob(P, dB * dB.transpose());
                integrand += dd;
                quad(i) += dt * dd;
                extra = frob(P, dA * y.transpose() + y * dA.transpose() + dB * bm.transpose() + bm * dB.transpose());
                for (int c = 0; c < d; ++c)
                    extra += frob(Q[c], dB.col(c) * y.transpose() + y * dB.col(c).transpose());
                a += dA;
                bm += dB;
            }
            Vec y1 = y + a * dt;
            double drift = y1.dot(EP * y1) - y.dot(P * y);
            for (int c = 0; c < d; ++c)
                drift += dt * (bm.col(c).dot(Q[c] * y1) + y1.dot(Q[c] * bm.col(c)) + bm.col(c).dot(EP * bm.col(c)));
            rhs(i) += dt * integrand;
            full(i) += dt * (integrand + extra);
            cv(i) += drift - dt * integrand;
        });
    }
    for (int i = 0; i < N; ++i) {
        Vec y = b.Y[M].row(i).transpose();
        lhs(i) = y.dot(second.P_at(i, M) * y);
    }
    DualityResidual r;
    r.name = "PYY";
    r.eps = b.spike.eps;
    finish(r, lhs, rhs, cv, full, quad, N);
    return r;
}

DualityResidual check_duality_third(const CoefficientModel& model, const VariationalBundle& b1,
                                    const VariationalBundle& b2, const AdjointSide& one, const AdjointSide& two,
                                    const ProductAdjoint& third, ThirdVariant variant, bool allow_shared_noise) {
    const ParticleEnsemble& e1 = b1.base;
    const ParticleEnsemble& e2 = b2.base;
    if (!allow_shared_noise && e1.seed == e2.seed && e1.stream_base == e2.stream_base)
        throw IndependenceError("duality with the independent copy needs independent noise");
    if (one.e->N != e1.N || two.e->N != e2.N || one.e->seed != e1.seed || two.e->seed != e2.seed ||
        one.e->stream_base != e1.stream_base || two.e->stream_base != e2.stream_base)
        throw ArgumentError("adjoint sides do not match the bundles");
    int N1 = e1.N, N2 = e2.N, M = e1.grid.M, d = e1.d;
    if (third.N1 != N1 || third.N2 != N2 || int(third.P.size()) != M + 1)
        throw ArgumentError("product adjoint does not match the bundles");
    const MomentMap& mm = model.moments();
    double dt = e1.grid.dt();
    int NP = N1 * N2;
    Vec lhs(NP), rhs = Vec::Zero(NP), cv = Vec::Zero(NP), full = Vec::Zero(NP), quad = Vec::Zero(NP);

    struct Side {
        std::vector<Vec> y, a, dA;
        std::vector<Mat> bm, dB;
        bool spike = false;
    };
    auto side = [&](const VariationalBundle& b, int k) {
        const ParticleEnsemble& e = b.base;
        VarStep s = var_step(model, b, k, 1);
        Vec nu = mean_dpsi(mm, e.X[k], b.Y[k]);
        Side o;
        o.spike = s.spike;
        int N = e.N;
        o.y.resize(N);
        o.a.resize(N);
        o.bm.resize(N);
        o.dA.assign(N, Vec::Zero(d));
        o.dB.assign(N, Mat::Zero(d, d));
        for (int i = 0; i < N; ++i) {
            o.y[i] = b.Y[k].row(i).transpose();
            o.a[i] = s.c.A[i].x * o.y[i] + s.c.A[i].m * nu;
            o.bm[i] = vec_to_mat(s.c.B[i].x * o.y[i] + s.c.B[i].m * nu, d);
            if (s.spike) {
                o.dA[i] = s.dA[i].v;
                o.dB[i] = vec_to_mat(s.dB[i].v, d);
            }
        }
        return o;
    };

    for (int k = 0; k < M; ++k) {
        Side s1 = side(b1, k), s2 = side(b2, k);
        PairSource src = pair_source(model, one, two, k, variant);
        parallel_for(N1, [&](int i) {
            for (int j = 0; j < N2; ++j) {
                int r = i * N2 + j;
                const Vec& y = s1.y[i];
                const Vec& yh = s2.y[j];
                Mat P = third.P_at(i, j, k), EP = vec_to_mat(third.EP[k].row(r).transpose(), d);
                double integrand = -y.dot(src.F(i, j) * yh);
                // assembled spike terms with the diffusion increments scaled by h
                auto extra_at = [&](double h) {
                    double v = 0;
                    if (s1.spike) v += s1.dA[i].dot(P * yh);
                    if (s2.spike) v += y.dot(P * s2.dA[j]);
                    for (int c = 0; c < d; ++c) {
                        if (s1.spike) v += h * s1.dB[i].col(c).dot(third.Q1_at(i, j, k, c) * yh);
                        if (s2.spike) v += h * y.dot(third.Q2_at(i, j, k, c) * s2.dB[j].col(c));
                    }
                    return v;
                };
                double e0 = extra_at(0.0), e1v = extra_at(1.0), e2v = extra_at(2.0);
                Vec a1 = s1.a[i] + s1.dA[i], a2 = s2.a[j] + s2.dA[j];
                Mat b1m = s1.bm[i] + s1.dB[i], b2m = s2.bm[j] + s2.dB[j];
                Vec y1 = y + a1 * dt, yh1 = yh + a2 * dt;
                double drift = y1.dot(EP * yh1) - y.dot(P * yh);
                for (int c = 0; c < d; ++c)
                    drift += dt * (b1m.col(c).dot(third.Q1_at(i, j, k, c) * yh1) +
                                   y1.dot(third.Q2_at(i, j, k, c) * b2m.col(c)));
                rhs(r) += dt * integrand;
                full(r) += dt * (integrand + e1v);
                quad(r) += dt * 0.5 * (e2v - 2 * e1v + e0);
                cv(r) += drift - dt * integrand;
            }
        });
    }
    for (int i = 0; i < N1; ++i)
        for (int j = 0; j < N2; ++j)
            lhs(i * N2 + j) =
                b1.Y[M].row(i).dot(third.P_at(i, j, M) * b2.Y[M].row(j).transpose());
    DualityResidual r;
    r.name = "PPYY";
    r.eps = b1.spike.eps;
    finish(r, lhs, rhs, cv, full, quad, std::min(N1, N2));
    return r;
}

ExpansionCheck check_expansion(const CoefficientModel& model, const VariationalBundle& b,
                               const FirstOrderAdjoint& first, const SecondOrderAdjoint& second) {
    check_bundle(b, first);
    if (int(b.Z.size()) != b.base.grid.M + 1) throw ArgumentError("bundle has no second variation");
    const ParticleEnsemble& e = b.base;
    const MomentMap& mm = model.moments();
    int N = e.N, M = e.grid.M, d = e.d, K = model.K();
    double dt = e.grid.dt();

    ExpansionCheck out;
    out.eps = b.spike.eps;
    CostEstimate J0 = cost_functional(model, e), J1 = cost_functional(model, b.spiked);
    Vec dJ = J1.per_particle - J0.per_particle;
    Vec rhs = Vec::Zero(N), taylor = Vec::Zero(N), first_form = Vec::Zero(N), second_form = Vec::Zero(N);

    AdjointSide side{&e, &b.alpha, &first, &second};
    for (int k = 0; k < M; ++k) {
        VarStep s = var_step(model, b, k, 2);
        std::vector<HamiltonianEval> H = hamiltonian_step(model, e, b.alpha, &first, k);
        Vec nu = mean_dpsi(mm, e.X[k], b.Y[k]), nu2 = mean_quad(mm, e.X[k], b.Y[k]);
        Vec nuZ = mean_dpsi(mm, e.X[k], b.Z[k]);
        Vec gap33(N), gap36(N);
        std::vector<Vec> Ry(N);
        PairSource src = pair_source(model, side, side, k, ThirdVariant::Plain);
        parallel_for(N, [&](int i) {
            Vec y = b.Y[k].row(i).transpose(), z = b.Z[k].row(i).transpose(), x = e.state(i, k);
            const Jet& f = s.c.f[i];
            double dH = 0, dBB = 0;
            Mat P = second.P_at(i, k);
            if (s.spike) {
                Mat q = first.q_at(i, k);
                Vec p = first.p_at(i, k);
                dH = ham_value(model, e.grid.t(k), x, e.m[k], b.beta(i, k), p, q) -
                     ham_value(model, e.grid.t(k), x, e.m[k], b.alpha(i, k), p, q);
                Mat dB = vec_to_mat(s.dB[i].v, d);
                dBB = 0.5 * frob(P, dB * dB.transpose());
            }
            double fterm = f.x.row(0).dot(y + z) + f.m.row(0).dot(nu + nuZ) +
                           second_order_source(f, d, K, 0, y, nu, nu2) + (s.spike ? s.df[i] : 0.0);
            const HamiltonianEval& h = H[i];
            double Hxm = y.dot(h.H_xm * nu), Hmm = 0.5 * nu.dot(h.H_mm * nu);
            double f35 = dH + 0.5 * y.dot(h.H_xx * y) + Hxm + 0.5 * h.H_m.dot(nu2) + Hmm;
            Vec nuA = s.c.A[i].m * nu;
            Mat nuB = vec_to_mat(s.c.B[i].m * nu, d), BxY = vec_to_mat(s.c.B[i].x * y, d);
            double Pterm = 0.5 * frob(P, nuA * y.transpose() + y * nuA.transpose() + BxY * nuB.transpose() +
                                              nuB * nuB.transpose() + nuB * BxY.transpose());
            for (int c = 0; c < d; ++c)
                Pterm += 0.5 * frob(second.Q_at(i, k, c), nuB.col(c) * y.transpose() + y * nuB.col(c).transpose());
            double f36 = dH + Hxm + Hmm + Pterm + dBB;
            taylor(i) += dt * fterm;
            first_form(i) += dt * f35;
            second_form(i) += dt * f36;
            rhs(i) += dt * (dH + dBB);
            gap33(i) = dH + dBB;
            gap36(i) = f36;
            Ry[i] = src.R[i] * y;
        });
        // 1/2 mean_ij y_i' F^{ij} y_j in factorized form
        Vec Lbar = Vec::Zero(K), Rbar = Vec::Zero(K);
        for (int i = 0; i < N; ++i) {
            Vec y = b.Y[k].row(i).transpose();
            Lbar += (y.transpose() * src.L[i]).transpose() / double(N);
            Rbar += Ry[i] / double(N);
        }
        double pair = 0.5 * (Lbar.dot(nu) + nu.dot(Rbar) + nu.dot(src.C * nu));
        out.cascade_gap = std::max(out.cascade_gap, std::abs(gap36.mean() - gap33.mean() - pair));
    }

    // terminal pieces
    {
        Vec nu = mean_dpsi(mm, e.X[M], b.Y[M]), nu2 = mean_quad(mm, e.X[M], b.Y[M]);
        Vec nuZ = mean_dpsi(mm, e.X[M], b.Z[M]);
        Vec t34(N), t35(N), t36(N), gxm_y(N);
        std::vector<Vec> Gy(N);
        Mat gmm = Mat::Zero(K, K);
        std::vector<Mat> gmm_i(N);
        parallel_for(N, [&](int i) {
            Vec y = b.Y[M].row(i).transpose(), z = b.Z[M].row(i).transpose();
            Jet g = model.terminal(e.state(i, M), e.m[M], 2);
            double quadp = second_order_source(g, d, K, 0, y, nu, nu2);
            Mat gxm = g.xm_of(0, d, K);
            gmm_i[i] = g.mm_of(0, K);
            t34(i) = g.x.row(0).dot(y + z) + g.m.row(0).dot(nu + nuZ) + quadp;
            t35(i) = quadp;
            t36(i) = y.dot(gxm * nu) + 0.5 * nu.dot(gmm_i[i] * nu);
            Gy[i] = gxm.transpose() * y;
        });
        Vec Gbar = Vec::Zero(K);
        for (int i = 0; i < N; ++i) {
            gmm += gmm_i[i] / double(N);
            Gbar += Gy[i] / double(N);
        }
        taylor += t34;
        first_form += t35;
        second_form += t36;
        double pair = 0.5 * (nu.dot(gmm * nu) + 2 * nu.dot(Gbar));
        out.cascade_gap = std::max(out.cascade_gap, std::abs(t36.mean() - pair));
    }

    out.lhs = dJ.mean();
    out.lhs_stderr = stderr_of(dJ, N);
    out.rhs = rhs.mean();
    Vec res = dJ - rhs;
    out.residual = res.mean();
    out.residual_stderr = stderr_of(res, N);
    out.residual_over_eps = out.eps > 0 ? out.residual / out.eps : 0.0;
    Vec noise = check_duality_pY(model, b, first).noise + check_duality_pZ(model, b, first).noise +
                0.5 * check_duality_PYY(model, b, first, second).noise;
    Vec rc = res - noise;
    out.cv_residual = rc.mean();
    out.cv_stderr = stderr_of(rc, N);
    out.cv_residual_over_eps = out.eps > 0 ? out.cv_residual / out.eps : 0.0;
    out.taylor = taylor.mean();
    out.after_first = first_form.mean();
    out.after_second = second_form.mean();
    return out;
}

std::vector<int> knot_subset(int M, int n) {
    if (n <= 0) throw ArgumentError("knot_subset needs n >= 1");
    std::vector<int> out;
    for (int j = 0; j < n; ++j) {
        int k = int(std::floor(double(j) * M / n));
        if (out.empty() || out.back() != k) out.push_back(k);
    }
    return out;
}

MaxPrincipleResult check_max_principle(const CoefficientModel& model, const ParticleEnsemble& e, const Mat& alpha,
                                       const FirstOrderAdjoint& first, const SecondOrderAdjoint& second,
                                       const Mat& center, const std::vector<double>& offsets,
                                       const std::vector<int>& steps) {
    if (offsets.empty()) throw ArgumentError("empty u grid");
    if (steps.empty()) throw ArgumentError("empty t grid");
    int N = e.N, M = e.grid.M;
    if (alpha.rows() != N || alpha.cols() != M || center.rows() != N || center.cols() != M)
        throw DimensionError("control tables do not match the ensemble");
    int U = int(offsets.size()), S = int(steps.size());
    for (int k : steps)
        if (k < 0 || k >= M) throw ArgumentError("max principle knot out of range");
    // V[s][u] holds one value per particle
    std::vector<std::vector<Vec>> V(S, std::vector<Vec>(U, Vec(N)));
    std::vector<double> range(N * S, 0.0);
    parallel_for(N, [&](int i) {
        for (int si = 0; si < S; ++si) {
            int k = steps[si];
            double t = e.grid.t(k);
            Vec x = e.state(i, k);
            Vec p = first.p_at(i, k);
            Mat q = first.q_at(i, k), P = second.P_at(i, k);
            double a = alpha(i, k);
            double H0 = ham_value(model, t, x, e.m[k], a, p, q);
            Mat B0 = model.diffusion_matrix(t, x, e.m[k], a);
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (int ui = 0; ui < U; ++ui) {
                double u = center(i, k) + offsets[ui];
                double H = ham_value(model, t, x, e.m[k], u, p, q);
                Mat dB = model.diffusion_matrix(t, x, e.m[k], u) - B0;
                V[si][ui](i) = H - H0 + 0.5 * frob(P, dB * dB.transpose());
                lo = std::min(lo, H);
                hi = std::max(hi, H);
            }
            range[i * S + si] = hi - lo;
        }
    });
    MaxPrincipleResult r;
    r.scale = std::max(1.0, *std::max_element(range.begin(), range.end()));
    r.min_value = std::numeric_limits<double>::infinity();
    r.table.resize(S * U, 6);
    auto quantile = [](std::vector<double> v, double q) {
        std::size_t n = std::size_t(std::floor(q * double(v.size() - 1)));
        std::nth_element(v.begin(), v.begin() + n, v.end());
        return v[n];
    };
    for (int si = 0; si < S; ++si)
        for (int ui = 0; ui < U; ++ui) {
            const Vec& v = V[si][ui];
            Eigen::Index arg;
            double mn = v.minCoeff(&arg);
            if (mn < r.min_value) {
                r.min_value = mn;
                r.worst_particle = int(arg);
                r.worst_step = steps[si];
                r.worst_u = center(arg, steps[si]) + offsets[ui];
            }
            std::vector<double> vals(v.data(), v.data() + v.size());
            r.table.row(si * U + ui) << e.grid.t(steps[si]), offsets[ui], mn, quantile(vals, 0.01),
                quantile(vals, 0.05), quantile(vals, 0.5);
        }
    return r;
}

bool VerificationReport::all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckRecord& c) { return c.pass; });
}

std::vector<std::string> VerificationReport::failing() const {
    std::vector<std::string> out;
    for (const auto& c : checks)
        if (!c.pass) out.push_back(c.name);
    return out;
}

} // namespace mfp
