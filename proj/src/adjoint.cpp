#include "mfp/adjoint.hpp"

#include <cmath>

#include "mfp/errors.hpp"
#include "mfp/parallel.hpp"

namespace mfp {

Mat FirstOrderAdjoint::q_at(int i, int k) const {
    int d = int(p[0].cols());
    return vec_to_mat(q[k].row(i).transpose(), d);
}

Mat SecondOrderAdjoint::P_at(int i, int k) const {
    int d = int(std::lround(std::sqrt(double(P[0].cols()))));
    return vec_to_mat(P[k].row(i).transpose(), d);
}

Mat SecondOrderAdjoint::Q_at(int i, int k, int l) const {
    int d = int(std::lround(std::sqrt(double(P[0].cols()))));
    return vec_to_mat(Q[k][l].row(i).transpose(), d);
}

StepCoefficients step_coefficients(const CoefficientModel& model, const ParticleEnsemble& e, const Mat& alpha,
                                   int k, int order) {
    StepCoefficients c;
    c.A.resize(e.N);
    c.B.resize(e.N);
    c.f.resize(e.N);
    double t = e.grid.t(k);
    parallel_for(e.N, [&](int i) {
        Vec x = e.state(i, k);
        double u = alpha(i, k);
        c.A[i] = model.drift(t, x, e.m[k], u, order);
        c.B[i] = model.diffusion(t, x, e.m[k], u, order);
        c.f[i] = model.running(t, x, e.m[k], u, order);
    });
    return c;
}

StepSamples single_samples(const ParticleEnsemble& e, const StepCoefficients& c, int k) {
    int d = e.d;
    StepSamples s;
    s.cur = e.X[k];
    s.next = e.X[k + 1];
    s.mean.resize(e.N, d);
    for (int i = 0; i < e.N; ++i) {
        Mat B = vec_to_mat(c.B[i].v, d);
        s.mean.row(i) = e.X[k + 1].row(i) - (B * e.dW[k].row(i).transpose()).transpose();
    }
    s.S = [&c, d](int i) { return vec_to_mat(c.B[i].v, d); };
    s.dW = e.dW[k];
    s.dt = e.grid.dt();
    s.step = k;
    return s;
}

std::vector<HamiltonianEval> hamiltonian_step(const CoefficientModel& model, const ParticleEnsemble& e,
                                              const Mat& alpha, const FirstOrderAdjoint* first, int k) {
    int d = e.d, K = model.K();
    std::vector<HamiltonianEval> out(e.N);
    if (k == e.grid.M) {
        parallel_for(e.N, [&](int i) {
            Jet g = model.terminal(e.state(i, k), e.m[k], 2);
            HamiltonianEval& h = out[i];
            h.value = g.v(0);
            h.H_x = g.x.row(0).transpose();
            h.H_xx = g.xx_of(0, d);
            h.H_m = g.m.row(0).transpose();
            h.H_xm = g.xm_of(0, d, K);
            h.H_mm = g.mm_of(0, K);
        });
        return out;
    }
    StepCoefficients c = step_coefficients(model, e, alpha, k, 2);
    parallel_for(e.N, [&](int i) {
        Vec p = first ? first->p_at(i, k) : Vec::Zero(d);
        Mat q = first ? first->q_at(i, k) : Mat::Zero(d, d);
        out[i] = hamiltonian_from_jets(c.A[i], c.B[i], c.f[i], p, q, d, K);
    });
    return out;
}

Vec terminal_p(const CoefficientModel& model, const ParticleEnsemble& e, int i, const Vec& gm_bar) {
    int M = e.grid.M;
    Vec x = e.state(i, M);
    Jet g = model.terminal(x, e.m[M], 1);
    return g.x.row(0).transpose() + model.moments().dpsi(x).transpose() * gm_bar;
}

namespace {

void check_alpha(const ParticleEnsemble& e, const Mat& alpha) {
    if (alpha.rows() != e.N || alpha.cols() != e.grid.M)
        throw DimensionError("control table does not match the ensemble");
}

double max_abs(const Mat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

} // namespace

FirstOrderAdjoint solve_first_adjoint(const CoefficientModel& model, const ParticleEnsemble& base,
                                      const Mat& alpha, const AdjointOptions& opt) {
    check_alpha(base, alpha);
    int N = base.N, d = base.d, M = base.grid.M, K = model.K();
    const MomentMap& mm = model.moments();
    double dt = base.grid.dt();
    FirstOrderAdjoint a;
    a.p.assign(M + 1, Mat::Zero(N, d));
    a.q.assign(M, Mat::Zero(N, d * d));
    a.Ep.assign(M, Mat::Zero(N, d));

    {
        Vec gm = Vec::Zero(K);
        std::vector<Vec> gmi(N);
        parallel_for(N, [&](int i) { gmi[i] = model.terminal(base.state(i, M), base.m[M], 1).m.row(0).transpose(); });
        for (int i = 0; i < N; ++i) gm += gmi[i];
        gm /= N;
        parallel_for(N, [&](int i) { a.p[M].row(i) = terminal_p(model, base, i, gm).transpose(); });
    }

    for (int k = M - 1; k >= 0; --k) {
        StepCoefficients c = step_coefficients(model, base, alpha, k, 1);
        StepSamples s = single_samples(base, c, k);
        StepProjection pr = project_step(opt.backend, opt.basis, a.p[k + 1], s);
        a.Ep[k] = pr.E;
        for (int l = 0; l < d; ++l) a.q[k].middleCols(d * l, d) = pr.Z[l];

        // mean-field part: mean_j H_m^j depends on p_k^j, so sweep to a fixed point
        std::vector<Vec> Hm(N);
        std::vector<Vec> local(N);
        parallel_for(N, [&](int i) {
            Vec vq = a.q[k].row(i).transpose();
            local[i] = c.B[i].x.transpose() * vq + c.f[i].x.row(0).transpose();
        });
        Mat pk = pr.E;
        bool done = false;
        for (int sweep = 0; sweep < opt.max_sweeps && !done; ++sweep) {
            parallel_for(N, [&](int i) {
                Vec vq = a.q[k].row(i).transpose();
                Hm[i] = c.A[i].m.transpose() * pk.row(i).transpose() + c.B[i].m.transpose() * vq +
                        c.f[i].m.row(0).transpose();
            });
            Vec Hbar = Vec::Zero(K);
            for (int i = 0; i < N; ++i) Hbar += Hm[i];
            Hbar /= N;
            Mat next(N, d);
            parallel_for(N, [&](int i) {
                Vec x = base.state(i, k);
                Vec drv = c.A[i].x.transpose() * pk.row(i).transpose() + local[i] + mm.dpsi(x).transpose() * Hbar;
                next.row(i) = pr.E.row(i) + dt * drv.transpose();
            });
            double change = max_abs(next - pk);
            pk = next;
            done = change <= opt.sweep_tol * std::max(1.0, max_abs(pk));
        }
        if (!done) throw SolverError("first adjoint sweep did not converge", k);
        if (!pk.allFinite()) throw SolverError("first adjoint is not finite", k);
        a.p[k] = pk;
    }
    return a;
}

SecondOrderAdjoint solve_second_adjoint(const CoefficientModel& model, const ParticleEnsemble& base,
                                        const Mat& alpha, const FirstOrderAdjoint& first, bool symmetrize,
                                        const AdjointOptions& opt) {
    check_alpha(base, alpha);
    int N = base.N, d = base.d, M = base.grid.M, K = model.K();
    const MomentMap& mm = model.moments();
    double dt = base.grid.dt();
    SecondOrderAdjoint s;
    s.P.assign(M + 1, Mat::Zero(N, d * d));
    s.Q.assign(M, Path(d, Mat::Zero(N, d * d)));
    s.EP.assign(M, Mat::Zero(N, d * d));

    // sum_k mean(h_m_k) D2psi_k(x), optionally averaged with its transpose
    auto ymu_term = [&](const Vec& hbar, const Vec& x) {
        Mat out = Mat::Zero(d, d);
        if (!mm.linear)
            for (int k = 0; k < K; ++k) out += hbar(k) * mm.d2psi(x, k);
        if (symmetrize) out = 0.5 * (out + out.transpose()).eval();
        return out;
    };

    {
        std::vector<HamiltonianEval> g = hamiltonian_step(model, base, alpha, nullptr, M);
        Vec gm = Vec::Zero(K);
        for (int i = 0; i < N; ++i) gm += g[i].H_m;
        gm /= N;
        parallel_for(N, [&](int i) {
            s.P[M].row(i) = mat_to_vec(g[i].H_xx + ymu_term(gm, base.state(i, M))).transpose();
        });
    }

    for (int k = M - 1; k >= 0; --k) {
        StepCoefficients c = step_coefficients(model, base, alpha, k, 2);
        StepSamples smp = single_samples(base, c, k);
        StepProjection pr = project_step(opt.backend, opt.basis, s.P[k + 1], smp);
        s.EP[k] = pr.E;
        for (int l = 0; l < d; ++l) s.Q[k][l] = pr.Z[l];

        std::vector<HamiltonianEval> H(N);
        parallel_for(N, [&](int i) {
            H[i] = hamiltonian_from_jets(c.A[i], c.B[i], c.f[i], first.p_at(i, k), first.q_at(i, k), d, K);
        });
        Vec Hbar = Vec::Zero(K);
        for (int i = 0; i < N; ++i) Hbar += H[i].H_m;
        Hbar /= N;

        parallel_for(N, [&](int i) {
            Mat Ax = c.A[i].x;
            std::vector<Mat> Bx(d);
            for (int l = 0; l < d; ++l) Bx[l] = c.B[i].x.middleRows(d * l, d);
            Mat fixed = H[i].H_xx + ymu_term(Hbar, base.state(i, k));
            for (int l = 0; l < d; ++l) {
                Mat Ql = s.Q_at(i, k, l);
                fixed += Bx[l].transpose() * Ql + Ql * Bx[l];
            }
            Mat E = vec_to_mat(pr.E.row(i).transpose(), d);
            Mat Pk = E;
            bool done = false;
            for (int sweep = 0; sweep < opt.max_sweeps && !done; ++sweep) {
                Mat drv = Ax.transpose() * Pk + Pk * Ax + fixed;
                for (int l = 0; l < d; ++l) drv += Bx[l].transpose() * Pk * Bx[l];
                Mat next = E + dt * drv;
                double change = (next - Pk).cwiseAbs().maxCoeff();
                Pk = next;
                done = change <= opt.sweep_tol * std::max(1.0, Pk.cwiseAbs().maxCoeff());
            }
            if (!done) throw SolverError("second adjoint sweep did not converge", k);
            s.P[k].row(i) = mat_to_vec(Pk).transpose();
        });
        if (!s.P[k].allFinite()) throw SolverError("second adjoint is not finite", k);
    }
    return s;
}

} // namespace mfp
