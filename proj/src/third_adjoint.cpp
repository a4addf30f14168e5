#include "mfp/third_adjoint.hpp"

#include <cmath>
#include <sstream>

#include "mfp/errors.hpp"
#include "mfp/parallel.hpp"

namespace mfp {

ThirdVariant parse_variant(const std::string& s) {
    if (s == "plain") return ThirdVariant::Plain;
    if (s == "symmetrized") return ThirdVariant::Symmetrized;
    throw ArgumentError("unknown third-adjoint variant: " + s);
}

std::string to_string(ThirdVariant v) { return v == ThirdVariant::Plain ? "plain" : "symmetrized"; }

double PicardTrace::max_ratio() const {
    double r = 0;
    for (double v : ratios) r = std::max(r, v);
    return r;
}

namespace {

// Per-particle coefficient data of one ensemble at one step.
struct SideStep {
    std::vector<Mat> Ax, S, Am, Dpsi, L, R;
    std::vector<std::vector<Mat>> Bx, Bm;
    Mat Hmm_bar, W;
};

struct SideTerminal {
    std::vector<Mat> Dpsi, gxm;
    Mat gmm_bar;
};

SideStep side_step(const CoefficientModel& model, const AdjointSide& s, int k) {
    const ParticleEnsemble& e = *s.e;
    int N = e.N, d = e.d, K = model.K();
    StepCoefficients c = step_coefficients(model, e, *s.alpha, k, 2);
    SideStep o;
    o.Ax.resize(N);
    o.S.resize(N);
    o.Am.resize(N);
    o.Dpsi.resize(N);
    o.L.resize(N);
    o.R.resize(N);
    o.Bx.assign(N, std::vector<Mat>(d));
    o.Bm.assign(N, std::vector<Mat>(d));
    std::vector<Mat> Hmm(N), W(N);
    parallel_for(N, [&](int i) {
        o.Ax[i] = c.A[i].x;
        o.S[i] = vec_to_mat(c.B[i].v, d);
        o.Am[i] = c.A[i].m;
        o.Dpsi[i] = model.moments().dpsi(e.state(i, k));
        Mat P = s.second->P_at(i, k);
        Mat Ps = P + P.transpose();
        Mat L = Ps * c.A[i].m;
        W[i] = Mat::Zero(K, K);
        for (int cc = 0; cc < d; ++cc) {
            o.Bx[i][cc] = c.B[i].x.middleRows(d * cc, d);
            o.Bm[i][cc] = c.B[i].m.middleRows(d * cc, d);
            Mat Q = s.second->Q_at(i, k, cc);
            L += o.Bx[i][cc].transpose() * Ps * o.Bm[i][cc] + (Q.transpose() + Q) * o.Bm[i][cc];
            W[i] += o.Bm[i][cc].transpose() * P * o.Bm[i][cc];
        }
        o.L[i] = L;
        HamiltonianEval h = hamiltonian_from_jets(c.A[i], c.B[i], c.f[i], s.first->p_at(i, k),
                                                  s.first->q_at(i, k), d, K);
        o.R[i] = 2 * h.H_xm.transpose();
        Hmm[i] = h.H_mm;
    });
    o.Hmm_bar = Mat::Zero(K, K);
    o.W = Mat::Zero(K, K);
    for (int i = 0; i < N; ++i) {
        o.Hmm_bar += Hmm[i] / N;
        o.W += W[i] / N;
    }
    return o;
}

SideTerminal side_terminal(const CoefficientModel& model, const ParticleEnsemble& e) {
    int N = e.N, d = e.d, K = model.K(), M = e.grid.M;
    SideTerminal t;
    t.Dpsi.resize(N);
    t.gxm.resize(N);
    std::vector<Mat> gmm(N);
    parallel_for(N, [&](int i) {
        Vec x = e.state(i, M);
        Jet g = model.terminal(x, e.m[M], 2);
        t.Dpsi[i] = model.moments().dpsi(x);
        t.gxm[i] = g.xm_of(0, d, K);
        gmm[i] = g.mm_of(0, K);
    });
    t.gmm_bar = Mat::Zero(K, K);
    for (int i = 0; i < N; ++i) t.gmm_bar += gmm[i] / N;
    return t;
}

double sq(const Mat& m) { return m.squaredNorm(); }

PairSource make_source(const SideStep& a, const SideStep& b, bool sym) {
    PairSource ps;
    int N1 = int(a.L.size()), N2 = int(b.L.size());
    Mat C = a.Hmm_bar + a.W;
    ps.C = sym ? Mat(0.5 * (C + C.transpose())) : C;
    ps.L.resize(N1);
    ps.R.resize(N2);
    for (int i = 0; i < N1; ++i) ps.L[i] = sym ? Mat(0.5 * (a.L[i] + a.R[i].transpose())) : a.L[i];
    for (int j = 0; j < N2; ++j) ps.R[j] = sym ? Mat(0.5 * (b.R[j] + b.L[j].transpose())) : b.R[j];
    ps.Dpsi1 = a.Dpsi;
    ps.Dpsi2 = b.Dpsi;
    return ps;
}

} // namespace

PairSource pair_source(const CoefficientModel& model, const AdjointSide& one, const AdjointSide& two, int k,
                       ThirdVariant variant) {
    if (k < 0 || k >= one.e->grid.M) throw ArgumentError("pair_source: step out of range");
    return make_source(side_step(model, one, k), side_step(model, two, k), variant == ThirdVariant::Symmetrized);
}

ProductAdjoint solve_third_adjoint_picard(const CoefficientModel& model, const AdjointSide& one,
                                          const AdjointSide& two, const ThirdAdjointOptions& opt,
                                          PicardTrace* trace) {
    const ParticleEnsemble& e1 = *one.e;
    const ParticleEnsemble& e2 = *two.e;
    if (e1.grid.M != e2.grid.M || e1.grid.T != e2.grid.T || e1.d != e2.d)
        throw DimensionError("third adjoint: ensembles live on different grids");
    if (!opt.allow_shared_noise && e1.seed == e2.seed && e1.stream_base == e2.stream_base)
        throw IndependenceError("third adjoint: both ensembles use the same noise streams");
    int N1 = e1.N, N2 = e2.N, d = e1.d, M = e1.grid.M, K = model.K(), dd = d * d;
    double dt = e1.grid.dt();
    bool sym = opt.variant == ThirdVariant::Symmetrized;
    const AdjointOptions& ao = opt.adjoint;

    // everything that does not depend on the Picard iterate
    std::vector<SideStep> s1(M), s2(M);
    for (int k = 0; k < M; ++k) {
        s1[k] = side_step(model, one, k);
        s2[k] = side_step(model, two, k);
    }
    SideTerminal t1 = side_terminal(model, e1), t2 = side_terminal(model, e2);

    std::vector<PairSource> src(M);
    for (int k = 0; k < M; ++k) src[k] = make_source(s1[k], s2[k], sym);
    Mat terminal(N1 * N2, dd);
    {
        Mat G = sym ? Mat(0.5 * (t1.gmm_bar + t1.gmm_bar.transpose())) : t1.gmm_bar;
        parallel_for(N1, [&](int i) {
            for (int j = 0; j < N2; ++j) {
                Mat v = t1.Dpsi[i].transpose() * G * t2.Dpsi[j];
                if (sym) v += t1.Dpsi[i].transpose() * t2.gxm[j].transpose() + t1.gxm[i] * t2.Dpsi[j];
                else v += 2 * t1.Dpsi[i].transpose() * t2.gxm[j].transpose();
                terminal.row(i * N2 + j) = mat_to_vec(v).transpose();
            }
        });
    }

    PicardTrace tr;
    double kappa = opt.kappa;
    for (int attempt = 0;; ++attempt) {
        ProductAdjoint X;
        X.N1 = N1;
        X.N2 = N2;
        X.d = d;
        X.P.assign(M + 1, Mat::Zero(N1 * N2, dd));
        X.Q1.assign(M, Path(d, Mat::Zero(N1 * N2, dd)));
        X.Q2.assign(M, Path(d, Mat::Zero(N1 * N2, dd)));
        X.EP.assign(M, Mat::Zero(N1 * N2, dd));
        tr = PicardTrace{};
        tr.kappa = kappa;
        tr.retries = attempt;
        bool restart = false;

        for (int it = 0; it < opt.max_iter; ++it) {
            double sup = std::exp(kappa * e1.grid.T) * (terminal - X.P[M]).rowwise().squaredNorm().mean();
            double integral = 0;
            X.P[M] = terminal;

            for (int k = M - 1; k >= 0; --k) {
                const SideStep& a = s1[k];
                const SideStep& b = s2[k];
                // marginals of the previous iterate at step k
                std::vector<Mat> Lam(N2, Mat::Zero(K, d)), Gam(N1, Mat::Zero(d, K));
                parallel_for(N2, [&](int j) {
                    for (int l = 0; l < N1; ++l) {
                        int r = l * N2 + j;
                        Lam[j] += a.Am[l].transpose() * vec_to_mat(X.P[k].row(r).transpose(), d);
                        for (int c = 0; c < d; ++c)
                            Lam[j] += a.Bm[l][c].transpose() * vec_to_mat(X.Q1[k][c].row(r).transpose(), d);
                    }
                    Lam[j] /= N1;
                });
                parallel_for(N1, [&](int i) {
                    for (int l = 0; l < N2; ++l) {
                        int r = i * N2 + l;
                        Gam[i] += vec_to_mat(X.P[k].row(r).transpose(), d) * b.Am[l];
                        for (int c = 0; c < d; ++c)
                            Gam[i] += vec_to_mat(X.Q2[k][c].row(r).transpose(), d) * b.Bm[l][c];
                    }
                    Gam[i] /= N2;
                });

                StepSamples smp;
                smp.cur.resize(N1 * N2, 2 * d);
                smp.next.resize(N1 * N2, 2 * d);
                smp.mean.resize(N1 * N2, 2 * d);
                smp.dW.resize(N1 * N2, 2 * d);
                Mat mean1(N1, d), mean2(N2, d);
                for (int i = 0; i < N1; ++i)
                    mean1.row(i) = e1.X[k + 1].row(i) - (a.S[i] * e1.dW[k].row(i).transpose()).transpose();
                for (int j = 0; j < N2; ++j)
                    mean2.row(j) = e2.X[k + 1].row(j) - (b.S[j] * e2.dW[k].row(j).transpose()).transpose();
                for (int i = 0; i < N1; ++i)
                    for (int j = 0; j < N2; ++j) {
                        int r = i * N2 + j;
                        smp.cur.row(r) << e1.X[k].row(i), e2.X[k].row(j);
                        smp.next.row(r) << e1.X[k + 1].row(i), e2.X[k + 1].row(j);
                        smp.mean.row(r) << mean1.row(i), mean2.row(j);
                        smp.dW.row(r) << e1.dW[k].row(i), e2.dW[k].row(j);
                    }
                smp.S = [&](int r) {
                    Mat S = Mat::Zero(2 * d, 2 * d);
                    S.topLeftCorner(d, d) = a.S[r / N2];
                    S.bottomRightCorner(d, d) = b.S[r % N2];
                    return S;
                };
                smp.dt = dt;
                smp.step = k;
                StepProjection pr = project_step(ao.backend, ao.basis, X.P[k + 1], smp);
                X.EP[k] = pr.E;

                // per-row and per-column parts of the source
                std::vector<Mat> U(N1), V(N2);
                for (int i = 0; i < N1; ++i) U[i] = Gam[i] + src[k].L[i];
                for (int j = 0; j < N2; ++j) V[j] = Lam[j] + src[k].R[j] + src[k].C * b.Dpsi[j];

                Mat newP(N1 * N2, dd);
                std::vector<double> dP(N1, 0.0), dQ(N1, 0.0);
                bool sweep_fail = false;
                parallel_for(N1, [&](int i) {
                    for (int j = 0; j < N2; ++j) {
                        int r = i * N2 + j;
                        Mat G = a.Dpsi[i].transpose() * V[j] + U[i] * b.Dpsi[j];
                        for (int c = 0; c < d; ++c) {
                            G += a.Bx[i][c].transpose() * vec_to_mat(pr.Z[c].row(r).transpose(), d) +
                                 vec_to_mat(pr.Z[d + c].row(r).transpose(), d) * b.Bx[j][c];
                        }
                        Mat E = vec_to_mat(pr.E.row(r).transpose(), d);
                        Mat Pk = E;
                        bool done = false;
                        for (int sw = 0; sw < ao.max_sweeps && !done; ++sw) {
                            Mat nx = E + dt * (a.Ax[i].transpose() * Pk + Pk * b.Ax[j] + G);
                            double ch = (nx - Pk).cwiseAbs().maxCoeff();
                            Pk = nx;
                            done = ch <= ao.sweep_tol * std::max(1.0, Pk.cwiseAbs().maxCoeff());
                        }
                        if (!done) sweep_fail = true;
                        Vec v = mat_to_vec(Pk);
                        dP[i] += (v.transpose() - X.P[k].row(r)).squaredNorm();
                        for (int c = 0; c < d; ++c)
                            dQ[i] += (pr.Z[c].row(r) - X.Q1[k][c].row(r)).squaredNorm() +
                                     (pr.Z[d + c].row(r) - X.Q2[k][c].row(r)).squaredNorm();
                        newP.row(r) = v.transpose();
                    }
                });
                if (sweep_fail) throw SolverError("third adjoint sweep did not converge", k);
                if (!newP.allFinite()) throw SolverError("third adjoint is not finite", k);
                double sP = 0, sQ = 0;
                for (int i = 0; i < N1; ++i) {
                    sP += dP[i];
                    sQ += dQ[i];
                }
                double w = std::exp(kappa * e1.grid.t(k)), np = double(N1) * N2;
                sup = std::max(sup, w * sP / np);
                integral += 0.75 * dt * w * sQ / np;
                X.P[k] = newP;
                for (int c = 0; c < d; ++c) {
                    X.Q1[k][c] = pr.Z[c];
                    X.Q2[k][c] = pr.Z[d + c];
                }
            }

            double rho = sup + integral;
            tr.rho.push_back(rho);
            int n = int(tr.rho.size());
            if (n >= 2) tr.ratios.push_back(tr.rho[0] > 0 ? rho / tr.rho[n - 2] : 0.0);
            if (tr.rho[0] == 0 || (n >= 2 && rho <= opt.tol * tr.rho[0])) {
                tr.converged = true;
                if (trace) *trace = tr;
                return X;
            }
            if (n >= 2 && rho > tr.rho[n - 2]) {
                restart = true;
                break;
            }
        }
        if (!restart || attempt >= opt.kappa_retries) {
            std::ostringstream os;
            os << "third adjoint Picard iteration did not converge (kappa " << kappa << ", rho:";
            for (double r : tr.rho) os << ' ' << r;
            os << ')';
            if (trace) *trace = tr;
            throw ConvergenceError(os.str(), tr.rho);
        }
        kappa *= 2;
    }
}

double rho_metric(const ProductAdjoint& a, const ProductAdjoint& b, const TimeGrid& grid, double kappa) {
    if (a.P.size() != b.P.size() || a.Q1.size() != b.Q1.size() || a.N1 != b.N1 || a.N2 != b.N2 || a.d != b.d)
        throw DimensionError("rho_metric: iterates have different shapes");
    if (int(a.P.size()) != grid.M + 1) throw DimensionError("rho_metric: grid does not match the iterates");
    double np = double(a.N1) * a.N2, sup = 0, integral = 0;
    for (int k = 0; k <= grid.M; ++k) {
        if (a.P[k].rows() != b.P[k].rows() || a.P[k].cols() != b.P[k].cols())
            throw DimensionError("rho_metric: iterates have different shapes");
        double w = std::exp(kappa * grid.t(k));
        sup = std::max(sup, w * sq(a.P[k] - b.P[k]) / np);
        if (k < grid.M) {
            double s = 0;
            for (std::size_t c = 0; c < a.Q1[k].size(); ++c)
                s += sq(a.Q1[k][c] - b.Q1[k][c]) + sq(a.Q2[k][c] - b.Q2[k][c]);
            integral += 0.75 * grid.dt() * w * s / np;
        }
    }
    return sup + integral;
}

} // namespace mfp
