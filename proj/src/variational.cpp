#include "mfp/variational.hpp"

#include <cmath>

#include "mfp/errors.hpp"
#include "mfp/parallel.hpp"

namespace mfp {

Vec mean_dpsi(const MomentMap& mm, const Mat& X, const Mat& V) {
    Vec acc = Vec::Zero(mm.K);
    for (Eigen::Index j = 0; j < X.rows(); ++j)
        acc += mm.dpsi(X.row(j).transpose()) * V.row(j).transpose();
    return acc / double(X.rows());
}

// mean_j (V^j' D2psi_k(X^j) V^j)_k
Vec mean_quad(const MomentMap& mm, const Mat& X, const Mat& V) {
    Vec acc = Vec::Zero(mm.K);
    if (mm.linear) return acc;
    for (Eigen::Index j = 0; j < X.rows(); ++j) {
        Vec x = X.row(j).transpose(), v = V.row(j).transpose();
        for (int k = 0; k < mm.K; ++k) acc(k) += v.dot(mm.d2psi(x, k) * v);
    }
    return acc / double(X.rows());
}

double second_order_source(const Jet& J, int d, int K, int r, const Vec& y, const Vec& nu, const Vec& nu2) {
    return 0.5 * y.dot(J.xx_of(r, d) * y) + 0.5 * J.m.row(r).dot(nu2) + 0.5 * nu.dot(J.mm_of(r, K) * nu) +
           y.dot(J.xm_of(r, d, K) * nu);
}

namespace {

struct StepJets {
    std::vector<Jet> A, B, dA, dB;  // dA/dB only filled inside the spike
};

StepJets step_jets(const CoefficientModel& model, const ParticleEnsemble& base, const SpikeTables& sp,
                   int k, int order) {
    int N = base.N;
    StepJets s;
    s.A.resize(N);
    s.B.resize(N);
    bool spike = k >= sp.k0 && k < sp.k1;
    if (spike) {
        s.dA.resize(N);
        s.dB.resize(N);
    }
    double t = base.grid.t(k);
    const Vec& m = base.m[k];
    parallel_for(N, [&](int i) {
        Vec x = base.state(i, k);
        double a = sp.alpha(i, k);
        s.A[i] = model.drift(t, x, m, a, order);
        s.B[i] = model.diffusion(t, x, m, a, order);
        if (spike) {
            double b = sp.beta(i, k);
            Jet Ab = model.drift(t, x, m, b, 1), Bb = model.diffusion(t, x, m, b, 1);
            Jet& dA = s.dA[i];
            Jet& dB = s.dB[i];
            dA.v = Ab.v - s.A[i].v;
            dA.x = Ab.x - s.A[i].x;
            dA.m = Ab.m - s.A[i].m;
            dB.v = Bb.v - s.B[i].v;
            dB.x = Bb.x - s.B[i].x;
            dB.m = Bb.m - s.B[i].m;
        }
    });
    return s;
}

// mean_j c_mu(theta^i)(X^j) V^j for every component of jet J, by explicit pairs
Vec pair_mu(const Jet& J, const MomentMap& mm, const Mat& X, const Mat& V, int i) {
    TildeKernel ker = [&](int, int at) { return jet_mu_all(J, mm, X.row(at).transpose()); };
    // single row of tilde_average, evaluated directly to avoid N^2 work per call
    Vec acc = Vec::Zero(J.v.size());
    for (Eigen::Index j = 0; j < X.rows(); ++j) acc += ker(i, int(j)) * V.row(j).transpose();
    return acc / double(X.rows());
}

// second-order mean-field source of component r:
//   1/2 E~[c_ymu[Y~,Y~]] + 1/2 E~E~[c_mumu[Y~,Y~']] + E~[c_xmu[Y~, Y]]
double pair_second(const Jet& J, const MomentMap& mm, const Mat& X, const Mat& Y, int i, int r) {
    int N = int(X.rows());
    Vec yi = Y.row(i).transpose();
    double ymu = 0, xmu = 0, mumu = 0;
    for (int j = 0; j < N; ++j) {
        Vec xj = X.row(j).transpose(), yj = Y.row(j).transpose();
        ymu += yj.dot(jet_ymu(J, mm, r, xj) * yj);
        xmu += yi.dot(jet_xmu(J, mm, r, xj) * yj);
        for (int l = 0; l < N; ++l) {
            Vec xl = X.row(l).transpose(), yl = Y.row(l).transpose();
            mumu += yj.dot(jet_mumu(J, mm, r, xj, xl) * yl);
        }
    }
    return 0.5 * ymu / N + 0.5 * mumu / (double(N) * N) + xmu / N;
}

void check_tables(const ParticleEnsemble& base, const SpikeTables& sp) {
    if (sp.alpha.rows() != base.N || sp.alpha.cols() != base.grid.M || sp.beta.rows() != base.N ||
        sp.beta.cols() != base.grid.M)
        throw DimensionError("spike tables do not match the base ensemble");
}

} // namespace

SpikeTables spike_tables(const ParticleEnsemble& base, const ControlLaw& control, const SpikeVariation& spike) {
    SpikeTables sp;
    auto [k0, k1] = spike.cells(base.grid);
    sp.k0 = k0;
    sp.k1 = k1;
    sp.alpha = realize_control(control, base);
    sp.beta = sp.alpha;
    for (int k = k0; k < k1; ++k)
        for (int i = 0; i < base.N; ++i)
            sp.beta(i, k) = spike.beta(i, k, base.grid.t(k), base.state(i, k), base.m[k]);
    return sp;
}

Path simulate_first_variation(const CoefficientModel& model, const ParticleEnsemble& base,
                              const SpikeTables& sp, bool pairwise) {
    check_tables(base, sp);
    int N = base.N, d = base.d, M = base.grid.M;
    const MomentMap& mm = model.moments();
    double dt = base.grid.dt();
    Path Y(M + 1, Mat::Zero(N, d));
    for (int k = 0; k < M; ++k) {
        StepJets s = step_jets(model, base, sp, k, 1);
        bool spike = !s.dA.empty();
        const Mat& X = base.X[k];
        Vec nu = pairwise ? Vec() : mean_dpsi(mm, X, Y[k]);
        parallel_for(N, [&](int i) {
            Vec y = Y[k].row(i).transpose();
            Vec muA = pairwise ? pair_mu(s.A[i], mm, X, Y[k], i) : Vec(s.A[i].m * nu);
            Vec muB = pairwise ? pair_mu(s.B[i], mm, X, Y[k], i) : Vec(s.B[i].m * nu);
            Vec drift = s.A[i].x * y + muA;
            Vec diff = s.B[i].x * y + muB;  // d*d, column blocks
            if (spike) {
                drift += s.dA[i].v;
                diff += s.dB[i].v;
            }
            Vec dw = base.dW[k].row(i).transpose();
            Vec next = y + drift * dt;
            for (int c = 0; c < d; ++c) next += diff.segment(d * c, d) * dw(c);
            Y[k + 1].row(i) = next.transpose();
        });
        if (!Y[k + 1].allFinite()) throw DivergenceError("first variation diverged", k + 1);
    }
    return Y;
}

Path simulate_second_variation(const CoefficientModel& model, const ParticleEnsemble& base,
                               const SpikeTables& sp, const Path& Y, bool pairwise) {
    check_tables(base, sp);
    int N = base.N, d = base.d, M = base.grid.M, K = model.K();
    if (int(Y.size()) != M + 1) throw DimensionError("first variation has wrong length");
    const MomentMap& mm = model.moments();
    double dt = base.grid.dt();
    Path Z(M + 1, Mat::Zero(N, d));
    for (int k = 0; k < M; ++k) {
        StepJets s = step_jets(model, base, sp, k, 2);
        bool spike = !s.dA.empty();
        const Mat& X = base.X[k];
        Vec nuZ, nuY, nu2;
        if (!pairwise) {
            nuZ = mean_dpsi(mm, X, Z[k]);
            nuY = mean_dpsi(mm, X, Y[k]);
            nu2 = mean_quad(mm, X, Y[k]);
        }
        parallel_for(N, [&](int i) {
            Vec z = Z[k].row(i).transpose(), y = Y[k].row(i).transpose();
            const Jet& A = s.A[i];
            const Jet& B = s.B[i];
            Vec drift = A.x * z, diff = B.x * z;
            if (pairwise) {
                drift += pair_mu(A, mm, X, Z[k], i);
                diff += pair_mu(B, mm, X, Z[k], i);
            } else {
                drift += A.m * nuZ;
                diff += B.m * nuZ;
            }
            for (int r = 0; r < d; ++r) {
                if (pairwise)
                    drift(r) += 0.5 * y.dot(A.xx_of(r, d) * y) + pair_second(A, mm, X, Y[k], i, r);
                else
                    drift(r) += second_order_source(A, d, K, r, y, nuY, nu2);
            }
            for (int r = 0; r < d * d; ++r) {
                if (pairwise)
                    diff(r) += 0.5 * y.dot(B.xx_of(r, d) * y) + pair_second(B, mm, X, Y[k], i, r);
                else
                    diff(r) += second_order_source(B, d, K, r, y, nuY, nu2);
            }
            if (spike) {
                drift += s.dA[i].x * y;
                diff += s.dB[i].x * y;
                if (pairwise) {
                    drift += pair_mu(s.dA[i], mm, X, Y[k], i);
                    diff += pair_mu(s.dB[i], mm, X, Y[k], i);
                } else {
                    drift += s.dA[i].m * nuY;
                    diff += s.dB[i].m * nuY;
                }
            }
            Vec dw = base.dW[k].row(i).transpose();
            Vec next = z + drift * dt;
            for (int c = 0; c < d; ++c) next += diff.segment(d * c, d) * dw(c);
            Z[k + 1].row(i) = next.transpose();
        });
        if (!Z[k + 1].allFinite()) throw DivergenceError("second variation diverged", k + 1);
    }
    return Z;
}

Path simulate_first_variation(const CoefficientModel& model, const ParticleEnsemble& base,
                              const ControlLaw& control, const SpikeVariation& spike) {
    return simulate_first_variation(model, base, spike_tables(base, control, spike));
}

Path simulate_second_variation(const CoefficientModel& model, const ParticleEnsemble& base,
                               const ControlLaw& control, const SpikeVariation& spike, const Path& Y) {
    return simulate_second_variation(model, base, spike_tables(base, control, spike), Y);
}

VariationalBundle make_bundle(const CoefficientModel& model, const ParticleEnsemble& base,
                              const ControlLaw& control, const SpikeVariation& spike) {
    VariationalBundle b;
    SpikeTables sp = spike_tables(base, control, spike);
    b.base = base;
    b.spike = spike;
    b.k0 = sp.k0;
    b.k1 = sp.k1;
    b.alpha = sp.alpha;
    b.beta = sp.beta;
    Mat spiked = sp.alpha;
    spiked.middleCols(sp.k0, sp.k1 - sp.k0) = sp.beta.middleCols(sp.k0, sp.k1 - sp.k0);
    b.spiked = simulate_with_noise(model, base.grid, ControlLaw::table(spiked), base.state(0, 0), base.dW,
                                   base.seed, base.stream_base);
    b.spiked.X[0] = base.X[0];
    b.Y = simulate_first_variation(model, base, sp);
    b.Z = simulate_second_variation(model, base, sp, b.Y);
    return b;
}

SlopeFit loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ArgumentError("slope fit needs matching samples");
    int n = int(x.size());
    std::vector<double> lx(n), ly(n);
    for (int i = 0; i < n; ++i) {
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
    }
    double mx = 0, my = 0;
    for (int i = 0; i < n; ++i) {
        mx += lx[i] / n;
        my += ly[i] / n;
    }
    double sxx = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    SlopeFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ssr = 0;
    for (int i = 0; i < n; ++i) {
        double e = ly[i] - f.intercept - f.slope * lx[i];
        ssr += e * e;
    }
    f.stderr_ = n > 2 ? std::sqrt(ssr / (n - 2) / sxx) : 0.0;
    return f;
}

OrderStudy order_study(const CoefficientModel& model, const TimeGrid& grid, const ControlLaw& control,
                       const ControlLaw& beta, const Vec& x0, double t0, const std::vector<double>& eps_grid,
                       int k, int N, std::uint64_t seed) {
    if (eps_grid.size() < 4) throw ArgumentError("order study needs at least 4 eps values");
    for (std::size_t i = 1; i < eps_grid.size(); ++i)
        if (!(eps_grid[i] < eps_grid[i - 1])) throw ArgumentError("eps grid must be strictly decreasing");
    if (k < 1) throw ArgumentError("moment order must be >= 1");

    OrderStudy st;
    st.eps_grid = eps_grid;
    st.k = k;
    st.names = {"dX", "Y", "Z", "dX-Y", "K"};
    ParticleEnsemble base = simulate_mv_sde(model, grid, control, x0, N, seed);
    ControlLaw realized = base.realized_control();
    for (double eps : eps_grid) {
        VariationalBundle b = make_bundle(model, base, realized, SpikeVariation{t0, eps, beta});
        std::map<std::string, Vec> sup;
        for (auto& n : st.names) sup[n] = Vec::Zero(N);
        for (int j = 0; j <= grid.M; ++j) {
            Mat dx = b.dX(j);
            std::map<std::string, Mat> q = {
                {"dX", dx}, {"Y", b.Y[j]}, {"Z", b.Z[j]}, {"dX-Y", dx - b.Y[j]}, {"K", dx - b.Y[j] - b.Z[j]}};
            for (auto& [n, v] : q) sup[n] = sup[n].cwiseMax(v.rowwise().norm());
        }
        for (auto& n : st.names) {
            Vec p = sup[n].array().pow(2.0 * k);
            double mean = p.mean();
            double var = N > 1 ? (p.array() - mean).square().sum() / (N - 1) : 0.0;
            st.estimate[n].push_back(mean);
            st.stderr_[n].push_back(std::sqrt(var / N));
        }
    }
    for (auto& n : st.names) st.slopes[n] = loglog_slope(eps_grid, st.estimate[n]);
    return st;
}

} // namespace mfp
