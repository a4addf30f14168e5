#include "mfp/forward.hpp"

#include <cmath>

#include "mfp/errors.hpp"
#include "mfp/parallel.hpp"
#include "mfp/rng.hpp"

namespace mfp {

TimeGrid::TimeGrid(double T_, int M_) : T(T_), M(M_) {
    if (!(T_ > 0) || M_ < 1) throw ArgumentError("time grid needs T > 0 and M >= 1");
}

ControlLaw ControlLaw::table(Mat values) {
    ControlLaw c;
    c.kind_ = Kind::Table;
    c.table_ = std::move(values);
    return c;
}

ControlLaw ControlLaw::constant(double v) {
    return feedback([v](double, const Vec&, const Vec&) { return v; });
}

ControlLaw ControlLaw::feedback(FeedbackFn fn) {
    ControlLaw c;
    c.kind_ = Kind::Feedback;
    c.fn_ = std::move(fn);
    return c;
}

double ControlLaw::operator()(int i, int k, double t, const Vec& x, const Vec& m) const {
    switch (kind_) {
    case Kind::Table:
        if (i < 0 || i >= table_.rows() || k < 0 || k >= table_.cols())
            throw DimensionError("control table index out of range");
        return table_(i, k);
    case Kind::Feedback:
        return fn_(t, x, m);
    case Kind::Spliced:
        return (k >= k0_ && k < k1_) ? (*beta_)(i, k, t, x, m) : (*base_)(i, k, t, x, m);
    }
    return 0;
}

ControlLaw splice(const ControlLaw& base, const ControlLaw& beta, int k0, int k1) {
    if (k0 >= k1) return base;
    ControlLaw c;
    c.kind_ = ControlLaw::Kind::Spliced;
    c.base_ = std::make_shared<const ControlLaw>(base);
    c.beta_ = std::make_shared<const ControlLaw>(beta);
    c.k0_ = k0;
    c.k1_ = k1;
    return c;
}

std::pair<int, int> SpikeVariation::cells(const TimeGrid& grid) const {
    if (eps < 0 || t0 < 0) throw ArgumentError("spike needs t0 >= 0 and eps >= 0");
    double dt = grid.dt();
    double a = t0 / dt, n = eps / dt;
    long ka = std::lround(a), kn = std::lround(n);
    double tol = 1e-9 * std::max(1.0, double(grid.M));
    if (std::abs(a - ka) > tol || std::abs(n - kn) > tol)
        throw AlignmentError("spike [" + std::to_string(t0) + ", " + std::to_string(t0 + eps) +
                             ") is not aligned to the grid (dt = " + std::to_string(dt) + ")");
    if (ka + kn > grid.M) throw ArgumentError("spike extends past the horizon");
    return {int(ka), int(ka + kn)};
}

ControlLaw apply_spike(const ControlLaw& control, const SpikeVariation& spike, const TimeGrid& grid) {
    auto [k0, k1] = spike.cells(grid);
    return splice(control, spike.beta, k0, k1);
}

ParticleEnsemble simulate_mv_sde(const CoefficientModel& model, const TimeGrid& grid,
                                 const ControlLaw& control, const Vec& x0, int N, std::uint64_t seed,
                                 std::uint64_t stream_base) {
    if (N < 2) throw ArgumentError("need at least 2 particles");
    Path dW = brownian_increments(seed, N, grid.M, model.dim(), grid.dt(), stream_base);
    return simulate_with_noise(model, grid, control, x0, dW, seed, stream_base);
}

ParticleEnsemble simulate_with_noise(const CoefficientModel& model, const TimeGrid& grid,
                                     const ControlLaw& control, const Vec& x0, const Path& dW,
                                     std::uint64_t seed, std::uint64_t stream_base) {
    int d = model.dim();
    if (x0.size() != d) throw DimensionError("x0 has wrong dimension");
    if (int(dW.size()) != grid.M) throw DimensionError("noise has wrong number of steps");
    int N = int(dW[0].rows());
    if (N < 1 || dW[0].cols() != d) throw DimensionError("noise block has wrong shape");

    ParticleEnsemble e;
    e.grid = grid;
    e.N = N;
    e.d = d;
    e.dW = dW;
    e.seed = seed;
    e.stream_base = stream_base;
    e.X.assign(grid.M + 1, Mat(N, d));
    e.X[0] = x0.transpose().replicate(N, 1);
    e.m.resize(grid.M + 1);
    e.u.resize(N, grid.M);

    const ControlSet& U = model.controls();
    double dt = grid.dt();
    for (int k = 0; k < grid.M; ++k) {
        e.m[k] = empirical_moments(e.X[k], model.moments());
        const Vec& m = e.m[k];
        double t = grid.t(k);
        parallel_for(N, [&](int i) {
            Vec x = e.X[k].row(i).transpose();
            double u = control(i, k, t, x, m);
            if (!U.contains(u))
                throw ControlError("control " + std::to_string(u) + " outside U at step " + std::to_string(k));
            e.u(i, k) = u;
            Vec A = model.drift(t, x, m, u, 0).v;
            Mat B = model.diffusion_matrix(t, x, m, u);
            e.X[k + 1].row(i) = (x + A * dt + B * dW[k].row(i).transpose()).transpose();
        });
        if (!e.X[k + 1].allFinite()) throw DivergenceError("non-finite state", k + 1);
    }
    e.m[grid.M] = empirical_moments(e.X[grid.M], model.moments());
    return e;
}

Mat realize_control(const ControlLaw& law, const ParticleEnsemble& ens) {
    Mat out(ens.N, ens.grid.M);
    for (int k = 0; k < ens.grid.M; ++k)
        for (int i = 0; i < ens.N; ++i)
            out(i, k) = law(i, k, ens.grid.t(k), ens.state(i, k), ens.m[k]);
    return out;
}

Mat tilde_average(TildeMode mode, const TildeKernel& kernel, int N, const Mat& aux) {
    if (aux.rows() != N) throw DimensionError("aux must have one row per particle");
    if (N < 1) throw DimensionError("empty ensemble");
    Mat probe = kernel(0, 0);
    int cols = mode == TildeMode::CoefficientAtCopy ? int(probe.rows()) : int(probe.cols());
    Mat out(N, cols);
    parallel_for(N, [&](int i) {
        Vec acc = Vec::Zero(cols);
        for (int j = 0; j < N; ++j) {
            if (mode == TildeMode::CoefficientAtCopy)
                acc += kernel(i, j) * aux.row(j).transpose();
            else
                acc += kernel(j, i).transpose() * aux.row(j).transpose();
        }
        out.row(i) = (acc / N).transpose();
    });
    return out;
}

TildeMode parse_tilde_mode(const std::string& s) {
    if (s == "coefficient-at-copy") return TildeMode::CoefficientAtCopy;
    if (s == "copy-at-coefficient") return TildeMode::CopyAtCoefficient;
    throw ArgumentError("unknown tilde mode: " + s);
}

} // namespace mfp
