#pragma once

#include <map>
#include <string>
#include <vector>

#include "mfp/forward.hpp"

namespace mfp {

// Spiked run and variational processes on the noise of `base`. The base control
// and beta are both realized along the base path, so the spiked control is the
// open-loop table alpha with cells [k0, k1) replaced by beta.
struct VariationalBundle {
    ParticleEnsemble base;
    ParticleEnsemble spiked;
    SpikeVariation spike;
    int k0 = 0, k1 = 0;
    Mat alpha;  // N x M
    Mat beta;   // N x M
    Path Y;     // M+1 blocks, N x d
    Path Z;

    bool in_spike(int k) const { return k >= k0 && k < k1; }
    Mat dX(int k) const { return spiked.X[k] - base.X[k]; }
    Mat K(int k) const { return dX(k) - Y[k] - Z[k]; }
};

// mean_j Dpsi(X^j) V^j
Vec mean_dpsi(const MomentMap& mm, const Mat& X, const Mat& V);
// mean_j (V^j' D2psi_k(X^j) V^j)_k
Vec mean_quad(const MomentMap& mm, const Mat& X, const Mat& V);
// 1/2 y'c_xx y + 1/2 c_m nu2 + 1/2 nu'c_mm nu + y'c_xm nu for component r of J
double second_order_source(const Jet& J, int d, int K, int r, const Vec& y, const Vec& nu, const Vec& nu2);

struct SpikeTables {
    Mat alpha, beta;
    int k0 = 0, k1 = 0;
};

SpikeTables spike_tables(const ParticleEnsemble& base, const ControlLaw& control, const SpikeVariation& spike);

// pairwise = true evaluates every mean-field term as an explicit N x N (or N^3
// for the double-copy term) average; meant for small N cross-checks.
Path simulate_first_variation(const CoefficientModel& model, const ParticleEnsemble& base,
                              const SpikeTables& sp, bool pairwise = false);
Path simulate_second_variation(const CoefficientModel& model, const ParticleEnsemble& base,
                               const SpikeTables& sp, const Path& Y, bool pairwise = false);

Path simulate_first_variation(const CoefficientModel& model, const ParticleEnsemble& base,
                              const ControlLaw& control, const SpikeVariation& spike);
Path simulate_second_variation(const CoefficientModel& model, const ParticleEnsemble& base,
                               const ControlLaw& control, const SpikeVariation& spike, const Path& Y);

VariationalBundle make_bundle(const CoefficientModel& model, const ParticleEnsemble& base,
                              const ControlLaw& control, const SpikeVariation& spike);

struct SlopeFit {
    double slope = 0;
    double stderr_ = 0;
    double intercept = 0;
};

// least squares fit of log y against log x
SlopeFit loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

struct OrderStudy {
    std::vector<double> eps_grid;
    int k = 1;
    std::vector<std::string> names;                       // dX, Y, Z, dX-Y, K
    std::map<std::string, std::vector<double>> estimate;  // E[max_t |.|^{2k}] per eps
    std::map<std::string, std::vector<double>> stderr_;
    std::map<std::string, SlopeFit> slopes;
};

// One base ensemble, shared by every eps; spikes shrink around the fixed left end t0.
OrderStudy order_study(const CoefficientModel& model, const TimeGrid& grid, const ControlLaw& control,
                       const ControlLaw& beta, const Vec& x0, double t0, const std::vector<double>& eps_grid,
                       int k, int N, std::uint64_t seed);

} // namespace mfp
