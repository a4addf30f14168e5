#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "mfp/coeffs.hpp"
#include "mfp/moments.hpp"
#include "mfp/types.hpp"

namespace mfp {

struct TimeGrid {
    double T = 1.0;
    int M = 1;

    TimeGrid() = default;
    TimeGrid(double T, int M);
    double dt() const { return T / M; }
    double t(int k) const { return T * k / M; }
};

using FeedbackFn = std::function<double(double t, const Vec& x, const Vec& m)>;

// Scalar control, either an N x M table of values, a feedback map, or a
// spliced law that switches to another law on a block of grid cells.
class ControlLaw {
public:
    enum class Kind { Table, Feedback, Spliced };

    static ControlLaw table(Mat values);
    static ControlLaw constant(double c);
    static ControlLaw feedback(FeedbackFn fn);

    Kind kind() const { return kind_; }
    const Mat& values() const { return table_; }
    double operator()(int i, int k, double t, const Vec& x, const Vec& m) const;

    // Table with cells [k0, k1) taken from `beta`, evaluated along the given states.
    friend ControlLaw splice(const ControlLaw& base, const ControlLaw& beta, int k0, int k1);

private:
    Kind kind_ = Kind::Table;
    Mat table_;
    FeedbackFn fn_;
    std::shared_ptr<const ControlLaw> base_, beta_;
    int k0_ = 0, k1_ = 0;
};

ControlLaw splice(const ControlLaw& base, const ControlLaw& beta, int k0, int k1);

struct SpikeVariation {
    double t0 = 0;
    double eps = 0;
    ControlLaw beta = ControlLaw::constant(0.0);

    // grid cells [k0, k1) covered by [t0, t0 + eps); throws on misalignment
    std::pair<int, int> cells(const TimeGrid& grid) const;
};

struct ParticleEnsemble {
    TimeGrid grid;
    int N = 0;
    int d = 0;
    Path X;                 // M+1 blocks, N x d
    Path dW;                // M blocks, N x d
    std::vector<Vec> m;     // empirical moments per knot
    Mat u;                  // N x M realized controls
    std::uint64_t seed = 0;
    std::uint64_t stream_base = 0;

    std::uint64_t stream_id(int i) const { return stream_base + std::uint64_t(i); }
    Vec state(int i, int k) const { return X[k].row(i).transpose(); }
    ControlLaw realized_control() const { return ControlLaw::table(u); }
};

ParticleEnsemble simulate_mv_sde(const CoefficientModel& model, const TimeGrid& grid,
                                 const ControlLaw& control, const Vec& x0, int N, std::uint64_t seed,
                                 std::uint64_t stream_base = 0);

// same scheme on caller-supplied increments (M blocks of N x d)
ParticleEnsemble simulate_with_noise(const CoefficientModel& model, const TimeGrid& grid,
                                     const ControlLaw& control, const Vec& x0, const Path& dW,
                                     std::uint64_t seed = 0, std::uint64_t stream_base = 0);

ControlLaw apply_spike(const ControlLaw& control, const SpikeVariation& spike, const TimeGrid& grid);

// Realize a law along an ensemble's own path as an open-loop table.
Mat realize_control(const ControlLaw& law, const ParticleEnsemble& ens);

enum class TildeMode { CoefficientAtCopy, CopyAtCoefficient };

// kernel(owner, at) is the n x d matrix c_mu(theta^owner)(X^at).
//   CoefficientAtCopy:  out_i = mean_j kernel(i, j) aux_j        (aux rows length d)
//   CopyAtCoefficient:  out_i = mean_j kernel(j, i)^T aux_j      (aux rows length n)
using TildeKernel = std::function<Mat(int owner, int at)>;
Mat tilde_average(TildeMode mode, const TildeKernel& kernel, int N, const Mat& aux);
TildeMode parse_tilde_mode(const std::string& s);

} // namespace mfp
