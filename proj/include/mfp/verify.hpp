#pragma once

#include <map>
#include <string>
#include <vector>

#include "mfp/adjoint.hpp"
#include "mfp/third_adjoint.hpp"
#include "mfp/variational.hpp"

namespace mfp {

struct CostEstimate {
    double value = 0;
    double stderr_ = 0;
    Vec per_particle;
};

// Empirical J: per-cell trapezoid of f under the cell's control plus terminal g.
CostEstimate cost_functional(const CoefficientModel& model, const ParticleEnsemble& e);

// lhs: terminal pairing, rhs: time integral as printed. residual and
// paired_stderr come from the pathwise difference. cv_residual subtracts the
// martingale part of the discrete product rule, leaving the deterministic
// (discretization plus dropped-term) component. full_rhs adds back the spike
// cross terms that the printed relation folds into o(eps).
struct DualityResidual {
    std::string name;
    double eps = 0;
    double lhs = 0;
    double rhs = 0;
    double residual = 0;
    double paired_stderr = 0;
    double cv_residual = 0;
    double cv_stderr = 0;
    double full_rhs = 0;
    double full_residual = 0;
    double full_stderr = 0;
    // quadratic-in-spike-height part of the assembled rhs, and its stderr
    double spike_quadratic = 0;
    double spike_quadratic_stderr = 0;
    // per-sample martingale part: (lhs - rhs) - cv
    Vec noise;

    bool within(double rel = 0.02, double k = 3.0) const;
};

DualityResidual check_duality_pY(const CoefficientModel& model, const VariationalBundle& b,
                                 const FirstOrderAdjoint& first);
DualityResidual check_duality_pZ(const CoefficientModel& model, const VariationalBundle& b,
                                 const FirstOrderAdjoint& first);
DualityResidual check_duality_PYY(const CoefficientModel& model, const VariationalBundle& b,
                                  const FirstOrderAdjoint& first, const SecondOrderAdjoint& second);
// b1/b2 carry the spike on two independent ensembles; the adjoints belong to
// the respective base runs and `third` was solved on (b1.base, b2.base).
DualityResidual check_duality_third(const CoefficientModel& model, const VariationalBundle& b1,
                                    const VariationalBundle& b2, const AdjointSide& one, const AdjointSide& two,
                                    const ProductAdjoint& third, ThirdVariant variant = ThirdVariant::Plain,
                                    bool allow_shared_noise = false);

struct ExpansionCheck {
    double eps = 0;
    double lhs = 0;  // J(alpha^eps) - J(alpha), paired on the same noise
    double lhs_stderr = 0;
    double rhs = 0;  // mean of sum dt (dH + 1/2 <P, dB dB'>)
    double residual = 0;
    double residual_stderr = 0;
    double residual_over_eps = 0;
    // residual with the martingale parts of the pY, pZ and PYY relations removed
    double cv_residual = 0;
    double cv_stderr = 0;
    double cv_residual_over_eps = 0;
    // intermediate forms of the expansion, each a particle mean
    double taylor = 0;        // second-order Taylor expansion in Y + Z
    double after_first = 0;   // after dualizing Y + Z with p
    double after_second = 0;  // after dualizing Y x Y with P
    // max over steps of |after_second - rhs - 1/2 pair mean of Y' F Y| per step
    double cascade_gap = 0;
};

ExpansionCheck check_expansion(const CoefficientModel& model, const VariationalBundle& b,
                               const FirstOrderAdjoint& first, const SecondOrderAdjoint& second);

struct MaxPrincipleResult {
    double min_value = 0;
    double scale = 1;
    int worst_particle = 0, worst_step = 0;
    double worst_u = 0;
    // rows: t, u offset, min, 1% quantile, 5% quantile, median over particles
    Mat table;
};

// V(t, u) = H(u) - H(alpha) + 1/2 <P, (B(u) - B(alpha))(B(u) - B(alpha))'> per particle,
// at u = center(i, k) + offset for every offset and every listed knot.
MaxPrincipleResult check_max_principle(const CoefficientModel& model, const ParticleEnsemble& e, const Mat& alpha,
                                       const FirstOrderAdjoint& first, const SecondOrderAdjoint& second,
                                       const Mat& center, const std::vector<double>& offsets,
                                       const std::vector<int>& steps);

// evenly spaced knots k < M, n of them
std::vector<int> knot_subset(int M, int n);

struct CheckRecord {
    std::string name;
    double statistic = 0;
    double tolerance = 0;
    bool pass = false;
    std::map<std::string, double> details;
    std::string note;
};

struct VerificationReport {
    std::vector<CheckRecord> checks;
    std::string config_hash;
    std::map<std::string, std::uint64_t> seeds;
    std::map<std::string, double> runtimes;

    bool all_pass() const;
    std::vector<std::string> failing() const;
};

} // namespace mfp
