#pragma once

#include <string>

#include "mfp/coeffs.hpp"

namespace mfp {

// Moments are (x_1..x_d, |x|^2); m1 below is the first block, m2 the last entry.
//
//   A_i  = a x_i + abar m1_i + kappa tanh(m1_i) + kappa2 tanh(m2) + b u
//          + gamma sin(x_i) + lambda x_i m1_i + w x_{i+1}
//   B_ii = sigma + sigma_u u + sigma_x x_i + sigma_m m1_i,   B_ik = tau x_k (i != k)
//   f    = r/2 u^2 + c/2 |x|^2 + cbar/2 |m1|^2 + c2 m2 + cxm <x, m1>
//   g    = s/2 |x|^2 + sbar/2 |m1|^2 + s2 m2 + s22/2 m2^2
struct ModelParams {
    int d = 1;
    double a = 0, abar = 0, kappa = 0, kappa2 = 0, b = 0, gamma = 0, lambda = 0, w = 0;
    double sigma = 0, sigma_u = 0, sigma_x = 0, sigma_m = 0, tau = 0;
    double r = 0, c = 0, cbar = 0, c2 = 0, cxm = 0;
    double s = 0, sbar = 0, s2 = 0, s22 = 0;
    ControlSet U = ControlSet::interval(-10.0, 10.0, 41);
    std::string label = "custom";
};

class ParametricModel : public CoefficientModel {
public:
    explicit ParametricModel(ModelParams p);

    int dim() const override { return p_.d; }
    const MomentMap& moments() const override { return mm_; }
    const ControlSet& controls() const override { return p_.U; }
    std::string name() const override { return p_.label; }
    const ModelParams& params() const { return p_; }

    Jet drift(double t, const Vec& x, const Vec& m, double u, int order) const override;
    Jet diffusion(double t, const Vec& x, const Vec& m, double u, int order) const override;
    Jet running(double t, const Vec& x, const Vec& m, double u, int order) const override;
    Jet terminal(const Vec& x, const Vec& m, int order) const override;

private:
    ModelParams p_;
    MomentMap mm_;
};

// drift-control mean-field LQ
ModelParams tp1_params();
// diffusion control, U = {-1, +1}
ModelParams tp2_params();
// tanh measure nonlinearity
ModelParams tp3_params();
// diffusion control plus state nonlinearity; used for the informative order study
ModelParams sharp_params();

ModelParams preset_params(const std::string& id);

} // namespace mfp
