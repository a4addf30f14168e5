#pragma once

#include <functional>
#include <vector>

#include "mfp/forward.hpp"
#include "mfp/models.hpp"

namespace mfp {

// Classical RK4 for y' = F(t, y) run backward from y(T) = yT; returns y on the
// uniform grid t_n = n T / steps.
std::vector<double> rk4_backward(const std::function<double(double, double)>& F, double yT, double T, int steps);

// Mean-field LQ control with A = a x + abar m + b u, B = sigma,
// f = (r u^2 + c x^2 + cbar m^2) / 2, g = (s x^2 + sbar m^2) / 2:
//   eta' = -2 a eta + b^2/r eta^2 - c,                        eta(T) = s
//   pi'  = -2 (a + abar) pi + b^2/r pi^2 - (c + cbar),          pi(T) = s + sbar
//   u*   = -(b/r) (eta (x - m) + pi m)
struct RiccatiSolution {
    ModelParams params;
    double T = 1;
    int steps = 0;
    std::vector<double> eta, pi;

    double eta_at(double t) const;
    double pi_at(double t) const;
    // cost of the optimal control from a deterministic start x0
    double value(const Vec& x0) const;
    ControlLaw feedback(double shift = 0.0) const;
};

RiccatiSolution solve_mflq_riccati(const ModelParams& p, double T, int steps = 20000);

} // namespace mfp
