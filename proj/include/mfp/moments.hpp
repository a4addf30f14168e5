#pragma once

#include <cstdint>
#include <functional>

#include "mfp/types.hpp"

namespace mfp {

// Measure dependence enters only through m = <psi, mu>, the empirical mean of
// psi over the particles.
struct MomentMap {
    int d = 1;
    int K = 1;
    std::function<Vec(const Vec&)> psi;
    std::function<Mat(const Vec&)> dpsi;        // K x d
    std::function<Mat(const Vec&, int)> d2psi;  // d x d hessian of coordinate k
    bool linear = false;

    static MomentMap identity(int d);
    static MomentMap squares(int d);        // psi_k = x_k^2
    static MomentMap first_second(int d);   // (x_1..x_d, |x|^2)
};

Vec empirical_moments(const Mat& states, const MomentMap& mm);

struct MomentCheck {
    double dpsi_err = 0;
    double d2psi_err = 0;
};

// central differences of psi / dpsi at random points in [-2,2]^d
MomentCheck check_moment_map(const MomentMap& mm, int points, double step, std::uint64_t seed);

// phi(mu) = F(<psi, mu>) with F twice differentiable
struct MomentFunctional {
    MomentMap psi;
    std::function<double(const Vec&)> F;
    std::function<Vec(const Vec&)> dF;
    std::function<Mat(const Vec&)> d2F;

    double operator()(const Mat& states) const;
};

} // namespace mfp
