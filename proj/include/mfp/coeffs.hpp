#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "mfp/moments.hpp"
#include "mfp/types.hpp"

namespace mfp {

struct ControlSet {
    enum class Kind { Finite, Interval };
    Kind kind = Kind::Interval;
    std::vector<double> points;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    int grid_points = 41;

    static ControlSet finite(std::vector<double> pts);
    static ControlSet interval(double lo, double hi, int grid_points = 41);

    bool contains(double u, double tol = 1e-12) const;
    std::vector<double> grid() const;
};

// Value and derivatives of an n-component coefficient at (t, x, m, u).
// Second-order blocks are flattened column-major per component row:
//   xx(r, a + d*b), xm(r, a + d*k), mm(r, k + K*l).
struct Jet {
    Vec v;
    Mat x;
    Mat m;
    Mat xx;
    Mat xm;
    Mat mm;

    Mat xx_of(int r, int d) const;
    Mat xm_of(int r, int d, int K) const;
    Mat mm_of(int r, int K) const;
};

// Diffusion components are indexed (i, k) -> i + d*k, column k multiplying dW^k.
class CoefficientModel {
public:
    virtual ~CoefficientModel() = default;

    virtual int dim() const = 0;
    virtual const MomentMap& moments() const = 0;
    virtual const ControlSet& controls() const = 0;
    virtual std::string name() const { return "model"; }

    // order 0: value only, 1: + first derivatives, 2: everything
    virtual Jet drift(double t, const Vec& x, const Vec& m, double u, int order) const = 0;
    virtual Jet diffusion(double t, const Vec& x, const Vec& m, double u, int order) const = 0;
    virtual Jet running(double t, const Vec& x, const Vec& m, double u, int order) const = 0;
    virtual Jet terminal(const Vec& x, const Vec& m, int order) const = 0;

    int K() const { return moments().K; }
    Mat diffusion_matrix(double t, const Vec& x, const Vec& m, double u) const;
};

// Lions derivatives of every component of a jet, via the chain rule through psi.
Mat jet_mu(const Jet& j, const MomentMap& mm, int r, const Vec& y);          // 1 x d as row
Mat jet_mu_all(const Jet& j, const MomentMap& mm, const Vec& y);             // n x d
Mat jet_ymu(const Jet& j, const MomentMap& mm, int r, const Vec& y);         // d x d
Mat jet_xmu(const Jet& j, const MomentMap& mm, int r, const Vec& y);         // d x d, (x-dir, y-dir)
Mat jet_mumu(const Jet& j, const MomentMap& mm, int r, const Vec& y, const Vec& z);

struct HamiltonianEval {
    double value = 0;
    Vec H_x;    // d
    Mat H_xx;   // d x d
    Vec H_m;    // K
    Mat H_xm;   // d x K
    Mat H_mm;   // K x K

    Vec mu(const MomentMap& mm, const Vec& y) const;
    Mat xmu(const MomentMap& mm, const Vec& y) const;
    Mat ymu(const MomentMap& mm, const Vec& y) const;
    Mat mumu(const MomentMap& mm, const Vec& y, const Vec& z) const;
};

// H = <A,p> + <B,q> + f, q is d x d with column k pairing dW^k
HamiltonianEval hamiltonian_from_jets(const Jet& A, const Jet& B, const Jet& f, const Vec& p,
                                      const Mat& q, int d, int K);
HamiltonianEval hamiltonian(const CoefficientModel& model, double t, const Vec& x, const Vec& m,
                            double u, const Vec& p, const Mat& q, int order = 2);

// Lions derivative of phi at the empirical measure of `states`, evaluated at y (1 x d).
Mat lions_derivative(const MomentFunctional& phi, const Mat& states, const Vec& y);

// |analytic - fd| / max(1, |fd|) for the lifted map along `direction`.
double check_lions_fd(const MomentFunctional& phi, const Mat& states, const Mat& direction, double h);

struct TaylorTerms {
    double first = 0;
    double second_mixed = 0;   // includes the 1/2
    double second_y = 0;       // includes the 1/2
    double remainder = 0;
    double moment_bound = 0;   // (E|eta|^2)^{3/2} + E|eta|^3
};

TaylorTerms taylor_expand_measure(const MomentFunctional& phi, const Mat& base, const Mat& next);

// max relative error of each derivative evaluator against central differences
std::map<std::string, double> check_model_derivatives(const CoefficientModel& model, int points,
                                                      double step, std::uint64_t seed);

} // namespace mfp
