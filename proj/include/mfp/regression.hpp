#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mfp/types.hpp"

namespace mfp {

// Polynomial features (all monomials up to `degree`) of standardized inputs.
struct RegressionBasis {
    int degree = 2;
    double ridge = 1e-8;  // multiplied by trace(F'F) / cols

    static std::vector<std::vector<int>> exponents(int dim, int degree);
    int size(int dim) const { return int(exponents(dim, degree).size()); }
    Mat features(const Mat& z) const;
};

struct Standardizer {
    Vec center, scale;
    static Standardizer fit(const Mat& x);
    Mat apply(const Mat& x) const;
};

struct ConditionalFit {
    RegressionBasis basis;
    Standardizer standardizer;
    Mat coef;      // P x n_out
    Mat fitted;    // in-sample
    Mat residual;

    Mat operator()(const Mat& inputs) const;
};

ConditionalFit regress_conditional(const Mat& targets, const Mat& inputs, const RegressionBasis& basis);

enum class Backend { Deterministic, Regression };
Backend parse_backend(const std::string& s);
std::string to_string(Backend b);

// Samples for one backward step. Each sample s moves from cur.row(s) to
// next.row(s) = mean.row(s) + S(s) dW.row(s), S(s) being D x L.
struct StepSamples {
    Mat cur, next, mean;
    std::function<Mat(int)> S;
    Mat dW;
    double dt = 0;
    int step = 0;
};

struct StepProjection {
    Mat E;               // E[T | F_k], n x n_out
    std::vector<Mat> Z;  // E[T dW^l | F_k] / dt, one n x n_out block per l
};

// Deterministic: exact Gaussian one-step expectation of a target that is a
// quadratic polynomial of the next state (throws SolverError otherwise).
// Regression: joint least squares of T on [phi(cur), phi(cur) dW^l].
StepProjection project_step(Backend backend, const RegressionBasis& basis, const Mat& targets,
                            const StepSamples& s);

} // namespace mfp
