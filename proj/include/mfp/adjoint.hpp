#pragma once

#include <vector>

#include "mfp/forward.hpp"
#include "mfp/regression.hpp"

namespace mfp {

struct AdjointOptions {
    Backend backend = Backend::Deterministic;
    RegressionBasis basis;
    double sweep_tol = 1e-12;
    int max_sweeps = 50;
};

// p: M+1 blocks N x d. q: M blocks N x d*d, row i holding vec(q) column-major
// (column l of q pairs with dW^l). Ep[k] = E[p_{k+1} | F_k].
struct FirstOrderAdjoint {
    Path p;
    Path q;
    Path Ep;

    Vec p_at(int i, int k) const { return p[k].row(i).transpose(); }
    Mat q_at(int i, int k) const;
};

// P: M+1 blocks N x d*d (vec col-major). Q[k][l]: N x d*d, the slice Q^l = Q e_l.
struct SecondOrderAdjoint {
    Path P;
    std::vector<Path> Q;
    Path EP;

    Mat P_at(int i, int k) const;
    Mat Q_at(int i, int k, int l) const;
};

// Hamiltonian pieces of every particle at step k along (X, m, alpha, p, q).
// Step M is the terminal cost: value/x/xx/m/xm/mm come from g.
std::vector<HamiltonianEval> hamiltonian_step(const CoefficientModel& model, const ParticleEnsemble& e,
                                              const Mat& alpha, const FirstOrderAdjoint* first, int k);

Vec terminal_p(const CoefficientModel& model, const ParticleEnsemble& e, int i, const Vec& gm_bar);

FirstOrderAdjoint solve_first_adjoint(const CoefficientModel& model, const ParticleEnsemble& base,
                                      const Mat& alpha, const AdjointOptions& opt = {});

SecondOrderAdjoint solve_second_adjoint(const CoefficientModel& model, const ParticleEnsemble& base,
                                        const Mat& alpha, const FirstOrderAdjoint& first, bool symmetrize,
                                        const AdjointOptions& opt = {});

} // namespace mfp

namespace mfp {

// Coefficient jets of every particle at step k (k < M).
struct StepCoefficients {
    std::vector<Jet> A, B, f;
};

StepCoefficients step_coefficients(const CoefficientModel& model, const ParticleEnsemble& e, const Mat& alpha,
                                   int k, int order);

// Samples for projecting a function of X_{k+1} onto F_k along one ensemble.
StepSamples single_samples(const ParticleEnsemble& e, const StepCoefficients& c, int k);

inline Mat vec_to_mat(const Eigen::Ref<const Vec>& v, int d) { return Eigen::Map<const Mat>(v.data(), d, d); }
inline Vec mat_to_vec(const Mat& m) { return Eigen::Map<const Vec>(m.data(), m.size()); }

} // namespace mfp
