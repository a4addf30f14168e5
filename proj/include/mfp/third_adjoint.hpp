#pragma once

#include <string>
#include <vector>

#include "mfp/adjoint.hpp"

namespace mfp {

enum class ThirdVariant { Plain, Symmetrized };
ThirdVariant parse_variant(const std::string& s);
std::string to_string(ThirdVariant v);

// Pair-indexed adjoint. Pair (i, j) couples particle i of ensemble 1 with
// particle j of ensemble 2 and is stored at row i * N2 + j. Matrices are
// oriented so that <P, y (x) yhat> = y' P yhat.
struct ProductAdjoint {
    int N1 = 0, N2 = 0, d = 1;
    Path P;                    // M+1 blocks, N1*N2 x d*d
    std::vector<Path> Q1, Q2;  // [k][c]: N1*N2 x d*d, pairing dW^c and dWhat^c
    Path EP;                   // E[P_{k+1} | F_k]

    int row(int i, int j) const { return i * N2 + j; }
    Mat P_at(int i, int j, int k) const { return vec_to_mat(P[k].row(row(i, j)).transpose(), d); }
    Mat Q1_at(int i, int j, int k, int c) const { return vec_to_mat(Q1[k][c].row(row(i, j)).transpose(), d); }
    Mat Q2_at(int i, int j, int k, int c) const { return vec_to_mat(Q2[k][c].row(row(i, j)).transpose(), d); }
};

struct ThirdAdjointOptions {
    AdjointOptions adjoint;
    ThirdVariant variant = ThirdVariant::Plain;
    double kappa = 10.0;
    double tol = 1e-14;  // stop once rho_n <= tol * rho_1
    int max_iter = 50;
    int kappa_retries = 4;
    bool allow_shared_noise = false;
};

struct PicardTrace {
    std::vector<double> rho;     // rho(iterate n, iterate n-1), n = 1, 2, ...
    std::vector<double> ratios;  // rho_n / rho_{n-1}
    double kappa = 0;
    int retries = 0;
    bool converged = false;
    int iterations() const { return int(rho.size()); }
    double max_ratio() const;
};

// One side of the product space: ensemble, its control table and both adjoints.
struct AdjointSide {
    const ParticleEnsemble* e = nullptr;
    const Mat* alpha = nullptr;
    const FirstOrderAdjoint* first = nullptr;
    const SecondOrderAdjoint* second = nullptr;
};

// Source of the product equation at step k:
//   F^{ij} = L^i Dpsi2^j + Dpsi1^i' R^j + Dpsi1^i' C Dpsi2^j
struct PairSource {
    std::vector<Mat> L, R, Dpsi1, Dpsi2;
    Mat C;
    Mat F(int i, int j) const {
        return L[i] * Dpsi2[j] + Dpsi1[i].transpose() * R[j] + Dpsi1[i].transpose() * C * Dpsi2[j];
    }
};

PairSource pair_source(const CoefficientModel& model, const AdjointSide& one, const AdjointSide& two, int k,
                       ThirdVariant variant);

ProductAdjoint solve_third_adjoint_picard(const CoefficientModel& model, const AdjointSide& one,
                                          const AdjointSide& two, const ThirdAdjointOptions& opt,
                                          PicardTrace* trace = nullptr);

// sup_k e^{kappa t_k} mean_pairs |dP_k|^2 + 3/4 sum_k dt e^{kappa t_k} mean_pairs (|dQ1_k|^2 + |dQ2_k|^2)
double rho_metric(const ProductAdjoint& a, const ProductAdjoint& b, const TimeGrid& grid, double kappa);

} // namespace mfp
