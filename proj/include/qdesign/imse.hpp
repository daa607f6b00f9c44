#pragma once

// L-optimal instances approximating the integrated mean-squared prediction
// error of a random field observed on a finite candidate set.

#include "qdesign/types.hpp"

#include <string>
#include <vector>

namespace qdesign::imse {

enum class Kernel { Matern12, Matern32, Matern52, SqExp };

Kernel parse_kernel(const std::string& name);
const char* to_string(Kernel k);

/// Covariance at distance h with inverse range theta.
double kernel_value(Kernel k, double theta, double h);

struct ImseSpec
{
    int d = 2;
    int grid_n = 0;              // points per axis of a regular grid on [0,1]^d
    int lowdisc_count = 0;       // first points of the Halton sequence
    std::string points_file;     // p x d CSV
    double theta = 10;
    Kernel kernel = Kernel::Matern32;
    int m = 10;                  // truncation level
    long budget = 0;             // n; 0 means n = m
};

/// Rows are points in [0,1]^d; first `count` points of the Halton sequence (index 1, 2, ...).
Mat<double> halton(int count, int d);
Mat<double> regular_grid(int n, int d);
Mat<double> candidate_points(const ImseSpec& spec);

struct ImseInstance
{
    Mat<double> points;           // p x d
    Mat<double> A;                // m x p
    Mat<double> K;                // m x m, K K^T = Lambda_m
    double lambda = 0;            // 1 / n
    Vec<double> eigenvalues;      // all p eigenvalues of the scaled kernel matrix, decreasing
    Vec<double> sigma2;           // residual variances of the truncated model
    Mat<double> phi;              // p x m eigenfunction values
    long budget = 0;
};

/**
 * Kernel matrix on the candidates, eigendecomposition of D^{1/2} Gamma D^{1/2}
 * with D = I/p, truncation to the m leading terms and
 *     a_i = Lambda_m^{1/2} phi_{m,i} / sigma_i,   K = Lambda_m^{1/2},   lambda = 1/n,
 * so that lambda tr(K^T M(w)^{-1} K) approximates the IMSE of the design w.
 */
ImseInstance generate(const ImseSpec& spec);

/// Same construction on explicit points.
ImseInstance generate_on(const Mat<double>& points, Kernel kernel, double theta, int m, long budget);

} // namespace qdesign::imse
