#pragma once

#include "qdesign.hpp"

#include <random>

namespace qtest {

using qdesign::Design;
using qdesign::Mat;
using qdesign::ProblemInstance;
using qdesign::Vec;

inline Mat<double> gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols)
{
    std::normal_distribution<double> nd(0.0, 1.0);
    Mat<double> M(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) M(i, j) = nd(rng);
    return M;
}

inline ProblemInstance<double> random_instance(std::mt19937_64& rng, Eigen::Index m, Eigen::Index p,
                                               double lambda, Eigen::Index r = 1)
{
    Mat<double> A = gaussian(rng, m, p);
    Mat<double> K = gaussian(rng, m, r);
    return ProblemInstance<double>(std::move(A), std::move(K), lambda);
}

inline ProblemInstance<double> normalized_instance(std::mt19937_64& rng, Eigen::Index m, Eigen::Index p,
                                                   double lambda, Eigen::Index r = 1)
{
    Mat<double> A = gaussian(rng, m, p);
    A.colwise().normalize();
    Mat<double> K = gaussian(rng, m, r);
    return ProblemInstance<double>(std::move(A), std::move(K), lambda);
}

/// Random point of the simplex with a few exact zeros.
inline Design<double> random_design(std::mt19937_64& rng, Eigen::Index p, double zero_prob = 0.2)
{
    std::exponential_distribution<double> ex(1.0);
    std::bernoulli_distribution drop(zero_prob);
    Vec<double> w(p);
    for (Eigen::Index i = 0; i < p; ++i) w[i] = drop(rng) ? 0.0 : ex(rng);
    if (!(w.sum() > 0)) w[0] = 1;
    return Design<double>(w / w.sum());
}

/// Columns of A orthogonal to c: A^T c = 0.
inline ProblemInstance<double> pathological_instance(std::mt19937_64& rng, Eigen::Index m, Eigen::Index p,
                                                     double lambda)
{
    Vec<double> c = gaussian(rng, m, 1);
    Mat<double> A = gaussian(rng, m, p);
    A -= c * (c.transpose() * A) / c.squaredNorm();
    return ProblemInstance<double>(std::move(A), c, lambda);
}

inline double rel_diff(double a, double b)
{
    return std::abs(a - b) / std::max(1.0, std::abs(b));
}

/// Indices with positive weight.
inline std::vector<Eigen::Index> support(const Vec<double>& w, double thresh = 0.0)
{
    std::vector<Eigen::Index> s;
    for (Eigen::Index i = 0; i < w.size(); ++i)
        if (w[i] > thresh) s.push_back(i);
    return s;
}

} // namespace qtest
