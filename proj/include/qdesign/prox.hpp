#pragma once

#include "qdesign/types.hpp"

#include <algorithm>
#include <functional>

namespace qdesign {

/**
 * Proximal operator of t * ||.||_{1,2}^2:
 *     argmin_Z  0.5 ||Z - V||_F^2 + t (sum_i ||Z_i||)^2.
 * Rows are shrunk by a common threshold mu solving
 *     mu = 2 t sum_i max(0, ||V_i|| - mu),
 * found exactly over the sorted prefix of row norms.
 */
template <class Derived>
Mat<typename Derived::Scalar> prox_sq_l1(const Eigen::MatrixBase<Derived>& V, typename Derived::Scalar t)
{
    using Scalar = typename Derived::Scalar;
    if (!(t > 0)) throw Error(ErrorCode::InvalidOptions, "prox parameter must be positive");
    const Eigen::Index p = V.rows();
    const Vec<Scalar> n = V.rowwise().norm();

    std::vector<Scalar> sorted(n.data(), n.data() + p);
    std::sort(sorted.begin(), sorted.end(), std::greater<Scalar>());

    Scalar mu = 0;
    Scalar cumsum = 0;
    for (Eigen::Index k = 0; k < p; ++k) {
        cumsum += sorted[k];
        mu = Scalar(2) * t * cumsum / (Scalar(1) + Scalar(2) * t * Scalar(k + 1));
        if (k + 1 == p || sorted[k + 1] <= mu) break;
    }

    Mat<Scalar> Z(V.rows(), V.cols());
    for (Eigen::Index i = 0; i < p; ++i) {
        const Scalar scale = n[i] > mu ? Scalar(1) - mu / n[i] : Scalar(0);
        Z.row(i) = scale * V.row(i);
    }
    return Z;
}

} // namespace qdesign
