#pragma once

// Objectives, primal/dual mappings and optimality certificates for the
// quadratic (group) lasso  ||AX - K||_F^2 + lambda ||X||_{1,2}^2  and the
// equivalent c-/L-optimal design problem  min_w tr(K^T M(w)^{-1} K).
// The c-case is the r = 1 specialization throughout.

#include "qdesign/types.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <limits>

namespace qdesign {

template <class Scalar>
ProblemInstance<Scalar> prior_transform(const PriorSpec<Scalar>& prior)
{
    const auto& S = prior.Sigma;
    const Eigen::Index m = S.rows();
    if (S.cols() != m || m < 1)
        throw Error(ErrorCode::InvalidInstance, "Sigma must be square");
    if (prior.A.rows() != m || prior.K.rows() != m)
        throw Error(ErrorCode::InvalidInstance, "Sigma, A and target dimensions differ");
    if (!(prior.sigma2 > 0)) throw Error(ErrorCode::InvalidInstance, "sigma2 must be positive");
    if (prior.n < 1) throw Error(ErrorCode::InvalidInstance, "budget n must be >= 1");
    if (!S.allFinite()) throw Error(ErrorCode::InvalidInstance, "Sigma has non-finite entries");
    const Scalar asym = (S - S.transpose()).cwiseAbs().maxCoeff();
    if (asym > Scalar(1e-12) * std::max(Scalar(1), S.cwiseAbs().maxCoeff()))
        throw Error(ErrorCode::InvalidInstance, "Sigma is not symmetric");

    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(S);
    if (es.info() != Eigen::Success) throw Error(ErrorCode::SolveFailure, "eigensolver failed");
    const Vec<Scalar>& ev = es.eigenvalues();
    const Scalar ev_max = ev.maxCoeff();
    if (!(ev_max > 0) || ev.minCoeff() <= Scalar(1e-10) * ev_max)
        throw Error(ErrorCode::PriorNotPD, "Sigma is not positive definite");

    const Vec<Scalar> root = ev.cwiseMax(Scalar(1e-14) * ev_max).cwiseSqrt();
    const Mat<Scalar> half = es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
    return ProblemInstance<Scalar>(Mat<Scalar>(half * prior.A), Mat<Scalar>(half * prior.K),
                                   prior.sigma2 / static_cast<Scalar>(prior.n));
}

/// M(w) = A diag(w) A^T + lambda I.
template <class Scalar>
Mat<Scalar> information_matrix(const ProblemInstance<Scalar>& inst, const Design<Scalar>& w)
{
    if (w.size() != inst.p()) throw Error(ErrorCode::InvalidDesign, "design length mismatch");
    Mat<Scalar> M = inst.A() * w.weights().asDiagonal() * inst.A().transpose();
    M.diagonal().array() += inst.lambda();
    return M;
}

/**
 * Cholesky factor of M(w) together with Z = M^{-1} K, the quantity nearly
 * every design-side formula needs.
 */
template <class Scalar>
struct InformationSolve
{
    Eigen::LLT<Mat<Scalar>> llt;
    Mat<Scalar> Z;     // M^{-1} K
    Scalar phi = 0;    // tr(K^T M^{-1} K)

    InformationSolve(const ProblemInstance<Scalar>& inst, const Design<Scalar>& w)
        : llt(information_matrix(inst, w))
    {
        if (llt.info() != Eigen::Success)
            throw Error(ErrorCode::SolveFailure, "information matrix factorization failed");
        Z = llt.solve(inst.K());
        phi = (inst.K().array() * Z.array()).sum();
    }
};

/// phi(w) = tr(K^T M(w)^{-1} K); equals c^T M^{-1} c when r = 1.
template <class Scalar>
Scalar phi(const ProblemInstance<Scalar>& inst, const Design<Scalar>& w)
{
    return InformationSolve<Scalar>(inst, w).phi;
}

template <class Derived>
auto row_norms(const Eigen::MatrixBase<Derived>& X)
{
    using Scalar = typename Derived::Scalar;
    return Vec<Scalar>(X.rowwise().norm());
}

/// ||X||_{1,2}: sum of row norms (plain l1 norm for a single column).
template <class Derived>
typename Derived::Scalar l12_norm(const Eigen::MatrixBase<Derived>& X)
{
    return X.rowwise().norm().sum();
}

template <class Scalar, class Derived>
void check_primal_shape(const ProblemInstance<Scalar>& inst, const Eigen::MatrixBase<Derived>& X)
{
    if (X.rows() != inst.p() || X.cols() != inst.r())
        throw Error(ErrorCode::InvalidInstance, "primal point shape mismatch");
}

template <class Scalar, class Derived>
Scalar primal_objective(const ProblemInstance<Scalar>& inst, const Eigen::MatrixBase<Derived>& X)
{
    check_primal_shape(inst, X);
    const Scalar pen = l12_norm(X);
    return (inst.A() * X - inst.K()).squaredNorm() + inst.lambda() * pen * pen;
}

/// max_i ||Y^T a_i||, i.e. ||A^T y||_inf when r = 1.
template <class Scalar, class Derived>
Scalar max_correlation(const ProblemInstance<Scalar>& inst, const Eigen::MatrixBase<Derived>& Y)
{
    return (inst.A().transpose() * Y).rowwise().norm().maxCoeff();
}

template <class Scalar, class Derived>
Scalar dual_objective(const ProblemInstance<Scalar>& inst, const Eigen::MatrixBase<Derived>& Y)
{
    if (Y.rows() != inst.m() || Y.cols() != inst.r())
        throw Error(ErrorCode::InvalidInstance, "dual point shape mismatch");
    const Scalar u = max_correlation(inst, Y);
    return inst.K().squaredNorm() - (Y - inst.K()).squaredNorm() - u * u / inst.lambda();
}

template <class Scalar>
Scalar dual_objective(const ProblemInstance<Scalar>& inst, const DualCertificate<Scalar>& cert)
{
    return dual_objective(inst, cert.Y);
}

/// w_i = ||X_i|| / ||X||_{1,2}.
template <class Derived>
Design<typename Derived::Scalar> hat_w(const Eigen::MatrixBase<Derived>& X)
{
    using Scalar = typename Derived::Scalar;
    Vec<Scalar> n = X.rowwise().norm();
    const Scalar total = n.sum();
    if (!(total > 0)) throw Error(ErrorCode::ZeroPrimalPoint, "hat_w is undefined at X = 0");
    n /= total;
    return Design<Scalar>(std::move(n));
}

/// X_i = w_i a_i^T M(w)^{-1} K.
template <class Scalar>
PrimalPoint<Scalar> hat_x(const ProblemInstance<Scalar>& inst, const Design<Scalar>& w)
{
    const InformationSolve<Scalar> s(inst, w);
    return w.weights().asDiagonal() * (inst.A().transpose() * s.Z);
}

/// Y = K - AX with eps = L(X) - D(Y).
template <class Scalar, class Derived>
DualCertificate<Scalar> dual_certificate(const ProblemInstance<Scalar>& inst,
                                         const Eigen::MatrixBase<Derived>& X)
{
    DualCertificate<Scalar> cert;
    cert.source = CertificateSource::FromPrimal;
    cert.Y = inst.K() - inst.A() * X;
    const Scalar gap = primal_objective(inst, X) - dual_objective(inst, cert.Y);
    cert.eps = std::max(Scalar(0), gap);
    return cert;
}

/// Y = lambda M(w)^{-1} K with eps = lambda phi(w) - D(Y).
template <class Scalar>
DualCertificate<Scalar> dual_certificate(const ProblemInstance<Scalar>& inst, const Design<Scalar>& w)
{
    const InformationSolve<Scalar> s(inst, w);
    DualCertificate<Scalar> cert;
    cert.source = CertificateSource::FromDesign;
    cert.Y = inst.lambda() * s.Z;
    const Scalar gap = inst.lambda() * s.phi - dual_objective(inst, cert.Y);
    cert.eps = std::max(Scalar(0), gap);
    return cert;
}

/**
 * Violation of the primal-dual optimality system at X with Y = K - AX.
 * Zero iff X is optimal. For r = 1 the row directions reduce to signs.
 */
template <class Scalar, class Derived>
Scalar kkt_residual(const ProblemInstance<Scalar>& inst, const Eigen::MatrixBase<Derived>& X)
{
    check_primal_shape(inst, X);
    const Mat<Scalar> Y = inst.K() - inst.A() * X;
    const Mat<Scalar> G = inst.A().transpose() * Y;
    const Vec<Scalar> corr = G.rowwise().norm();
    const Vec<Scalar> xn = X.rowwise().norm();
    const Scalar level = inst.lambda() * xn.sum();

    Scalar res = std::abs(corr.maxCoeff() - level);
    for (Eigen::Index i = 0; i < inst.p(); ++i) {
        if (xn[i] > 0) {
            res = std::max(res, (G.row(i) - level * X.row(i) / xn[i]).norm());
        } else {
            res = std::max(res, corr[i] - level);
        }
    }
    return res;
}

/// Per-candidate numerator of the equivalence-theorem check:
/// tr(K^T M^{-1} H_i M^{-1} K) = ||Z^T a_i||^2 + lambda ||Z||_F^2.
template <class Scalar>
Vec<Scalar> directional_terms(const ProblemInstance<Scalar>& inst, const InformationSolve<Scalar>& s)
{
    const Vec<Scalar> g = (inst.A().transpose() * s.Z).rowwise().squaredNorm();
    return (g.array() + inst.lambda() * s.Z.squaredNorm()).matrix();
}

/// delta(w) = max_i tr(K^T M^{-1} H_i M^{-1} K) / phi(w) - 1; zero iff w is optimal.
template <class Scalar>
Scalar design_delta(const ProblemInstance<Scalar>& inst, const Design<Scalar>& w)
{
    const InformationSolve<Scalar> s(inst, w);
    if (!(s.phi > 0)) return 0;
    return std::max(Scalar(0), directional_terms(inst, s).maxCoeff() / s.phi - Scalar(1));
}

/// A^T K == 0: x = 0 is the unique lasso solution and every design is optimal.
template <class Scalar>
bool is_pathological(const ProblemInstance<Scalar>& inst)
{
    const Scalar scale = inst.A().norm() * inst.K().norm();
    return (inst.A().transpose() * inst.K()).cwiseAbs().maxCoeff() <= Scalar(1e-14) * scale;
}

} // namespace qdesign
