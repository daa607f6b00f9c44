#pragma once

// Safe elimination tests. Every rule is an instance of one inequality: with
// u = max_j ||Y^T a_j|| and an eps bounding the dual suboptimality of Y,
//     u - ||Y^T a_i|| - sqrt(eps (||a_i||^2 + lambda)) > 0
// certifies that candidate i carries zero weight in every optimal design.

#include "qdesign/core.hpp"

#include <random>
#include <utility>

namespace qdesign {

enum class ScreeningRule { None, D0, D1, D2, B };

inline const char* to_string(ScreeningRule rule)
{
    switch (rule) {
        case ScreeningRule::None: return "none";
        case ScreeningRule::D0: return "d0";
        case ScreeningRule::D1: return "d1";
        case ScreeningRule::D2: return "d2";
        case ScreeningRule::B: return "b";
    }
    return "?";
}

template <class Scalar>
struct ScreeningMask
{
    std::vector<bool> eliminated;          // over the candidates the test ran on
    Vec<Scalar> values;                    // test value per candidate; > 0 means eliminated
    ScreeningRule rule = ScreeningRule::None;
    Scalar eps_used = 0;
    std::vector<Eigen::Index> index_map;   // original indices of the survivors

    Eigen::Index num_eliminated() const
    {
        return static_cast<Eigen::Index>(std::count(eliminated.begin(), eliminated.end(), true));
    }

    /// Re-express survivors in an outer numbering: `original[j]` is the
    /// outer index of local candidate j.
    void compose(const std::vector<Eigen::Index>& original)
    {
        for (auto& idx : index_map) idx = original[idx];
    }
};

namespace detail {

// Relative width of the band around the maximum correlation that is never
// eliminated.
inline constexpr double tie_band = 1e-12;

template <class Scalar>
ScreeningMask<Scalar> mask_from_values(Vec<Scalar> values, const Vec<Scalar>& corr,
                                       ScreeningRule rule, Scalar eps)
{
    ScreeningMask<Scalar> mask;
    const Eigen::Index p = values.size();
    const Scalar top = corr.maxCoeff();
    mask.eliminated.assign(static_cast<std::size_t>(p), false);
    for (Eigen::Index i = 0; i < p; ++i) {
        const bool at_max = corr[i] >= top * (Scalar(1) - Scalar(tie_band));
        const bool out = values[i] > 0 && !at_max;
        mask.eliminated[static_cast<std::size_t>(i)] = out;
        if (!out) mask.index_map.push_back(i);
    }
    mask.values = std::move(values);
    mask.rule = rule;
    mask.eps_used = eps;
    return mask;
}

template <class Scalar>
ScreeningMask<Scalar> screen_with(const ProblemInstance<Scalar>& inst,
                                  const DualCertificate<Scalar>& cert, ScreeningRule rule)
{
    if (!(cert.eps >= 0))
        throw Error(ErrorCode::InvalidCertificate, "negative or NaN eps");
    if (cert.Y.rows() != inst.m() || cert.Y.cols() != inst.r())
        throw Error(ErrorCode::InvalidCertificate, "certificate shape mismatch");
    const Vec<Scalar> corr = (inst.A().transpose() * cert.Y).rowwise().norm();
    const Scalar top = corr.maxCoeff();
    const Scalar eps = std::max(Scalar(0), cert.eps);
    Vec<Scalar> values =
        (top - corr.array() - (eps * (inst.col_sq_norms().array() + inst.lambda())).sqrt()).matrix();
    return mask_from_values(std::move(values), corr, rule, eps);
}

} // namespace detail

template <class Scalar>
ScreeningMask<Scalar> screen_d0(const ProblemInstance<Scalar>& inst, const DualCertificate<Scalar>& cert)
{
    return detail::screen_with(inst, cert, ScreeningRule::D0);
}

/// D0 fed with Y = K - AX and the primal gap; one product A^T (K - AX).
template <class Scalar, class Derived>
ScreeningMask<Scalar> screen_d1(const ProblemInstance<Scalar>& inst, const Eigen::MatrixBase<Derived>& X)
{
    return detail::screen_with(inst, dual_certificate(inst, X), ScreeningRule::D1);
}

/// D0 fed with Y = lambda M(w)^{-1} K and the design gap.
template <class Scalar>
ScreeningMask<Scalar> screen_d2(const ProblemInstance<Scalar>& inst, const Design<Scalar>& w)
{
    return detail::screen_with(inst, dual_certificate(inst, w), ScreeningRule::D2);
}

/// Primal form: the design is w = hat_w(X).
template <class Scalar, class Derived>
ScreeningMask<Scalar> screen_d2(const ProblemInstance<Scalar>& inst, const Eigen::MatrixBase<Derived>& X)
{
    return screen_d2(inst, hat_w(X));
}

/**
 * Design-side bound B(M(w), H_i) from a single factorization of M(w):
 *   sqrt((1+delta) Phi - lambda tr(K^T M^-2 K)) - sqrt(delta Phi (1 + ||a_i||^2/lambda)) - ||K^T M^-1 a_i||.
 * lambda * B_i coincides with the D2 test value at w.
 */
template <class Scalar>
ScreeningMask<Scalar> bound_B(const ProblemInstance<Scalar>& inst, const Design<Scalar>& w)
{
    const InformationSolve<Scalar> s(inst, w);
    const Scalar lam = inst.lambda();
    const Vec<Scalar> t = (inst.A().transpose() * s.Z).rowwise().norm();
    const Scalar curv = lam * s.Z.squaredNorm();   // lambda tr(K^T M^-2 K)
    const Scalar Phi = s.phi;
    const Scalar top = t.maxCoeff();
    const Scalar delta = Phi > 0 ? std::max(Scalar(0), (top * top + curv) / Phi - Scalar(1)) : Scalar(0);

    const Scalar lead = std::sqrt(std::max(Scalar(0), (Scalar(1) + delta) * Phi - curv));
    Vec<Scalar> values =
        (lead - (delta * Phi * (Scalar(1) + inst.col_sq_norms().array() / lam)).sqrt() - t.array()).matrix();
    const Scalar eps = lam * delta * Phi;
    return detail::mask_from_values(std::move(values), t, ScreeningRule::B, eps);
}

/**
 * sup { ||Z^T a|| : ||Y - Z||_F <= R } = ||Y^T a|| + R ||a||, with the
 * maximizer Y + R a a^T Y / (||a|| ||Y^T a||). When Y^T a = 0 the maximizer
 * is Y + R a e_1^T / ||a||.
 */
template <class Scalar>
std::pair<Scalar, Mat<Scalar>> sup_ball_correlation(const Mat<Scalar>& Y, const Vec<Scalar>& a, Scalar R)
{
    if (!(R >= 0)) throw Error(ErrorCode::InvalidInstance, "radius must be nonnegative");
    if (a.size() != Y.rows()) throw Error(ErrorCode::InvalidInstance, "shape mismatch");
    const Scalar an = a.norm();
    const Vec<Scalar> ya = Y.transpose() * a;
    const Scalar yan = ya.norm();
    const Scalar value = yan + R * an;
    Mat<Scalar> Zs = Y;
    if (R > 0 && an > 0) {
        if (yan > 0) {
            Zs += (R / (an * yan)) * a * ya.transpose();
        } else {
            Zs.col(0) += (R / an) * a;
        }
    }
    return {value, Zs};
}

} // namespace qdesign
