#pragma once

// Exact regularization path of the standard lasso
//     min_x 0.5 ||Ax - c||^2 + alpha ||x||_1
// and its reparametrization lambda = alpha / ||x(alpha)||_1, which turns the
// path into exact solutions of the quadratic lasso and hence exact Bayesian
// c-optimal designs.

#include "qdesign/core.hpp"

#include <limits>
#include <set>
#include <utility>

namespace qdesign {

template <class Scalar>
struct Breakpoint
{
    Scalar alpha = 0;
    Vec<Scalar> x;
    Scalar lambda = std::numeric_limits<Scalar>::infinity();
    // Active set and signs of the segment that starts at this breakpoint.
    std::vector<Eigen::Index> active;
    std::vector<int> signs;

    Scalar l1() const { return x.template lpNorm<1>(); }
};

enum class PathTermination { ReachedLambda, ReachedZero, Degenerate };

inline const char* to_string(PathTermination t)
{
    switch (t) {
        case PathTermination::ReachedLambda: return "reached_lambda";
        case PathTermination::ReachedZero: return "reached_zero";
        case PathTermination::Degenerate: return "degenerate";
    }
    return "?";
}

template <class Scalar>
struct HomotopyPath
{
    std::vector<Breakpoint<Scalar>> breakpoints;
    PathTermination termination = PathTermination::ReachedZero;

    /// Index k of the segment [lambda_{k+1}, lambda_k) holding lambda.
    std::size_t segment_of(Scalar lambda) const
    {
        if (!(lambda > 0)) throw Error(ErrorCode::InvalidOptions, "lambda must be positive");
        for (std::size_t k = 0; k + 1 < breakpoints.size(); ++k) {
            if (lambda >= breakpoints[k + 1].lambda) return k;
        }
        throw Error(ErrorCode::PathTooShort, "lambda lies below the last computed breakpoint");
    }
};

namespace detail {

// (A_J^T A_J)^{-1} kept in sync with the active set by bordering updates and
// Schur-complement downdates.
template <class Scalar>
class GramInverse
{
public:
    static constexpr int refactor_every = 50;
    static constexpr double max_condition = 1e12;

    explicit GramInverse(const Mat<Scalar>& A) : A_(A) {}

    const Mat<Scalar>& G() const { return G_; }
    const std::vector<Eigen::Index>& cols() const { return cols_; }

    /// Returns false when the new column is numerically dependent on the active ones.
    bool add(Eigen::Index j)
    {
        const Vec<Scalar> b = A_.col(j);
        const Eigen::Index n = static_cast<Eigen::Index>(cols_.size());
        if (n == 0) {
            const Scalar bb = b.squaredNorm();
            if (!(bb > 0)) return false;
            G_ = Mat<Scalar>::Constant(1, 1, Scalar(1) / bb);
            cols_.push_back(j);
            return true;
        }
        const Vec<Scalar> u = active_matrix().transpose() * b;
        const Vec<Scalar> Gu = G_ * u;
        const Scalar d = b.squaredNorm() - u.dot(Gu);
        if (!(d > Scalar(1e-10) * b.squaredNorm())) return false;
        Mat<Scalar> next(n + 1, n + 1);
        next.topLeftCorner(n, n) = G_ + Gu * Gu.transpose() / d;
        next.topRightCorner(n, 1) = -Gu / d;
        next.bottomLeftCorner(1, n) = -Gu.transpose() / d;
        next(n, n) = Scalar(1) / d;
        G_ = std::move(next);
        cols_.push_back(j);
        return maintain();
    }

    bool remove(Eigen::Index j)
    {
        const auto it = std::find(cols_.begin(), cols_.end(), j);
        const Eigen::Index t = it - cols_.begin();
        const Eigen::Index n = static_cast<Eigen::Index>(cols_.size());
        cols_.erase(it);
        if (n == 1) {
            G_.resize(0, 0);
            return true;
        }
        std::vector<Eigen::Index> keep;
        for (Eigen::Index i = 0; i < n; ++i)
            if (i != t) keep.push_back(i);
        Mat<Scalar> next(n - 1, n - 1);
        Vec<Scalar> g(n - 1);
        for (Eigen::Index a = 0; a < n - 1; ++a) {
            g[a] = G_(keep[a], t);
            for (Eigen::Index b = 0; b < n - 1; ++b) next(a, b) = G_(keep[a], keep[b]);
        }
        next -= g * g.transpose() / G_(t, t);
        G_ = std::move(next);
        return maintain();
    }

    Mat<Scalar> active_matrix() const
    {
        Mat<Scalar> AJ(A_.rows(), static_cast<Eigen::Index>(cols_.size()));
        for (std::size_t i = 0; i < cols_.size(); ++i) AJ.col(static_cast<Eigen::Index>(i)) = A_.col(cols_[i]);
        return AJ;
    }

private:
    bool maintain()
    {
        ++updates_;
        const Mat<Scalar> AJ = active_matrix();
        const Scalar gram_scale = AJ.colwise().squaredNorm().maxCoeff();
        const Scalar cond_est = gram_scale * G_.cwiseAbs().maxCoeff() * Scalar(G_.rows());
        if (updates_ % refactor_every != 0 && cond_est <= Scalar(max_condition)) return true;
        const Mat<Scalar> gram = AJ.transpose() * AJ;
        Eigen::LDLT<Mat<Scalar>> ldlt(gram);
        if (ldlt.info() != Eigen::Success || ldlt.rcond() < Scalar(1) / Scalar(max_condition)) return false;
        G_ = ldlt.solve(Mat<Scalar>::Identity(gram.rows(), gram.cols()));
        return true;
    }

    const Mat<Scalar>& A_;
    Mat<Scalar> G_;
    std::vector<Eigen::Index> cols_;
    long updates_ = 0;
};

template <class Scalar>
struct PathEvent
{
    Scalar step = 0;           // decrease of alpha from alpha_k
    Eigen::Index index = -1;
    bool entry = true;
    int sign = 0;              // sign of an entering coordinate
};

using Face = std::pair<std::vector<Eigen::Index>, std::vector<int>>;

inline Face make_face(const std::vector<Eigen::Index>& J, const std::vector<int>& s)
{
    std::vector<std::pair<Eigen::Index, int>> z;
    for (std::size_t i = 0; i < J.size(); ++i) z.emplace_back(J[i], s[i]);
    std::sort(z.begin(), z.end());
    Face f;
    for (auto& [j, e] : z) {
        f.first.push_back(j);
        f.second.push_back(e);
    }
    return f;
}

} // namespace detail

/**
 * Breakpoints of the standard lasso path from alpha_1 = ||A^T c||_inf down to
 * the first breakpoint with lambda_k <= lambda_target (or alpha = 0 when
 * `full` is set). c-case only.
 */
template <class Scalar>
HomotopyPath<Scalar> lasso_path(const ProblemInstance<Scalar>& inst, Scalar lambda_target, bool full = false)
{
    if (!inst.is_c_case()) throw Error(ErrorCode::InvalidInstance, "homotopy requires a single target column");
    if (!(lambda_target >= 0)) throw Error(ErrorCode::InvalidOptions, "lambda target must be nonnegative");
    if (is_pathological(inst)) throw Error(ErrorCode::PathologicalInstance, "A^T c = 0");

    const auto& A = inst.A();
    const Vec<Scalar> c = inst.c();
    const Eigen::Index p = inst.p();

    HomotopyPath<Scalar> path;
    Vec<Scalar> x = Vec<Scalar>::Zero(p);
    Vec<Scalar> corr = A.transpose() * c;
    Eigen::Index first = 0;
    const Scalar alpha1 = corr.cwiseAbs().maxCoeff(&first);
    Scalar alpha = alpha1;

    detail::GramInverse<Scalar> gram(A);
    gram.add(first);
    std::vector<int> signs{corr[first] > 0 ? 1 : -1};
    std::set<detail::Face> visited{detail::make_face(gram.cols(), signs)};

    Breakpoint<Scalar> bp;
    bp.alpha = alpha;
    bp.x = x;
    bp.active = gram.cols();
    bp.signs = signs;
    path.breakpoints.push_back(bp);

    // Once the active columns span range(A), inactive correlations shrink in
    // proportion to alpha and can only reach the boundary at alpha = 0.
    const Eigen::Index rankA = Eigen::ColPivHouseholderQR<Mat<Scalar>>(A).rank();

    const Scalar tie = Scalar(1e-12);
    const Scalar stall = Scalar(1e-15) * alpha1;
    long zero_progress = 0;

    while (true) {
        const auto& J = gram.cols();
        const Eigen::Index nJ = static_cast<Eigen::Index>(J.size());
        Vec<Scalar> eps(nJ);
        for (Eigen::Index i = 0; i < nJ; ++i) eps[i] = signs[static_cast<std::size_t>(i)];
        const Vec<Scalar> v = gram.G() * eps;              // d x_J / d(-alpha)
        const Mat<Scalar> AJ = gram.active_matrix();
        const Vec<Scalar> q = A.transpose() * (AJ * v);
        corr = A.transpose() * (c - A * x);

        std::vector<bool> in_J(static_cast<std::size_t>(p), false);
        for (auto j : J) in_J[static_cast<std::size_t>(j)] = true;

        std::vector<detail::PathEvent<Scalar>> events;
        for (Eigen::Index j = 0; j < p && nJ < rankA; ++j) {
            if (in_J[static_cast<std::size_t>(j)]) continue;
            detail::PathEvent<Scalar> best;
            best.step = std::numeric_limits<Scalar>::infinity();
            best.index = j;
            if (Scalar(1) - q[j] > 0) {
                const Scalar s = std::max(Scalar(0), (alpha - corr[j]) / (Scalar(1) - q[j]));
                if (s < best.step) { best.step = s; best.sign = 1; }
            }
            if (Scalar(1) + q[j] > 0) {
                const Scalar s = std::max(Scalar(0), (alpha + corr[j]) / (Scalar(1) + q[j]));
                if (s < best.step) { best.step = s; best.sign = -1; }
            }
            if (best.sign != 0) events.push_back(best);
        }
        for (Eigen::Index i = 0; i < nJ; ++i) {
            const Eigen::Index j = J[static_cast<std::size_t>(i)];
            if (Scalar(signs[static_cast<std::size_t>(i)]) * v[i] < 0) {
                detail::PathEvent<Scalar> e;
                e.step = std::max(Scalar(0), -x[j] / v[i]);
                e.index = j;
                e.entry = false;
                events.push_back(e);
            }
        }

        Scalar step_min = alpha;   // reaching alpha = 0
        for (const auto& e : events) step_min = std::min(step_min, e.step);

        const bool to_zero = step_min >= alpha * (Scalar(1) - tie);
        const Scalar step = to_zero ? alpha : step_min;

        // Candidate events at this step, smallest index first; refuse revisiting a face.
        std::vector<detail::PathEvent<Scalar>> ties;
        if (!to_zero) {
            for (const auto& e : events)
                if (e.step <= step_min + tie * alpha) ties.push_back(e);
            std::sort(ties.begin(), ties.end(),
                      [](const auto& a, const auto& b) { return a.index < b.index; });
        }

        // Move along the segment.
        Vec<Scalar> x_next = x;
        for (Eigen::Index i = 0; i < nJ; ++i) x_next[J[static_cast<std::size_t>(i)]] += step * v[i];
        const Scalar alpha_next = to_zero ? Scalar(0) : alpha - step;

        if (to_zero) {
            bp = Breakpoint<Scalar>{};
            bp.alpha = 0;
            bp.x = x_next;
            bp.lambda = 0;
            bp.active = J;
            bp.signs = signs;
            path.breakpoints.push_back(bp);
            path.termination = PathTermination::ReachedZero;
            return path;
        }

        bool applied = false;
        for (const auto& e : ties) {
            std::vector<Eigen::Index> J2 = J;
            std::vector<int> s2 = signs;
            if (e.entry) {
                J2.push_back(e.index);
                s2.push_back(e.sign);
            } else {
                const auto pos = std::find(J2.begin(), J2.end(), e.index) - J2.begin();
                J2.erase(J2.begin() + pos);
                s2.erase(s2.begin() + pos);
            }
            const auto face = detail::make_face(J2, s2);
            if (visited.count(face)) continue;
            if (e.entry) {
                if (!gram.add(e.index)) {
                    path.termination = PathTermination::Degenerate;
                    return path;
                }
            } else {
                x_next[e.index] = 0;
                if (!gram.remove(e.index)) {
                    path.termination = PathTermination::Degenerate;
                    return path;
                }
            }
            // gram.cols() keeps insertion order; keep signs aligned with it.
            signs.clear();
            for (auto j : gram.cols()) {
                const auto pos = std::find(J2.begin(), J2.end(), j) - J2.begin();
                signs.push_back(s2[static_cast<std::size_t>(pos)]);
            }
            visited.insert(face);
            applied = true;
            break;
        }
        if (!applied) {
            path.termination = PathTermination::Degenerate;
            return path;
        }

        x = x_next;
        if (step <= stall) {
            // Active set changed without moving: update the current segment only.
            if (++zero_progress >= 3 * p) {
                path.termination = PathTermination::Degenerate;
                return path;
            }
            auto& last = path.breakpoints.back();
            last.x = x;
            last.active = gram.cols();
            last.signs = signs;
            continue;
        }
        zero_progress = 0;
        alpha = alpha_next;

        bp = Breakpoint<Scalar>{};
        bp.alpha = alpha;
        bp.x = x;
        bp.lambda = alpha / x.template lpNorm<1>();
        bp.active = gram.cols();
        bp.signs = signs;
        path.breakpoints.push_back(bp);

        if (!full && bp.lambda <= lambda_target) {
            path.termination = PathTermination::ReachedLambda;
            return path;
        }
    }
}

/// Interpolation weights (theta_k, theta_{k+1}) of x_k and x_{k+1} at lambda on segment k.
template <class Scalar>
std::pair<Scalar, Scalar> segment_coefficients(const HomotopyPath<Scalar>& path, std::size_t k, Scalar lambda)
{
    const auto& a = path.breakpoints[k];
    const auto& b = path.breakpoints[k + 1];
    const Scalar ck = lambda * b.l1() - b.alpha;
    const Scalar ck1 = a.alpha - lambda * a.l1();
    const Scalar den = ck + ck1;
    return {ck / den, ck1 / den};
}

template <class Scalar>
struct HomotopySolution
{
    Vec<Scalar> x;
    Design<Scalar> w;
    bool pathological = false;
    std::size_t segment = 0;
};

/// Exact quadratic-lasso solution and c-optimal design at lambda.
template <class Scalar>
HomotopySolution<Scalar> solve_homotopy(const ProblemInstance<Scalar>& inst, Scalar lambda)
{
    if (!(lambda > 0)) throw Error(ErrorCode::InvalidOptions, "lambda must be positive");
    if (!inst.is_c_case()) throw Error(ErrorCode::InvalidInstance, "homotopy requires a single target column");
    if (is_pathological(inst))
        return {Vec<Scalar>::Zero(inst.p()), Design<Scalar>::uniform(inst.p()), true, 0};

    const HomotopyPath<Scalar> path = lasso_path(inst, lambda);
    if (path.termination == PathTermination::Degenerate && !(path.breakpoints.back().lambda <= lambda))
        throw Error(ErrorCode::Degenerate, "path terminated before reaching lambda");
    const std::size_t k = path.segment_of(lambda);
    const auto [tk, tk1] = segment_coefficients(path, k, lambda);
    Vec<Scalar> x = tk * path.breakpoints[k].x + tk1 * path.breakpoints[k + 1].x;
    return {x, hat_w(x), false, k};
}

/// w*(lambda) from the breakpoint moduli directly, without forming x*.
template <class Scalar>
Design<Scalar> segment_weights(const HomotopyPath<Scalar>& path, Scalar lambda)
{
    const std::size_t k = path.segment_of(lambda);
    const auto& a = path.breakpoints[k];
    const auto& b = path.breakpoints[k + 1];
    const Scalar na = a.l1(), nb = b.l1();
    const Vec<Scalar> num = (a.alpha - lambda * na) * b.x.cwiseAbs() + (lambda * nb - b.alpha) * a.x.cwiseAbs();
    return Design<Scalar>(num / (a.alpha * nb - b.alpha * na));
}

} // namespace qdesign
