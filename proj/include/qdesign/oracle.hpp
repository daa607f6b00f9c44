#pragma once

// Brute-force reference solvers and checkers for desk-scale instances.

#include "qdesign/core.hpp"

#include <functional>
#include <optional>
#include <random>

namespace qdesign {

enum class OracleMethod { SignEnum, SupportEnum, GridSearch };

template <class Scalar>
struct OracleSolution
{
    PrimalPoint<Scalar> x;
    Design<Scalar> w = Design<Scalar>::uniform(1);
    Scalar value = 0;
    DualCertificate<Scalar> certificate;
    OracleMethod method = OracleMethod::SignEnum;
    bool pathological = false;
};

/**
 * Enumerates all 3^p sign patterns. On a pattern with support S and signs
 * s, optimality forces (A_S^T A_S + lambda s s^T) x_S = A_S^T c; the pattern
 * is kept if sign(x_S) = s and |a_j^T (c - Ax)| <= lambda ||x||_1 off S.
 */
template <class Scalar>
OracleSolution<Scalar> oracle_qlasso_signs(const ProblemInstance<Scalar>& inst)
{
    if (!inst.is_c_case()) throw Error(ErrorCode::InvalidInstance, "sign enumeration needs a single target column");
    const Eigen::Index p = inst.p();
    if (p > 12) throw Error(ErrorCode::TooLargeForOracle, "sign enumeration limited to p <= 12");

    const auto& A = inst.A();
    const Vec<Scalar> c = inst.c();
    const Scalar lam = inst.lambda();
    const Vec<Scalar> Atc = A.transpose() * c;
    const Scalar scale = std::max(Scalar(1), Atc.cwiseAbs().maxCoeff());

    OracleSolution<Scalar> best;
    best.method = OracleMethod::SignEnum;
    bool found = false;

    if (is_pathological(inst)) {
        best.x = Mat<Scalar>::Zero(p, 1);
        best.w = Design<Scalar>::uniform(p);
        best.value = c.squaredNorm();
        best.certificate = dual_certificate(inst, best.x);
        best.pathological = true;
        return best;
    }

    long total = 1;
    for (Eigen::Index i = 0; i < p; ++i) total *= 3;
    std::vector<int> s(static_cast<std::size_t>(p));
    for (long code = 0; code < total; ++code) {
        long rest = code;
        std::vector<Eigen::Index> S;
        for (Eigen::Index i = 0; i < p; ++i) {
            s[static_cast<std::size_t>(i)] = int(rest % 3) - 1;
            rest /= 3;
            if (s[static_cast<std::size_t>(i)] != 0) S.push_back(i);
        }
        if (S.empty()) continue;
        const Eigen::Index k = static_cast<Eigen::Index>(S.size());
        Mat<Scalar> AS(A.rows(), k);
        Vec<Scalar> sig(k);
        for (Eigen::Index j = 0; j < k; ++j) {
            AS.col(j) = A.col(S[j]);
            sig[j] = s[static_cast<std::size_t>(S[j])];
        }
        const Mat<Scalar> sys = AS.transpose() * AS + lam * sig * sig.transpose();
        const Eigen::LDLT<Mat<Scalar>> ldlt(sys);
        if (ldlt.info() != Eigen::Success || ldlt.rcond() < Scalar(1e-12)) continue;
        const Vec<Scalar> rhs = AS.transpose() * c;
        Vec<Scalar> xs = ldlt.solve(rhs);
        xs += ldlt.solve(rhs - sys * xs);   // one refinement step

        bool consistent = true;
        for (Eigen::Index j = 0; j < k; ++j)
            if (!(xs[j] * sig[j] > 0)) { consistent = false; break; }
        if (!consistent) continue;

        Mat<Scalar> x = Mat<Scalar>::Zero(p, 1);
        for (Eigen::Index j = 0; j < k; ++j) x(S[j], 0) = xs[j];
        const Vec<Scalar> corr = A.transpose() * (c - A * x.col(0));
        const Scalar level = lam * xs.cwiseAbs().sum();
        bool kkt = true;
        for (Eigen::Index i = 0; i < p; ++i)
            if (s[static_cast<std::size_t>(i)] == 0 && std::abs(corr[i]) > level + Scalar(1e-9) * scale) {
                kkt = false;
                break;
            }
        if (!kkt) continue;

        const Scalar value = primal_objective(inst, x);
        if (!found || value < best.value) {
            best.x = x;
            best.value = value;
            found = true;
        }
    }
    if (!found) throw Error(ErrorCode::SolveFailure, "no sign pattern satisfied the optimality system");
    best.w = hat_w(best.x);
    best.certificate = dual_certificate(inst, best.x);
    return best;
}

namespace detail {

// Newton's method on the smooth restriction of the group objective to a
// support where every row stays nonzero. Returns nullopt when a row collapses.
template <class Scalar>
std::optional<Mat<Scalar>> group_newton(const Mat<Scalar>& AS, const Mat<Scalar>& K, Scalar lam)
{
    const Eigen::Index k = AS.cols(), r = K.cols(), n = k * r;
    const Mat<Scalar> gram = AS.transpose() * AS;
    const Mat<Scalar> AtK = AS.transpose() * K;

    auto objective = [&](const Mat<Scalar>& X) {
        const Scalar pen = X.rowwise().norm().sum();
        return (AS * X - K).squaredNorm() + lam * pen * pen;
    };

    // Ridge start: (gram + lam k I) X = A^T K has all rows nonzero generically.
    Mat<Scalar> reg = gram;
    reg.diagonal().array() += lam * Scalar(k);
    Mat<Scalar> X = reg.ldlt().solve(AtK);

    for (int it = 0; it < 200; ++it) {
        const Vec<Scalar> norms = X.rowwise().norm();
        if (norms.minCoeff() <= Scalar(1e-14) * std::max(Scalar(1), norms.maxCoeff())) return std::nullopt;
        const Scalar s = norms.sum();
        Mat<Scalar> U(k, r);
        for (Eigen::Index i = 0; i < k; ++i) U.row(i) = X.row(i) / norms[i];

        // Row-major vectorization: index i * r + l.
        const Mat<Scalar> Gm = Scalar(2) * (gram * X - AtK) + Scalar(2) * lam * s * U;
        Vec<Scalar> g(n);
        for (Eigen::Index i = 0; i < k; ++i)
            for (Eigen::Index l = 0; l < r; ++l) g[i * r + l] = Gm(i, l);

        Mat<Scalar> H = Mat<Scalar>::Zero(n, n);
        for (Eigen::Index i = 0; i < k; ++i)
            for (Eigen::Index j = 0; j < k; ++j)
                for (Eigen::Index l = 0; l < r; ++l) H(i * r + l, j * r + l) += Scalar(2) * gram(i, j);
        Vec<Scalar> u(n);
        for (Eigen::Index i = 0; i < k; ++i)
            for (Eigen::Index l = 0; l < r; ++l) u[i * r + l] = U(i, l);
        H += Scalar(2) * lam * u * u.transpose();
        for (Eigen::Index i = 0; i < k; ++i) {
            const Mat<Scalar> P = Mat<Scalar>::Identity(r, r) - U.row(i).transpose() * U.row(i);
            H.block(i * r, i * r, r, r) += Scalar(2) * lam * s / norms[i] * P;
        }

        const Vec<Scalar> d = -H.ldlt().solve(g);
        const Scalar f0 = objective(X);
        const Scalar slope = g.dot(d);
        if (!(slope < 0) || std::abs(slope) <= Scalar(1e-30) * std::max(Scalar(1), f0)) break;

        Scalar t = 1;
        Mat<Scalar> D(k, r);
        for (Eigen::Index i = 0; i < k; ++i)
            for (Eigen::Index l = 0; l < r; ++l) D(i, l) = d[i * r + l];
        Mat<Scalar> Xn = X + D;
        // Keep every row away from the kink at zero: no row may lose more than half its norm.
        auto keeps_rows = [&](const Mat<Scalar>& Y) {
            return (Y.rowwise().norm().array() >= Scalar(0.5) * norms.array()).all();
        };
        while ((!keeps_rows(Xn) || objective(Xn) > f0 + Scalar(1e-4) * t * slope) && t > Scalar(1e-12)) {
            t *= Scalar(0.5);
            Xn = X + t * D;
        }
        if (t <= Scalar(1e-12)) break;
        X = Xn;
        if (std::abs(slope) <= Scalar(1e-28) * std::max(Scalar(1), f0)) break;
    }
    if (X.rowwise().norm().minCoeff() <= 0) return std::nullopt;
    return X;
}

} // namespace detail

/**
 * Multiresponse reference: enumerates all 2^p row supports and solves each
 * restricted problem (smooth there) by Newton's method; keeps the best
 * candidate whose full optimality residual is below 1e-8.
 */
template <class Scalar>
OracleSolution<Scalar> oracle_group_support(const ProblemInstance<Scalar>& inst)
{
    const Eigen::Index p = inst.p();
    if (p > 12) throw Error(ErrorCode::TooLargeForOracle, "support enumeration limited to p <= 12");
    OracleSolution<Scalar> best;
    best.method = OracleMethod::SupportEnum;
    if (is_pathological(inst)) {
        best.x = Mat<Scalar>::Zero(p, inst.r());
        best.w = Design<Scalar>::uniform(p);
        best.value = inst.K().squaredNorm();
        best.certificate = dual_certificate(inst, best.x);
        best.pathological = true;
        return best;
    }
    const Scalar scale = std::max(Scalar(1), (inst.A().transpose() * inst.K()).cwiseAbs().maxCoeff());
    bool found = false;
    for (long mask = 1; mask < (1L << p); ++mask) {
        std::vector<Eigen::Index> S;
        for (Eigen::Index i = 0; i < p; ++i)
            if (mask & (1L << i)) S.push_back(i);
        const ProblemInstance<Scalar> sub = inst.restrict_to(S);
        const auto XS = detail::group_newton(sub.A(), sub.K(), inst.lambda());
        if (!XS) continue;
        Mat<Scalar> X = Mat<Scalar>::Zero(p, inst.r());
        for (std::size_t j = 0; j < S.size(); ++j) X.row(S[j]) = XS->row(static_cast<Eigen::Index>(j));
        if (kkt_residual(inst, X) > Scalar(1e-8) * scale) continue;
        const Scalar value = primal_objective(inst, X);
        if (!found || value < best.value) {
            best.x = X;
            best.value = value;
            found = true;
        }
    }
    if (!found) throw Error(ErrorCode::SolveFailure, "no support satisfied the optimality system");
    best.w = hat_w(best.x);
    best.certificate = dual_certificate(inst, best.x);
    return best;
}

/**
 * Minimizes lambda phi(w) over the simplex grid with spacing 1/resolution,
 * then refines by 200 steps of pattern search along e_i - e_j.
 */
template <class Scalar>
OracleSolution<Scalar> oracle_design_grid(const ProblemInstance<Scalar>& inst, int resolution)
{
    const Eigen::Index p = inst.p();
    if (p > 4) throw Error(ErrorCode::TooLargeForOracle, "grid search limited to p <= 4");
    if (resolution < 1) throw Error(ErrorCode::InvalidOptions, "resolution must be >= 1");

    auto value_of = [&](const Vec<Scalar>& w) { return inst.lambda() * phi(inst, Design<Scalar>(w)); };

    Vec<Scalar> best_w = Vec<Scalar>::Zero(p);
    Scalar best_v = std::numeric_limits<Scalar>::infinity();
    std::vector<int> counts(static_cast<std::size_t>(p), 0);

    // Compositions of `resolution` into p nonnegative parts.
    std::function<void(Eigen::Index, int)> visit = [&](Eigen::Index i, int left) {
        if (i == p - 1) {
            counts[static_cast<std::size_t>(i)] = left;
            Vec<Scalar> w(p);
            for (Eigen::Index j = 0; j < p; ++j) w[j] = Scalar(counts[static_cast<std::size_t>(j)]) / Scalar(resolution);
            w /= w.sum();
            const Scalar v = value_of(w);
            if (v < best_v) { best_v = v; best_w = w; }
            return;
        }
        for (int n = 0; n <= left; ++n) {
            counts[static_cast<std::size_t>(i)] = n;
            visit(i + 1, left - n);
        }
    };
    visit(0, resolution);

    Scalar h = Scalar(1) / Scalar(resolution);
    for (int step = 0; step < 200 && p > 1; ++step) {
        Vec<Scalar> cand_best = best_w;
        Scalar cand_v = best_v;
        for (Eigen::Index i = 0; i < p; ++i) {
            for (Eigen::Index j = 0; j < p; ++j) {
                if (i == j) continue;
                const Scalar move = std::min(h, best_w[j]);
                if (!(move > 0)) continue;
                Vec<Scalar> w = best_w;
                w[i] += move;
                w[j] -= move;
                w[j] = std::max(Scalar(0), w[j]);
                w /= w.sum();
                const Scalar v = value_of(w);
                if (v < cand_v) { cand_v = v; cand_best = w; }
            }
        }
        if (cand_v < best_v) {
            best_v = cand_v;
            best_w = cand_best;
        } else {
            h *= Scalar(0.5);
        }
    }

    OracleSolution<Scalar> sol;
    sol.method = OracleMethod::GridSearch;
    sol.w = Design<Scalar>(best_w);
    sol.value = best_v;
    sol.x = hat_x(inst, sol.w);
    sol.certificate = dual_certificate(inst, sol.w);
    return sol;
}

/// Gap, KKT residual and delta(hat_w(x)) at x; passes iff all are <= tol.
template <class Scalar, class Derived>
OptimalityReport<Scalar> verify_optimal_pair(const ProblemInstance<Scalar>& inst,
                                             const Eigen::MatrixBase<Derived>& X, Scalar tol)
{
    OptimalityReport<Scalar> rep;
    const DualCertificate<Scalar> cert = dual_certificate(inst, X);
    rep.primal_value = primal_objective(inst, X);
    rep.dual_value = dual_objective(inst, cert.Y);
    rep.gap = cert.eps;
    rep.kkt_residual = kkt_residual(inst, X);
    const Design<Scalar> w = l12_norm(X) > 0 ? hat_w(X) : Design<Scalar>::uniform(inst.p());
    rep.delta = design_delta(inst, w);
    rep.passed = rep.gap <= tol && rep.kkt_residual <= tol && rep.delta <= tol;
    return rep;
}

template <class Scalar>
struct MappingReport
{
    Scalar value_identity = 0;    // max |lambda phi(hat_w(x*)) - L(x*)|, |... - lambda phi(w*)|
    Scalar delta_at_w = 0;        // delta(w*)
    Scalar hat_x_value = 0;       // |L(hat_x(w*)) - L(x*)|
    Scalar lemma = 0;             // max over random w of ||y1(hat_x(w)) - y2(w)||
    Scalar dual_identity = 0;     // ||(c - A x*) - lambda M(hat_w(x*))^{-1} c||
    bool pathological = false;
    bool value_ok = false, hat_x_ok = false, lemma_ok = false, dual_ok = false;

    bool passed() const { return value_ok && hat_x_ok && lemma_ok && dual_ok; }
};

/**
 * Checks the primal/design correspondences at the sign-enumeration optimum:
 * value identities, the fixed point of hat_x, the certificate Lemma for 20
 * random designs, and the closed form of the optimal dual point.
 */
template <class Scalar>
MappingReport<Scalar> verify_mappings(const ProblemInstance<Scalar>& inst, Scalar tol, std::uint64_t seed = 0)
{
    if (inst.p() > 7) throw Error(ErrorCode::TooLargeForOracle, "verify_mappings limited to p <= 7");
    MappingReport<Scalar> rep;
    const OracleSolution<Scalar> opt = oracle_qlasso_signs(inst);
    const Scalar lam = inst.lambda();
    const Scalar L = opt.value;
    rep.pathological = opt.pathological;

    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> expo(1.0);
    std::bernoulli_distribution drop(0.3);

    if (opt.pathological) {
        // Every design is optimal and the optimal point is x = 0.
        Scalar worst = std::abs(lam * phi(inst, opt.w) - L);
        for (int t = 0; t < 5; ++t) {
            Vec<Scalar> w(inst.p());
            for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = Scalar(expo(rng));
            worst = std::max(worst, std::abs(lam * phi(inst, Design<Scalar>(w / w.sum())) - L));
        }
        rep.value_identity = worst;
        rep.delta_at_w = design_delta(inst, opt.w);
    } else {
        const Design<Scalar> w_star = opt.w;
        const Scalar lhs = lam * phi(inst, w_star);
        rep.value_identity = std::abs(lhs - L);
        rep.delta_at_w = design_delta(inst, w_star);
    }
    rep.value_ok = rep.value_identity <= tol && rep.delta_at_w <= tol;

    rep.hat_x_value = std::abs(primal_objective(inst, hat_x(inst, opt.w)) - L);
    rep.hat_x_ok = rep.hat_x_value <= tol;

    for (int t = 0; t < 20; ++t) {
        Vec<Scalar> w(inst.p());
        for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = drop(rng) ? Scalar(0) : Scalar(expo(rng));
        if (!(w.sum() > 0)) w[static_cast<Eigen::Index>(t) % w.size()] = 1;
        const Design<Scalar> d(w / w.sum());
        const Mat<Scalar> y1 = dual_certificate(inst, hat_x(inst, d)).Y;
        const Mat<Scalar> y2 = dual_certificate(inst, d).Y;
        rep.lemma = std::max(rep.lemma, (y1 - y2).norm());
    }
    rep.lemma_ok = rep.lemma <= tol;

    const Mat<Scalar> y_star = inst.K() - inst.A() * opt.x;
    rep.dual_identity = (y_star - dual_certificate(inst, opt.w).Y).norm();
    rep.dual_ok = rep.dual_identity <= tol;
    return rep;
}

} // namespace qdesign
