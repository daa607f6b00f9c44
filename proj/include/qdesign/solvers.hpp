#pragma once

// Iterative solvers for the quadratic (group) lasso / optimal design problem
// and the periodic screening driver that wraps all of them.
//
// Primal-side engines (CD, FISTA) iterate on X and stop on the primal-dual
// gap L(X) - D(K - AX). Design-side engines (MWU, FW) iterate on w and stop
// on delta(w).

#include "qdesign/core.hpp"
#include "qdesign/prox.hpp"
#include "qdesign/screening.hpp"

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>

namespace qdesign {

enum class Algorithm { CD, MWU, FISTA, FW };

inline const char* to_string(Algorithm algo)
{
    switch (algo) {
        case Algorithm::CD: return "cd";
        case Algorithm::MWU: return "mwu";
        case Algorithm::FISTA: return "fista";
        case Algorithm::FW: return "fw";
    }
    return "?";
}

inline bool is_design_side(Algorithm algo)
{
    return algo == Algorithm::MWU || algo == Algorithm::FW;
}

template <class Scalar>
struct TraceRecord
{
    long iter = 0;
    Scalar value = 0;          // L(X) or lambda * phi(w)
    Scalar gap_or_delta = 0;
    Eigen::Index surviving = 0;
    double elapsed_s = 0;
};

template <class Scalar>
struct SolverTrace
{
    Eigen::Index p = 0;
    std::vector<TraceRecord<Scalar>> records;

    /// Fraction of candidates eliminated after record k.
    double rho(std::size_t k) const
    {
        return 1.0 - double(records[k].surviving) / double(p);
    }

    /// Pseudo-iteration count C(k) = sum_{i <= k} (1 - rho(i)).
    double pseudo_iterations(std::size_t k) const
    {
        double acc = 0;
        for (std::size_t i = 0; i <= k; ++i) acc += 1.0 - rho(i);
        return acc;
    }
};

template <class Scalar>
struct SolverOptions
{
    Scalar tol = Scalar(1e-6);
    long max_iters = 100000;
    ScreeningRule screen_rule = ScreeningRule::None;
    long screen_period = 10;
    std::uint64_t seed = 0;
    // Exponent of the multiplicative update w_i <- w_i g_i^e. 0.5 is the
    // alternating minimization of the variational form (monotone in both
    // the c- and L-case); 1.0 is the classical L-optimal update.
    Scalar mwu_exponent = Scalar(0.5);
    std::function<void(const TraceRecord<Scalar>&)> on_record;
};

enum class SolveStatus { Converged, NotConverged };

template <class Scalar>
struct SolveResult
{
    PrimalPoint<Scalar> X;                 // full p x r, zeros on eliminated rows
    std::optional<Design<Scalar>> w;       // absent only when X = 0 for a primal-side run
    SolveStatus status = SolveStatus::NotConverged;
    long iterations = 0;
    Scalar value = 0;
    Scalar gap_or_delta = 0;               // on the full instance
    ScreeningMask<Scalar> mask;            // original numbering
    SolverTrace<Scalar> trace;

    bool converged() const { return status == SolveStatus::Converged; }
};

namespace detail {

template <class Scalar>
class Engine
{
public:
    virtual ~Engine() = default;
    virtual void step() = 0;
    /// Refreshes and returns the stopping measure on the current (reduced) instance.
    virtual Scalar measure() = 0;
    virtual Scalar value() const = 0;
    virtual bool design_side() const = 0;
    virtual PrimalPoint<Scalar> primal() const = 0;
    virtual Design<Scalar> design() const = 0;
    virtual void restrict_to(const std::vector<Eigen::Index>& keep) = 0;
    virtual const ProblemInstance<Scalar>& instance() const = 0;
};

template <class Scalar>
Mat<Scalar> take_rows(const Mat<Scalar>& X, const std::vector<Eigen::Index>& keep)
{
    Mat<Scalar> out(static_cast<Eigen::Index>(keep.size()), X.cols());
    for (std::size_t j = 0; j < keep.size(); ++j) out.row(j) = X.row(keep[j]);
    return out;
}

template <class Scalar>
class PrimalEngine : public Engine<Scalar>
{
public:
    explicit PrimalEngine(const ProblemInstance<Scalar>& inst)
        : inst_(inst), X_(Mat<Scalar>::Zero(inst.p(), inst.r()))
    {}

    Scalar measure() override
    {
        const Mat<Scalar> E = inst_.K() - inst_.A() * X_;
        const Scalar pen = l12_norm(X_);
        value_ = E.squaredNorm() + inst_.lambda() * pen * pen;
        const Scalar u = (inst_.A().transpose() * E).rowwise().norm().maxCoeff();
        const Scalar dual = inst_.K().squaredNorm() - (E - inst_.K()).squaredNorm() - u * u / inst_.lambda();
        return std::max(Scalar(0), value_ - dual);
    }

    Scalar value() const override { return value_; }
    bool design_side() const override { return false; }
    PrimalPoint<Scalar> primal() const override { return X_; }
    Design<Scalar> design() const override { return hat_w(X_); }
    const ProblemInstance<Scalar>& instance() const override { return inst_; }

    void restrict_to(const std::vector<Eigen::Index>& keep) override
    {
        inst_ = inst_.restrict_to(keep);
        X_ = take_rows(X_, keep);
        on_restrict(keep);
    }

protected:
    virtual void on_restrict(const std::vector<Eigen::Index>&) {}

    ProblemInstance<Scalar> inst_;
    Mat<Scalar> X_;
    Scalar value_ = 0;
};

/// Cyclic block coordinate descent with exact row minimization.
template <class Scalar>
class CdEngine final : public PrimalEngine<Scalar>
{
    using Base = PrimalEngine<Scalar>;
    using Base::inst_;
    using Base::X_;

public:
    explicit CdEngine(const ProblemInstance<Scalar>& inst) : Base(inst) {}

    void step() override
    {
        const auto& A = inst_.A();
        const Scalar lam = inst_.lambda();
        Mat<Scalar> E = inst_.K() - A * X_;
        Scalar total = l12_norm(X_);
        Eigen::Matrix<Scalar, 1, Eigen::Dynamic> v(inst_.r());
        for (Eigen::Index i = 0; i < inst_.p(); ++i) {
            const Scalar old_norm = X_.row(i).norm();
            const Scalar sq = inst_.col_sq_norms()[i];
            const Scalar others = std::max(Scalar(0), total - old_norm);
            v.noalias() = A.col(i).transpose() * E;
            v += sq * X_.row(i);
            const Scalar vn = v.norm();
            const Scalar shrink = vn > lam * others ? Scalar(1) - lam * others / vn : Scalar(0);
            const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> next = (shrink / (sq + lam)) * v;
            const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> diff = next - X_.row(i);
            if (diff.squaredNorm() > 0) {
                E.noalias() -= A.col(i) * diff;
                X_.row(i) = next;
            }
            total = others + next.norm();
        }
    }

    /// One cycle like step(), recomputing the objective after every row update.
    std::vector<Scalar> step_with_objectives()
    {
        std::vector<Scalar> vals;
        const auto& A = inst_.A();
        const Scalar lam = inst_.lambda();
        for (Eigen::Index i = 0; i < inst_.p(); ++i) {
            const Mat<Scalar> E = inst_.K() - A * X_ + A.col(i) * X_.row(i);
            const Scalar others = l12_norm(X_) - X_.row(i).norm();
            const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> v = A.col(i).transpose() * E;
            const Scalar vn = v.norm();
            const Scalar shrink = vn > lam * others ? Scalar(1) - lam * others / vn : Scalar(0);
            X_.row(i) = (shrink / (inst_.col_sq_norms()[i] + lam)) * v;
            vals.push_back(primal_objective(inst_, X_));
        }
        return vals;
    }
};

template <class Scalar>
Scalar top_singular_value_sq(const Mat<Scalar>& A, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    Vec<Scalar> v(A.cols());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = Scalar(nd(rng));
    v.normalize();
    Scalar mu = 0;
    for (int it = 0; it < 10000; ++it) {
        const Vec<Scalar> Bv = A.transpose() * (A * v);
        mu = v.dot(Bv);
        const Scalar bn = Bv.norm();
        if (!(bn > 0)) return Scalar(0);
        if ((Bv - mu * v).norm() <= Scalar(1e-10) * mu) break;
        v = Bv / bn;
    }
    return mu;
}

/// Accelerated proximal gradient on ||AX - K||^2 + lambda ||X||_{1,2}^2.
template <class Scalar>
class FistaEngine final : public PrimalEngine<Scalar>
{
    using Base = PrimalEngine<Scalar>;
    using Base::inst_;
    using Base::X_;

public:
    static constexpr long restart_every = 200;

    FistaEngine(const ProblemInstance<Scalar>& inst, std::uint64_t seed)
        : Base(inst), Yk_(X_)
    {
        lipschitz_ = Scalar(2) * top_singular_value_sq(inst.A(), seed);
        if (!(lipschitz_ > 0)) lipschitz_ = Scalar(1);
    }

    Scalar lipschitz() const { return lipschitz_; }

    void step() override
    {
        const Mat<Scalar> grad = Scalar(2) * inst_.A().transpose() * (inst_.A() * Yk_ - inst_.K());
        const Mat<Scalar> next = prox_sq_l1(Yk_ - grad / lipschitz_, inst_.lambda() / lipschitz_);
        ++count_;
        if (count_ % restart_every == 0) {
            t_ = 1;
            Yk_ = next;
        } else {
            const Scalar t_next = (Scalar(1) + std::sqrt(Scalar(1) + Scalar(4) * t_ * t_)) / Scalar(2);
            Yk_ = next + ((t_ - Scalar(1)) / t_next) * (next - X_);
            t_ = t_next;
        }
        X_ = next;
    }

protected:
    void on_restrict(const std::vector<Eigen::Index>& keep) override
    {
        Yk_ = take_rows(Yk_, keep);
    }

private:
    Mat<Scalar> Yk_;
    Scalar t_ = 1;
    Scalar lipschitz_ = 1;
    long count_ = 0;
};

template <class Scalar>
class DesignEngine : public Engine<Scalar>
{
public:
    explicit DesignEngine(const ProblemInstance<Scalar>& inst)
        : inst_(inst), w_(Design<Scalar>::uniform(inst.p()))
    {
        refresh();
    }

    Scalar measure() override
    {
        if (!(phi_ > 0)) return 0;
        return std::max(Scalar(0), terms_.maxCoeff() / phi_ - Scalar(1));
    }

    Scalar value() const override { return inst_.lambda() * phi_; }
    bool design_side() const override { return true; }
    PrimalPoint<Scalar> primal() const override
    {
        return w_.weights().asDiagonal() * (inst_.A().transpose() * Z_);
    }
    Design<Scalar> design() const override { return w_; }
    const ProblemInstance<Scalar>& instance() const override { return inst_; }

    void restrict_to(const std::vector<Eigen::Index>& keep) override
    {
        inst_ = inst_.restrict_to(keep);
        Vec<Scalar> w(static_cast<Eigen::Index>(keep.size()));
        for (std::size_t j = 0; j < keep.size(); ++j) w[j] = w_[keep[j]];
        const Scalar mass = w.sum();
        if (!(mass > Scalar(1e-300)))
            throw Error(ErrorCode::NumericalUnderflow, "surviving design mass vanished");
        w_ = Design<Scalar>(w / mass);
        refresh();
    }

protected:
    // Caches Z = M^{-1} K, phi and the squared correlations g_i = ||Z^T a_i||^2.
    void refresh()
    {
        const InformationSolve<Scalar> s(inst_, w_);
        Z_ = s.Z;
        phi_ = s.phi;
        g_ = (inst_.A().transpose() * Z_).rowwise().squaredNorm();
        terms_ = (g_.array() + inst_.lambda() * Z_.squaredNorm()).matrix();
    }

    ProblemInstance<Scalar> inst_;
    Design<Scalar> w_;
    Mat<Scalar> Z_;
    Scalar phi_ = 0;
    Vec<Scalar> g_;
    Vec<Scalar> terms_;
};

/// Multiplicative weight update w_i <- w_i g_i^e / sum_j w_j g_j^e.
template <class Scalar>
class MwuEngine final : public DesignEngine<Scalar>
{
    using Base = DesignEngine<Scalar>;

public:
    MwuEngine(const ProblemInstance<Scalar>& inst, Scalar exponent) : Base(inst), exponent_(exponent) {}

    void step() override
    {
        Vec<Scalar> w = this->w_.weights().array() * this->g_.array().pow(exponent_);
        const Scalar total = w.sum();
        if (!(total > 0)) return;   // A^T K = 0: every design is optimal
        this->w_ = Design<Scalar>(w / total);
        this->refresh();
    }

private:
    Scalar exponent_;
};

/// Vertex-direction (Frank-Wolfe) method with exact line search on phi.
template <class Scalar>
class FwEngine final : public DesignEngine<Scalar>
{
    using Base = DesignEngine<Scalar>;

public:
    explicit FwEngine(const ProblemInstance<Scalar>& inst) : Base(inst) {}

    Eigen::Index last_vertex() const { return last_vertex_; }
    Scalar last_step() const { return last_step_; }

    void step() override
    {
        const auto& inst = this->inst_;
        Eigen::Index j = 0;
        this->g_.maxCoeff(&j);
        last_vertex_ = j;

        Mat<Scalar> M = inst.A() * this->w_.weights().asDiagonal() * inst.A().transpose();
        M.diagonal().array() += inst.lambda();
        Mat<Scalar> D = inst.A().col(j) * inst.A().col(j).transpose();
        D.diagonal().array() += inst.lambda();
        D -= M;

        // phi'(g) = -tr(Zg^T D Zg),  phi''(g) = 2 tr(Zg^T D M(g)^-1 D Zg)
        auto derivs = [&](Scalar gamma) {
            const Mat<Scalar> Mg = M + gamma * D;
            const Eigen::LLT<Mat<Scalar>> llt(Mg);
            const Mat<Scalar> Zg = llt.solve(inst.K());
            const Mat<Scalar> DZ = D * Zg;
            const Scalar d1 = -(Zg.array() * DZ.array()).sum();
            const Scalar d2 = Scalar(2) * (DZ.array() * llt.solve(DZ).array()).sum();
            return std::pair<Scalar, Scalar>(d1, d2);
        };

        Scalar gamma = 0;
        const auto [d0, h0] = derivs(Scalar(0));
        if (d0 < 0) {
            if (derivs(Scalar(1)).first <= 0) {
                gamma = 1;
            } else {
                Scalar lo = 0, hi = 1;
                gamma = std::clamp(-d0 / h0, Scalar(0), Scalar(1));
                if (!(gamma > lo && gamma < hi)) gamma = Scalar(0.5);
                for (int it = 0; it < 200 && hi - lo > Scalar(1e-12); ++it) {
                    const auto [d, h] = derivs(gamma);
                    if (d == 0) break;
                    if (d > 0) hi = gamma; else lo = gamma;
                    Scalar next = h > 0 ? gamma - d / h : Scalar(-1);
                    if (!(next > lo && next < hi)) next = (lo + hi) / Scalar(2);
                    if (std::abs(next - gamma) <= Scalar(1e-15)) { gamma = next; break; }
                    gamma = next;
                }
            }
        }
        last_step_ = gamma;
        if (gamma > 0) {
            Vec<Scalar> w = (Scalar(1) - gamma) * this->w_.weights();
            w[j] += gamma;
            this->w_ = Design<Scalar>(w / w.sum());
            this->refresh();
        }
    }

private:
    Eigen::Index last_vertex_ = -1;
    Scalar last_step_ = 0;
};

template <class Scalar>
std::unique_ptr<Engine<Scalar>> make_engine(Algorithm algo, const ProblemInstance<Scalar>& inst,
                                            const SolverOptions<Scalar>& opts)
{
    switch (algo) {
        case Algorithm::CD: return std::make_unique<CdEngine<Scalar>>(inst);
        case Algorithm::FISTA: return std::make_unique<FistaEngine<Scalar>>(inst, opts.seed);
        case Algorithm::MWU: return std::make_unique<MwuEngine<Scalar>>(inst, opts.mwu_exponent);
        case Algorithm::FW: return std::make_unique<FwEngine<Scalar>>(inst);
    }
    throw Error(ErrorCode::InvalidOptions, "unknown algorithm");
}

/// Applies `rule` to the engine's current iterate, using the certificate
/// native to its side (primal gap for X, design gap for w).
template <class Scalar>
std::optional<ScreeningMask<Scalar>> screen_iterate(const Engine<Scalar>& engine, ScreeningRule rule)
{
    const auto& inst = engine.instance();
    if (engine.design_side()) {
        const Design<Scalar> w = engine.design();
        switch (rule) {
            case ScreeningRule::D0: return screen_d0(inst, dual_certificate(inst, w));
            case ScreeningRule::D1: return screen_d1(inst, hat_x(inst, w));
            case ScreeningRule::D2: return screen_d2(inst, w);
            case ScreeningRule::B: return bound_B(inst, w);
            case ScreeningRule::None: return std::nullopt;
        }
    } else {
        const Mat<Scalar> X = engine.primal();
        const bool nonzero = l12_norm(X) > 0;
        switch (rule) {
            case ScreeningRule::D0: return screen_d0(inst, dual_certificate(inst, X));
            case ScreeningRule::D1: return screen_d1(inst, X);
            case ScreeningRule::D2:
                if (!nonzero) return std::nullopt;
                return screen_d2(inst, X);
            case ScreeningRule::B:
                if (!nonzero) return std::nullopt;
                return bound_B(inst, hat_w(X));
            case ScreeningRule::None: return std::nullopt;
        }
    }
    return std::nullopt;
}

template <class Scalar>
Mat<Scalar> embed_rows(const Mat<Scalar>& X, const std::vector<Eigen::Index>& alive, Eigen::Index p)
{
    Mat<Scalar> out = Mat<Scalar>::Zero(p, X.cols());
    for (std::size_t j = 0; j < alive.size(); ++j) out.row(alive[j]) = X.row(j);
    return out;
}

} // namespace detail

/**
 * Runs `algo` and, every `screen_period` iterations, applies the chosen
 * screening rule to the current iterate and permanently drops the
 * candidates it eliminates. Design weights are renormalized over the
 * survivors; rows of X are dropped. Convergence is confirmed on the full
 * instance with the solution re-embedded in the original numbering.
 */
template <class Scalar>
SolveResult<Scalar> run_with_screening(const ProblemInstance<Scalar>& inst, Algorithm algo,
                                       const SolverOptions<Scalar>& opts)
{
    if (!(opts.tol > 0)) throw Error(ErrorCode::InvalidOptions, "tol must be positive");
    if (opts.screen_period < 1) throw Error(ErrorCode::InvalidOptions, "screen period must be >= 1");
    if (opts.max_iters < 0) throw Error(ErrorCode::InvalidOptions, "max_iters must be >= 0");

    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    const Eigen::Index p = inst.p();
    const bool design_side = is_design_side(algo);

    SolveResult<Scalar> res;
    res.trace.p = p;
    res.mask.rule = opts.screen_rule;

    std::vector<Eigen::Index> alive(static_cast<std::size_t>(p));
    for (Eigen::Index i = 0; i < p; ++i) alive[static_cast<std::size_t>(i)] = i;

    auto engine = detail::make_engine(algo, inst, opts);

    // Measure of an embedded iterate on the full instance.
    auto full_measure = [&](const detail::Engine<Scalar>& e) -> Scalar {
        if (static_cast<Eigen::Index>(alive.size()) == p) return Scalar(-1);
        if (design_side) {
            const Vec<Scalar> w = detail::embed_rows<Scalar>(e.design().weights(), alive, p);
            return design_delta(inst, Design<Scalar>(w));
        }
        const Mat<Scalar> X = detail::embed_rows<Scalar>(e.primal(), alive, p);
        return dual_certificate(inst, X).eps;
    };

    Scalar measure = engine->measure();
    Scalar best = measure;
    Mat<Scalar> best_X = detail::embed_rows<Scalar>(engine->primal(), alive, p);
    Vec<Scalar> best_w;
    if (design_side) best_w = detail::embed_rows<Scalar>(engine->design().weights(), alive, p);
    bool converged = measure <= opts.tol && static_cast<Eigen::Index>(alive.size()) == p;

    long k = 0;
    while (!converged && k < opts.max_iters) {
        ++k;
        engine->step();

        if (opts.screen_rule != ScreeningRule::None && k % opts.screen_period == 0) {
            auto mask = detail::screen_iterate(*engine, opts.screen_rule);
            if (mask && mask->num_eliminated() > 0) {
                std::vector<Eigen::Index> next_alive;
                next_alive.reserve(mask->index_map.size());
                for (auto j : mask->index_map) next_alive.push_back(alive[static_cast<std::size_t>(j)]);
                engine->restrict_to(mask->index_map);
                alive = std::move(next_alive);
                res.mask.eps_used = mask->eps_used;
            }
        }

        measure = engine->measure();
        TraceRecord<Scalar> rec;
        rec.iter = k;
        rec.value = engine->value();
        rec.gap_or_delta = measure;
        rec.surviving = static_cast<Eigen::Index>(alive.size());
        rec.elapsed_s = std::chrono::duration<double>(clock::now() - start).count();
        res.trace.records.push_back(rec);
        if (opts.on_record) opts.on_record(rec);

        if (measure <= best) {
            best = measure;
            best_X = detail::embed_rows<Scalar>(engine->primal(), alive, p);
            if (design_side) best_w = detail::embed_rows<Scalar>(engine->design().weights(), alive, p);
        }

        if (measure <= opts.tol) {
            const Scalar full = full_measure(*engine);
            converged = full <= opts.tol;
        }
    }

    if (converged) {
        best_X = detail::embed_rows<Scalar>(engine->primal(), alive, p);
        if (design_side) best_w = detail::embed_rows<Scalar>(engine->design().weights(), alive, p);
    }

    res.X = best_X;
    res.iterations = k;
    res.status = converged ? SolveStatus::Converged : SolveStatus::NotConverged;
    if (design_side) {
        res.w = Design<Scalar>(best_w);
        res.value = inst.lambda() * phi(inst, *res.w);
        res.gap_or_delta = design_delta(inst, *res.w);
    } else {
        if (l12_norm(res.X) > 0) res.w = hat_w(res.X);
        res.value = primal_objective(inst, res.X);
        res.gap_or_delta = dual_certificate(inst, res.X).eps;
    }

    res.mask.eliminated.assign(static_cast<std::size_t>(p), true);
    for (auto i : alive) res.mask.eliminated[static_cast<std::size_t>(i)] = false;
    res.mask.index_map = alive;
    res.mask.values = Vec<Scalar>::Zero(p);
    return res;
}

template <class Scalar>
SolveResult<Scalar> solve_bare(const ProblemInstance<Scalar>& inst, Algorithm algo, SolverOptions<Scalar> opts)
{
    opts.screen_rule = ScreeningRule::None;
    return run_with_screening(inst, algo, opts);
}

template <class Scalar>
SolveResult<Scalar> solve_cd(const ProblemInstance<Scalar>& inst, const SolverOptions<Scalar>& opts)
{
    return run_with_screening(inst, Algorithm::CD, opts);
}

template <class Scalar>
SolveResult<Scalar> solve_fista(const ProblemInstance<Scalar>& inst, const SolverOptions<Scalar>& opts)
{
    return run_with_screening(inst, Algorithm::FISTA, opts);
}

template <class Scalar>
SolveResult<Scalar> solve_mwu(const ProblemInstance<Scalar>& inst, const SolverOptions<Scalar>& opts)
{
    return run_with_screening(inst, Algorithm::MWU, opts);
}

template <class Scalar>
SolveResult<Scalar> solve_fw(const ProblemInstance<Scalar>& inst, const SolverOptions<Scalar>& opts)
{
    return run_with_screening(inst, Algorithm::FW, opts);
}

} // namespace qdesign
