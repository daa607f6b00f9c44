#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace qdesign;
using qtest::random_instance;

TEST(SignEnum, SingleCandidateClosedForm)
{
    std::mt19937_64 rng(1);
    const auto inst = random_instance(rng, 3, 1, 0.6);
    const auto opt = oracle_qlasso_signs(inst);
    EXPECT_NEAR(opt.x(0, 0), inst.A().col(0).dot(inst.c()) / (inst.col_sq_norms()[0] + 0.6), 1e-14);
    EXPECT_EQ(opt.method, OracleMethod::SignEnum);
}

TEST(SignEnum, Pathological)
{
    std::mt19937_64 rng(2);
    const auto inst = qtest::pathological_instance(rng, 4, 3, 1.0);
    const auto opt = oracle_qlasso_signs(inst);
    EXPECT_TRUE(opt.pathological);
    EXPECT_EQ(opt.x.norm(), 0.0);
    EXPECT_DOUBLE_EQ(opt.value, inst.c().squaredNorm());
}

TEST(SignEnum, OrthonormalPairAgainstLineSearch)
{
    // a_i = e_i, c = a1 + 2 a2, lambda = 1. With x >= 0 the objective is
    // (x1 - 1)^2 + (x2 - 2)^2 + (x1 + x2)^2; minimize along x2 = s - x1.
    Mat<double> A = Mat<double>::Identity(2, 2);
    Vec<double> c(2);
    c << 1, 2;
    const ProblemInstance<double> inst(A, c, 1.0);
    auto f = [](double x1, double x2) { return (x1 - 1) * (x1 - 1) + (x2 - 2) * (x2 - 2) + (x1 + x2) * (x1 + x2); };
    double best = f(0, 0);
    for (int i = 0; i <= 3000; ++i) {
        // Inner 1-D golden section over x1 for fixed sum s.
        const double s = 3.0 * i / 3000;
        double lo = 0, hi = s;
        for (int k = 0; k < 100; ++k) {
            const double a = lo + (hi - lo) / 3, b = hi - (hi - lo) / 3;
            if (f(a, s - a) < f(b, s - b)) hi = b; else lo = a;
        }
        best = std::min(best, f(lo, s - lo));
    }
    // Refine the outer search around the best sum with golden section.
    double slo = 0, shi = 3;
    auto g = [&](double s) {
        double lo = 0, hi = s;
        for (int k = 0; k < 200; ++k) {
            const double a = lo + (hi - lo) / 3, b = hi - (hi - lo) / 3;
            if (f(a, s - a) < f(b, s - b)) hi = b; else lo = a;
        }
        return f(lo, s - lo);
    };
    for (int k = 0; k < 200; ++k) {
        const double a = slo + (shi - slo) / 3, b = shi - (shi - slo) / 3;
        if (g(a) < g(b)) shi = b; else slo = a;
    }
    best = std::min(best, g(slo));
    EXPECT_NEAR(oracle_qlasso_signs(inst).value, best, 1e-9);
}

TEST(SignEnum, TooLarge)
{
    std::mt19937_64 rng(3);
    try {
        oracle_qlasso_signs(random_instance(rng, 3, 13, 1.0));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::TooLargeForOracle);
    }
}

TEST(SignEnum, CertificateTight)
{
    std::mt19937_64 rng(4);
    for (int t = 0; t < 30; ++t) {
        const auto inst = random_instance(rng, 2 + t % 4, 3 + t % 5, 0.1 * (1 + t));
        const auto opt = oracle_qlasso_signs(inst);
        EXPECT_LE(opt.certificate.eps, 1e-9);
        EXPECT_LE(kkt_residual(inst, opt.x), 1e-9);
    }
}

TEST(GridSearch, Examples)
{
    Mat<double> A = Mat<double>::Identity(2, 2);
    Vec<double> c(2);
    c << 1, 1;
    const ProblemInstance<double> sym(A, c, 1.0);
    // Phi is flat to second order at the optimum, so comparing values pins w only to ~sqrt(machine eps).
    for (int res : {2, 3, 10}) {
        const auto g = oracle_design_grid(sym, res);
        EXPECT_NEAR(g.w[0], 0.5, 1e-7);
        EXPECT_NEAR(g.w[1], 0.5, 1e-7);
    }
    std::mt19937_64 rng(5);
    const auto one = oracle_design_grid(random_instance(rng, 3, 1, 1.0), 5);
    EXPECT_EQ(one.w[0], 1.0);
    try {
        oracle_design_grid(random_instance(rng, 3, 5, 1.0), 5);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::TooLargeForOracle);
    }
}

TEST(GridSearch, ConsistentWithSignEnumeration)
{
    std::mt19937_64 rng(6);
    for (int t = 0; t < 10; ++t) {
        const auto inst = random_instance(rng, 3, 3 + t % 2, 0.5 + t);
        const auto grid = oracle_design_grid(inst, 20);
        const auto sign = oracle_qlasso_signs(inst);
        EXPECT_GE(grid.value, sign.value - 1e-4);
        EXPECT_LE(grid.value, sign.value + 1e-4 * (1 + sign.value));
    }
}

TEST(GroupOracle, MatchesCoordinateDescent)
{
    std::mt19937_64 rng(7);
    SolverOptions<double> opts;
    opts.tol = 1e-12;
    for (int t = 0; t < 10; ++t) {
        const auto inst = random_instance(rng, 3 + t % 3, 4 + t % 4, 0.2 + 0.5 * t, 3);
        const auto opt = oracle_group_support(inst);
        const auto cd = solve_cd(inst, opts);
        EXPECT_LE(qtest::rel_diff(cd.value, opt.value), 1e-8);
        EXPECT_LE(kkt_residual(inst, opt.x), 1e-8);
    }
}

TEST(VerifyOptimalPair, PassesAtOracleFailsElsewhere)
{
    std::mt19937_64 rng(8);
    std::normal_distribution<double> nd;
    for (int t = 0; t < 10; ++t) {
        const auto inst = random_instance(rng, 4, 5, 1.0);
        const auto opt = oracle_qlasso_signs(inst);
        EXPECT_TRUE(verify_optimal_pair(inst, opt.x, 1e-8).passed);
        EXPECT_FALSE(verify_optimal_pair(inst, Mat<double>(Mat<double>::Zero(5, 1)), 1e-8).passed);
        Mat<double> noisy = opt.x;
        for (Eigen::Index i = 0; i < noisy.rows(); ++i) noisy(i, 0) += 1e-3 * nd(rng);
        EXPECT_FALSE(verify_optimal_pair(inst, noisy, 1e-8).passed);
    }
}

TEST(VerifyMappings, SymmetricPair)
{
    Mat<double> A = Mat<double>::Identity(2, 2);
    Vec<double> c(2);
    c << 1, 1;
    const auto rep = verify_mappings(ProblemInstance<double>(A, c, 1.0), 1e-10);
    EXPECT_TRUE(rep.passed());
}

TEST(VerifyMappings, PathologicalBranch)
{
    std::mt19937_64 rng(9);
    const auto rep = verify_mappings(qtest::pathological_instance(rng, 4, 3, 0.7), 1e-8);
    EXPECT_TRUE(rep.pathological);
    EXPECT_TRUE(rep.passed());
}

TEST(VerifyMappings, RandomInstancesAcrossLambda)
{
    std::mt19937_64 rng(10);
    for (double lam : {0.1, 1.0, 10.0}) {
        for (int t = 0; t < 5; ++t) {
            const auto rep = verify_mappings(random_instance(rng, 4, 5, lam), 1e-8, t);
            EXPECT_TRUE(rep.passed()) << rep.value_identity << " " << rep.hat_x_value << " " << rep.lemma << " "
                                      << rep.dual_identity;
        }
    }
}
