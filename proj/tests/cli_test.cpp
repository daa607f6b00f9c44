#include "test_util.hpp"

#include <qdesign/cli.hpp>
#include <qdesign/imse.hpp>
#include <qdesign/io.hpp>

#include <gtest/gtest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace qdesign;
namespace fs = std::filesystem;

namespace {

class TempDir
{
public:
    TempDir()
    {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                ("qdesign_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    fs::path path_;
};

std::string slurp(const std::string& path)
{
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const std::string& path, const std::string& text)
{
    std::ofstream(path) << text;
}

struct CliRun
{
    int code;
    std::string out;
    std::string err;
};

CliRun run(const std::vector<std::string>& args)
{
    std::ostringstream out, err;
    const int code = cli::run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

// Posterior covariance of the truncated Bayesian model, built directly from
// the prior precision and the per-candidate information.
double imse_direct(const imse::ImseInstance& g, const Vec<double>& w)
{
    const Eigen::Index m = g.phi.cols();
    Mat<double> prec = g.eigenvalues.head(m).cwiseInverse().asDiagonal();
    for (Eigen::Index i = 0; i < g.phi.rows(); ++i)
        prec += double(g.budget) * w[i] / g.sigma2[i] * g.phi.row(i).transpose() * g.phi.row(i);
    return prec.inverse().trace();
}

} // namespace

TEST(Io, FormatDoubleRoundTrips)
{
    for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 1e300, 0.0}) EXPECT_EQ(std::stod(io::format_double(x)), x);
}

TEST(Io, CsvRoundTripWithAndWithoutHeader)
{
    TempDir dir;
    std::mt19937_64 rng(1);
    const Mat<double> M = qtest::gaussian(rng, 5, 3);
    io::write_matrix_csv(dir.file("a.csv"), M, {"x", "y", "z"});
    std::vector<std::string> header;
    EXPECT_EQ(io::read_csv(dir.file("a.csv"), &header), M);
    EXPECT_EQ(header, (std::vector<std::string>{"x", "y", "z"}));
    io::write_matrix_csv(dir.file("b.csv"), M);
    EXPECT_EQ(io::read_csv(dir.file("b.csv")), M);
    EXPECT_FALSE(fs::exists(dir.file("b.csv.tmp")));
}

TEST(Io, ParseErrorLocatesCell)
{
    TempDir dir;
    spit(dir.file("bad.csv"), "1,2\n3,oops\n");
    try {
        io::read_csv(dir.file("bad.csv"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ParseError);
        EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
    }
    spit(dir.file("ragged.csv"), "1,2\n3\n");
    EXPECT_THROW(io::read_csv(dir.file("ragged.csv")), Error);
    EXPECT_THROW(io::read_csv(dir.file("missing.csv")), Error);
}

TEST(Io, InstanceRoundTrip)
{
    TempDir dir;
    std::mt19937_64 rng(2);
    const auto inst = qtest::random_instance(rng, 4, 6, 0.3, 2);
    io::save_instance(dir.file("inst"), inst);
    const auto loaded = io::load_instance_prefix(dir.file("inst"));
    EXPECT_EQ(loaded.instance.A(), inst.A());
    EXPECT_EQ(loaded.instance.K(), inst.K());
    EXPECT_EQ(loaded.instance.lambda(), inst.lambda());
}

TEST(Io, NormalizeColumnsReportsZeroColumns)
{
    Mat<double> A(2, 3);
    A << 3, 0, 1,
         4, 0, 1;
    const auto zeros = io::normalize_columns(A);
    EXPECT_EQ(zeros, (std::vector<Eigen::Index>{1}));
    EXPECT_NEAR(A.col(0).norm(), 1.0, 1e-15);
    EXPECT_NEAR(A.col(2).norm(), 1.0, 1e-15);
    EXPECT_EQ(A.col(1).norm(), 0.0);
}

TEST(Io, CsvWriters)
{
    const auto w = Design<double>::uniform(2);
    EXPECT_EQ(io::design_to_csv(w), "index,weight\n0,0.5\n1,0.5\n");
    SolverTrace<double> tr;
    tr.p = 3;
    tr.records.push_back({0, 1.5, 0.25, 3, 0.7});
    EXPECT_EQ(io::trace_to_csv(tr, false), "iter,value,gap_or_delta,surviving,elapsed_s\n0,1.5,0.25,3,0\n");
}

TEST(Imse, KernelsAndPoints)
{
    for (auto k : {imse::Kernel::Matern12, imse::Kernel::Matern32, imse::Kernel::Matern52, imse::Kernel::SqExp}) {
        EXPECT_EQ(imse::kernel_value(k, 10, 0), 1.0);
        EXPECT_LT(imse::kernel_value(k, 10, 0.2), imse::kernel_value(k, 10, 0.1));
        EXPECT_EQ(imse::parse_kernel(imse::to_string(k)), k);
    }
    EXPECT_NEAR(imse::kernel_value(imse::Kernel::Matern12, 2, 0.5), std::exp(-1.0), 1e-15);
    EXPECT_THROW(imse::parse_kernel("gauss"), Error);

    const Mat<double> h = imse::halton(3, 2);
    EXPECT_DOUBLE_EQ(h(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(h(0, 1), 1.0 / 3);
    EXPECT_DOUBLE_EQ(h(1, 0), 0.25);
    EXPECT_DOUBLE_EQ(h(2, 1), 1.0 / 9);

    const Mat<double> g = imse::regular_grid(3, 2);
    EXPECT_EQ(g.rows(), 9);
    EXPECT_EQ(g.minCoeff(), 0.0);
    EXPECT_EQ(g.maxCoeff(), 1.0);
}

TEST(Imse, SpectralStructure)
{
    imse::ImseSpec spec;
    spec.grid_n = 9;
    const auto g = imse::generate(spec);
    EXPECT_EQ(g.A.rows(), 10);
    EXPECT_EQ(g.A.cols(), 81);
    EXPECT_NEAR(g.eigenvalues.sum(), 1.0, 1e-12);
    for (Eigen::Index k = 1; k < g.eigenvalues.size(); ++k) EXPECT_LE(g.eigenvalues[k], g.eigenvalues[k - 1]);
    // Eigenfunctions are orthonormal under the uniform measure on the candidates.
    const Mat<double> gram = g.phi.transpose() * g.phi / 81.0;
    EXPECT_LE((gram - Mat<double>::Identity(10, 10)).cwiseAbs().maxCoeff(), 1e-12);
    // Kernel diagonal is one: explained plus residual variance.
    for (Eigen::Index i = 0; i < 81; ++i) {
        const double explained = (g.phi.row(i).transpose().array().square() * g.eigenvalues.head(10).array()).sum();
        EXPECT_NEAR(explained + g.sigma2[i], 1.0, 1e-12);
    }
    EXPECT_LE(((g.K * g.K.transpose()).diagonal() - g.eigenvalues.head(10)).cwiseAbs().maxCoeff(), 1e-16);
    EXPECT_EQ(g.lambda, 0.1);
}

TEST(Imse, LargeGridSize)
{
    imse::ImseSpec spec;
    spec.grid_n = 33;
    const auto g = imse::generate(spec);
    EXPECT_EQ(g.A.cols(), 1089);
}

TEST(Imse, ObjectiveEqualsPosteriorIntegratedVariance)
{
    imse::ImseSpec spec;
    spec.grid_n = 6;
    spec.m = 8;
    spec.budget = 20;
    const auto g = imse::generate(spec);
    const ProblemInstance<double> inst(g.A, g.K, g.lambda);
    std::mt19937_64 rng(3);
    for (int t = 0; t < 10; ++t) {
        const auto w = qtest::random_design(rng, inst.p());
        EXPECT_LE(qtest::rel_diff(inst.lambda() * phi(inst, w), imse_direct(g, w.weights())), 1e-10);
    }
}

TEST(Imse, DegenerateTruncationAndBadOptions)
{
    // Duplicate candidates make the kernel matrix rank deficient.
    Mat<double> pts(3, 1);
    pts << 0.1, 0.1, 0.9;
    try {
        imse::generate_on(pts, imse::Kernel::Matern32, 10, 2, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::TruncationDegenerate);
    }
    imse::ImseSpec spec;
    EXPECT_THROW(imse::generate(spec), Error);
    spec.grid_n = 3;
    spec.lowdisc_count = 5;
    EXPECT_THROW(imse::generate(spec), Error);
}

TEST(Cli, SolveWritesOutputsAndSummary)
{
    TempDir dir;
    std::mt19937_64 rng(4);
    io::save_instance(dir.file("inst"), qtest::random_instance(rng, 5, 12, 0.5));
    const auto r = run({"solve", "--instance", dir.file("inst"), "--algo", "cd", "--screen", "d1", "--tol", "1e-9",
                        "--out-design", dir.file("w.csv"), "--out-trace", dir.file("t.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto s = nlohmann::json::parse(r.out);
    EXPECT_EQ(s["status"], "converged");
    EXPECT_LE(s["gap_or_delta"].get<double>(), 1e-9);
    const Mat<double> w = io::read_csv(dir.file("w.csv"));
    EXPECT_EQ(w.rows(), 12);
    EXPECT_NEAR(w.col(1).sum(), 1.0, 1e-12);
    EXPECT_EQ(slurp(dir.file("t.csv")).rfind("iter,value,gap_or_delta,surviving,elapsed_s", 0), 0u);
}

TEST(Cli, SolveIsDeterministicWithoutTiming)
{
    TempDir dir;
    std::mt19937_64 rng(5);
    io::save_instance(dir.file("inst"), qtest::random_instance(rng, 5, 12, 0.5));
    for (const char* algo : {"cd", "fista", "mwu"}) {
        std::vector<std::string> args{"solve", "--instance", dir.file("inst"), "--algo", algo, "--no-timing",
                                      "--seed", "7", "--out-trace", dir.file("t.csv")};
        const auto a = run(args);
        const std::string ta = slurp(dir.file("t.csv"));
        const auto b = run(args);
        EXPECT_EQ(a.out, b.out);
        EXPECT_EQ(ta, slurp(dir.file("t.csv")));
    }
}

TEST(Cli, NotConvergedExitCode)
{
    TempDir dir;
    std::mt19937_64 rng(6);
    io::save_instance(dir.file("inst"), qtest::random_instance(rng, 5, 12, 0.5));
    const auto r = run({"solve", "--instance", dir.file("inst"), "--algo", "fw", "--tol", "1e-14", "--max-iters", "3"});
    EXPECT_EQ(r.code, 2);
}

TEST(Cli, UsageErrors)
{
    EXPECT_EQ(run({}).code, 1);
    EXPECT_EQ(run({"solve", "--algo", "newton"}).code, 1);
    EXPECT_EQ(run({"solve", "--A", "/nonexistent.csv", "--c", "/nonexistent.csv", "--lambda", "1"}).code, 1);
    EXPECT_EQ(run({"frobnicate"}).code, 1);
}

TEST(Cli, PathSingleCandidateHasTwoBreakpoints)
{
    TempDir dir;
    spit(dir.file("A.csv"), "2\n1\n");
    spit(dir.file("c.csv"), "1\n3\n");
    const auto r = run({"path", "--A", dir.file("A.csv"), "--c", dir.file("c.csv"), "--full", "--out-path",
                        dir.file("path.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(nlohmann::json::parse(r.out)["breakpoints"], 2);
    const std::string csv = slurp(dir.file("path.csv"));
    EXPECT_EQ(csv.rfind("k,alpha,lambda,nnz,active_indices\n1,5,inf,0,\n2,0,0,1,0\n", 0), 0u) << csv;
}

TEST(Cli, PathDesignAtLambda)
{
    TempDir dir;
    std::mt19937_64 rng(7);
    const auto inst = qtest::random_instance(rng, 5, 10, 0.8);
    io::save_instance(dir.file("inst"), inst);
    const auto r = run({"path", "--instance", dir.file("inst"), "--lambda", "0.8", "--out-design", dir.file("w.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto s = nlohmann::json::parse(r.out);
    EXPECT_LE(s["kkt_residual"].get<double>(), 1e-9);
    const Mat<double> w = io::read_csv(dir.file("w.csv"));
    const Vec<double> ws = w.col(1);
    EXPECT_LE((ws - solve_homotopy(inst, 0.8).w.weights()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Cli, ScreenReportAndVerify)
{
    TempDir dir;
    std::mt19937_64 rng(8);
    io::save_instance(dir.file("inst"), qtest::random_instance(rng, 4, 6, 1.0));
    const auto sr = run({"screen-report", "--instance", dir.file("inst"), "--rule", "d2", "--out-mask", dir.file("m.csv")});
    ASSERT_EQ(sr.code, 0) << sr.err;
    EXPECT_EQ(io::read_csv(dir.file("m.csv")).rows(), 6);
    const auto v = run({"verify", "--instance", dir.file("inst")});
    EXPECT_EQ(v.code, 0) << v.out << v.err;
    EXPECT_EQ(nlohmann::json::parse(v.out)["status"], "pass");

    io::save_instance(dir.file("big"), qtest::random_instance(rng, 4, 9, 1.0));
    EXPECT_EQ(run({"verify", "--instance", dir.file("big")}).code, 1);
}

TEST(Cli, GeneratorsFeedSolve)
{
    TempDir dir;
    auto r = run({"gen-imse", "--grid", "5", "--m", "6", "--out-instance", dir.file("imse")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(io::read_csv(dir.file("imse_points.csv")).rows(), 25);
    r = run({"solve", "--instance", dir.file("imse"), "--algo", "mwu", "--screen", "d2", "--tol", "1e-6"});
    EXPECT_EQ(r.code, 0) << r.err;

    r = run({"gen-synthetic", "--m", "6", "--p", "20", "--seed", "3", "--normalize", "--out-instance", dir.file("syn")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto loaded = io::load_instance_prefix(dir.file("syn"));
    EXPECT_EQ(loaded.instance.p(), 20);
    EXPECT_NEAR(loaded.instance.col_sq_norms().maxCoeff(), 1.0, 1e-12);
    const std::string first = slurp(dir.file("syn_A.csv"));
    run({"gen-synthetic", "--m", "6", "--p", "20", "--seed", "3", "--normalize", "--out-instance", dir.file("syn")});
    EXPECT_EQ(first, slurp(dir.file("syn_A.csv")));
}

TEST(Cli, BenchTable)
{
    TempDir dir;
    std::mt19937_64 rng(9);
    io::save_instance(dir.file("inst"), qtest::random_instance(rng, 5, 15, 0.5));
    const auto r = run({"bench", "--instance", dir.file("inst"), "--algos", "cd,fista,homotopy", "--screens",
                        "none,d1", "--tol", "1e-8", "--no-timing", "--out-bench", dir.file("b.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string csv = slurp(dir.file("b.csv"));
    EXPECT_EQ(csv.rfind("algo,screen,lambda,time_s,iters,final_gap,value,status\n", 0), 0u);
    EXPECT_NE(csv.find("homotopy"), std::string::npos);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
}
