#include "qdesign/imse.hpp"
#include "qdesign/io.hpp"

#include <Eigen/Eigenvalues>

#include <cctype>
#include <cmath>

namespace qdesign::imse {

Kernel parse_kernel(const std::string& raw)
{
    std::string name = raw;
    for (auto& ch : name) ch = char(std::tolower(static_cast<unsigned char>(ch)));
    if (name == "matern12") return Kernel::Matern12;
    if (name == "matern32") return Kernel::Matern32;
    if (name == "matern52") return Kernel::Matern52;
    if (name == "sqexp") return Kernel::SqExp;
    throw Error(ErrorCode::InvalidOptions, "unknown kernel '" + name + "'");
}

const char* to_string(Kernel k)
{
    switch (k) {
        case Kernel::Matern12: return "matern12";
        case Kernel::Matern32: return "matern32";
        case Kernel::Matern52: return "matern52";
        case Kernel::SqExp: return "sqexp";
    }
    return "?";
}

double kernel_value(Kernel k, double theta, double h)
{
    const double t = theta * h;
    switch (k) {
        case Kernel::Matern12: return std::exp(-t);
        case Kernel::Matern32: return (1 + t) * std::exp(-t);
        case Kernel::Matern52: return (1 + t + t * t / 3) * std::exp(-t);
        case Kernel::SqExp: return std::exp(-0.5 * t * t);
    }
    return 0;
}

Mat<double> halton(int count, int d)
{
    static const int primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
    if (d < 1 || d > 16) throw Error(ErrorCode::InvalidOptions, "Halton sequence supports 1 <= d <= 16");
    Mat<double> P(count, d);
    for (int i = 0; i < count; ++i) {
        for (int k = 0; k < d; ++k) {
            const int b = primes[k];
            double f = 1, r = 0;
            for (long n = i + 1; n > 0; n /= b) {
                f /= b;
                r += f * double(n % b);
            }
            P(i, k) = r;
        }
    }
    return P;
}

Mat<double> regular_grid(int n, int d)
{
    if (n < 2 || d < 1) throw Error(ErrorCode::InvalidOptions, "grid needs n >= 2 and d >= 1");
    long p = 1;
    for (int k = 0; k < d; ++k) p *= n;
    Mat<double> P(p, d);
    for (long i = 0; i < p; ++i) {
        long rest = i;
        for (int k = d - 1; k >= 0; --k) {
            P(i, k) = double(rest % n) / double(n - 1);
            rest /= n;
        }
    }
    return P;
}

Mat<double> candidate_points(const ImseSpec& spec)
{
    const int sources = (spec.grid_n > 0) + (spec.lowdisc_count > 0) + (!spec.points_file.empty());
    if (sources != 1) throw Error(ErrorCode::InvalidOptions, "give exactly one of grid, Halton count or points file");
    if (spec.grid_n > 0) return regular_grid(spec.grid_n, spec.d);
    if (spec.lowdisc_count > 0) return halton(spec.lowdisc_count, spec.d);
    Mat<double> P = io::read_csv(spec.points_file);
    if (P.cols() != spec.d)
        throw Error(ErrorCode::ParseError, spec.points_file + ": expected " + std::to_string(spec.d) + " columns");
    return P;
}

ImseInstance generate_on(const Mat<double>& points, Kernel kernel, double theta, int m, long budget)
{
    const Eigen::Index p = points.rows();
    if (!(theta > 0)) throw Error(ErrorCode::InvalidOptions, "theta must be positive");
    if (m < 1 || m >= p) throw Error(ErrorCode::InvalidOptions, "truncation level must satisfy 1 <= m < p");
    if (budget < 0) throw Error(ErrorCode::InvalidOptions, "budget must be positive");
    const long n = budget == 0 ? m : budget;

    Mat<double> G(p, p);
    for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = 0; j <= i; ++j)
            G(i, j) = G(j, i) = kernel_value(kernel, theta, (points.row(i) - points.row(j)).norm());

    // Uniform measure: D^{1/2} Gamma D^{1/2} = Gamma / p.
    const Mat<double> S = G / double(p);
    Eigen::SelfAdjointEigenSolver<Mat<double>> es(S);
    if (es.info() != Eigen::Success) throw Error(ErrorCode::SolveFailure, "eigensolver failed");
    const Vec<double> ev = es.eigenvalues().reverse();
    const Mat<double> U = es.eigenvectors().rowwise().reverse();

    ImseInstance out;
    out.points = points;
    out.eigenvalues = ev;
    out.budget = n;
    out.lambda = 1.0 / double(n);
    out.phi = std::sqrt(double(p)) * U.leftCols(m);    // V = D^{-1/2} U

    const Vec<double> lam_m = ev.head(m).cwiseMax(0.0);
    out.sigma2.resize(p);
    std::vector<Eigen::Index> bad;
    for (Eigen::Index i = 0; i < p; ++i) {
        const double explained = (out.phi.row(i).transpose().array().square() * lam_m.array()).sum();
        out.sigma2[i] = G(i, i) - explained;
        if (!(out.sigma2[i] > 1e-12)) bad.push_back(i);
    }
    if (!bad.empty()) {
        std::string idx;
        for (std::size_t j = 0; j < bad.size() && j < 20; ++j) idx += (j ? " " : "") + std::to_string(bad[j]);
        if (bad.size() > 20) idx += " ...";
        throw Error(ErrorCode::TruncationDegenerate,
                    "residual variance vanishes at candidates " + idx);
    }

    const Vec<double> root = lam_m.cwiseSqrt();
    out.A.resize(m, p);
    for (Eigen::Index i = 0; i < p; ++i)
        out.A.col(i) = root.cwiseProduct(out.phi.row(i).transpose()) / std::sqrt(out.sigma2[i]);
    out.K = root.asDiagonal().toDenseMatrix();
    return out;
}

ImseInstance generate(const ImseSpec& spec)
{
    return generate_on(candidate_points(spec), spec.kernel, spec.theta, spec.m, spec.budget);
}

} // namespace qdesign::imse
