#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace qdesign {

template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Lasso variable: one row per candidate, one column per response (r = 1 in the c-case).
template <class Scalar>
using PrimalPoint = Mat<Scalar>;

enum class ErrorCode {
    InvalidInstance,
    InvalidDesign,
    PriorNotPD,
    SolveFailure,
    ZeroPrimalPoint,
    InvalidCertificate,
    PathologicalInstance,
    PathTooShort,
    Degenerate,
    TooLargeForOracle,
    NumericalUnderflow,
    TruncationDegenerate,
    ParseError,
    InvalidOptions,
};

inline const char* to_string(ErrorCode code)
{
    switch (code) {
        case ErrorCode::InvalidInstance: return "InvalidInstance";
        case ErrorCode::InvalidDesign: return "InvalidDesign";
        case ErrorCode::PriorNotPD: return "PriorNotPD";
        case ErrorCode::SolveFailure: return "SolveFailure";
        case ErrorCode::ZeroPrimalPoint: return "ZeroPrimalPoint";
        case ErrorCode::InvalidCertificate: return "InvalidCertificate";
        case ErrorCode::PathologicalInstance: return "PathologicalInstance";
        case ErrorCode::PathTooShort: return "PathTooShort";
        case ErrorCode::Degenerate: return "Degenerate";
        case ErrorCode::TooLargeForOracle: return "TooLargeForOracle";
        case ErrorCode::NumericalUnderflow: return "NumericalUnderflow";
        case ErrorCode::TruncationDegenerate: return "TruncationDegenerate";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::InvalidOptions: return "InvalidOptions";
    }
    return "Unknown";
}

class Error : public std::runtime_error
{
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
    {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/**
 * Standardized design problem: columns a_i of A are the candidates, the
 * columns of K the quantities of interest (K = c when r = 1), and lambda
 * the prior weight in H_i = a_i a_i^T + lambda I.
 */
template <class Scalar>
class ProblemInstance
{
public:
    ProblemInstance(Mat<Scalar> A, Mat<Scalar> K, Scalar lambda)
        : A_(std::move(A)), K_(std::move(K)), lambda_(lambda)
    {
        if (A_.rows() < 1 || A_.cols() < 1 || K_.cols() < 1)
            throw Error(ErrorCode::InvalidInstance, "empty matrix");
        if (K_.rows() != A_.rows())
            throw Error(ErrorCode::InvalidInstance, "target rows do not match A rows");
        if (!(lambda_ > 0) || !std::isfinite(lambda_))
            throw Error(ErrorCode::InvalidInstance, "lambda must be positive and finite");
        if (!A_.allFinite() || !K_.allFinite())
            throw Error(ErrorCode::InvalidInstance, "non-finite entries");
        col_sq_norms_ = A_.colwise().squaredNorm().transpose();
    }

    /// c-case convenience: K is the single column c.
    ProblemInstance(Mat<Scalar> A, const Vec<Scalar>& c, Scalar lambda)
        : ProblemInstance(std::move(A), Mat<Scalar>(c), lambda)
    {}

    const Mat<Scalar>& A() const noexcept { return A_; }
    const Mat<Scalar>& K() const noexcept { return K_; }
    Vec<Scalar> c() const { return K_.col(0); }
    Scalar lambda() const noexcept { return lambda_; }
    Eigen::Index m() const noexcept { return A_.rows(); }
    Eigen::Index p() const noexcept { return A_.cols(); }
    Eigen::Index r() const noexcept { return K_.cols(); }
    bool is_c_case() const noexcept { return K_.cols() == 1; }

    /// ||a_i||^2 for every candidate.
    const Vec<Scalar>& col_sq_norms() const noexcept { return col_sq_norms_; }

    /// Instance restricted to the listed candidate columns.
    ProblemInstance restrict_to(const std::vector<Eigen::Index>& keep) const
    {
        Mat<Scalar> sub(m(), static_cast<Eigen::Index>(keep.size()));
        for (std::size_t j = 0; j < keep.size(); ++j) sub.col(j) = A_.col(keep[j]);
        return ProblemInstance(std::move(sub), K_, lambda_);
    }

private:
    Mat<Scalar> A_;
    Mat<Scalar> K_;
    Scalar lambda_;
    Vec<Scalar> col_sq_norms_;
};

/// Raw Bayesian setup before reduction to an identity prior.
template <class Scalar>
struct PriorSpec
{
    Mat<Scalar> Sigma;
    Scalar sigma2 = 1;
    long n = 1;
    Mat<Scalar> A;
    Mat<Scalar> K;
};

/// Weight vector on the probability simplex over candidates.
template <class Scalar>
class Design
{
public:
    static constexpr double sum_tol = 1e-12;
    static constexpr double renormalize_tol = 1e-6;

    explicit Design(Vec<Scalar> w) : w_(std::move(w))
    {
        if (w_.size() < 1) throw Error(ErrorCode::InvalidDesign, "empty design");
        for (Eigen::Index i = 0; i < w_.size(); ++i) {
            if (!std::isfinite(w_[i]) || w_[i] < 0)
                throw Error(ErrorCode::InvalidDesign,
                            "weight " + std::to_string(i) + " is negative or not finite");
        }
        const Scalar s = w_.sum();
        const Scalar dev = std::abs(s - Scalar(1));
        if (dev > Scalar(renormalize_tol))
            throw Error(ErrorCode::InvalidDesign, "weights sum to " + std::to_string(double(s)));
        if (dev > Scalar(sum_tol)) w_ /= s;
    }

    static Design uniform(Eigen::Index p)
    {
        return Design(Vec<Scalar>::Constant(p, Scalar(1) / Scalar(p)));
    }

    static Design vertex(Eigen::Index p, Eigen::Index i)
    {
        Vec<Scalar> w = Vec<Scalar>::Zero(p);
        w[i] = 1;
        return Design(std::move(w));
    }

    const Vec<Scalar>& weights() const noexcept { return w_; }
    Scalar operator[](Eigen::Index i) const { return w_[i]; }
    Eigen::Index size() const noexcept { return w_.size(); }

private:
    Vec<Scalar> w_;
};

enum class CertificateSource { FromPrimal, FromDesign };

/// Dual point with a certified bound eps on D(y*) - D(y).
template <class Scalar>
struct DualCertificate
{
    Mat<Scalar> Y;
    Scalar eps = 0;
    CertificateSource source = CertificateSource::FromPrimal;
};

template <class Scalar>
struct OptimalityReport
{
    Scalar primal_value = 0;
    Scalar dual_value = 0;
    Scalar gap = 0;
    Scalar kkt_residual = 0;
    Scalar delta = 0;
    bool passed = false;
};

} // namespace qdesign
