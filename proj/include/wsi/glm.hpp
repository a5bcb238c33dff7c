#pragma once

#include "wsi/types.hpp"

#include <optional>
#include <span>
#include <string_view>

namespace wsi {

enum class FamilyKind { gaussian, logistic, poisson };

const char* to_string(FamilyKind kind) noexcept;
FamilyKind parse_family(std::string_view name);

/// Exponential-family response model with canonical link. For the gaussian
/// family `sigma2` is the error variance; when unset, fit_mle plugs in
/// RSS / (n - p - 1).
struct GlmFamily
{
    FamilyKind kind = FamilyKind::logistic;
    std::optional<double> sigma2;

    static GlmFamily gaussian(std::optional<double> sigma2 = std::nullopt)
    {
        return {FamilyKind::gaussian, sigma2};
    }
    static GlmFamily logistic() { return {FamilyKind::logistic, std::nullopt}; }
    static GlmFamily poisson() { return {FamilyKind::poisson, std::nullopt}; }

    /// sigma2 for gaussian (must be set), 1 otherwise.
    double dispersion() const;
};

/// Per-observation negative second derivative of the log-likelihood in the
/// linear predictor: 1/sigma2, p(1-p), or exp(mu).
Vec weight_from_linear_predictor(const GlmFamily& family, const Vec& mu);

/// Mean function m(mu).
Vec mean_from_linear_predictor(const GlmFamily& family, const Vec& mu);

struct Standardized
{
    Mat x;
    Vec means;
    Vec sds;
};

/// Centers each column and scales it to unit sample sd (n - 1 denominator).
/// Throws ConstantColumn for a column with zero sample variance.
Standardized standardize(const Mat& x_raw);

/// Covariates, response and the intercept-augmented design. `x_std` is the
/// column-standardized covariate matrix and `x_tilde` = [1 | x_std].
class Dataset
{
public:
    /// Standardizes `x_raw` and validates the response for `family`.
    static Dataset from_raw(Mat x_raw, Vec y, const GlmFamily& family);

    /// Uses `x_std` as given (already standardized by the caller).
    static Dataset from_standardized(Mat x_std, Vec y, const GlmFamily& family);

    /// Rows `rows` of this dataset, keeping the parent's standardization.
    Dataset subset(std::span<const Index> rows) const;

    Index n() const noexcept { return y_.size(); }
    Index p() const noexcept { return x_std_.cols(); }

    const Mat& x_raw() const noexcept { return x_raw_; }
    const Mat& x_std() const noexcept { return x_std_; }
    const Mat& x_tilde() const noexcept { return x_tilde_; }
    const Vec& y() const noexcept { return y_; }
    const Vec& col_means() const noexcept { return col_means_; }
    const Vec& col_sds() const noexcept { return col_sds_; }

private:
    Dataset() = default;
    static void validate(const Mat& x, const Vec& y, const GlmFamily& family);

    Mat x_raw_;
    Mat x_std_;
    Mat x_tilde_;
    Vec y_;
    Vec col_means_;
    Vec col_sds_;
};

/// Full log-likelihood (including normalizing constants) at gamma.
double log_likelihood(const GlmFamily& family, const Vec& gamma, const Dataset& data);
double log_likelihood(const GlmFamily& family, const Vec& gamma,
                      const Mat& x_tilde, const Vec& y);

/// Gradient of log_likelihood in gamma.
Vec score(const GlmFamily& family, const Vec& gamma, const Dataset& data);

/// D(gamma) diagonal. Poisson throws Overflow if any mu exceeds 700.
Vec weight_diagonal(const GlmFamily& family, const Vec& gamma, const Dataset& data);

struct MleFit
{
    GlmFamily family;  ///< sigma2 resolved for gaussian
    Vec gamma0;        ///< (alpha, beta)
    Vec d0;            ///< diag of D at gamma0
    Mat info;          ///< X~' D X~ / n
    Mat cov;           ///< (X~' D X~)^{-1}
    double loglik = 0.0;
    bool converged = false;
    int iterations = 0;

    Index p() const noexcept { return gamma0.size() - 1; }
    double alpha() const { return gamma0(0); }
    auto beta() const { return gamma0.tail(gamma0.size() - 1); }
};

struct NewtonOptions
{
    int max_iterations = 100;
    int max_halvings = 30;
    double rel_loglik_tol = 1e-10;
    double score_tol = 1e-8;
    double step_tol = 1e-6;
    double divergence_norm = 1e3;
    double separation_mu = 30.0;
};

/// Newton-Raphson from gamma = 0 with step halving.
/// Throws SeparationDetected on divergence of a logistic fit and
/// SingularInformation when X~' D X~ is not positive definite.
MleFit fit_mle(const GlmFamily& family, const Dataset& data, const NewtonOptions& opts = {});

/// Builds the MleFit bookkeeping (d0, info, cov, loglik) at a given gamma,
/// e.g. one re-read from disk. `family` must have sigma2 resolved for gaussian.
MleFit mle_at(const GlmFamily& family, const Vec& gamma0, const Dataset& data,
              bool converged = true);

} // namespace wsi
