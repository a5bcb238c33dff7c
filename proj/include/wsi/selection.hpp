#pragma once

#include "wsi/glm.hpp"

#include <cstdint>
#include <random>

namespace wsi {

/// Phi((beta - t)/s) + Phi((-beta - t)/s): selection probability given the
/// selection threshold t > 0 and the sampling sd s > 0 of the MLE.
double selection_probability(double threshold, double scale, double beta);

/// Threshold sqrt(n lambda S0 / (S2 S0 - S1^2)) from weighted moments
/// S0 = sum D, S1 = sum D x, S2 = sum D x^2. Throws DegenerateDenominator
/// when S2 S0 - S1^2 <= 0.
double selection_threshold(double n_lambda, double s0, double s1, double s2);

/// Plug-in selection probability for covariate j (0-based) at the MLE.
double estimated_selection_prob(const MleFit& mle, const Dataset& data, double lambda,
                                Index j);

struct SelectionProfile
{
    Vec p_hat;
    double lambda = 0.0;
};

SelectionProfile selection_profile(const MleFit& mle, const Dataset& data, double lambda);

enum class CovariateKind { gaussian_ar1, gaussian_exchangeable, independent_std_exponential };

/// Population covariate distribution with mean 0 and unit variances.
class CovariateModel
{
public:
    static CovariateModel gaussian_ar1(double rho, Index p);
    static CovariateModel gaussian_exchangeable(double rho, Index p);
    static CovariateModel independent_std_exponential(Index p);

    CovariateKind kind() const noexcept { return kind_; }
    Index p() const noexcept { return p_; }
    double rho() const noexcept { return rho_; }

    /// Population correlation matrix.
    const Mat& correlation() const noexcept { return corr_; }

    /// `rows` i.i.d. draws, one per row.
    Mat sample(Index rows, std::mt19937_64& rng) const;

private:
    CovariateModel(CovariateKind kind, double rho, Index p);

    CovariateKind kind_;
    double rho_;
    Index p_;
    Mat corr_;
    Mat chol_lower_;
};

struct ApproxSelection
{
    double prob = 0.0;
    double std_error = 0.0;  ///< jackknife over Monte Carlo chunks
};

struct ApproxOptions
{
    Index mc_draws = 200000;
    int chunks = 20;
    int threads = 0;
};

/// Population selection probability for covariate j (0-based) under the
/// true parameter gamma0, with the covariate moments E(D), E(D x_j),
/// E(D x_j^2) and E(X~' D X~) estimated by seeded Monte Carlo.
ApproxSelection approximate_selection_prob(const GlmFamily& family, const Vec& gamma0,
                                           const CovariateModel& cm, Index n, double lambda,
                                           Index j, std::uint64_t seed,
                                           const ApproxOptions& opts = {});

} // namespace wsi
