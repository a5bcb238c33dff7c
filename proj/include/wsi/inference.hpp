#pragma once

#include "wsi/onestep.hpp"
#include "wsi/signal.hpp"

#include <cstdint>

namespace wsi {

/// Bias and covariance estimates for the nonzero one-step coefficients,
/// indexed by position in `active_set`.
struct DebiasedQuantities
{
    IndexList active_set;
    Vec bias_hat;
    Mat cov_hat;
    Vec sigma_lambda;  ///< diagonal of lambda / (|beta0_j| |beta1_j|)
    Mat z0;            ///< X' D-dagger X (p x p)

    Index size() const noexcept { return static_cast<Index>(active_set.size()); }
    /// Position of covariate j in active_set, or -1.
    Index position(Index j) const noexcept;
};

/// X' D-dagger X with D-dagger = D - D 1 (1'D1)^{-1} 1'D.
Mat centered_information(const Vec& d, const Mat& x);

/// Throws SingularSystem if Z/n + Sigma_lambda is not positive definite. An
/// empty active set yields empty quantities.
DebiasedQuantities debiased_quantities(const MleFit& mle, const OneStepFit& onestep,
                                       const Dataset& data, double lambda);

enum class IntervalMethod { debiased_onestep, mle, bootstrap_percentile, absent };

const char* to_string(IntervalMethod m) noexcept;

struct Interval
{
    double lower = 0.0;
    double upper = 0.0;
    double std_error = 0.0;  ///< 0 for bootstrap and absent intervals
    IntervalMethod method = IntervalMethod::absent;

    bool present() const noexcept { return method != IntervalMethod::absent; }
    double width() const noexcept { return upper - lower; }
    bool covers(double value) const noexcept
    {
        return present() && lower <= value && value <= upper;
    }
};

struct IntervalSet
{
    std::vector<Interval> intervals;  ///< per covariate
    double alpha = 0.05;
    int failed_replicates = 0;        ///< bootstrap only
};

/// beta1_j - b_j +- z sigma_j. Throws NotActive if j is not selected.
Interval ci_strong(const OneStepFit& onestep, const DebiasedQuantities& dq, Index j,
                   double alpha);

/// beta0_j +- z sqrt(cov_{j+1,j+1}).
Interval ci_mle(const MleFit& mle, Index j, double alpha);

/// Strong covariates get ci_strong, weak and noise covariates get ci_mle.
IntervalSet two_step_ci(const MleFit& mle, const OneStepFit& onestep,
                        const DebiasedQuantities& dq,
                        const SignalClassification& classification, double alpha);

/// As two_step_ci but identified noise covariates get no interval.
IntervalSet old_two_step_ci(const MleFit& mle, const OneStepFit& onestep,
                            const DebiasedQuantities& dq,
                            const SignalClassification& classification, double alpha);

/// ci_strong on every selected covariate, nothing elsewhere.
IntervalSet asymptotic_ci(const OneStepFit& onestep, const DebiasedQuantities& dq,
                          double alpha);

/// ci_mle on every covariate.
IntervalSet mle_ci(const MleFit& mle, double alpha);

struct BootstrapOptions
{
    int replicates = 1000;
    int threads = 0;
    double max_failure_rate = 0.10;
};

/// Paired (x, y) resampling, MLE refit per replicate, percentile intervals.
/// Non-converging replicates are dropped and counted; TooManyFailures if
/// more than max_failure_rate of them fail.
IntervalSet bootstrap_ci(const GlmFamily& family, const Dataset& data, double alpha,
                         std::uint64_t seed, const BootstrapOptions& opts = {});

} // namespace wsi
