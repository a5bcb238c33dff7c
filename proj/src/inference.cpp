#include "wsi/inference.hpp"
#include "wsi/normal.hpp"
#include "wsi/parallel.hpp"

#include <cmath>
#include <random>
#include <string>

namespace wsi {

Index DebiasedQuantities::position(Index j) const noexcept
{
    for (std::size_t k = 0; k < active_set.size(); ++k) {
        if (active_set[k] == j) return static_cast<Index>(k);
    }
    return -1;
}

Mat centered_information(const Vec& d, const Mat& x)
{
    const Vec xd = x.transpose() * d;  // X'D1
    return x.transpose() * d.asDiagonal() * x - xd * xd.transpose() / d.sum();
}

namespace {

Mat submatrix(const Mat& m, const IndexList& rows, const IndexList& cols)
{
    Mat out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
    for (std::size_t a = 0; a < rows.size(); ++a) {
        for (std::size_t b = 0; b < cols.size(); ++b) {
            out(static_cast<Index>(a), static_cast<Index>(b)) = m(rows[a], cols[b]);
        }
    }
    return out;
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

} // namespace

DebiasedQuantities debiased_quantities(const MleFit& mle, const OneStepFit& onestep,
                                       const Dataset& data, double lambda)
{
    if (!(lambda >= 0.0)) throw Error(ErrorKind::InvalidArgument, "lambda must be >= 0");
    DebiasedQuantities dq;
    dq.active_set = onestep.active_set;
    dq.z0 = centered_information(mle.d0, data.x_std());
    const Index s = dq.size();
    dq.bias_hat = Vec::Zero(s);
    dq.cov_hat = Mat::Zero(s, s);
    dq.sigma_lambda = Vec::Zero(s);
    if (s == 0) return dq;

    const auto n = static_cast<double>(data.n());
    const Vec beta0 = mle.beta();
    const Vec beta1 = onestep.beta();
    Vec penalty_grad(s);
    for (Index k = 0; k < s; ++k) {
        const Index j = dq.active_set[static_cast<std::size_t>(k)];
        if (beta0(j) == 0.0 || beta1(j) == 0.0) {
            throw Error(ErrorKind::InvalidArgument, "active coefficient has a zero estimate");
        }
        dq.sigma_lambda(k) = lambda / (std::abs(beta0(j)) * std::abs(beta1(j)));
        penalty_grad(k) = lambda * sign(beta1(j)) / std::abs(beta0(j));
    }

    const Mat z = submatrix(dq.z0, dq.active_set, dq.active_set);
    Mat system = z / n;
    system.diagonal() += dq.sigma_lambda;
    Eigen::LLT<Mat> llt(system);
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorKind::SingularSystem, "Z/n + Sigma_lambda is not positive definite");
    }
    dq.bias_hat = -llt.solve(penalty_grad);

    // {(I_B)^{-1}}_A: invert the information restricted to intercept + active
    // covariates, then drop the intercept row and column.
    const Mat info_b = submatrix(mle.info, onestep.b_set, onestep.b_set);
    Eigen::LLT<Mat> info_llt(info_b);
    if (info_llt.info() != Eigen::Success) {
        throw Error(ErrorKind::SingularSystem, "restricted information is not positive definite");
    }
    const Mat info_b_inv = info_llt.solve(Mat::Identity(s + 1, s + 1));
    const Mat inner = info_b_inv.bottomRightCorner(s, s);

    const Mat left = llt.solve(z);  // (Z/n + Sigma)^{-1} Z
    Mat cov = left * inner * left.transpose() / (n * n * n);
    dq.cov_hat = 0.5 * (cov + cov.transpose());
    return dq;
}

const char* to_string(IntervalMethod m) noexcept
{
    switch (m) {
    case IntervalMethod::debiased_onestep: return "debiased_onestep";
    case IntervalMethod::mle: return "mle";
    case IntervalMethod::bootstrap_percentile: return "bootstrap_percentile";
    case IntervalMethod::absent: return "absent";
    }
    return "unknown";
}

Interval ci_strong(const OneStepFit& onestep, const DebiasedQuantities& dq, Index j,
                   double alpha)
{
    const Index k = dq.position(j);
    if (k < 0 || !onestep.is_active(j)) {
        throw Error(ErrorKind::NotActive, "covariate " + std::to_string(j) + " is not selected");
    }
    const double z = z_critical(alpha);
    const double center = onestep.beta()(j) - dq.bias_hat(k);
    const double se = std::sqrt(std::max(0.0, dq.cov_hat(k, k)));
    return {center - z * se, center + z * se, se, IntervalMethod::debiased_onestep};
}

Interval ci_mle(const MleFit& mle, Index j, double alpha)
{
    if (j < 0 || j >= mle.p()) throw Error(ErrorKind::InvalidArgument, "covariate index out of range");
    const double z = z_critical(alpha);
    const double se = std::sqrt(mle.cov(j + 1, j + 1));
    const double center = mle.gamma0(j + 1);
    return {center - z * se, center + z * se, se, IntervalMethod::mle};
}

namespace {

IntervalSet combine(const MleFit& mle, const OneStepFit& onestep, const DebiasedQuantities& dq,
                    const SignalClassification& classification, double alpha, bool noise_interval)
{
    const Index p = mle.p();
    if (static_cast<Index>(classification.labels.size()) != p) {
        throw Error(ErrorKind::DimensionMismatch, "classification does not cover all covariates");
    }
    IntervalSet out;
    out.alpha = alpha;
    out.intervals.resize(static_cast<std::size_t>(p));
    for (Index j = 0; j < p; ++j) {
        Interval& iv = out.intervals[static_cast<std::size_t>(j)];
        switch (classification.labels[static_cast<std::size_t>(j)]) {
        case SignalClass::strong:
            // A strong label with a zero one-step estimate has no de-biased
            // interval; the MLE interval stands in.
            iv = dq.position(j) >= 0 ? ci_strong(onestep, dq, j, alpha) : ci_mle(mle, j, alpha);
            break;
        case SignalClass::weak:
            iv = ci_mle(mle, j, alpha);
            break;
        case SignalClass::noise:
            iv = noise_interval ? ci_mle(mle, j, alpha) : Interval{};
            break;
        }
    }
    return out;
}

} // namespace

IntervalSet two_step_ci(const MleFit& mle, const OneStepFit& onestep,
                        const DebiasedQuantities& dq,
                        const SignalClassification& classification, double alpha)
{
    return combine(mle, onestep, dq, classification, alpha, true);
}

IntervalSet old_two_step_ci(const MleFit& mle, const OneStepFit& onestep,
                            const DebiasedQuantities& dq,
                            const SignalClassification& classification, double alpha)
{
    return combine(mle, onestep, dq, classification, alpha, false);
}

IntervalSet asymptotic_ci(const OneStepFit& onestep, const DebiasedQuantities& dq, double alpha)
{
    IntervalSet out;
    out.alpha = alpha;
    out.intervals.resize(static_cast<std::size_t>(onestep.p()));
    for (Index j : dq.active_set) {
        out.intervals[static_cast<std::size_t>(j)] = ci_strong(onestep, dq, j, alpha);
    }
    return out;
}

IntervalSet mle_ci(const MleFit& mle, double alpha)
{
    IntervalSet out;
    out.alpha = alpha;
    for (Index j = 0; j < mle.p(); ++j) out.intervals.push_back(ci_mle(mle, j, alpha));
    return out;
}

IntervalSet bootstrap_ci(const GlmFamily& family, const Dataset& data, double alpha,
                         std::uint64_t seed, const BootstrapOptions& opts)
{
    if (opts.replicates < 2) {
        throw Error(ErrorKind::InvalidArgument, "bootstrap needs at least 2 replicates");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::InvalidArgument, "alpha must lie in (0,1)");

    const Index n = data.n();
    const Index p = data.p();
    const auto b = static_cast<std::size_t>(opts.replicates);
    std::vector<Vec> estimates(b);
    std::vector<char> ok(b, 0);

    parallel_for(b, resolve_threads(opts.threads), [&](std::size_t r) {
        std::mt19937_64 rng(derive_seed(seed, r));
        std::uniform_int_distribution<Index> pick(0, n - 1);
        std::vector<Index> rows(static_cast<std::size_t>(n));
        for (auto& i : rows) i = pick(rng);
        try {
            const MleFit fit = fit_mle(family, data.subset(rows));
            if (fit.converged) {
                estimates[r] = fit.beta();
                ok[r] = 1;
            }
        } catch (const Error&) {
            // dropped and counted below
        }
    });

    IntervalSet out;
    out.alpha = alpha;
    std::vector<std::vector<double>> draws(static_cast<std::size_t>(p));
    for (std::size_t r = 0; r < b; ++r) {
        if (!ok[r]) {
            ++out.failed_replicates;
            continue;
        }
        for (Index j = 0; j < p; ++j) draws[static_cast<std::size_t>(j)].push_back(estimates[r](j));
    }
    if (static_cast<double>(out.failed_replicates) > opts.max_failure_rate * static_cast<double>(b)) {
        throw Error(ErrorKind::TooManyFailures,
                    std::to_string(out.failed_replicates) + " of " + std::to_string(b) +
                        " bootstrap replicates failed");
    }
    for (Index j = 0; j < p; ++j) {
        const auto& v = draws[static_cast<std::size_t>(j)];
        out.intervals.push_back({quantile_type7(v, 0.5 * alpha), quantile_type7(v, 1.0 - 0.5 * alpha),
                                 0.0, IntervalMethod::bootstrap_percentile});
    }
    return out;
}

} // namespace wsi
