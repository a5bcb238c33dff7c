#include "wsi/selection.hpp"
#include "wsi/normal.hpp"
#include "wsi/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace wsi {

double selection_probability(double threshold, double scale, double beta)
{
    const double value =
        normal_cdf((beta - threshold) / scale) + normal_cdf((-beta - threshold) / scale);
    // keep the result in the open unit interval when the tails underflow or
    // the sum rounds up to one
    return std::clamp(value, std::numeric_limits<double>::min(),
                      std::nextafter(1.0, 0.0));
}

double selection_threshold(double n_lambda, double s0, double s1, double s2)
{
    const double denom = s2 * s0 - s1 * s1;
    if (!(denom > 0.0)) {
        throw Error(ErrorKind::DegenerateDenominator,
                    "weighted covariate variance is not positive");
    }
    return std::sqrt(n_lambda * s0 / denom);
}

double estimated_selection_prob(const MleFit& mle, const Dataset& data, double lambda, Index j)
{
    if (j < 0 || j >= data.p()) {
        throw Error(ErrorKind::InvalidArgument, "covariate index out of range");
    }
    if (!(lambda > 0.0)) throw Error(ErrorKind::InvalidArgument, "lambda must be positive");
    const auto x = data.x_std().col(j);
    const Vec& d = mle.d0;
    const double s0 = d.sum();
    const double s1 = d.dot(x);
    const double s2 = (d.array() * x.array().square()).sum();
    const double t = selection_threshold(static_cast<double>(data.n()) * lambda, s0, s1, s2);
    const double s = std::sqrt(mle.cov(j + 1, j + 1));
    return selection_probability(t, s, mle.gamma0(j + 1));
}

SelectionProfile selection_profile(const MleFit& mle, const Dataset& data, double lambda)
{
    SelectionProfile out;
    out.lambda = lambda;
    out.p_hat.resize(data.p());
    for (Index j = 0; j < data.p(); ++j) {
        out.p_hat(j) = estimated_selection_prob(mle, data, lambda, j);
    }
    return out;
}

CovariateModel::CovariateModel(CovariateKind kind, double rho, Index p)
    : kind_(kind), rho_(rho), p_(p), corr_(Mat::Identity(p, p))
{
    if (p < 1) throw Error(ErrorKind::InvalidArgument, "covariate model needs p >= 1");
    for (Index a = 0; a < p; ++a) {
        for (Index b = 0; b < p; ++b) {
            if (a == b) continue;
            if (kind == CovariateKind::gaussian_ar1) {
                corr_(a, b) = std::pow(rho, static_cast<double>(std::abs(a - b)));
            } else if (kind == CovariateKind::gaussian_exchangeable) {
                corr_(a, b) = rho;
            }
        }
    }
    Eigen::LLT<Mat> llt(corr_);
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorKind::InvalidArgument, "covariate correlation is not positive definite");
    }
    chol_lower_ = llt.matrixL();
}

CovariateModel CovariateModel::gaussian_ar1(double rho, Index p)
{
    if (!(rho > -1.0 && rho < 1.0)) throw Error(ErrorKind::InvalidArgument, "rho must lie in (-1,1)");
    return {CovariateKind::gaussian_ar1, rho, p};
}

CovariateModel CovariateModel::gaussian_exchangeable(double rho, Index p)
{
    return {CovariateKind::gaussian_exchangeable, rho, p};
}

CovariateModel CovariateModel::independent_std_exponential(Index p)
{
    return {CovariateKind::independent_std_exponential, 0.0, p};
}

Mat CovariateModel::sample(Index rows, std::mt19937_64& rng) const
{
    Mat z(rows, p_);
    if (kind_ == CovariateKind::independent_std_exponential) {
        std::exponential_distribution<double> expo(1.0);
        for (Index i = 0; i < rows; ++i) {
            for (Index j = 0; j < p_; ++j) z(i, j) = expo(rng) - 1.0;
        }
        return z;
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < p_; ++j) z(i, j) = normal(rng);
    }
    return z * chol_lower_.transpose();
}

namespace {

struct MomentSums
{
    double count = 0.0;
    double s0 = 0.0;
    double s1 = 0.0;
    double s2 = 0.0;
    Mat xtdx;

    MomentSums& operator+=(const MomentSums& o)
    {
        count += o.count;
        s0 += o.s0;
        s1 += o.s1;
        s2 += o.s2;
        xtdx += o.xtdx;
        return *this;
    }
    MomentSums& operator-=(const MomentSums& o)
    {
        count -= o.count;
        s0 -= o.s0;
        s1 -= o.s1;
        s2 -= o.s2;
        xtdx -= o.xtdx;
        return *this;
    }
};

double prob_from_moments(const MomentSums& m, const Vec& gamma0, Index n, double lambda,
                         Index j)
{
    // Per-observation expectations; E(X~' D0 X~) sums n such terms.
    const double e0 = m.s0 / m.count;
    const double e1 = m.s1 / m.count;
    const double e2 = m.s2 / m.count;
    const double t = selection_threshold(lambda, e0, e1, e2);
    const Mat expected_info = (static_cast<double>(n) / m.count) * m.xtdx;
    Eigen::LLT<Mat> llt(expected_info);
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorKind::DegenerateDenominator,
                    "expected information is not positive definite");
    }
    Vec unit = Vec::Zero(expected_info.rows());
    unit(j + 1) = 1.0;
    const double var = llt.solve(unit)(j + 1);
    return selection_probability(t, std::sqrt(var), gamma0(j + 1));
}

} // namespace

ApproxSelection approximate_selection_prob(const GlmFamily& family, const Vec& gamma0,
                                           const CovariateModel& cm, Index n, double lambda,
                                           Index j, std::uint64_t seed,
                                           const ApproxOptions& opts)
{
    const Index p = cm.p();
    if (gamma0.size() != p + 1) {
        throw Error(ErrorKind::DimensionMismatch, "gamma0 must have p + 1 entries");
    }
    if (j < 0 || j >= p) throw Error(ErrorKind::InvalidArgument, "covariate index out of range");
    if (!(lambda > 0.0)) throw Error(ErrorKind::InvalidArgument, "lambda must be positive");
    if (n < 1 || opts.mc_draws < 1 || opts.chunks < 1) {
        throw Error(ErrorKind::InvalidArgument, "n, mc_draws and chunks must be positive");
    }

    const int chunks = static_cast<int>(std::min<Index>(opts.chunks, opts.mc_draws));
    std::vector<MomentSums> parts(static_cast<std::size_t>(chunks));
    parallel_for(parts.size(), resolve_threads(opts.threads), [&](std::size_t c) {
        const Index base = opts.mc_draws / chunks;
        const Index rows = base + (static_cast<Index>(c) < opts.mc_draws % chunks ? 1 : 0);
        std::mt19937_64 rng(derive_seed(seed, c));
        const Mat x = cm.sample(rows, rng);
        const Vec mu = (x * gamma0.tail(p)).array() + gamma0(0);
        const Vec d = weight_from_linear_predictor(family, mu);

        Mat xt(rows, p + 1);
        xt.col(0).setOnes();
        xt.rightCols(p) = x;

        MomentSums& m = parts[c];
        m.count = static_cast<double>(rows);
        m.s0 = d.sum();
        m.s1 = d.dot(x.col(j));
        m.s2 = (d.array() * x.col(j).array().square()).sum();
        m.xtdx = xt.transpose() * d.asDiagonal() * xt;
    });

    MomentSums total{0.0, 0.0, 0.0, 0.0, Mat::Zero(p + 1, p + 1)};
    for (const auto& part : parts) total += part;

    ApproxSelection out;
    out.prob = prob_from_moments(total, gamma0, n, lambda, j);
    if (chunks > 1) {
        Vec loo(chunks);
        for (int c = 0; c < chunks; ++c) {
            MomentSums rest = total;
            rest -= parts[static_cast<std::size_t>(c)];
            loo(c) = prob_from_moments(rest, gamma0, n, lambda, j);
        }
        const double k = chunks;
        out.std_error = std::sqrt((k - 1.0) / k * (loo.array() - loo.mean()).square().sum());
    }
    return out;
}

} // namespace wsi
