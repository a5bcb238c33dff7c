#include "wsi/glm.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace wsi {

const char* to_string(FamilyKind kind) noexcept
{
    switch (kind) {
    case FamilyKind::gaussian: return "gaussian";
    case FamilyKind::logistic: return "logistic";
    case FamilyKind::poisson: return "poisson";
    }
    return "unknown";
}

FamilyKind parse_family(std::string_view name)
{
    if (name == "gaussian" || name == "linear") return FamilyKind::gaussian;
    if (name == "logistic" || name == "binomial") return FamilyKind::logistic;
    if (name == "poisson") return FamilyKind::poisson;
    throw Error(ErrorKind::InvalidArgument, "unknown family '" + std::string(name) + "'");
}

double GlmFamily::dispersion() const
{
    if (kind != FamilyKind::gaussian) return 1.0;
    if (!sigma2 || !(*sigma2 > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "gaussian family needs a positive sigma2");
    }
    return *sigma2;
}

namespace {

constexpr double poisson_mu_limit = 700.0;

// log(1 + exp(mu)) without overflow.
double softplus(double mu)
{
    return mu > 0.0 ? mu + std::log1p(std::exp(-mu)) : std::log1p(std::exp(mu));
}

double sigmoid(double mu)
{
    if (mu >= 0.0) return 1.0 / (1.0 + std::exp(-mu));
    const double e = std::exp(mu);
    return e / (1.0 + e);
}

void check_poisson_range(const Vec& mu)
{
    if (mu.size() > 0 && mu.maxCoeff() > poisson_mu_limit) {
        throw Error(ErrorKind::Overflow, "poisson linear predictor exceeds 700");
    }
}

void check_dims(const Vec& gamma, const Mat& x_tilde, const Vec& y)
{
    if (gamma.size() != x_tilde.cols() || y.size() != x_tilde.rows()) {
        throw Error(ErrorKind::DimensionMismatch,
                    "gamma has " + std::to_string(gamma.size()) + " entries, design is " +
                        std::to_string(x_tilde.rows()) + "x" + std::to_string(x_tilde.cols()));
    }
}

Mat with_intercept(const Mat& x)
{
    Mat xt(x.rows(), x.cols() + 1);
    xt.col(0).setOnes();
    xt.rightCols(x.cols()) = x;
    return xt;
}

} // namespace

Vec weight_from_linear_predictor(const GlmFamily& family, const Vec& mu)
{
    switch (family.kind) {
    case FamilyKind::gaussian:
        return Vec::Constant(mu.size(), 1.0 / family.dispersion());
    case FamilyKind::logistic:
        // p(1-p) = e / (1+e)^2 with e = exp(-|mu|), exact in both tails
        return mu.unaryExpr([](double m) {
            const double e = std::exp(-std::abs(m));
            return e / ((1.0 + e) * (1.0 + e));
        });
    case FamilyKind::poisson:
        check_poisson_range(mu);
        return mu.array().exp().matrix();
    }
    return {};
}

Vec mean_from_linear_predictor(const GlmFamily& family, const Vec& mu)
{
    switch (family.kind) {
    case FamilyKind::gaussian: return mu;
    case FamilyKind::logistic: return mu.unaryExpr([](double m) { return sigmoid(m); });
    case FamilyKind::poisson:
        check_poisson_range(mu);
        return mu.array().exp().matrix();
    }
    return {};
}

Standardized standardize(const Mat& x_raw)
{
    const Index n = x_raw.rows();
    if (n < 2) throw Error(ErrorKind::InvalidArgument, "standardize needs at least 2 rows");

    Standardized out;
    out.x.resize(n, x_raw.cols());
    out.means = x_raw.colwise().mean().transpose();
    out.sds.resize(x_raw.cols());
    for (Index j = 0; j < x_raw.cols(); ++j) {
        const Vec centered = x_raw.col(j).array() - out.means(j);
        const double sd = std::sqrt(centered.squaredNorm() / static_cast<double>(n - 1));
        const double scale = std::max(1.0, x_raw.col(j).cwiseAbs().maxCoeff());
        if (!(sd > 1e-12 * scale)) {
            throw Error(ErrorKind::ConstantColumn, "column " + std::to_string(j) +
                                                       " has zero sample variance");
        }
        out.sds(j) = sd;
        out.x.col(j) = centered / sd;
    }
    return out;
}

void Dataset::validate(const Mat& x, const Vec& y, const GlmFamily& family)
{
    if (x.rows() != y.size()) {
        throw Error(ErrorKind::DimensionMismatch, "x has " + std::to_string(x.rows()) +
                                                      " rows but y has " +
                                                      std::to_string(y.size()));
    }
    if (x.cols() < 1) throw Error(ErrorKind::InvalidArgument, "need at least one covariate");
    if (x.rows() <= x.cols()) {
        throw Error(ErrorKind::InvalidArgument, "need n > p (n=" + std::to_string(x.rows()) +
                                                    ", p=" + std::to_string(x.cols()) + ")");
    }
    if (!x.allFinite() || !y.allFinite()) {
        throw Error(ErrorKind::NonNumericCell, "data contain non-finite values");
    }
    for (Index i = 0; i < y.size(); ++i) {
        const double v = y(i);
        if (family.kind == FamilyKind::logistic && v != 0.0 && v != 1.0) {
            throw Error(ErrorKind::InvalidResponse,
                        "logistic response must be 0/1 (row " + std::to_string(i) + ")");
        }
        if (family.kind == FamilyKind::poisson && (v < 0.0 || v != std::floor(v))) {
            throw Error(ErrorKind::InvalidResponse,
                        "poisson response must be a nonnegative integer (row " +
                            std::to_string(i) + ")");
        }
    }
}

Dataset Dataset::from_raw(Mat x_raw, Vec y, const GlmFamily& family)
{
    validate(x_raw, y, family);
    Standardized s = standardize(x_raw);
    Dataset d;
    d.x_raw_ = std::move(x_raw);
    d.x_std_ = std::move(s.x);
    d.x_tilde_ = with_intercept(d.x_std_);
    d.y_ = std::move(y);
    d.col_means_ = std::move(s.means);
    d.col_sds_ = std::move(s.sds);
    return d;
}

Dataset Dataset::from_standardized(Mat x_std, Vec y, const GlmFamily& family)
{
    validate(x_std, y, family);
    Dataset d;
    d.x_raw_ = x_std;
    d.x_std_ = std::move(x_std);
    d.x_tilde_ = with_intercept(d.x_std_);
    d.y_ = std::move(y);
    d.col_means_ = Vec::Zero(d.x_std_.cols());
    d.col_sds_ = Vec::Ones(d.x_std_.cols());
    return d;
}

Dataset Dataset::subset(std::span<const Index> rows) const
{
    const Index m = static_cast<Index>(rows.size());
    Dataset d;
    d.x_raw_.resize(m, x_raw_.cols());
    d.x_std_.resize(m, x_std_.cols());
    d.y_.resize(m);
    for (Index r = 0; r < m; ++r) {
        const Index i = rows[static_cast<std::size_t>(r)];
        if (i < 0 || i >= n()) throw Error(ErrorKind::DimensionMismatch, "row index out of range");
        d.x_raw_.row(r) = x_raw_.row(i);
        d.x_std_.row(r) = x_std_.row(i);
        d.y_(r) = y_(i);
    }
    d.x_tilde_ = with_intercept(d.x_std_);
    d.col_means_ = col_means_;
    d.col_sds_ = col_sds_;
    return d;
}

double log_likelihood(const GlmFamily& family, const Vec& gamma, const Mat& x_tilde,
                      const Vec& y)
{
    check_dims(gamma, x_tilde, y);
    const Vec mu = x_tilde * gamma;
    const auto n = static_cast<double>(y.size());
    switch (family.kind) {
    case FamilyKind::gaussian: {
        const double s2 = family.dispersion();
        return -(y - mu).squaredNorm() / (2.0 * s2) -
               0.5 * n * std::log(2.0 * std::numbers::pi * s2);
    }
    case FamilyKind::logistic: {
        double ll = 0.0;
        for (Index i = 0; i < y.size(); ++i) ll += y(i) * mu(i) - softplus(mu(i));
        return ll;
    }
    case FamilyKind::poisson: {
        check_poisson_range(mu);
        double ll = 0.0;
        for (Index i = 0; i < y.size(); ++i) {
            ll += y(i) * mu(i) - std::exp(mu(i)) - std::lgamma(y(i) + 1.0);
        }
        return ll;
    }
    }
    return 0.0;
}

double log_likelihood(const GlmFamily& family, const Vec& gamma, const Dataset& data)
{
    return log_likelihood(family, gamma, data.x_tilde(), data.y());
}

Vec score(const GlmFamily& family, const Vec& gamma, const Dataset& data)
{
    check_dims(gamma, data.x_tilde(), data.y());
    const Vec mu = data.x_tilde() * gamma;
    const Vec resid = data.y() - mean_from_linear_predictor(family, mu);
    return data.x_tilde().transpose() * resid / family.dispersion();
}

Vec weight_diagonal(const GlmFamily& family, const Vec& gamma, const Dataset& data)
{
    check_dims(gamma, data.x_tilde(), data.y());
    return weight_from_linear_predictor(family, data.x_tilde() * gamma);
}

MleFit mle_at(const GlmFamily& family, const Vec& gamma0, const Dataset& data, bool converged)
{
    MleFit fit;
    fit.family = family;
    fit.gamma0 = gamma0;
    fit.d0 = weight_diagonal(family, gamma0, data);
    const Mat& xt = data.x_tilde();
    const Mat xtdx = xt.transpose() * fit.d0.asDiagonal() * xt;
    Eigen::LLT<Mat> llt(xtdx);
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorKind::SingularInformation, "X~' D X~ is not positive definite");
    }
    fit.info = xtdx / static_cast<double>(data.n());
    fit.cov = llt.solve(Mat::Identity(xtdx.rows(), xtdx.cols()));
    fit.cov = 0.5 * (fit.cov + fit.cov.transpose()).eval();
    fit.loglik = log_likelihood(family, gamma0, data);
    fit.converged = converged;
    return fit;
}

namespace {

GlmFamily resolve_family(const GlmFamily& family, const Dataset& data)
{
    if (family.kind != FamilyKind::gaussian || family.sigma2) return family;
    const Index dof = data.n() - data.p() - 1;
    if (dof <= 0) {
        throw Error(ErrorKind::InvalidArgument, "gaussian sigma2 plug-in needs n > p + 1");
    }
    const Mat& xt = data.x_tilde();
    Eigen::LLT<Mat> llt(xt.transpose() * xt);
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorKind::SingularInformation, "X~' X~ is not positive definite");
    }
    const Vec ols = llt.solve(xt.transpose() * data.y());
    const double rss = (data.y() - xt * ols).squaredNorm();
    GlmFamily out = family;
    out.sigma2 = rss / static_cast<double>(dof);
    if (!(*out.sigma2 > 0.0)) {
        throw Error(ErrorKind::SingularInformation, "gaussian residual variance is zero");
    }
    return out;
}

void check_divergence(const GlmFamily& family, const Vec& gamma, const Vec& mu,
                      const NewtonOptions& opts)
{
    if (family.kind != FamilyKind::logistic) return;
    if (gamma.cwiseAbs().maxCoeff() > opts.divergence_norm) {
        throw Error(ErrorKind::SeparationDetected, "|gamma| exceeded divergence bound");
    }
    if (mu.cwiseAbs().maxCoeff() > opts.separation_mu) {
        throw Error(ErrorKind::SeparationDetected,
                    "fitted probabilities numerically 0 or 1");
    }
}

} // namespace

MleFit fit_mle(const GlmFamily& family_in, const Dataset& data, const NewtonOptions& opts)
{
    const GlmFamily family = resolve_family(family_in, data);
    const Mat& xt = data.x_tilde();
    const Vec& y = data.y();

    Vec gamma = Vec::Zero(xt.cols());
    double ll = log_likelihood(family, gamma, data);
    bool converged = false;
    int iter = 0;

    for (; iter < opts.max_iterations; ++iter) {
        const Vec mu = xt * gamma;
        const Vec w = weight_from_linear_predictor(family, mu);
        const Vec g = xt.transpose() * (y - mean_from_linear_predictor(family, mu)) /
                      family.dispersion();
        Eigen::LLT<Mat> llt(xt.transpose() * w.asDiagonal() * xt);
        if (llt.info() != Eigen::Success) {
            throw Error(ErrorKind::SingularInformation, "X~' D X~ is not positive definite");
        }
        const Vec step = llt.solve(g);
        if (g.cwiseAbs().maxCoeff() < opts.score_tol &&
            step.cwiseAbs().maxCoeff() < opts.step_tol) {
            converged = true;
            break;
        }

        double t = 1.0;
        bool accepted = false;
        Vec candidate;
        double ll_candidate = ll;
        const double slack = 1e-12 * std::max(1.0, std::abs(ll));
        for (int h = 0; h <= opts.max_halvings; ++h, t *= 0.5) {
            candidate = gamma + t * step;
            try {
                ll_candidate = log_likelihood(family, candidate, data);
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::Overflow) throw;
                continue;
            }
            if (std::isfinite(ll_candidate) && ll_candidate >= ll - slack) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            // No ascent along the Newton direction: we are at the optimum up
            // to rounding, or the problem is ill-posed.
            converged = g.cwiseAbs().maxCoeff() < 1e-6;
            break;
        }

        const double rel_change = std::abs(ll_candidate - ll) / std::max(1.0, std::abs(ll));
        const double moved = t * step.cwiseAbs().maxCoeff();
        gamma = candidate;
        ll = ll_candidate;
        check_divergence(family, gamma, xt * gamma, opts);
        if (rel_change < opts.rel_loglik_tol && moved < opts.step_tol) {
            converged = true;
            ++iter;
            break;
        }
    }

    MleFit fit = mle_at(family, gamma, data, converged);
    fit.iterations = iter;
    return fit;
}

} // namespace wsi
