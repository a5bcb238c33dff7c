#include "wsi/onestep.hpp"

#include <limits>
#include <numeric>
#include <random>

namespace wsi {

Mat apply_d_star(const Vec& d, const Mat& v)
{
    const Vec sqrt_d = d.array().sqrt().matrix();
    // weighted column means (1'D1)^{-1} 1'D v
    const Eigen::RowVectorXd centers = (d.transpose() * v) / d.sum();
    return sqrt_d.asDiagonal() * (v.rowwise() - centers);
}

WorkingData build_working_data(const MleFit& mle, const Dataset& data)
{
    WorkingData wd;
    wd.w = mle.beta().cwiseAbs();
    const Mat centered = apply_d_star(mle.d0, data.x_std());
    wd.x_star = centered * wd.w.asDiagonal();
    wd.y_star = centered * mle.beta();
    wd.col_norms = wd.x_star.colwise().squaredNorm().transpose();
    return wd;
}

double working_objective(const WorkingData& wd, const Vec& beta_star, double lambda)
{
    const auto n = static_cast<double>(wd.y_star.size());
    return (wd.y_star - wd.x_star * beta_star).squaredNorm() / (2.0 * n) +
           lambda * beta_star.lpNorm<1>();
}

CdResult coordinate_descent(const WorkingData& wd, double lambda, const Vec& warm_start,
                            const CdOptions& opts)
{
    if (!(lambda > 0.0)) throw Error(ErrorKind::InvalidArgument, "lambda must be positive");
    const Mat gram = wd.x_star.transpose() * wd.x_star;
    const Vec xty = wd.x_star.transpose() * wd.y_star;
    Vec start = warm_start;
    for (Index j = 0; j < start.size(); ++j) {
        if (wd.col_norms(j) == 0.0) start(j) = 0.0;
    }
    return lasso_cd_gram<double>(gram, xty, static_cast<double>(wd.y_star.size()), lambda,
                                 std::move(start), opts);
}

CdResult coordinate_descent(const WorkingData& wd, double lambda, const CdOptions& opts)
{
    return coordinate_descent(wd, lambda, Vec::Zero(wd.x_star.cols()), opts);
}

double lambda_max(const WorkingData& wd)
{
    const Vec xty = wd.x_star.transpose() * wd.y_star;
    return xty.cwiseAbs().maxCoeff() / static_cast<double>(wd.y_star.size());
}

OneStepFit assemble_one_step(const MleFit& mle, const Dataset& data, double lambda,
                             const CdResult& cd)
{
    const Index p = mle.p();
    OneStepFit fit;
    fit.lambda = lambda;
    fit.beta_star = cd.beta;
    fit.converged = cd.converged;
    fit.sweeps = cd.sweeps;

    const Vec beta0 = mle.beta();
    const Vec beta1 = cd.beta.cwiseProduct(beta0.cwiseAbs());
    const Vec xd = data.x_std().transpose() * mle.d0;  // X'D1
    const double alpha1 = mle.alpha() + xd.dot(beta0 - beta1) / mle.d0.sum();

    fit.gamma1.resize(p + 1);
    fit.gamma1(0) = alpha1;
    fit.gamma1.tail(p) = beta1;
    fit.b_set.push_back(0);
    for (Index j = 0; j < p; ++j) {
        if (beta1(j) != 0.0) {
            fit.active_set.push_back(j);
            fit.b_set.push_back(j + 1);
        }
    }
    return fit;
}

OneStepFit one_step_fit(const MleFit& mle, const Dataset& data, double lambda,
                        const CdOptions& opts)
{
    const WorkingData wd = build_working_data(mle, data);
    return assemble_one_step(mle, data, lambda, coordinate_descent(wd, lambda, opts));
}

double bic_score(const GlmFamily& family, const Dataset& data, const Vec& gamma)
{
    const auto n = static_cast<double>(data.n());
    const auto df = static_cast<double>((gamma.tail(gamma.size() - 1).array() != 0.0).count());
    return -2.0 * log_likelihood(family, gamma, data) / n + df * std::log(n) / n;
}

Vec lambda_grid(double lmax, int size, double min_ratio)
{
    if (size < 1) throw Error(ErrorKind::InvalidArgument, "grid size must be positive");
    if (!(lmax > 0.0)) throw Error(ErrorKind::InvalidArgument, "lambda_max must be positive");
    Vec grid(size);
    if (size == 1) {
        grid(0) = lmax;
        return grid;
    }
    const double log_step = std::log(min_ratio) / static_cast<double>(size - 1);
    for (int k = 0; k < size; ++k) grid(k) = lmax * std::exp(log_step * k);
    return grid;
}

namespace {

struct PathCache
{
    Mat gram;
    Vec xty;
    double n;
};

PathCache path_cache(const WorkingData& wd)
{
    return {wd.x_star.transpose() * wd.x_star, wd.x_star.transpose() * wd.y_star,
            static_cast<double>(wd.y_star.size())};
}

Index argmin_first(const Vec& v)
{
    Index best = 0;
    for (Index k = 1; k < v.size(); ++k) {
        if (v(k) < v(best)) best = k;
    }
    return best;
}

} // namespace

LambdaSelection select_lambda(const MleFit& mle, const Dataset& data, std::uint64_t seed,
                              const LambdaSelectionOptions& opts)
{
    if (opts.folds < 2) throw Error(ErrorKind::InvalidArgument, "need at least 2 folds");
    if (opts.folds > data.n()) throw Error(ErrorKind::InvalidArgument, "more folds than rows");

    const GlmFamily& family = mle.family;
    const WorkingData wd = build_working_data(mle, data);
    const double lmax = lambda_max(wd);

    LambdaSelection out;
    out.grid = lambda_grid(lmax, opts.grid_size, opts.min_ratio);
    const Index grid_n = out.grid.size();

    // BIC along the full-data path, warm-started from large to small lambda.
    out.bic.resize(grid_n);
    {
        const PathCache pc = path_cache(wd);
        Vec beta = Vec::Zero(wd.x_star.cols());
        for (Index k = 0; k < grid_n; ++k) {
            CdResult cd = lasso_cd_gram<double>(pc.gram, pc.xty, pc.n, out.grid(k), beta, opts.cd);
            beta = cd.beta;
            const OneStepFit fit = assemble_one_step(mle, data, out.grid(k), cd);
            out.bic(k) = cd.converged ? bic_score(family, data, fit.gamma1)
                                      : std::numeric_limits<double>::infinity();
        }
    }

    // K-fold CV with a fold-specific MLE and working data.
    std::vector<Index> order(static_cast<std::size_t>(data.n()));
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    out.cv_deviance = Vec::Zero(grid_n);
    int used_folds = 0;
    for (int f = 0; f < opts.folds; ++f) {
        std::vector<Index> train, test;
        for (std::size_t r = 0; r < order.size(); ++r) {
            (static_cast<int>(r % static_cast<std::size_t>(opts.folds)) == f ? test : train)
                .push_back(order[r]);
        }
        const Dataset train_data = data.subset(train);
        const Dataset test_data = data.subset(test);

        MleFit fold_mle;
        try {
            fold_mle = fit_mle(family, train_data);
        } catch (const Error&) {
            ++out.failed_folds;
            continue;
        }
        if (!fold_mle.converged) {
            ++out.failed_folds;
            continue;
        }
        ++used_folds;

        const WorkingData fold_wd = build_working_data(fold_mle, train_data);
        const PathCache pc = path_cache(fold_wd);
        Vec beta = Vec::Zero(fold_wd.x_star.cols());
        for (Index k = 0; k < grid_n; ++k) {
            CdResult cd = lasso_cd_gram<double>(pc.gram, pc.xty, pc.n, out.grid(k), beta, opts.cd);
            beta = cd.beta;
            double dev = std::numeric_limits<double>::infinity();
            if (cd.converged) {
                const OneStepFit fit = assemble_one_step(fold_mle, train_data, out.grid(k), cd);
                try {
                    dev = -2.0 * log_likelihood(family, fit.gamma1, test_data);
                } catch (const Error&) {
                    // overflowing held-out predictions score as +inf
                }
            }
            out.cv_deviance(k) += dev;
        }
    }

    out.lambda_bic = out.grid(argmin_first(out.bic));
    out.lambda_cv = used_folds > 0 ? out.grid(argmin_first(out.cv_deviance)) : out.lambda_bic;
    out.lambda = 0.5 * (out.lambda_bic + out.lambda_cv);
    return out;
}

LambdaSelection select_lambda(const GlmFamily& family, const Dataset& data,
                              std::uint64_t seed, const LambdaSelectionOptions& opts)
{
    return select_lambda(fit_mle(family, data), data, seed, opts);
}

} // namespace wsi
