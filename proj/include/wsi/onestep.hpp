#pragma once

#include "wsi/glm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace wsi {

/// Working regression for the one-step adaptive lasso: the quadratic
/// approximation at the MLE, with the intercept profiled out and columns
/// rescaled by |beta0_j|.
struct WorkingData
{
    Mat x_star;     ///< D*(0) X W
    Vec y_star;     ///< D*(0) X beta0
    Vec w;          ///< |beta0_j|
    Vec col_norms;  ///< sum_i x*_ij^2
};

/// Applies D*(0) = D^{1/2} - D^{1/2} 1 (1'D1)^{-1} 1'D to each column of `v`
/// without forming the n x n matrix.
Mat apply_d_star(const Vec& d, const Mat& v);

WorkingData build_working_data(const MleFit& mle, const Dataset& data);

/// s(z, r) = sgn(z) (|z| - r)_+
template <class T>
constexpr T soft_threshold(T z, T r) noexcept
{
    if (z > r) return z - r;
    if (z < -r) return z + r;
    return T(0);
}

struct CdOptions
{
    double tol = 1e-9;      ///< max |coordinate change| in a sweep
    int max_sweeps = 10000;
};

template <class T>
struct CdResultT
{
    VecT<T> beta;
    int sweeps = 0;
    bool converged = false;
};
using CdResult = CdResultT<double>;

/// Cyclic coordinate descent for (1/2n)||y - X b||^2 + lambda ||b||_1 in Gram
/// form: `gram` = X'X, `xty` = X'y. Coordinates with a zero diagonal stay at
/// zero. `beta` is the warm start and is overwritten with the last iterate.
template <class T>
CdResultT<T> lasso_cd_gram(const MatT<T>& gram, const VecT<T>& xty, T n, T lambda,
                           VecT<T> beta, const CdOptions& opts = {})
{
    const Index p = xty.size();
    VecT<T> grad = xty - gram * beta;  // X'(y - X b)
    CdResultT<T> out;
    for (out.sweeps = 1; out.sweeps <= opts.max_sweeps; ++out.sweeps) {
        T max_change = 0;
        for (Index j = 0; j < p; ++j) {
            const T gjj = gram(j, j);
            if (!(gjj > T(0))) continue;
            const T old = beta(j);
            const T z = (grad(j) + gjj * old) / gjj;
            const T updated = soft_threshold(z, n * lambda / gjj);
            const T delta = updated - old;
            if (delta != T(0)) {
                beta(j) = updated;
                grad.noalias() -= gram.col(j) * delta;
                max_change = std::max(max_change, std::abs(delta));
            }
        }
        if (max_change < T(opts.tol)) {
            out.converged = true;
            break;
        }
    }
    if (out.sweeps > opts.max_sweeps) out.sweeps = opts.max_sweeps;
    out.beta = std::move(beta);
    return out;
}

/// Objective (1/2n)||y* - X* b||^2 + lambda ||b||_1 on the working data.
double working_objective(const WorkingData& wd, const Vec& beta_star, double lambda);

/// Minimizes the working-data lasso by coordinate descent. A non-converged
/// result is returned with `converged = false` and the last iterate.
CdResult coordinate_descent(const WorkingData& wd, double lambda,
                            const CdOptions& opts = {});
CdResult coordinate_descent(const WorkingData& wd, double lambda, const Vec& warm_start,
                            const CdOptions& opts = {});

/// Smallest lambda at which the working-data lasso solution is zero:
/// max_j |sum_i y*_i x*_ij| / n.
double lambda_max(const WorkingData& wd);

struct OneStepFit
{
    Vec gamma1;          ///< (alpha1, beta1)
    double lambda = 0.0;
    Vec beta_star;       ///< working-data lasso solution
    IndexList active_set;  ///< 0-based covariate indices with beta1_j != 0
    IndexList b_set;       ///< 0 plus (j + 1) for j in active_set (gamma indices)
    bool converged = true;
    int sweeps = 0;

    Index p() const noexcept { return gamma1.size() - 1; }
    auto beta() const { return gamma1.tail(gamma1.size() - 1); }
    bool is_active(Index j) const noexcept { return beta()(j) != 0.0; }
};

/// Back-transforms a working-data solution: beta1 = beta* o |beta0| and the
/// intercept from the profiled-out score equation.
OneStepFit assemble_one_step(const MleFit& mle, const Dataset& data, double lambda,
                             const CdResult& cd);

OneStepFit one_step_fit(const MleFit& mle, const Dataset& data, double lambda,
                        const CdOptions& opts = {});

/// -2 l(gamma) / n + df log(n) / n with df = #{j : beta_j != 0}.
double bic_score(const GlmFamily& family, const Dataset& data, const Vec& gamma);

struct LambdaSelectionOptions
{
    int grid_size = 100;
    int folds = 5;
    double min_ratio = 1e-4;
    CdOptions cd;
};

struct LambdaSelection
{
    double lambda = 0.0;
    double lambda_bic = 0.0;
    double lambda_cv = 0.0;
    Vec grid;        ///< decreasing
    Vec bic;         ///< per grid point
    Vec cv_deviance; ///< summed held-out -2 log-likelihood per grid point
    int failed_folds = 0;
};

/// Log-spaced grid of `size` values from `lmax` down to `lmax * min_ratio`.
Vec lambda_grid(double lmax, int size, double min_ratio = 1e-4);

/// lambda = (lambda_BIC + lambda_CV) / 2 over a log-spaced grid.
LambdaSelection select_lambda(const GlmFamily& family, const Dataset& data,
                              std::uint64_t seed, const LambdaSelectionOptions& opts = {});

/// As above but reuses an already computed full-data MLE.
LambdaSelection select_lambda(const MleFit& mle, const Dataset& data, std::uint64_t seed,
                              const LambdaSelectionOptions& opts = {});

} // namespace wsi
