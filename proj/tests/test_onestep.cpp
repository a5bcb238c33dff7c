#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_util.hpp"
#include "wsi/onestep.hpp"
#include "wsi/simulation.hpp"

#include <cmath>
#include <numbers>

using namespace wsi;

namespace {

// Dense D-dagger = D - D1 (1'D1)^{-1} 1'D, formed explicitly as an oracle.
Mat dense_d_dagger(const Vec& d)
{
    const Mat dm = d.asDiagonal();
    return dm - d * d.transpose() / d.sum();
}

WorkingData random_working_data(Index n, Index p, std::mt19937_64& rng)
{
    WorkingData wd;
    wd.x_star = test::gaussian_matrix(n, p, rng);
    wd.y_star = test::gaussian_matrix(n, 1, rng).col(0) + wd.x_star.col(0);
    wd.w = Vec::Ones(p);
    wd.col_norms = wd.x_star.colwise().squaredNorm().transpose();
    return wd;
}

// Proximal gradient (FISTA) on (1/2n)||y - Xb||^2 + lambda ||b||_1.
Vec fista(const WorkingData& wd, double lambda, int iterations)
{
    const auto n = static_cast<double>(wd.y_star.size());
    const Mat gram = wd.x_star.transpose() * wd.x_star / n;
    const Vec xty = wd.x_star.transpose() * wd.y_star / n;
    const double step = 1.0 / Eigen::SelfAdjointEigenSolver<Mat>(gram).eigenvalues().maxCoeff();
    Vec b = Vec::Zero(xty.size()), prev = b, v = b;
    double t = 1.0;
    for (int it = 0; it < iterations; ++it) {
        const Vec z = v - step * (gram * v - xty);
        prev = b;
        b = z.unaryExpr([&](double u) { return soft_threshold(u, step * lambda); });
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        v = b + ((t - 1.0) / t_next) * (b - prev);
        t = t_next;
    }
    return b;
}

struct Fixture
{
    Dataset data;
    MleFit mle;
};

Fixture logistic_fixture(Index n, Index p, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    Vec beta = Vec::Zero(p);
    beta(0) = 1.0;
    if (p > 1) beta(1) = -0.6;
    if (p > 2) beta(2) = 0.3;
    Dataset d = test::random_dataset(GlmFamily::logistic(), n, beta, 0.4, rng);
    MleFit m = fit_mle(GlmFamily::logistic(), d);
    return {std::move(d), std::move(m)};
}

// Gradient sum_i (y*_i - x*_i' b) x*_ij for every j.
Vec working_gradient(const WorkingData& wd, const Vec& b)
{
    return wd.x_star.transpose() * (wd.y_star - wd.x_star * b);
}

} // namespace

TEST_CASE("soft_threshold")
{
    CHECK(soft_threshold(2.0, 0.5) == 1.5);
    CHECK(soft_threshold(-0.3, 0.5) == 0.0);
    CHECK(soft_threshold(-2.0, 0.5) == -1.5);
    CHECK(soft_threshold(2.0f, 0.5f) == 1.5f);
}

TEST_CASE("working data reduces to column centering for a unit-weight gaussian fit")
{
    std::mt19937_64 rng(1);
    const Vec beta = (Vec(3) << 0.8, -0.5, 0.0).finished();
    const Dataset d = test::random_dataset(GlmFamily::gaussian(1.0), 30, beta, 0.2, rng);
    const Vec gamma = (Vec(4) << 0.2, 0.8, -0.5, 0.1).finished();
    const MleFit m = mle_at(GlmFamily::gaussian(1.0), gamma, d);
    const WorkingData wd = build_working_data(m, d);
    for (Index j = 0; j < 3; ++j) {
        const Vec centered = d.x_std().col(j).array() - d.x_std().col(j).mean();
        CHECK((wd.x_star.col(j) - centered * std::abs(gamma(j + 1))).lpNorm<Eigen::Infinity>() < 1e-12);
    }

    const MleFit zero = mle_at(GlmFamily::gaussian(1.0), Vec::Zero(4), d);
    CHECK(build_working_data(zero, d).y_star.isZero(0.0));
}

TEST_CASE("X*'X* equals W X' D-dagger X W")
{
    const Fixture f = logistic_fixture(50, 3, 3);
    const WorkingData wd = build_working_data(f.mle, f.data);
    const Mat w = f.mle.beta().cwiseAbs().asDiagonal();
    const Mat& x = f.data.x_std();
    const Mat oracle = w * x.transpose() * dense_d_dagger(f.mle.d0) * x * w;
    CHECK((wd.x_star.transpose() * wd.x_star - oracle).lpNorm<Eigen::Infinity>() < 1e-8);
    const Vec y_oracle = x.transpose() * dense_d_dagger(f.mle.d0) * x * f.mle.beta();
    CHECK((wd.x_star.transpose() * wd.y_star - w * y_oracle).lpNorm<Eigen::Infinity>() < 1e-8);
    for (Index j = 0; j < 3; ++j) CHECK(wd.col_norms(j) == doctest::Approx(wd.x_star.col(j).squaredNorm()));
}

TEST_CASE("zero MLE coefficients give zero columns and zero one-step estimates")
{
    const Fixture f = logistic_fixture(60, 4, 4);
    Vec gamma = f.mle.gamma0;
    gamma(2) = 0.0;
    const MleFit m = mle_at(GlmFamily::logistic(), gamma, f.data);
    const WorkingData wd = build_working_data(m, f.data);
    CHECK(wd.x_star.col(1).isZero(0.0));
    CHECK(wd.col_norms(1) == 0.0);
    for (double lambda : {1e-6, 1e-3, 1e-2}) CHECK(one_step_fit(m, f.data, lambda).beta()(1) == 0.0);
}

TEST_CASE("orthonormal design matches the closed-form lasso")
{
    std::mt19937_64 rng(6);
    const Index n = 40, p = 5;
    WorkingData wd;
    const Mat q = Eigen::HouseholderQR<Mat>(test::gaussian_matrix(n, p, rng)).householderQ() *
                  Mat::Identity(n, p);
    wd.x_star = q * std::sqrt(static_cast<double>(n));
    wd.y_star = test::gaussian_matrix(n, 1, rng).col(0) + 0.8 * wd.x_star.col(0) - 0.3 * wd.x_star.col(2);
    wd.w = Vec::Ones(p);
    wd.col_norms = wd.x_star.colwise().squaredNorm().transpose();
    REQUIRE((wd.x_star.transpose() * wd.x_star / n - Mat::Identity(p, p)).lpNorm<Eigen::Infinity>() < 1e-12);

    for (double lambda : {0.01, 0.1, 0.3}) {
        const CdResult cd = coordinate_descent(wd, lambda);
        REQUIRE(cd.converged);
        const Vec z = wd.x_star.transpose() * wd.y_star / static_cast<double>(n);
        for (Index j = 0; j < p; ++j) CHECK(std::abs(cd.beta(j) - soft_threshold(z(j), lambda)) < 1e-8);
    }
}

TEST_CASE("lambda at or above lambda_max gives the null solution")
{
    std::mt19937_64 rng(7);
    const WorkingData wd = random_working_data(30, 4, rng);
    const double lmax = lambda_max(wd);
    CHECK(coordinate_descent(wd, lmax).beta.isZero(0.0));
    CHECK(coordinate_descent(wd, 2.0 * lmax).beta.isZero(0.0));
    CHECK(!coordinate_descent(wd, 0.9 * lmax).beta.isZero(0.0));
    CHECK_THROWS_AS(coordinate_descent(wd, 0.0), Error);
}

TEST_CASE("coordinate descent agrees with a proximal-gradient reference")
{
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        const WorkingData wd = random_working_data(20, 3, rng);
        const double lambda = 0.05 + 0.05 * trial;
        const CdResult cd = coordinate_descent(wd, lambda);
        const Vec ref = fista(wd, lambda, 20000);
        CHECK(std::abs(working_objective(wd, cd.beta, lambda) - working_objective(wd, ref, lambda)) < 1e-8);
    }
}

TEST_CASE("objective is non-increasing across sweeps")
{
    std::mt19937_64 rng(9);
    const WorkingData wd = random_working_data(40, 6, rng);
    const Mat gram = wd.x_star.transpose() * wd.x_star;
    const Vec xty = wd.x_star.transpose() * wd.y_star;
    double prev = working_objective(wd, Vec::Zero(6), 0.02);
    for (int sweeps = 1; sweeps <= 30; ++sweeps) {
        CdOptions opts;
        opts.max_sweeps = sweeps;
        opts.tol = 0.0;
        const CdResult cd = lasso_cd_gram<double>(gram, xty, 40.0, 0.02, Vec::Zero(6), opts);
        const double obj = working_objective(wd, cd.beta, 0.02);
        CHECK(obj <= prev + 1e-14);
        prev = obj;
    }
}

TEST_CASE("one-step fits satisfy KKT, back-transform and intercept identities")
{
    for (std::uint64_t seed = 10; seed < 20; ++seed) {
        const Fixture f = logistic_fixture(120, 6, seed);
        const WorkingData wd = build_working_data(f.mle, f.data);
        const double n = 120.0;
        for (double ratio : {0.05, 0.2, 0.6}) {
            const double lambda = ratio * lambda_max(wd);
            const OneStepFit fit = one_step_fit(f.mle, f.data, lambda);
            REQUIRE(fit.converged);
            const Vec g = working_gradient(wd, fit.beta_star);
            for (Index j = 0; j < 6; ++j) {
                if (fit.is_active(j)) {
                    CHECK(std::abs(std::abs(g(j)) - n * lambda) <= 1e-6 * n * lambda);
                } else {
                    CHECK(std::abs(g(j)) <= n * lambda * (1.0 + 1e-6));
                }
                CHECK(fit.beta()(j) == fit.beta_star(j) * std::abs(f.mle.beta()(j)));
            }
            const Vec& d = f.mle.d0;
            const Vec shift = f.data.x_std() * (f.mle.beta() - fit.beta());
            const double alpha1 = f.mle.alpha() + d.dot(shift) / d.sum();
            CHECK(std::abs(fit.gamma1(0) - alpha1) < 1e-10);
            CHECK(fit.b_set.front() == 0);
            CHECK(fit.b_set.size() == fit.active_set.size() + 1);
        }
    }
}

TEST_CASE("selection condition holds exactly at the solution")
{
    std::mt19937_64 rng(21);
    int checked = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const Index p = 2 + trial % 4;
        const WorkingData wd = random_working_data(15 + trial % 10, p, rng);
        const double lambda = (0.1 + 0.8 * (trial % 9) / 9.0) * lambda_max(wd);
        const CdResult cd = coordinate_descent(wd, lambda);
        const double nl = static_cast<double>(wd.y_star.size()) * lambda;
        for (Index j = 0; j < p; ++j) {
            // Partial residual correlation excluding j.
            Vec b = cd.beta;
            b(j) = 0.0;
            const double c = wd.x_star.col(j).dot(wd.y_star - wd.x_star * b);
            if (std::abs(std::abs(c) - nl) < 1e-7 * nl) continue;  // numerical tie
            CHECK((cd.beta(j) != 0.0) == (std::abs(c) > nl));
            ++checked;
        }
    }
    CHECK(checked > 300);
}

TEST_CASE("tiny lambda reproduces the MLE")
{
    const Fixture f = logistic_fixture(100, 4, 30);
    const OneStepFit fit = one_step_fit(f.mle, f.data, 1e-12);
    CHECK((fit.gamma1 - f.mle.gamma0).lpNorm<Eigen::Infinity>() < 1e-5);
}

TEST_CASE("lambda above the null threshold gives the intercept-only identity")
{
    const Fixture f = logistic_fixture(100, 4, 31);
    const double lmax = lambda_max(build_working_data(f.mle, f.data));
    const OneStepFit fit = one_step_fit(f.mle, f.data, 1.5 * lmax);
    CHECK(fit.beta().isZero(0.0));
    CHECK(fit.active_set.empty());
    const Vec& d = f.mle.d0;
    const double expected = d.dot(f.data.x_std() * f.mle.beta()) / d.sum() + f.mle.alpha();
    CHECK(std::abs(fit.gamma1(0) - expected) < 1e-12);
}

TEST_CASE("bic_score")
{
    std::mt19937_64 rng(40);
    const Vec beta = (Vec(3) << 1.0, 0.5, 0.0).finished();
    const Dataset d = test::random_dataset(GlmFamily::gaussian(1.0), 20, beta, 0.1, rng);
    const GlmFamily f = GlmFamily::gaussian(1.0);
    const double n = 20.0;

    const Vec null = (Vec(4) << 0.3, 0.0, 0.0, 0.0).finished();
    CHECK(bic_score(f, d, null) == doctest::Approx(-2.0 * log_likelihood(f, null, d) / n));

    // Hand evaluation of the gaussian log-likelihood for a 3-covariate fit.
    const Vec full = (Vec(4) << 0.1, 0.9, 0.6, -0.2).finished();
    const Vec resid = d.y() - d.x_tilde() * full;
    const double ll = -0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * resid.squaredNorm();
    CHECK(bic_score(f, d, full) == doctest::Approx(-2.0 * ll / n + 3.0 * std::log(n) / n).epsilon(1e-12));

    // At equal likelihood the df-2 fit scores lower by log(n)/n.
    Vec two = full;
    two(3) = 0.0;
    const double diff = (bic_score(f, d, two) + 2.0 * log_likelihood(f, two, d) / n) -
                        (bic_score(f, d, full) + 2.0 * log_likelihood(f, full, d) / n);
    CHECK(diff == doctest::Approx(-std::log(n) / n));
}

TEST_CASE("lambda grid and selection plumbing")
{
    const Vec grid = lambda_grid(2.0, 100);
    CHECK(grid(0) == 2.0);
    CHECK(grid(99) == doctest::Approx(2e-4).epsilon(1e-12));
    for (Index k = 1; k < 100; ++k) CHECK(grid(k) < grid(k - 1));

    const Fixture f = logistic_fixture(120, 5, 50);
    LambdaSelectionOptions one;
    one.grid_size = 1;
    const LambdaSelection s1 = select_lambda(f.mle, f.data, 1, one);
    CHECK(s1.lambda == s1.grid(0));
    CHECK(s1.lambda_bic == s1.lambda_cv);

    const LambdaSelection s = select_lambda(f.mle, f.data, 1);
    CHECK(s.lambda == doctest::Approx(0.5 * (s.lambda_bic + s.lambda_cv)));
    CHECK(s.grid.size() == 100);
    const LambdaSelection again = select_lambda(f.mle, f.data, 1);
    CHECK(again.lambda == s.lambda);
}

TEST_CASE("selected lambda obeys the rate conditions on the simulation design")
{
    DgpConfig cfg;
    cfg.theta = 0.5;
    const double n = 350.0;
    double worst_root = 0.0, least_n = 1e300;
    for (std::uint64_t r = 0; r < 50; ++r) {
        const Dataset d = generate_dataset(cfg, r);
        const MleFit m = fit_mle(cfg.family, d);
        const LambdaSelection s = select_lambda(m, d, r + 1000);
        worst_root = std::max(worst_root, std::sqrt(n) * s.lambda);
        least_n = std::min(least_n, n * s.lambda);
    }
    CHECK(worst_root <= 1.0);
    CHECK(least_n > 1.0);
}
