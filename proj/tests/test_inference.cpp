#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_util.hpp"
#include "wsi/inference.hpp"
#include "wsi/normal.hpp"
#include "wsi/parallel.hpp"

#include <cmath>

using namespace wsi;

namespace {

OneStepFit manual_onestep(double alpha, const Vec& beta)
{
    OneStepFit f;
    f.gamma1.resize(beta.size() + 1);
    f.gamma1(0) = alpha;
    f.gamma1.tail(beta.size()) = beta;
    f.b_set.push_back(0);
    for (Index j = 0; j < beta.size(); ++j) {
        if (beta(j) != 0.0) {
            f.active_set.push_back(j);
            f.b_set.push_back(j + 1);
        }
    }
    return f;
}

// Single column with mean 0 and sum of squares n, so Z/n = 1 at unit weights.
Dataset unit_scalar_design(Index n)
{
    Mat x(n, 1);
    for (Index i = 0; i < n; ++i) x(i, 0) = i % 2 == 0 ? 1.0 : -1.0;
    return Dataset::from_standardized(x, Vec::Zero(n), GlmFamily::gaussian(1.0));
}

SignalClassification all_labelled(Index p, SignalClass c)
{
    SignalClassification out;
    for (Index j = 0; j < p; ++j) {
        out.labels.push_back(c);
        (c == SignalClass::strong ? out.strong : c == SignalClass::weak ? out.weak : out.noise).push_back(j);
    }
    return out;
}

struct Fixture
{
    Dataset data;
    MleFit mle;
};

Fixture logistic_fixture(std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    const Vec beta = (Vec(5) << 1.0, -0.8, 0.4, 0.1, 0.0).finished();
    Dataset d = test::random_dataset(GlmFamily::logistic(), 300, beta, 0.3, rng);
    MleFit m = fit_mle(GlmFamily::logistic(), d);
    return {std::move(d), std::move(m)};
}

} // namespace

TEST_CASE("centered information equals the dense quadratic form")
{
    std::mt19937_64 rng(1);
    const Mat x = test::gaussian_matrix(25, 3, rng);
    const Vec d = test::gaussian_matrix(25, 1, rng).col(0).cwiseAbs().array() + 0.1;
    const Mat dagger = Mat(d.asDiagonal()) - d * d.transpose() / d.sum();
    CHECK((centered_information(d, x) - x.transpose() * dagger * x).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("scalar bias by hand")
{
    const Dataset d = unit_scalar_design(40);
    const MleFit m = mle_at(GlmFamily::gaussian(1.0), (Vec(2) << 0.0, 0.5).finished(), d);
    const OneStepFit f = manual_onestep(0.0, Vec::Constant(1, 0.5));
    const DebiasedQuantities dq = debiased_quantities(m, f, d, 0.1);
    REQUIRE(dq.size() == 1);
    CHECK(dq.z0(0, 0) / 40.0 == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(dq.sigma_lambda(0) == doctest::Approx(0.4).epsilon(1e-14));
    CHECK(dq.bias_hat(0) == doctest::Approx(-0.2 / 1.4).epsilon(1e-12));
    CHECK(dq.bias_hat(0) == doctest::Approx(-0.142857).epsilon(1e-6));

    // Exact closed form in lambda and its first-order homogeneity.
    for (double lambda : {1e-6, 1e-3, 0.05, 0.3}) {
        const double b = debiased_quantities(m, f, d, lambda).bias_hat(0);
        CHECK(b == doctest::Approx(-(lambda / 0.5) / (1.0 + lambda / 0.25)).epsilon(1e-12));
    }
    const double b1 = debiased_quantities(m, f, d, 1e-8).bias_hat(0);
    const double b2 = debiased_quantities(m, f, d, 2e-8).bias_hat(0);
    CHECK(b2 / b1 == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("zero lambda gives zero bias and the restricted MLE covariance")
{
    const Fixture fx = logistic_fixture(2);
    const OneStepFit f = one_step_fit(fx.mle, fx.data, 1e-12);
    REQUIRE(f.active_set.size() == 5);
    const DebiasedQuantities dq = debiased_quantities(fx.mle, f, fx.data, 0.0);
    CHECK(dq.bias_hat.isZero(0.0));
    const Mat inner = fx.mle.info.inverse().bottomRightCorner(5, 5);
    CHECK((dq.cov_hat - inner / 300.0).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("covariance is symmetric positive semidefinite")
{
    for (std::uint64_t seed = 3; seed < 8; ++seed) {
        const Fixture fx = logistic_fixture(seed);
        const OneStepFit f = one_step_fit(fx.mle, fx.data, 0.01);
        const DebiasedQuantities dq = debiased_quantities(fx.mle, f, fx.data, 0.01);
        CHECK((dq.cov_hat - dq.cov_hat.transpose()).lpNorm<Eigen::Infinity>() == 0.0);
        if (dq.size() > 0) {
            CHECK(Eigen::SelfAdjointEigenSolver<Mat>(dq.cov_hat).eigenvalues().minCoeff() >= -1e-15);
        }
    }
}

TEST_CASE("empty active set yields empty quantities")
{
    const Fixture fx = logistic_fixture(9);
    const OneStepFit f = one_step_fit(fx.mle, fx.data, 10.0);
    REQUIRE(f.active_set.empty());
    const DebiasedQuantities dq = debiased_quantities(fx.mle, f, fx.data, 10.0);
    CHECK(dq.size() == 0);
    CHECK(asymptotic_ci(f, dq, 0.05).intervals.size() == 5);
}

TEST_CASE("gaussian orthonormal design: covariance approaches the OLS variance as lambda shrinks")
{
    std::mt19937_64 rng(10);
    const Index n = 200;
    Mat x = test::gaussian_matrix(n, 3, rng);
    x.rowwise() -= x.colwise().mean();
    x = Mat(Eigen::HouseholderQR<Mat>(x).householderQ() * Mat::Identity(n, 3)) * std::sqrt(n - 1.0);
    const Vec y = x * Vec::Constant(3, 0.5) + test::gaussian_matrix(n, 1, rng).col(0);
    const Dataset d = Dataset::from_standardized(x, y, GlmFamily::gaussian(1.0));
    const MleFit m = fit_mle(GlmFamily::gaussian(1.0), d);
    const double ols_var = 1.0 / (n - 1.0);
    double prev_gap = 1e300;
    for (double lambda : {1e-2, 1e-3, 1e-4, 1e-6, 1e-9}) {
        const OneStepFit f = one_step_fit(m, d, lambda);
        REQUIRE(f.active_set.size() == 3);
        const DebiasedQuantities dq = debiased_quantities(m, f, d, lambda);
        const double gap = (dq.cov_hat.diagonal().array() - ols_var).abs().maxCoeff();
        CHECK(gap <= prev_gap);
        prev_gap = gap;
    }
    CHECK(prev_gap < 1e-8 * ols_var + 1e-12);

    // ci_mle reproduces the textbook interval with known variance.
    const double z = z_critical(0.05);
    for (Index j = 0; j < 3; ++j) {
        const Interval iv = ci_mle(m, j, 0.05);
        const double ols = x.col(j).dot(y) / (n - 1.0);
        CHECK(std::abs(iv.lower - (ols - z * std::sqrt(ols_var))) < 1e-8);
        CHECK(std::abs(iv.upper - (ols + z * std::sqrt(ols_var))) < 1e-8);
    }
}

TEST_CASE("interval reference values")
{
    OneStepFit f = manual_onestep(0.0, (Vec(2) << 0.7, 0.0).finished());
    DebiasedQuantities dq;
    dq.active_set = {0};
    dq.bias_hat = Vec::Zero(1);
    dq.cov_hat = Mat::Constant(1, 1, 0.01);
    const Interval iv = ci_strong(f, dq, 0, 0.05);
    CHECK(iv.upper - 0.7 == doctest::Approx(0.196).epsilon(1e-4));
    CHECK(0.7 - iv.lower == doctest::Approx(0.1959964).epsilon(1e-7));
    CHECK(iv.method == IntervalMethod::debiased_onestep);
    try {
        ci_strong(f, dq, 1, 0.05);
        FAIL("expected NotActive");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NotActive);
    }

    dq.bias_hat(0) = -0.05;
    const Interval shifted = ci_strong(f, dq, 0, 0.05);
    CHECK(0.5 * (shifted.lower + shifted.upper) == doctest::Approx(0.75));

    MleFit m;
    m.gamma0 = (Vec(2) << 0.1, 1.2).finished();
    m.cov = Mat::Identity(2, 2) * 0.04;
    const Interval mi = ci_mle(m, 0, 0.05);
    CHECK(0.5 * mi.width() == doctest::Approx(0.391993).epsilon(1e-6));
    CHECK(mi.method == IntervalMethod::mle);
}

TEST_CASE("two-step combinations")
{
    const Fixture fx = logistic_fixture(11);
    const double lambda = 1e-6;
    const OneStepFit f = one_step_fit(fx.mle, fx.data, lambda);
    REQUIRE(f.active_set.size() == 5);
    const DebiasedQuantities dq = debiased_quantities(fx.mle, f, fx.data, lambda);
    const double z = z_critical(0.05);

    const IntervalSet noise = two_step_ci(fx.mle, f, dq, all_labelled(5, SignalClass::noise), 0.05);
    const IntervalSet strong = two_step_ci(fx.mle, f, dq, all_labelled(5, SignalClass::strong), 0.05);
    const IntervalSet old_noise = old_two_step_ci(fx.mle, f, dq, all_labelled(5, SignalClass::noise), 0.05);
    for (Index j = 0; j < 5; ++j) {
        const auto k = static_cast<std::size_t>(j);
        const Interval mle = ci_mle(fx.mle, j, 0.05);
        CHECK(noise.intervals[k].lower == mle.lower);
        CHECK(noise.intervals[k].upper == mle.upper);
        const Interval cs = ci_strong(f, dq, j, 0.05);
        CHECK(strong.intervals[k].lower == cs.lower);
        CHECK(strong.intervals[k].method == IntervalMethod::debiased_onestep);
        CHECK(!old_noise.intervals[k].present());
        CHECK(old_noise.intervals[k].method == IntervalMethod::absent);
        for (const IntervalSet* s : {&noise, &strong}) {
            const Interval& iv = s->intervals[k];
            CHECK(iv.width() == doctest::Approx(2.0 * z * iv.std_error).epsilon(1e-12));
        }
    }

    // Mixed labels: the two constructions agree off the noise set.
    SignalClassification mixed;
    mixed.labels = {SignalClass::strong, SignalClass::weak, SignalClass::noise, SignalClass::weak,
                    SignalClass::noise};
    const IntervalSet a = two_step_ci(fx.mle, f, dq, mixed, 0.05);
    const IntervalSet b = old_two_step_ci(fx.mle, f, dq, mixed, 0.05);
    for (std::size_t k = 0; k < 5; ++k) {
        if (mixed.labels[k] == SignalClass::noise) {
            CHECK(a.intervals[k].method == IntervalMethod::mle);
            CHECK(!b.intervals[k].present());
        } else {
            CHECK(a.intervals[k].lower == b.intervals[k].lower);
            CHECK(a.intervals[k].upper == b.intervals[k].upper);
            CHECK(a.intervals[k].method == b.intervals[k].method);
        }
    }
    SignalClassification no_noise = mixed;
    no_noise.labels[2] = no_noise.labels[4] = SignalClass::weak;
    const IntervalSet c = two_step_ci(fx.mle, f, dq, no_noise, 0.05);
    const IntervalSet e = old_two_step_ci(fx.mle, f, dq, no_noise, 0.05);
    for (std::size_t k = 0; k < 5; ++k) CHECK(c.intervals[k].lower == e.intervals[k].lower);
}

TEST_CASE("strong label on an unselected covariate falls back to the MLE interval")
{
    const Fixture fx = logistic_fixture(12);
    const WorkingData wd = build_working_data(fx.mle, fx.data);
    const double lambda = 0.5 * lambda_max(wd);
    const OneStepFit f = one_step_fit(fx.mle, fx.data, lambda);
    REQUIRE(!f.is_active(4));
    const DebiasedQuantities dq = debiased_quantities(fx.mle, f, fx.data, lambda);
    const IntervalSet s = two_step_ci(fx.mle, f, dq, all_labelled(5, SignalClass::strong), 0.05);
    CHECK(s.intervals[4].method == IntervalMethod::mle);
    const IntervalSet asym = asymptotic_ci(f, dq, 0.05);
    CHECK(!asym.intervals[4].present());
}

TEST_CASE("bootstrap with two replicates interpolates the replicate estimates")
{
    const Fixture fx = logistic_fixture(13);
    BootstrapOptions opts;
    opts.replicates = 2;
    const std::uint64_t seed = 77;
    const IntervalSet s = bootstrap_ci(GlmFamily::logistic(), fx.data, 0.05, seed, opts);

    // Independent replay of the two resamples.
    std::vector<Vec> reps;
    for (std::uint64_t r = 0; r < 2; ++r) {
        std::mt19937_64 rng(derive_seed(seed, r));
        std::uniform_int_distribution<Index> pick(0, fx.data.n() - 1);
        std::vector<Index> rows(static_cast<std::size_t>(fx.data.n()));
        for (auto& i : rows) i = pick(rng);
        reps.push_back(fit_mle(GlmFamily::logistic(), fx.data.subset(rows)).beta());
    }
    for (Index j = 0; j < 5; ++j) {
        const double lo = std::min(reps[0](j), reps[1](j));
        const double hi = std::max(reps[0](j), reps[1](j));
        const Interval& iv = s.intervals[static_cast<std::size_t>(j)];
        CHECK(iv.lower == doctest::Approx(lo + 0.025 * (hi - lo)).epsilon(1e-12));
        CHECK(iv.upper == doctest::Approx(lo + 0.975 * (hi - lo)).epsilon(1e-12));
        CHECK(iv.method == IntervalMethod::bootstrap_percentile);
    }
    opts.replicates = 1;
    CHECK_THROWS_AS(bootstrap_ci(GlmFamily::logistic(), fx.data, 0.05, seed, opts), Error);
}

TEST_CASE("bootstrap on an exactly linear response has zero width")
{
    std::mt19937_64 rng(14);
    Mat x = test::gaussian_matrix(30, 2, rng);
    const Standardized s = standardize(x);
    const Vec y = (s.x * (Vec(2) << 0.4, -1.1).finished()).array() + 0.3;
    const Dataset d = Dataset::from_raw(x, y, GlmFamily::gaussian(1.0));
    BootstrapOptions opts;
    opts.replicates = 50;
    const IntervalSet set = bootstrap_ci(GlmFamily::gaussian(1.0), d, 0.05, 3, opts);
    CHECK(set.failed_replicates == 0);
    CHECK(std::abs(set.intervals[0].lower - 0.4) < 1e-9);
    CHECK(set.intervals[0].width() < 1e-9);
    CHECK(set.intervals[1].width() < 1e-9);
}

TEST_CASE("bootstrap determinism and failure accounting")
{
    const Fixture fx = logistic_fixture(15);
    BootstrapOptions one, many;
    one.replicates = many.replicates = 40;
    one.threads = 1;
    many.threads = 4;
    const IntervalSet a = bootstrap_ci(GlmFamily::logistic(), fx.data, 0.1, 5, one);
    const IntervalSet b = bootstrap_ci(GlmFamily::logistic(), fx.data, 0.1, 5, many);
    for (std::size_t k = 0; k < 5; ++k) {
        CHECK(a.intervals[k].lower == b.intervals[k].lower);
        CHECK(a.intervals[k].upper == b.intervals[k].upper);
    }

    // Nearly separated data: most resamples drop the two overlapping points.
    Mat x(20, 1);
    Vec y(20);
    for (Index i = 0; i < 20; ++i) {
        x(i, 0) = static_cast<double>(i);
        y(i) = i >= 10 ? 1.0 : 0.0;
    }
    y(9) = 1.0;
    y(10) = 0.0;
    const Dataset d = Dataset::from_raw(x, y, GlmFamily::logistic());
    REQUIRE(fit_mle(GlmFamily::logistic(), d).converged);
    BootstrapOptions opts;
    opts.replicates = 100;
    try {
        bootstrap_ci(GlmFamily::logistic(), d, 0.05, 1, opts);
        FAIL("expected TooManyFailures");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::TooManyFailures);
    }
}
