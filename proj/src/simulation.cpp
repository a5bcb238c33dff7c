#include "wsi/simulation.hpp"
#include "wsi/parallel.hpp"

#include <charconv>
#include <cmath>
#include <random>
#include <sstream>

namespace wsi {

void DgpConfig::validate() const
{
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidArgument, msg); };
    if (p < 4 + q) fail("p must be at least 4 + q");
    if (q < 0) fail("q must be nonnegative");
    if (n <= p + 1) fail("n must exceed p + 1");
    if (!(rho >= 0.0 && rho < 1.0)) fail("rho must lie in [0,1)");
    if (family.kind == FamilyKind::gaussian && family.sigma2 && !(*family.sigma2 > 0.0)) {
        fail("gaussian sigma2 must be positive");
    }
}

Vec DgpConfig::beta_true() const
{
    Vec beta = Vec::Zero(p);
    beta(0) = 1.0;
    beta(1) = 1.0;
    beta(2) = 0.5;
    beta(3) = theta;
    for (Index k = 0; k < q; ++k) beta(4 + k) = weak_value;
    return beta;
}

Vec DgpConfig::gamma_true() const
{
    Vec gamma(p + 1);
    gamma(0) = alpha0;
    gamma.tail(p) = beta_true();
    return gamma;
}

Dataset generate_dataset(const DgpConfig& cfg, std::uint64_t rep_seed)
{
    cfg.validate();
    std::mt19937_64 rng(rep_seed);
    const CovariateModel cm = CovariateModel::gaussian_ar1(cfg.rho, cfg.p);
    Mat x_raw = cm.sample(cfg.n, rng);

    // The response follows the model on the standardized covariates, so
    // beta_true is the estimand of the fitted coefficients.
    const Standardized s = standardize(x_raw);
    const Vec mu = (s.x * cfg.beta_true()).array() + cfg.alpha0;

    Vec y(cfg.n);
    switch (cfg.family.kind) {
    case FamilyKind::gaussian: {
        const double sd = std::sqrt(cfg.family.sigma2.value_or(1.0));
        std::normal_distribution<double> noise(0.0, sd);
        for (Index i = 0; i < cfg.n; ++i) y(i) = mu(i) + noise(rng);
        break;
    }
    case FamilyKind::logistic: {
        const Vec prob = mean_from_linear_predictor(cfg.family, mu);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (Index i = 0; i < cfg.n; ++i) y(i) = unif(rng) < prob(i) ? 1.0 : 0.0;
        break;
    }
    case FamilyKind::poisson: {
        const Vec rate = mean_from_linear_predictor(cfg.family, mu);
        for (Index i = 0; i < cfg.n; ++i) {
            std::poisson_distribution<long long> draw(rate(i));
            y(i) = static_cast<double>(draw(rng));
        }
        break;
    }
    }
    return Dataset::from_raw(std::move(x_raw), std::move(y), cfg.family);
}

const char* to_string(CiMethod m) noexcept
{
    switch (m) {
    case CiMethod::proposed: return "Proposed";
    case CiMethod::old_two_step: return "OldTwostep";
    case CiMethod::asym: return "Asym";
    case CiMethod::mle: return "MLE";
    case CiMethod::bootstrap: return "SdBS";
    }
    return "unknown";
}

CiMethod parse_ci_method(std::string_view name)
{
    for (CiMethod m : {CiMethod::proposed, CiMethod::old_two_step, CiMethod::asym, CiMethod::mle,
                       CiMethod::bootstrap}) {
        if (name == to_string(m)) return m;
    }
    if (name == "proposed") return CiMethod::proposed;
    if (name == "old_two_step" || name == "oldtwostep") return CiMethod::old_two_step;
    if (name == "asym") return CiMethod::asym;
    if (name == "mle") return CiMethod::mle;
    if (name == "bootstrap" || name == "sdbs") return CiMethod::bootstrap;
    throw Error(ErrorKind::InvalidArgument, "unknown CI method '" + std::string(name) + "'");
}

std::optional<double> CoverageCell::coverage() const
{
    if (intervals == 0) return std::nullopt;
    return static_cast<double>(covered) / intervals;
}

std::optional<double> CoverageCell::mean_width() const
{
    if (intervals == 0) return std::nullopt;
    return width_sum / intervals;
}

double SimulationReport::class_frequency(Index j, SignalClass c) const
{
    if (successful == 0) return 0.0;
    const auto& counts = class_count.at(static_cast<std::size_t>(j));
    return static_cast<double>(counts[static_cast<std::size_t>(c)]) / successful;
}

namespace {

ReplicationRecord run_replication(const DgpConfig& cfg, std::uint64_t rep_seed,
                                  const std::vector<CiMethod>& methods,
                                  const Thresholds& thresholds, const SimulationOptions& opts)
{
    ReplicationRecord rec;
    try {
        const Dataset data = generate_dataset(cfg, derive_seed(rep_seed, 0));
        const MleFit mle = fit_mle(cfg.family, data);
        if (!mle.converged) {
            rec.failure = "NotConverged";
            return rec;
        }
        const LambdaSelection sel = select_lambda(mle, data, derive_seed(rep_seed, 1), opts.lambda);
        const OneStepFit onestep = one_step_fit(mle, data, sel.lambda, opts.lambda.cd);
        const SelectionProfile profile = selection_profile(mle, data, sel.lambda);
        const Delta2Calibration cal = calibrate_delta2(profile, onestep, thresholds.tau);

        Thresholds th = thresholds;
        th.delta2 = std::min(cal.delta2, std::nextafter(th.delta1, 0.0));
        const SignalClassification cls = classify(profile, th);

        rec.lambda = sel.lambda;
        rec.lambda_bic = sel.lambda_bic;
        rec.lambda_cv = sel.lambda_cv;
        rec.delta2 = th.delta2;
        rec.all_selected = cal.all_selected;
        rec.p_hat = profile.p_hat;
        rec.labels = cls.labels;
        for (Index j = 0; j < data.p(); ++j) rec.selected.push_back(onestep.is_active(j) ? 1 : 0);

        std::optional<DebiasedQuantities> dq;
        auto debiased = [&]() -> const DebiasedQuantities& {
            if (!dq) dq = debiased_quantities(mle, onestep, data, sel.lambda);
            return *dq;
        };
        for (CiMethod m : methods) {
            switch (m) {
            case CiMethod::proposed:
                rec.intervals[m] = two_step_ci(mle, onestep, debiased(), cls, th.alpha);
                break;
            case CiMethod::old_two_step:
                rec.intervals[m] = old_two_step_ci(mle, onestep, debiased(), cls, th.alpha);
                break;
            case CiMethod::asym:
                rec.intervals[m] = asymptotic_ci(onestep, debiased(), th.alpha);
                break;
            case CiMethod::mle:
                rec.intervals[m] = mle_ci(mle, th.alpha);
                break;
            case CiMethod::bootstrap: {
                BootstrapOptions bo;
                bo.replicates = opts.bootstrap_replicates;
                bo.threads = 1;
                rec.intervals[m] = bootstrap_ci(cfg.family, data, th.alpha, derive_seed(rep_seed, 2), bo);
                break;
            }
            }
        }
        rec.ok = true;
    } catch (const Error& e) {
        rec = ReplicationRecord{};
        rec.failure = to_string(e.kind());
    }
    return rec;
}

} // namespace

SimulationReport run_monte_carlo(const DgpConfig& cfg, int reps,
                                 const std::vector<CiMethod>& methods,
                                 const Thresholds& thresholds, const SimulationOptions& opts)
{
    if (reps < 1) throw Error(ErrorKind::InvalidArgument, "reps must be at least 1");
    cfg.validate();
    Thresholds check = thresholds;
    check.delta2 = 0.0;
    check.validate();

    SimulationReport report;
    report.config = cfg;
    report.thresholds = check;
    report.methods = methods;
    report.reps = reps;
    report.replications.resize(static_cast<std::size_t>(reps));

    parallel_for(report.replications.size(), resolve_threads(opts.threads), [&](std::size_t r) {
        report.replications[r] =
            run_replication(cfg, derive_seed(cfg.seed, r), methods, check, opts);
    });

    // Ordered merge.
    const Index p = cfg.p;
    const Vec beta = cfg.beta_true();
    report.selected_count.assign(static_cast<std::size_t>(p), 0);
    report.class_count.assign(static_cast<std::size_t>(p), {0, 0, 0});
    for (CiMethod m : methods) report.coverage[m].assign(static_cast<std::size_t>(p), {});
    std::vector<std::vector<double>> p_hats(static_cast<std::size_t>(p));
    std::vector<double> lambdas;
    double delta2_sum = 0.0;

    for (const ReplicationRecord& rec : report.replications) {
        if (!rec.ok) {
            ++report.failed;
            ++report.failure_kinds[rec.failure];
            continue;
        }
        ++report.successful;
        lambdas.push_back(rec.lambda);
        delta2_sum += rec.delta2;
        report.all_selected += rec.all_selected ? 1 : 0;
        for (Index j = 0; j < p; ++j) {
            const auto uj = static_cast<std::size_t>(j);
            report.selected_count[uj] += rec.selected[uj];
            ++report.class_count[uj][static_cast<std::size_t>(rec.labels[uj])];
            p_hats[uj].push_back(rec.p_hat(j));
        }
        for (const auto& [m, set] : rec.intervals) {
            auto& cells = report.coverage[m];
            for (Index j = 0; j < p; ++j) {
                const Interval& iv = set.intervals[static_cast<std::size_t>(j)];
                if (!iv.present()) continue;
                CoverageCell& cell = cells[static_cast<std::size_t>(j)];
                ++cell.intervals;
                cell.covered += iv.covers(beta(j)) ? 1 : 0;
                cell.width_sum += iv.width();
            }
        }
    }

    report.p_hat_median = Vec::Zero(p);
    if (report.successful > 0) {
        for (Index j = 0; j < p; ++j) {
            report.p_hat_median(j) = quantile_type7(p_hats[static_cast<std::size_t>(j)], 0.5);
        }
        report.delta2_mean = delta2_sum / report.successful;
    }
    report.lambdas = Eigen::Map<const Vec>(lambdas.data(), static_cast<Index>(lambdas.size()));
    return report;
}

double empirical_selection_prob(const SimulationReport& report, Index j)
{
    if (j < 0 || j >= report.config.p) {
        throw Error(ErrorKind::InvalidArgument, "coordinate out of range");
    }
    if (report.successful == 0) return 0.0;
    return static_cast<double>(report.selected_count[static_cast<std::size_t>(j)]) /
           report.successful;
}

std::vector<CoverageRow> coverage_summary(const SimulationReport& report)
{
    std::vector<CoverageRow> rows;
    for (CiMethod m : report.methods) {
        const auto& cells = report.coverage.at(m);
        for (std::size_t j = 0; j < cells.size(); ++j) {
            CoverageRow row;
            row.method = m;
            row.coordinate = static_cast<Index>(j);
            row.intervals = cells[j].intervals;
            row.coverage = cells[j].coverage();
            if (auto w = cells[j].mean_width()) row.width_x100 = 100.0 * *w;
            rows.push_back(row);
        }
    }
    return rows;
}

std::string format_number(double v)
{
    if (std::isnan(v)) return "NA";
    if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 6);
    return std::string(buf, res.ptr);
}

nlohmann::json to_json(const SimulationReport& report)
{
    using nlohmann::json;
    const DgpConfig& cfg = report.config;
    json config = {{"n", cfg.n},         {"p", cfg.p},
                   {"rho", cfg.rho},     {"alpha0", cfg.alpha0},
                   {"theta", cfg.theta}, {"q", cfg.q},
                   {"weak_value", cfg.weak_value},
                   {"family", to_string(cfg.family.kind)},
                   {"seed", cfg.seed}};
    if (cfg.family.sigma2) config["sigma2"] = *cfg.family.sigma2;

    json methods = json::array();
    for (CiMethod m : report.methods) methods.push_back(to_string(m));

    const Vec beta = cfg.beta_true();
    json coords = json::array();
    for (Index j = 0; j < cfg.p; ++j) {
        coords.push_back({{"coordinate", j + 1},
                          {"beta_true", beta(j)},
                          {"selection_frequency", empirical_selection_prob(report, j)},
                          {"strong", report.class_frequency(j, SignalClass::strong)},
                          {"weak", report.class_frequency(j, SignalClass::weak)},
                          {"noise", report.class_frequency(j, SignalClass::noise)},
                          {"p_hat_median", report.p_hat_median(j)}});
    }

    json coverage = json::array();
    for (const CoverageRow& row : coverage_summary(report)) {
        coverage.push_back({{"method", to_string(row.method)},
                            {"coordinate", row.coordinate + 1},
                            {"intervals", row.intervals},
                            {"coverage", row.coverage ? json(*row.coverage) : json(nullptr)},
                            {"width_x100", row.width_x100 ? json(*row.width_x100) : json(nullptr)}});
    }

    json lambdas = json::array();
    for (Index k = 0; k < report.lambdas.size(); ++k) lambdas.push_back(report.lambdas(k));

    return {{"schema_version", 1},
            {"kind", "simulation_report"},
            {"config", config},
            {"thresholds",
             {{"delta1", report.thresholds.delta1},
              {"tau", report.thresholds.tau},
              {"alpha", report.thresholds.alpha}}},
            {"methods", methods},
            {"reps", report.reps},
            {"successful", report.successful},
            {"failed", report.failed},
            {"failure_kinds", report.failure_kinds},
            {"delta2_mean", report.delta2_mean},
            {"all_selected", report.all_selected},
            {"lambdas", lambdas},
            {"coordinates", coords},
            {"coverage", coverage}};
}

std::string to_tsv(const SimulationReport& report)
{
    std::ostringstream out;
    out << "method\tcoordinate\tbeta_true\tintervals\tcoverage\twidth_x100"
           "\tselection_frequency\tstrong\tweak\tnoise\n";
    const Vec beta = report.config.beta_true();
    auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string("NA"); };
    for (const CoverageRow& row : coverage_summary(report)) {
        const Index j = row.coordinate;
        out << to_string(row.method) << '\t' << (j + 1) << '\t' << format_number(beta(j)) << '\t'
            << row.intervals << '\t' << opt(row.coverage) << '\t' << opt(row.width_x100) << '\t'
            << format_number(empirical_selection_prob(report, j)) << '\t'
            << format_number(report.class_frequency(j, SignalClass::strong)) << '\t'
            << format_number(report.class_frequency(j, SignalClass::weak)) << '\t'
            << format_number(report.class_frequency(j, SignalClass::noise)) << '\n';
    }
    return out.str();
}

} // namespace wsi
