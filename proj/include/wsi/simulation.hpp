#pragma once

#include "wsi/inference.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

namespace wsi {

/// Data-generating process: x ~ N(0, R(rho)) with AR(1) R, standardized
/// columns, and y from `family` at mu = alpha0 + x' beta0 where
/// beta0 = (1, 1, 0.5, theta, weak_value x q, 0, ...).
struct DgpConfig
{
    Index n = 350;
    Index p = 25;
    double rho = 0.0;
    double alpha0 = 0.5;
    double theta = 0.0;
    Index q = 0;
    double weak_value = 0.3;
    GlmFamily family = GlmFamily::logistic();
    std::uint64_t seed = 1;

    void validate() const;
    Vec beta_true() const;
    Vec gamma_true() const;
};

Dataset generate_dataset(const DgpConfig& cfg, std::uint64_t rep_seed);

enum class CiMethod { proposed, old_two_step, asym, mle, bootstrap };

const char* to_string(CiMethod m) noexcept;
CiMethod parse_ci_method(std::string_view name);

struct SimulationOptions
{
    LambdaSelectionOptions lambda;
    int bootstrap_replicates = 1000;
    int threads = 0;
};

struct ReplicationRecord
{
    bool ok = false;
    std::string failure;     ///< ErrorKind name or "NotConverged"
    double lambda = 0.0;
    double lambda_bic = 0.0;
    double lambda_cv = 0.0;
    double delta2 = 0.0;
    bool all_selected = false;
    Vec p_hat;
    std::vector<char> selected;
    std::vector<SignalClass> labels;
    std::map<CiMethod, IntervalSet> intervals;
};

struct CoverageCell
{
    int intervals = 0;  ///< replications producing an interval
    int covered = 0;
    double width_sum = 0.0;

    std::optional<double> coverage() const;
    std::optional<double> mean_width() const;
};

struct SimulationReport
{
    DgpConfig config;
    Thresholds thresholds;
    std::vector<CiMethod> methods;
    int reps = 0;
    int successful = 0;
    int failed = 0;
    std::map<std::string, int> failure_kinds;

    std::vector<int> selected_count;                 ///< per coordinate
    std::vector<std::array<int, 3>> class_count;     ///< strong, weak, noise
    Vec p_hat_median;
    std::map<CiMethod, std::vector<CoverageCell>> coverage;
    Vec lambdas;  ///< per successful replication, in replication order
    double delta2_mean = 0.0;
    int all_selected = 0;

    std::vector<ReplicationRecord> replications;

    double class_frequency(Index j, SignalClass c) const;
};

/// Runs `reps` independent replications. Replication r is seeded with
/// derive_seed(cfg.seed, r), so the report does not depend on the thread
/// count. Failed replications are counted and excluded from the metrics.
SimulationReport run_monte_carlo(const DgpConfig& cfg, int reps,
                                 const std::vector<CiMethod>& methods,
                                 const Thresholds& thresholds,
                                 const SimulationOptions& opts = {});

/// Fraction of successful replications with beta1_j != 0.
double empirical_selection_prob(const SimulationReport& report, Index j);

struct CoverageRow
{
    CiMethod method;
    Index coordinate = 0;  ///< 0-based
    int intervals = 0;
    std::optional<double> coverage;      ///< fraction, absent if no intervals
    std::optional<double> width_x100;    ///< mean width times 100
};

std::vector<CoverageRow> coverage_summary(const SimulationReport& report);

nlohmann::json to_json(const SimulationReport& report);
std::string to_tsv(const SimulationReport& report);

/// Locale-independent shortest form with 6 significant digits.
std::string format_number(double v);

} // namespace wsi
