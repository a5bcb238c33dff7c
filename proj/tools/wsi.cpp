// wsi: fit, identify, infer and simulate from the command line.
#include "wsi/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct Flags
{
    std::string family = "logistic";
    std::optional<double> sigma2;
    std::string lambda = "auto";
    std::optional<std::uint64_t> seed;
    std::string format = "json";
};

void add_common(CLI::App* cmd, wsi::RunConfig& cfg, Flags& flags)
{
    cmd->add_option("--family", flags.family, "gaussian, logistic or poisson")
        ->check(CLI::IsMember({"gaussian", "logistic", "poisson"}));
    cmd->add_option("--sigma2", flags.sigma2, "gaussian error variance (default: plug-in)");
    cmd->add_option("--lambda", flags.lambda, "'auto' or a positive value");
    cmd->add_option("--grid-size", cfg.lambda_options.grid_size, "lambda grid points");
    cmd->add_option("--folds", cfg.lambda_options.folds, "cross-validation folds");
    cmd->add_option("--delta1", cfg.thresholds.delta1, "strong-signal threshold");
    cmd->add_option("--tau", cfg.thresholds.tau, "false positive rate for delta2");
    cmd->add_option("--alpha", cfg.thresholds.alpha, "significance level");
    cmd->add_option("--seed", flags.seed, "master seed (generated and printed if omitted)");
    cmd->add_option("--threads", cfg.threads, "worker threads (default: WSI_THREADS or all cores)");
    cmd->add_option("--output,-o", cfg.output, "output path (default: stdout)");
    cmd->add_option("--format", flags.format, "json or tsv")->check(CLI::IsMember({"json", "tsv"}));
}

void add_data(CLI::App* cmd, wsi::RunConfig& cfg)
{
    cmd->add_option("--input,-i", cfg.input, "CSV file with a header row")->required();
    cmd->add_option("--response", cfg.response, "response column name");
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Weak-signal identification and two-step inference for GLMs"};
    app.require_subcommand(1);

    wsi::RunConfig cfg;
    Flags flags;

    auto* fit = app.add_subcommand("fit", "MLE and one-step adaptive lasso estimates");
    auto* identify = app.add_subcommand("identify", "classify covariates as strong, weak or noise");
    auto* infer = app.add_subcommand("infer", "two-step confidence intervals");
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo study on the AR(1) design");

    for (auto* cmd : {fit, identify, infer, simulate}) add_common(cmd, cfg, flags);
    for (auto* cmd : {fit, identify, infer}) add_data(cmd, cfg);
    for (auto* cmd : {identify, infer}) {
        cmd->add_option("--fit", cfg.fit_path, "reuse the estimates of a previous `fit` run");
    }
    for (auto* cmd : {infer, simulate}) {
        cmd->add_option("--bootstrap", cfg.bootstrap, "bootstrap replicates (0 disables)");
    }
    simulate->add_option("--reps", cfg.reps, "replications");
    simulate->add_option("--n", cfg.dgp.n, "sample size");
    simulate->add_option("--p", cfg.dgp.p, "number of covariates");
    simulate->add_option("--rho", cfg.dgp.rho, "AR(1) correlation");
    simulate->add_option("--theta", cfg.dgp.theta, "fourth coefficient");
    simulate->add_option("--q", cfg.dgp.q, "number of 0.3 coefficients after theta");
    simulate->add_option("--alpha0", cfg.dgp.alpha0, "intercept");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        const std::string name = app.get_subcommands().front()->get_name();
        cfg.command = wsi::parse_command(name);
        cfg.family = {wsi::parse_family(flags.family), flags.sigma2};
        if (flags.lambda != "auto") {
            try {
                std::size_t used = 0;
                cfg.lambda = std::stod(flags.lambda, &used);
                if (used != flags.lambda.size()) throw std::invalid_argument(flags.lambda);
            } catch (const std::logic_error&) {
                throw wsi::Error(wsi::ErrorKind::InvalidArgument,
                                 "--lambda must be 'auto' or a number, got '" + flags.lambda + "'");
            }
        }
        cfg.seed = flags.seed;
        cfg.format = wsi::parse_format(flags.format);
    } catch (const wsi::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return wsi::exit_code(e);
    }
    return wsi::run(cfg, std::cout, std::cerr);
}
