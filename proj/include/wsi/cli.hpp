#pragma once

#include "wsi/simulation.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace wsi {

struct CsvTable
{
    std::vector<std::string> covariates;  ///< header order, response removed
    Mat x_raw;
    Vec y;
};

/// Parses CSV text with a header row. The column named `response` is the
/// response and every other column is a covariate. Errors report the 1-based
/// line and column and the byte offset of the offending cell.
CsvTable parse_csv(std::string_view text, std::string_view response = "y");
CsvTable load_csv(const std::string& path, std::string_view response = "y");

enum class Command { fit, identify, infer, simulate };
enum class OutputFormat { json, tsv };

Command parse_command(std::string_view name);
OutputFormat parse_format(std::string_view name);

struct RunConfig
{
    Command command = Command::fit;
    GlmFamily family = GlmFamily::logistic();
    std::string input;
    std::string response = "y";
    std::string fit_path;           ///< previous `fit` output to reuse (identify, infer)
    DgpConfig dgp;                  ///< simulate only; family and seed are overridden
    Thresholds thresholds;
    std::optional<double> lambda;   ///< unset means select_lambda
    LambdaSelectionOptions lambda_options;
    int bootstrap = 0;              ///< infer/simulate: 0 disables the bootstrap
    int reps = 200;
    std::optional<std::uint64_t> seed;
    std::string output;             ///< empty means the `out` stream
    OutputFormat format = OutputFormat::json;
    int threads = 0;

    void validate() const;
};

/// 1 for data errors, 2 for numerical failures.
int exit_code(const Error& e) noexcept;

/// Executes one command, writing the artifact to cfg.output (or `out`) and
/// diagnostics to `err`. Returns the process exit code.
int run(const RunConfig& cfg, std::ostream& out, std::ostream& err);

} // namespace wsi
