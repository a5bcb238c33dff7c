#include "wsi/cli.hpp"
#include "wsi/parallel.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

namespace wsi {

using nlohmann::json;

namespace {

struct Cell
{
    std::string text;
    std::size_t offset = 0;  ///< byte offset of the cell start in the file
};

[[noreturn]] void fail_at(ErrorKind kind, std::size_t line, std::size_t column,
                          std::size_t offset, const std::string& what)
{
    throw Error(kind, "line " + std::to_string(line) + ", column " + std::to_string(column) +
                          " (byte " + std::to_string(offset) + "): " + what);
}

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

std::vector<Cell> split_fields(std::string_view line, std::size_t base, std::size_t line_no)
{
    std::vector<Cell> cells;
    std::size_t i = 0;
    while (true) {
        Cell cell;
        cell.offset = base + i;
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        if (i < line.size() && line[i] == '"') {
            ++i;
            bool closed = false;
            while (i < line.size()) {
                if (line[i] == '"') {
                    if (i + 1 < line.size() && line[i + 1] == '"') {
                        cell.text.push_back('"');
                        i += 2;
                        continue;
                    }
                    ++i;
                    closed = true;
                    break;
                }
                cell.text.push_back(line[i++]);
            }
            if (!closed) {
                fail_at(ErrorKind::ParseError, line_no, cells.size() + 1, cell.offset,
                        "unterminated quoted field");
            }
            while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
            if (i < line.size() && line[i] != ',') {
                fail_at(ErrorKind::ParseError, line_no, cells.size() + 1, base + i,
                        "unexpected character after quoted field");
            }
        } else {
            const std::size_t end = std::min(line.find(',', i), line.size());
            cell.text = std::string(trim(line.substr(i, end - i)));
            i = end;
        }
        cells.push_back(std::move(cell));
        if (i >= line.size()) break;
        ++i;  // skip the comma
    }
    return cells;
}

double parse_cell(const Cell& cell, std::size_t line_no, std::size_t column)
{
    const std::string& s = cell.text;
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    const auto res = std::from_chars(first, last, v);
    if (s.empty() || res.ec != std::errc() || res.ptr != last || !std::isfinite(v)) {
        fail_at(ErrorKind::NonNumericCell, line_no, column, cell.offset,
                "'" + s + "' is not a finite number");
    }
    return v;
}

} // namespace

CsvTable parse_csv(std::string_view text, std::string_view response)
{
    std::size_t pos = 0;
    if (text.substr(0, 3) == "\xEF\xBB\xBF") pos = 3;

    std::vector<std::string> header;
    Index response_col = -1;
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 0;

    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        const std::size_t base = pos;
        pos = end + 1;
        ++line_no;
        if (trim(line).empty()) continue;

        const std::vector<Cell> cells = split_fields(line, base, line_no);
        if (header.empty()) {
            std::set<std::string> seen;
            for (std::size_t c = 0; c < cells.size(); ++c) {
                if (cells[c].text.empty()) {
                    fail_at(ErrorKind::ParseError, line_no, c + 1, cells[c].offset,
                            "empty column name");
                }
                if (!seen.insert(cells[c].text).second) {
                    fail_at(ErrorKind::ParseError, line_no, c + 1, cells[c].offset,
                            "duplicate column name '" + cells[c].text + "'");
                }
                if (cells[c].text == response) response_col = static_cast<Index>(c);
                header.push_back(cells[c].text);
            }
            if (response_col < 0) {
                throw Error(ErrorKind::MissingResponse,
                            "no column named '" + std::string(response) + "' in the header");
            }
            continue;
        }
        if (cells.size() != header.size()) {
            const std::size_t col = std::min(cells.size(), header.size()) + 1;
            const std::size_t off = cells.size() > header.size() ? cells[header.size()].offset
                                                                 : base + line.size();
            fail_at(ErrorKind::ParseError, line_no, col, off,
                    "expected " + std::to_string(header.size()) + " fields, found " +
                        std::to_string(cells.size()));
        }
        std::vector<double> row(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) row[c] = parse_cell(cells[c], line_no, c + 1);
        rows.push_back(std::move(row));
    }

    if (header.empty()) throw Error(ErrorKind::EmptyData, "input has no header row");
    if (rows.empty()) throw Error(ErrorKind::EmptyData, "input has a header but no data rows");

    CsvTable out;
    const auto n = static_cast<Index>(rows.size());
    const auto p = static_cast<Index>(header.size()) - 1;
    out.x_raw.resize(n, p);
    out.y.resize(n);
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (static_cast<Index>(c) != response_col) out.covariates.push_back(header[c]);
    }
    for (Index i = 0; i < n; ++i) {
        Index k = 0;
        for (Index c = 0; c <= p; ++c) {
            const double v = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
            if (c == response_col) {
                out.y(i) = v;
            } else {
                out.x_raw(i, k++) = v;
            }
        }
    }
    return out;
}

CsvTable load_csv(const std::string& path, std::string_view response)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::InvalidArgument, "cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str(), response);
}

Command parse_command(std::string_view name)
{
    if (name == "fit") return Command::fit;
    if (name == "identify") return Command::identify;
    if (name == "infer") return Command::infer;
    if (name == "simulate") return Command::simulate;
    throw Error(ErrorKind::InvalidArgument, "unknown command '" + std::string(name) + "'");
}

OutputFormat parse_format(std::string_view name)
{
    if (name == "json") return OutputFormat::json;
    if (name == "tsv") return OutputFormat::tsv;
    throw Error(ErrorKind::InvalidArgument, "unknown format '" + std::string(name) + "'");
}

void RunConfig::validate() const
{
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidArgument, msg); };
    Thresholds check = thresholds;
    check.delta2 = 0.0;
    check.validate();
    if (lambda && !(*lambda > 0.0 && std::isfinite(*lambda))) fail("lambda must be positive");
    if (bootstrap < 0 || bootstrap == 1) fail("bootstrap must be 0 or at least 2");
    if (lambda_options.grid_size < 1) fail("grid size must be at least 1");
    if (lambda_options.folds < 2) fail("folds must be at least 2");
    if (command == Command::simulate) {
        if (reps < 1) fail("reps must be at least 1");
        dgp.validate();
    } else if (input.empty()) {
        fail("--input is required");
    }
    if (!fit_path.empty() && command != Command::identify && command != Command::infer) {
        fail("--fit applies to identify and infer only");
    }
}

int exit_code(const Error& e) noexcept { return is_numerical(e.kind()) ? 2 : 1; }

namespace {

struct Analysis
{
    CsvTable table;
    std::optional<Dataset> data;
    MleFit mle;
    std::optional<LambdaSelection> selection;
    std::string lambda_source;
    std::optional<json> fit_lambda;  ///< lambda block of a re-ingested fit artifact
    double lambda = 0.0;
    OneStepFit onestep;
    std::uint64_t seed = 0;
};

std::vector<double> to_vector(const Vec& v) { return {v.data(), v.data() + v.size()}; }

json read_fit_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::InvalidArgument, "cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, path + ": " + e.what());
    }
    if (j.value("schema_version", 0) != 1 || j.value("kind", "") != "fit") {
        throw Error(ErrorKind::InvalidArgument, path + " is not a schema_version 1 fit artifact");
    }
    return j;
}

Analysis analyze(const RunConfig& cfg, std::uint64_t seed)
{
    Analysis a;
    a.seed = seed;
    a.table = load_csv(cfg.input, cfg.response);
    a.data.emplace(Dataset::from_raw(a.table.x_raw, a.table.y, cfg.family));
    const Dataset& data = *a.data;

    if (!cfg.fit_path.empty()) {
        const json j = read_fit_json(cfg.fit_path);
        if (j.at("family").get<std::string>() != to_string(cfg.family.kind)) {
            throw Error(ErrorKind::InvalidArgument, "fit artifact was produced for family " +
                                                        j.at("family").get<std::string>());
        }
        const auto beta = j.at("mle").at("beta").get<std::vector<double>>();
        if (static_cast<Index>(beta.size()) != data.p()) {
            throw Error(ErrorKind::DimensionMismatch, "fit artifact has a different covariate count");
        }
        Vec gamma(data.p() + 1);
        gamma(0) = j.at("mle").at("alpha").get<double>();
        for (Index k = 0; k < data.p(); ++k) gamma(k + 1) = beta[static_cast<std::size_t>(k)];
        GlmFamily family = cfg.family;
        if (j.contains("sigma2")) family.sigma2 = j.at("sigma2").get<double>();
        a.mle = mle_at(family, gamma, data, j.at("mle").at("converged").get<bool>());
        a.lambda = j.at("lambda").at("value").get<double>();
        a.fit_lambda = j.at("lambda");
    } else {
        a.mle = fit_mle(cfg.family, data);
        if (!a.mle.converged) {
            throw Error(ErrorKind::SingularInformation, "Newton iterations did not converge");
        }
    }

    if (cfg.lambda) {
        a.lambda = *cfg.lambda;
        a.lambda_source = "fixed";
        a.fit_lambda.reset();
    } else if (cfg.fit_path.empty()) {
        a.selection = select_lambda(a.mle, data, derive_seed(seed, 1), cfg.lambda_options);
        a.lambda = a.selection->lambda;
        a.lambda_source = "auto";
    }
    a.onestep = one_step_fit(a.mle, data, a.lambda, cfg.lambda_options.cd);
    return a;
}

json lambda_json(const Analysis& a)
{
    if (a.fit_lambda) return *a.fit_lambda;
    json j = {{"value", a.lambda}, {"source", a.lambda_source}};
    if (a.selection) {
        j["bic"] = a.selection->lambda_bic;
        j["cv"] = a.selection->lambda_cv;
        j["failed_folds"] = a.selection->failed_folds;
    }
    return j;
}

json header_json(const char* kind, const RunConfig& cfg, const Analysis& a)
{
    json j = {{"schema_version", 1},
              {"kind", kind},
              {"family", to_string(cfg.family.kind)},
              {"seed", a.seed},
              {"n", a.data->n()},
              {"p", a.data->p()},
              {"covariates", a.table.covariates},
              {"lambda", lambda_json(a)}};
    if (a.mle.family.sigma2) j["sigma2"] = *a.mle.family.sigma2;
    return j;
}

void emit_fit(const RunConfig& cfg, const Analysis& a, std::ostream& out)
{
    const Index p = a.data->p();
    Vec se(p);
    for (Index k = 0; k < p; ++k) se(k) = std::sqrt(a.mle.cov(k + 1, k + 1));

    if (cfg.format == OutputFormat::tsv) {
        out << "covariate\tbeta_mle\tstd_error\tbeta_onestep\n";
        out << "(intercept)\t" << format_number(a.mle.alpha()) << '\t'
            << format_number(std::sqrt(a.mle.cov(0, 0))) << '\t'
            << format_number(a.onestep.gamma1(0)) << '\n';
        for (Index k = 0; k < p; ++k) {
            out << a.table.covariates[static_cast<std::size_t>(k)] << '\t'
                << format_number(a.mle.beta()(k)) << '\t' << format_number(se(k)) << '\t'
                << format_number(a.onestep.beta()(k)) << '\n';
        }
        return;
    }
    json j = header_json("fit", cfg, a);
    j["mle"] = {{"alpha", a.mle.alpha()},
                {"beta", to_vector(a.mle.beta())},
                {"std_error", to_vector(se)},
                {"loglik", a.mle.loglik},
                {"converged", a.mle.converged},
                {"iterations", a.mle.iterations}};
    std::vector<std::string> active;
    for (Index k : a.onestep.active_set) active.push_back(a.table.covariates[static_cast<std::size_t>(k)]);
    j["onestep"] = {{"alpha", a.onestep.gamma1(0)},
                    {"beta", to_vector(a.onestep.beta())},
                    {"active", active},
                    {"converged", a.onestep.converged},
                    {"sweeps", a.onestep.sweeps}};
    out << j.dump(2) << '\n';
}

struct Identification
{
    SelectionProfile profile;
    Delta2Calibration calibration;
    Thresholds thresholds;
    SignalClassification classes;
};

Identification identify(const RunConfig& cfg, const Analysis& a)
{
    Identification id;
    id.profile = selection_profile(a.mle, *a.data, a.lambda);
    id.calibration = calibrate_delta2(id.profile, a.onestep, cfg.thresholds.tau);
    id.thresholds = cfg.thresholds;
    id.thresholds.delta2 = std::min(id.calibration.delta2, std::nextafter(id.thresholds.delta1, 0.0));
    id.classes = classify(id.profile, id.thresholds);
    return id;
}

json thresholds_json(const Identification& id)
{
    return {{"delta1", id.thresholds.delta1},
            {"delta2", id.thresholds.delta2},
            {"tau", id.thresholds.tau},
            {"alpha", id.thresholds.alpha},
            {"all_selected", id.calibration.all_selected}};
}

void emit_identify(const RunConfig& cfg, const Analysis& a, std::ostream& out)
{
    const Identification id = identify(cfg, a);
    const auto& names = a.table.covariates;
    if (cfg.format == OutputFormat::tsv) {
        out << "covariate\tp_hat\tclass\tselected\n";
        for (Index k = 0; k < a.data->p(); ++k) {
            out << names[static_cast<std::size_t>(k)] << '\t' << format_number(id.profile.p_hat(k))
                << '\t' << to_string(id.classes.labels[static_cast<std::size_t>(k)]) << '\t'
                << (a.onestep.is_active(k) ? 1 : 0) << '\n';
        }
        return;
    }
    json j = header_json("identify", cfg, a);
    j["thresholds"] = thresholds_json(id);
    json rows = json::array();
    json groups = {{"strong", json::array()}, {"weak", json::array()}, {"noise", json::array()}};
    for (Index k = 0; k < a.data->p(); ++k) {
        const SignalClass c = id.classes.labels[static_cast<std::size_t>(k)];
        rows.push_back({{"covariate", names[static_cast<std::size_t>(k)]},
                        {"index", k + 1},
                        {"p_hat", id.profile.p_hat(k)},
                        {"class", to_string(c)},
                        {"selected", a.onestep.is_active(k)}});
        groups[to_string(c)].push_back(names[static_cast<std::size_t>(k)]);
    }
    j["covariate_classes"] = rows;
    j["groups"] = groups;
    out << j.dump(2) << '\n';
}

json intervals_json(const IntervalSet& set, const std::vector<std::string>& names,
                    const std::vector<SignalClass>* labels)
{
    json rows = json::array();
    for (std::size_t k = 0; k < set.intervals.size(); ++k) {
        const Interval& iv = set.intervals[k];
        json r = {{"covariate", names[k]},
                  {"index", k + 1},
                  {"method", to_string(iv.method)},
                  {"lower", iv.lower},
                  {"upper", iv.upper},
                  {"std_error", iv.std_error}};
        if (labels) r["class"] = to_string((*labels)[k]);
        rows.push_back(r);
    }
    return rows;
}

void emit_infer(const RunConfig& cfg, const Analysis& a, std::ostream& out)
{
    const Identification id = identify(cfg, a);
    const DebiasedQuantities dq = debiased_quantities(a.mle, a.onestep, *a.data, a.lambda);
    const IntervalSet two_step = two_step_ci(a.mle, a.onestep, dq, id.classes, id.thresholds.alpha);
    std::optional<IntervalSet> boot;
    if (cfg.bootstrap > 0) {
        BootstrapOptions bo;
        bo.replicates = cfg.bootstrap;
        bo.threads = cfg.threads;
        boot = bootstrap_ci(a.mle.family, *a.data, id.thresholds.alpha, derive_seed(a.seed, 2), bo);
    }
    const auto& names = a.table.covariates;

    if (cfg.format == OutputFormat::tsv) {
        out << "covariate\tclass\tmethod\tlower\tupper\tstd_error\n";
        auto rows = [&](const IntervalSet& set, bool with_class) {
            for (std::size_t k = 0; k < set.intervals.size(); ++k) {
                const Interval& iv = set.intervals[k];
                out << names[k] << '\t' << (with_class ? to_string(id.classes.labels[k]) : "NA")
                    << '\t' << to_string(iv.method) << '\t' << format_number(iv.lower) << '\t'
                    << format_number(iv.upper) << '\t' << format_number(iv.std_error) << '\n';
            }
        };
        rows(two_step, true);
        if (boot) rows(*boot, false);
        return;
    }
    json j = header_json("infer", cfg, a);
    j["thresholds"] = thresholds_json(id);
    j["alpha"] = id.thresholds.alpha;
    j["intervals"] = intervals_json(two_step, names, &id.classes.labels);
    if (boot) {
        j["bootstrap"] = {{"replicates", cfg.bootstrap},
                          {"failed_replicates", boot->failed_replicates},
                          {"intervals", intervals_json(*boot, names, nullptr)}};
    }
    out << j.dump(2) << '\n';
}

void emit_simulate(const RunConfig& cfg, std::uint64_t seed, std::ostream& out)
{
    DgpConfig dgp = cfg.dgp;
    dgp.family = cfg.family;
    dgp.seed = seed;
    std::vector<CiMethod> methods = {CiMethod::proposed, CiMethod::old_two_step, CiMethod::asym,
                                     CiMethod::mle};
    if (cfg.bootstrap > 0) methods.push_back(CiMethod::bootstrap);
    SimulationOptions opts;
    opts.lambda = cfg.lambda_options;
    opts.bootstrap_replicates = cfg.bootstrap > 0 ? cfg.bootstrap : 1000;
    opts.threads = cfg.threads;
    const SimulationReport report = run_monte_carlo(dgp, cfg.reps, methods, cfg.thresholds, opts);
    if (cfg.format == OutputFormat::tsv) {
        out << to_tsv(report);
    } else {
        out << to_json(report).dump(2) << '\n';
    }
}

std::optional<std::uint64_t> seed_from_fit(const RunConfig& cfg)
{
    if (cfg.fit_path.empty()) return std::nullopt;
    const json j = read_fit_json(cfg.fit_path);
    if (!j.contains("seed")) return std::nullopt;
    return j.at("seed").get<std::uint64_t>();
}

void dispatch(const RunConfig& cfg, std::ostream& out, std::ostream& err)
{
    cfg.validate();
    std::optional<std::uint64_t> seed = cfg.seed;
    if (!seed) seed = seed_from_fit(cfg);
    if (!seed) {
        std::random_device rd;
        seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
        err << "seed: " << *seed << '\n';
    }

    std::ostringstream buffer;
    if (cfg.command == Command::simulate) {
        emit_simulate(cfg, *seed, buffer);
    } else {
        const Analysis a = analyze(cfg, *seed);
        switch (cfg.command) {
        case Command::fit: emit_fit(cfg, a, buffer); break;
        case Command::identify: emit_identify(cfg, a, buffer); break;
        case Command::infer: emit_infer(cfg, a, buffer); break;
        case Command::simulate: break;
        }
    }

    if (cfg.output.empty()) {
        out << buffer.str();
        return;
    }
    std::ofstream file(cfg.output, std::ios::binary);
    if (!file) throw Error(ErrorKind::InvalidArgument, "cannot write '" + cfg.output + "'");
    file << buffer.str();
}

} // namespace

int run(const RunConfig& cfg, std::ostream& out, std::ostream& err)
{
    try {
        dispatch(cfg, out, err);
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code(e);
    } catch (const json::exception& e) {
        err << "error: malformed fit artifact: " << e.what() << '\n';
        return 1;
    }
}

} // namespace wsi
