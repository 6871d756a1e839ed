#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sdid/run.hpp"

namespace sdid {

/// Parses `sdid FILE DEPVAR GROUPVAR TIMEVAR TREATMENT [options]`. Returns
/// nullopt with `exit_code` set when parsing ends the program (help or error).
inline std::optional<RunConfig> parse_command_line(int argc, const char* const* argv, std::ostream& out,
                                                   std::ostream& err, int& exit_code) {
    RunConfig config;
    std::string method = "sdid", vce = "bootstrap", covariate_type = "optimized";
    bool unstandardized = false;

    CLI::App app{"Synthetic difference-in-differences estimation from a long-format CSV panel.", "sdid"};
    app.add_option("file", config.input, "CSV input with a header row")->required();
    app.add_option("depvar", config.columns.outcome, "outcome column")->required();
    app.add_option("groupvar", config.columns.unit, "unit column")->required();
    app.add_option("timevar", config.columns.time, "time column (integers)")->required();
    app.add_option("treatment", config.columns.treatment, "treatment indicator column (0/1)")->required();
    app.add_option("--method", method, "sdid, did or sc")->capture_default_str();
    app.add_option("--vce", vce, "bootstrap, jackknife, placebo or noinference")->capture_default_str();
    app.add_option("--seed", config.seed, "seed for replicate streams")->capture_default_str();
    app.add_option("--reps", config.reps,
                   "bootstrap or placebo replications; larger values should be preferred")
        ->capture_default_str();
    app.add_option("--covariates", config.columns.covariates, "covariate columns")->delimiter(',');
    app.add_option("--covariate-type", covariate_type, "optimized or projected")->capture_default_str();
    app.add_flag("--unstandardized", unstandardized, "skip Z-scoring covariates (optimized type)");
    app.add_option("--ci-level", config.ci_level, "confidence level")->capture_default_str();
    app.add_option("--threads", config.threads, "replicate worker threads (0 = all cores)")
        ->capture_default_str();
    app.add_option("--output", config.output, "JSON output file (default: standard output)");
    app.add_option("--output-dir", config.output_dir, "directory for plot-data CSV files")->capture_default_str();
    app.add_option("--graph-export", config.file_stub, "prefix for plot-data file names");
    app.add_flag("--graph", config.emit_plot_data, "write trends<ADOPTION>.csv per adoption period");
    app.add_flag("--g1on", config.emit_unit_weights, "also write weights<ADOPTION>.csv per adoption period");
    app.add_flag("--mattitles", config.label_weights, "label omega rows with unit names");
    app.add_flag("--event-study", config.event_study, "compute event-study estimates with bootstrap bands");
    app.add_flag("--strict", config.strict, "exit with status 3 when a weight solver does not converge");
    app.add_option("--max-iterations", config.solver.max_iterations, "Frank-Wolfe iteration limit")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    try {
        app.parse(argc, argv);
        config.method = parse_method(method);
        config.vce = parse_variance_method(vce);
        config.covariate_mode.type = parse_covariate_type(covariate_type);
        config.covariate_mode.standardize = !unstandardized;
        check_config(config);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        exit_code = exit_ok;
        return std::nullopt;
    } catch (const CLI::ParseError& e) {
        err << error_object(Error(ErrorCode::InvalidArgument, e.what())).dump() << '\n';
        exit_code = exit_validation;
        return std::nullopt;
    } catch (const Error& e) {
        err << error_object(e).dump() << '\n';
        exit_code = exit_code_for(e.code());
        return std::nullopt;
    }
    return config;
}

inline int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    int code = exit_ok;
    const auto config = parse_command_line(argc, argv, out, err, code);
    if (!config) return code;
    return execute(*config, out, err);
}

}  // namespace sdid
