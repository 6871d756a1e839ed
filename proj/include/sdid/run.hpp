#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdid/csv.hpp"
#include "sdid/error.hpp"
#include "sdid/estimator.hpp"
#include "sdid/eventstudy.hpp"
#include "sdid/inference.hpp"
#include "sdid/method.hpp"
#include "sdid/panel.hpp"

namespace sdid {

using Json = nlohmann::ordered_json;

struct RunConfig {
    std::string input;
    ColumnSpec columns;
    CovariateMode covariate_mode;  // used only when columns.covariates is non-empty
    MethodKind method = MethodKind::sdid;
    VarianceMethod vce = VarianceMethod::bootstrap;
    std::uint64_t seed = 0;
    Index reps = 50;
    double ci_level = 0.95;
    unsigned threads = 0;
    /// JSON destination; empty means standard output.
    std::string output;
    /// Directory for plot-data files.
    std::string output_dir = ".";
    std::string file_stub;
    bool emit_plot_data = false;
    bool emit_unit_weights = false;
    bool label_weights = false;
    bool event_study = false;
    bool strict = false;
    SolverConfig solver;
};

struct OutputFile {
    std::string name;
    std::string contents;
};

struct RunOutput {
    Json document;
    std::vector<OutputFile> files;
    bool converged = true;
};

namespace detail {

inline Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

/// Unit ids in canonical order: the numeric value when every id is numeric,
/// otherwise the 1-based alphabetical rank.
inline std::vector<Json> canonical_ids(const std::vector<std::string>& units) {
    const bool numeric = all_numeric(units);
    std::vector<std::string> sorted = units;
    std::sort(sorted.begin(), sorted.end(), id_less(numeric));
    std::vector<Json> out;
    for (const auto& u : units) {
        if (numeric) {
            const double v = *parse_number(u);
            if (v == std::floor(v) && std::abs(v) < 9e15)
                out.emplace_back(static_cast<long long>(v));
            else
                out.emplace_back(v);
        } else {
            const auto it = std::lower_bound(sorted.begin(), sorted.end(), u, id_less(false));
            out.emplace_back(static_cast<long long>(it - sorted.begin()) + 1);
        }
    }
    return out;
}

inline std::string trends_csv(const AdoptionEstimate& e, const std::vector<long long>& times) {
    std::ostringstream os;
    os << "time,treated,control,difference,lambda\n";
    for (Index t = 0; t < static_cast<Index>(times.size()); ++t) {
        const double lambda = t < e.adoption_column ? e.time_weights.lambda[t] : 0.0;
        os << times[std::size_t(t)] << ',' << csv::format_real(e.treated_series[t]) << ','
           << csv::format_real(e.control_series[t]) << ',' << csv::format_real(e.difference[t]) << ','
           << csv::format_real(lambda) << '\n';
    }
    return os.str();
}

inline std::string weights_csv(const AdoptionEstimate& e, const std::vector<Json>& ids) {
    std::ostringstream os;
    os << "unit,id,omega\n";
    for (Index j = 0; j < e.n_co; ++j)
        os << csv::quote(e.units[std::size_t(j)]) << ',' << ids[std::size_t(j)].dump() << ','
           << csv::format_real(e.unit_weights.omega[j]) << '\n';
    return os.str();
}

inline std::string event_csv(const EventStudySeries& es) {
    std::ostringstream os;
    os << "time,relative_time,d,se,ci_lower,ci_upper\n";
    const Index start = static_cast<Index>(
        std::find(es.periods.begin(), es.periods.end(), es.adoption_period) - es.periods.begin());
    for (Index t = 0; t < es.d.size(); ++t) {
        os << es.periods[std::size_t(t)] << ',' << (t - start) << ',' << csv::format_real(es.d[t]);
        if (es.se.size() == es.d.size())
            os << ',' << csv::format_real(es.se[t]) << ',' << csv::format_real(es.ci_lower[t]) << ','
               << csv::format_real(es.ci_upper[t]);
        else
            os << ",,,";
        os << '\n';
    }
    return os.str();
}

}  // namespace detail

inline EstimationOptions estimation_options(const RunConfig& config) {
    EstimationOptions est;
    est.method = config.method;
    est.solver = config.solver;
    if (!config.columns.covariates.empty()) est.covariates = config.covariate_mode;
    return est;
}

inline void check_config(const RunConfig& config) {
    if (config.vce != VarianceMethod::none && config.vce != VarianceMethod::jackknife && config.reps < 2)
        throw Error(ErrorCode::InvalidArgument, "reps must be at least 2 for resampling inference",
                    {std::to_string(config.reps)});
    if (!(config.ci_level > 0.0 && config.ci_level < 1.0))
        throw Error(ErrorCode::InvalidArgument, "ci_level must lie in (0, 1)");
}

/// Estimation, inference and output assembly on an in-memory panel.
inline RunOutput run(const RunConfig& config, const BalancedPanel& panel) {
    check_config(config);
    const EstimationOptions est = estimation_options(config);
    InferenceOptions inf;
    inf.reps = config.reps;
    inf.rng = RngSpec{config.seed};
    inf.threads = config.threads;
    inf.ci_level = config.ci_level;

    const SdidResult fit = estimate(panel, est);
    const std::optional<InferenceResult> vr =
        config.vce == VarianceMethod::none ? std::nullopt : infer(panel, fit, config.vce, est, inf);

    RunOutput out;
    out.converged = converged(fit);
    Json& doc = out.document;
    doc["cmd"] = "sdid";
    doc["depvar"] = panel.outcome_name;
    doc["groupvar"] = panel.unit_name;
    doc["timevar"] = panel.time_name;
    doc["treatment"] = config.columns.treatment;
    doc["method"] = std::string(to_string(config.method));
    doc["vce"] = std::string(to_string(config.vce));
    doc["design"] = fit.schedule.size() == 1 ? "block" : "staggered";
    doc["att"] = fit.att;
    doc["se"] = vr ? detail::number_or_null(vr->se) : Json(nullptr);
    doc["ci_level"] = config.ci_level;
    doc["ci"] = vr ? Json{{"lower", vr->ci_lower}, {"upper", vr->ci_upper}} : Json(nullptr);
    doc["reps"] = vr ? Json(vr->reps_used) : Json(nullptr);
    doc["reps_discarded"] = vr ? Json(vr->reps_discarded) : Json(nullptr);
    doc["seed"] = config.seed;
    doc["N_clust"] = panel.N();
    doc["N_co"] = panel.n_co;
    doc["N_tr"] = panel.n_tr;
    doc["T"] = panel.T();
    if (fit.covariates)
        doc["covariates"] = Json{{"names", panel.covariate_names},
                                 {"type", std::string(to_string(fit.covariates->type))},
                                 {"standardized", fit.covariates->standardize}};
    else
        doc["covariates"] = nullptr;
    doc["adoption"] = fit.schedule.adoption_periods;

    const std::vector<Json> ids = detail::canonical_ids(panel.units);
    auto id_of = [&](const std::string& unit) {
        const auto it = std::find(panel.units.begin(), panel.units.end(), unit);
        return ids[static_cast<std::size_t>(it - panel.units.begin())];
    };

    Json tau = Json::array(), lambda = Json::array(), omega = Json::array(), beta = Json::array(),
         series = Json::array(), difference = Json::array(), intercepts = Json::array();
    if (fit.covariates && fit.covariates->type == CovariateType::projected)
        for (Index k = 0; k < fit.beta.size(); ++k)
            beta.push_back({{"adoption", nullptr}, {"covariate", panel.covariate_names[std::size_t(k)]},
                            {"beta", fit.beta[k]}});
    for (std::size_t k = 0; k < fit.adoption_estimates.size(); ++k) {
        const AdoptionEstimate& e = fit.adoption_estimates[k];
        const long long a = e.adoption_period;
        Json row{{"adoption", a},       {"tau", e.tau},         {"T_post", e.t_post_a},
                 {"n_treated", e.n_treated}, {"weight", fit.weights[k]}};
        row["se"] = vr && k < vr->per_adoption_variance.size()
                        ? detail::number_or_null(std::sqrt(vr->per_adoption_variance[k]))
                        : Json(nullptr);
        tau.push_back(std::move(row));
        intercepts.push_back({{"adoption", a}, {"omega0", e.unit_weights.omega0}, {"lambda0", e.time_weights.lambda0}});
        for (Index t = 0; t < e.adoption_column; ++t)
            lambda.push_back({{"adoption", a}, {"time", panel.times[std::size_t(t)]}, {"lambda", e.time_weights.lambda[t]}});
        std::vector<Json> sub_ids;
        for (Index j = 0; j < e.n_co; ++j) {
            Json w{{"adoption", a}, {"id", id_of(e.units[std::size_t(j)])}};
            if (config.label_weights) w["unit"] = e.units[std::size_t(j)];
            w["omega"] = e.unit_weights.omega[j];
            omega.push_back(std::move(w));
            sub_ids.push_back(id_of(e.units[std::size_t(j)]));
        }
        if (fit.covariates && fit.covariates->type == CovariateType::optimized)
            for (Index c = 0; c < e.beta.size(); ++c)
                beta.push_back({{"adoption", a}, {"covariate", panel.covariate_names[std::size_t(c)]}, {"beta", e.beta[c]}});
        for (Index t = 0; t < panel.T(); ++t) {
            const long long time = panel.times[std::size_t(t)];
            series.push_back({{"adoption", a}, {"time", time}, {"treated", e.treated_series[t]},
                              {"control", e.control_series[t]}});
            difference.push_back({{"adoption", a}, {"time", time}, {"difference", e.difference[t]}});
        }
        if (config.emit_plot_data) {
            const std::string suffix = std::to_string(a) + ".csv";
            out.files.push_back({config.file_stub + "trends" + suffix, detail::trends_csv(e, panel.times)});
            if (config.emit_unit_weights)
                out.files.push_back({config.file_stub + "weights" + suffix, detail::weights_csv(e, sub_ids)});
        }
    }
    doc["tau"] = std::move(tau);
    doc["beta"] = std::move(beta);
    doc["lambda"] = std::move(lambda);
    doc["omega"] = std::move(omega);
    doc["intercepts"] = std::move(intercepts);
    doc["series"] = std::move(series);
    doc["difference"] = std::move(difference);

    std::vector<std::string> warnings = fit.warnings;
    if (config.event_study) {
        Json events = Json::array();
        for (std::size_t k = 0; k < fit.adoption_estimates.size(); ++k) {
            const AdoptionEstimate& e = fit.adoption_estimates[k];
            EventStudySeries es;
            if (e.n_treated > 1 && config.reps >= 2) {
                es = event_bands(panel, e.adoption_period, est, inf);
            } else {
                es.adoption_period = e.adoption_period;
                es.periods = panel.times;
                es.d = event_series(e);
                es.lambda = e.time_weights.lambda;
                warnings.push_back("adoption " + std::to_string(e.adoption_period) +
                                   ": event-study bands need more than one treated unit");
            }
            Json rows = Json::array();
            for (Index t = 0; t < es.d.size(); ++t) {
                Json r{{"time", es.periods[std::size_t(t)]},
                       {"relative_time", t - e.adoption_column},
                       {"d", es.d[t]}};
                const bool bands = es.se.size() == es.d.size();
                r["se"] = bands ? detail::number_or_null(es.se[t]) : Json(nullptr);
                r["ci_lower"] = bands ? detail::number_or_null(es.ci_lower[t]) : Json(nullptr);
                r["ci_upper"] = bands ? detail::number_or_null(es.ci_upper[t]) : Json(nullptr);
                rows.push_back(std::move(r));
            }
            events.push_back({{"adoption", e.adoption_period}, {"reps", es.reps}, {"periods", std::move(rows)}});
            if (config.emit_plot_data)
                out.files.push_back({config.file_stub + "eventstudy" + std::to_string(e.adoption_period) + ".csv",
                                     detail::event_csv(es)});
        }
        doc["event_study"] = std::move(events);
    }
    doc["converged"] = out.converged;
    doc["warnings"] = warnings;
    return out;
}

inline BalancedPanel load_panel(const RunConfig& config) {
    return build_panel(csv::read_records(config.input, config.columns), config.columns);
}

inline RunOutput run(const RunConfig& config) { return run(config, load_panel(config)); }

/// Writes the plot-data files into config.output_dir and the JSON document to
/// config.output (or `stdout_sink` when that is empty).
inline void write_outputs(const RunOutput& result, const RunConfig& config, std::ostream& stdout_sink) {
    namespace fs = std::filesystem;
    if (!result.files.empty()) {
        std::error_code ec;
        fs::create_directories(config.output_dir, ec);
        if (ec) throw Error(ErrorCode::Io, "cannot create directory " + config.output_dir, {config.output_dir});
    }
    for (const auto& f : result.files) {
        const fs::path path = fs::path(config.output_dir) / f.name;
        std::ofstream os(path, std::ios::binary);
        os << f.contents;
        if (!os) throw Error(ErrorCode::Io, "cannot write " + path.string(), {path.string()});
    }
    const std::string text = result.document.dump(2) + "\n";
    if (config.output.empty()) {
        stdout_sink << text;
        return;
    }
    std::ofstream os(config.output, std::ios::binary);
    os << text;
    if (!os) throw Error(ErrorCode::Io, "cannot write " + config.output, {config.output});
}

enum ExitCode : int { exit_ok = 0, exit_validation = 2, exit_convergence = 3, exit_io = 4 };

inline int exit_code_for(ErrorCode code) { return code == ErrorCode::Io ? exit_io : exit_validation; }

inline Json error_object(const Error& e) {
    return Json{{"error", {{"code", std::string(to_string(e.code()))},
                           {"message", e.detail()},
                           {"ids", e.ids()},
                           {"exit_code", exit_code_for(e.code())}}}};
}

/// Runs a parsed configuration end to end; returns the process exit code.
inline int execute(const RunConfig& config, std::ostream& out, std::ostream& err) {
    try {
        const RunOutput result = run(config);
        write_outputs(result, config, out);
        if (config.strict && !result.converged) {
            err << Json{{"error", {{"code", std::string(to_string(ErrorCode::NonConvergence))},
                                   {"message", "weight solver did not converge"},
                                   {"ids", Json::array()},
                                   {"exit_code", int(exit_convergence)}}}}
                       .dump()
                << '\n';
            return exit_convergence;
        }
        return exit_ok;
    } catch (const Error& e) {
        err << error_object(e).dump() << '\n';
        return exit_code_for(e.code());
    }
}

}  // namespace sdid
