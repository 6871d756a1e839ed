#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sdid/covariates.hpp"
#include "sdid/error.hpp"
#include "sdid/method.hpp"
#include "sdid/panel.hpp"
#include "sdid/weights.hpp"

namespace sdid {

struct WeightedRegressionFit {
    double tau = 0.0;
    double mu = 0.0;
    Vector alpha;      // per unit, alpha[0] = 0
    Vector beta_time;  // per period, beta_time[0] = 0
};

struct AdoptionEstimate {
    long long adoption_period = 0;
    Index adoption_column = 0;
    double tau = 0.0;
    UnitWeights unit_weights;
    TimeWeights time_weights;
    Index t_post_a = 0;
    Index n_treated = 0;
    /// Treated average and omega-weighted control average per period
    /// (omega0 not added), and their difference.
    Vector treated_series;
    Vector control_series;
    Vector difference;
    /// Covariate coefficients on the original scale; empty without covariates.
    Vector beta;
    NoiseScale noise;
    double zeta_unit = 0.0;
    double zeta_time = 0.0;
    /// Outcome matrix the estimate was computed on (residualized when
    /// covariates are used); rows are controls then adopters.
    Matrix outcome;
    /// Parent-panel row of each subproblem row.
    std::vector<Index> rows;
    std::vector<std::string> units;
    Index n_co = 0;
    bool converged = true;
};

struct EstimationOptions {
    MethodKind method = MethodKind::sdid;
    std::optional<CovariateMode> covariates;
    SolverConfig solver;
};

struct SdidResult {
    double att = 0.0;
    std::vector<AdoptionEstimate> adoption_estimates;
    /// Aggregation weight of each adoption estimate.
    std::vector<double> weights;
    /// Projected type: the single coefficient vector. Optimized type: one per
    /// adoption estimate (see AdoptionEstimate::beta). Empty otherwise.
    Vector beta;
    std::optional<CovariateMode> covariates;
    MethodKind method = MethodKind::sdid;
    AdoptionSchedule schedule;
    std::vector<std::string> warnings;
};

/// tau, mu, alpha, beta of the two-way fixed-effects regression with product
/// weights omega_i * lambda_t, where treated rows weigh 1/N_tr and post
/// periods 1/T_post. Profiling the fixed effects turns tau into the weighted
/// double difference; with the weighted design balanced the fixed effects are
/// weighted row/column means.
inline WeightedRegressionFit weighted_did(const Matrix& Y, const BlockShape& s, const Vector& omega,
                                          const Vector& lambda) {
    if (s.t_pre < 1 || s.t_post < 1) throw Error(ErrorCode::DegenerateDesign, "need pre and post periods");
    if (omega.size() != s.n_co || lambda.size() != s.t_pre)
        throw Error(ErrorCode::InvalidArgument, "weights do not match the subproblem dimensions");
    const Index N = s.n_co + s.n_tr, T = s.t_pre + s.t_post;
    Vector u(N), v(T);
    u.head(s.n_co) = omega;
    u.tail(s.n_tr).setConstant(1.0 / static_cast<double>(s.n_tr));
    v.head(s.t_pre) = lambda;
    v.tail(s.t_post).setConstant(1.0 / static_cast<double>(s.t_post));

    // Unit-level pre/post contrasts, then the treated-minus-control contrast.
    const Vector contrast = Y.rightCols(s.t_post).rowwise().mean() - Y.leftCols(s.t_pre) * lambda;
    const double treated = contrast.tail(s.n_tr).mean();
    const double control = omega.dot(contrast.head(s.n_co));

    WeightedRegressionFit fit;
    fit.tau = treated - control;

    Matrix R = Y;
    R.bottomRightCorner(s.n_tr, s.t_post).array() -= fit.tau;
    const double usum = u.sum(), vsum = v.sum();
    const Vector row = R * v / vsum;
    const Vector col = R.transpose() * u / usum;
    const double grand = u.dot(row) / usum;
    fit.alpha = row.array() - row[0];
    fit.beta_time = col.array() - col[0];
    fit.mu = row[0] + col[0] - grand;
    return fit;
}

inline WeightedRegressionFit weighted_did(const BalancedPanel& panel_sub, const UnitWeights& uw,
                                          const TimeWeights& tw) {
    return weighted_did(panel_sub.Y, block_shape(panel_sub), uw.omega, tw.lambda);
}

/// tau for the given method with weights already chosen. sc has no unit
/// effects or time weights: tau is the mean post-period treated-minus-
/// synthetic gap.
inline double tau_with_weights(const Matrix& Y, const BlockShape& s, MethodKind method, const Vector& omega,
                               const Vector& lambda) {
    if (method != MethodKind::sc) return weighted_did(Y, s, omega, lambda).tau;
    const Vector post = Y.rightCols(s.t_post).rowwise().mean();
    return post.tail(s.n_tr).mean() - omega.dot(post.head(s.n_co));
}

namespace detail {

inline AdoptionEstimate finish_block(const BalancedPanel& sub, const BlockShape& s, MethodKind method,
                                     WeightSet ws, Matrix outcome) {
    AdoptionEstimate est;
    est.adoption_column = s.t_pre;
    est.adoption_period = sub.times[static_cast<std::size_t>(s.t_pre)];
    est.t_post_a = s.t_post;
    est.n_treated = s.n_tr;
    est.n_co = s.n_co;
    est.tau = tau_with_weights(outcome, s, method, ws.unit.omega, ws.time.lambda);
    est.treated_series = outcome.bottomRows(s.n_tr).colwise().mean().transpose();
    est.control_series = outcome.topRows(s.n_co).transpose() * ws.unit.omega;
    est.difference = est.treated_series - est.control_series;
    est.converged = ws.unit.converged && ws.time.converged;
    est.noise = ws.noise;
    est.zeta_unit = ws.zeta_unit;
    est.zeta_time = ws.zeta_time;
    est.unit_weights = std::move(ws.unit);
    est.time_weights = std::move(ws.time);
    est.outcome = std::move(outcome);
    est.units = sub.units;
    return est;
}

}  // namespace detail

/// Estimate for one block subproblem without covariate adjustment.
inline AdoptionEstimate estimate_block(const BalancedPanel& panel_sub, MethodKind method,
                                       const SolverConfig& config) {
    const BlockShape s = block_shape(panel_sub);
    WeightSet ws = fit_weights(panel_sub.Y, s, method, config);
    return detail::finish_block(panel_sub, s, method, std::move(ws), panel_sub.Y);
}

/// Estimate for one block subproblem using caller-supplied weights.
inline AdoptionEstimate estimate_block_with_weights(const BalancedPanel& panel_sub, MethodKind method,
                                                    const UnitWeights& uw, const TimeWeights& tw) {
    const BlockShape s = block_shape(panel_sub);
    WeightSet ws;
    ws.unit = uw;
    ws.time = tw;
    return detail::finish_block(panel_sub, s, method, std::move(ws), panel_sub.Y);
}

/// Staggered estimate: one block subproblem per adoption period (pure
/// controls plus that period's adopters), aggregated with weights
/// proportional to treated unit-periods.
inline SdidResult estimate(const BalancedPanel& panel, const EstimationOptions& options) {
    SdidResult result;
    result.method = options.method;
    result.schedule = adoption_schedule(panel);
    if (result.schedule.size() == 0) throw Error(ErrorCode::DegenerateDesign, "no treated units");
    if (panel.n_co < 1) throw Error(ErrorCode::NoPureControls, "no never-treated units");

    const bool use_cov = options.covariates.has_value() && panel.K() > 0;
    if (use_cov) result.covariates = options.covariates;

    const BalancedPanel* work = &panel;
    ProjectedCovariates projected;
    if (use_cov && options.covariates->type == CovariateType::projected) {
        projected = project_out_projected(panel);
        work = &projected.residualized;
        result.beta = projected.fit.beta;
        for (auto& w : projected.fit.warnings) result.warnings.push_back(w);
    }

    for (long long a : result.schedule.adoption_periods) {
        const std::vector<Index> rows = rows_for_adoption(*work, a);
        const BalancedPanel sub = select_rows(*work, rows);
        const BlockShape s = block_shape(sub);
        if (options.method == MethodKind::sdid && s.t_pre < 2)
            throw Error(ErrorCode::TooFewPrePeriods,
                        "sdid needs at least two pre-treatment periods (adoption in " + std::to_string(a) + ")",
                        {std::to_string(a)});
        AdoptionEstimate est;
        if (use_cov && options.covariates->type == CovariateType::optimized) {
            OptimizedCovariates opt = project_out_optimized(sub, options.method, *options.covariates, options.solver);
            est = detail::finish_block(sub, s, options.method, std::move(opt.weights),
                                       std::move(opt.residualized.Y));
            est.beta = opt.fit.beta;
            for (auto& w : opt.fit.warnings) result.warnings.push_back("adoption " + std::to_string(a) + ": " + w);
        } else {
            est = estimate_block(sub, options.method, options.solver);
            if (use_cov) est.beta = result.beta;
        }
        est.rows = rows;
        if (!est.converged)
            result.warnings.push_back("adoption " + std::to_string(a) +
                                      ": weight solver hit the iteration limit");
        result.adoption_estimates.push_back(std::move(est));
    }

    result.weights = result.schedule.aggregation_weights();
    result.att = 0.0;
    for (std::size_t k = 0; k < result.weights.size(); ++k)
        result.att += result.weights[k] * result.adoption_estimates[k].tau;
    return result;
}

inline bool converged(const SdidResult& r) {
    for (const auto& e : r.adoption_estimates)
        if (!e.converged) return false;
    return true;
}

}  // namespace sdid
