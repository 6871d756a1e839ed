#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "sdid/error.hpp"
#include "sdid/estimator.hpp"
#include "sdid/panel.hpp"
#include "sdid/parallel.hpp"
#include "sdid/random.hpp"

namespace sdid {

enum class VarianceMethod { bootstrap, jackknife, placebo, none };

constexpr std::string_view to_string(VarianceMethod m) {
    switch (m) {
    case VarianceMethod::bootstrap: return "bootstrap";
    case VarianceMethod::jackknife: return "jackknife";
    case VarianceMethod::placebo: return "placebo";
    case VarianceMethod::none: return "noinference";
    }
    return "noinference";
}

inline VarianceMethod parse_variance_method(std::string_view s) {
    if (s == "bootstrap") return VarianceMethod::bootstrap;
    if (s == "jackknife") return VarianceMethod::jackknife;
    if (s == "placebo") return VarianceMethod::placebo;
    if (s == "noinference" || s == "none") return VarianceMethod::none;
    throw Error(ErrorCode::InvalidArgument, "vce must be one of bootstrap, jackknife, placebo or noinference",
                {std::string(s)});
}

struct InferenceOptions {
    Index reps = 50;
    RngSpec rng;
    unsigned threads = 0;  // 0 = hardware concurrency
    double ci_level = 0.95;
};

struct InferenceResult {
    VarianceMethod method = VarianceMethod::none;
    double variance = 0.0;
    double se = 0.0;
    Index reps_used = 0;
    Index reps_discarded = 0;
    double ci_level = 0.95;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
    /// Variance of each adoption-specific tau, aligned with the fitted
    /// schedule; NaN when fewer than two replicates contain that adoption.
    std::vector<double> per_adoption_variance;
    /// Replicate (or leave-one-out) ATT values in replicate order.
    std::vector<double> replicates;
};

/// One replicate's estimates: the ATT and tau per adoption period present.
struct ReplicateEstimate {
    double att = 0.0;
    std::vector<std::pair<long long, double>> tau;
};

inline ReplicateEstimate to_replicate(const SdidResult& r) {
    ReplicateEstimate out{r.att, {}};
    for (const auto& e : r.adoption_estimates) out.tau.emplace_back(e.adoption_period, e.tau);
    return out;
}

/// Standard-normal quantile.
inline double normal_quantile(double p) {
    return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), p);
}

/// point -/+ z_{(1+level)/2} * sqrt(variance).
inline std::pair<double, double> confidence_interval(double point, double variance, double level) {
    if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::InvalidArgument, "level must lie in (0, 1)");
    if (variance < 0.0) throw Error(ErrorCode::InvalidArgument, "variance must be nonnegative");
    const double half = normal_quantile(0.5 + level / 2.0) * std::sqrt(variance);
    return {point - half, point + half};
}

/// (1/B) sum (x_b - mean)^2.
inline double population_variance(std::span<const double> x) {
    if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
    const double n = static_cast<double>(x.size());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    return ss / n;
}

/// ((N - 1) / N) sum (x_i - full)^2.
inline double jackknife_variance_from(std::span<const double> leave_one_out, double full) {
    const double n = static_cast<double>(leave_one_out.size());
    double ss = 0.0;
    for (double v : leave_one_out) ss += (v - full) * (v - full);
    return (n - 1.0) / n * ss;
}

namespace detail {

inline void finish_result(InferenceResult& r, double point, double level) {
    r.ci_level = level;
    r.se = std::sqrt(r.variance);
    std::tie(r.ci_lower, r.ci_upper) = confidence_interval(point, r.variance, level);
}

inline std::vector<double> per_adoption(const AdoptionSchedule& schedule,
                                        const std::vector<ReplicateEstimate>& reps) {
    std::vector<double> out;
    for (long long a : schedule.adoption_periods) {
        std::vector<double> taus;
        for (const auto& r : reps)
            for (const auto& [period, tau] : r.tau)
                if (period == a) taus.push_back(tau);
        out.push_back(taus.size() >= 2 ? population_variance(taus) : std::numeric_limits<double>::quiet_NaN());
    }
    return out;
}

inline void check_reps(Index reps) {
    if (reps < 2) throw Error(ErrorCode::InvalidArgument, "at least two replications are required");
}

}  // namespace detail

/// Cluster bootstrap: each replicate draws N units with replacement and
/// re-runs `fn` on the resampled panel. Draws without treated or without
/// control units are discarded and redrawn from the same stream.
template <class EstimateFn>
InferenceResult bootstrap_with(const BalancedPanel& panel, const AdoptionSchedule& schedule, double point,
                               const InferenceOptions& opt, EstimateFn&& fn) {
    if (panel.n_tr <= 1)
        throw Error(ErrorCode::TooFewTreated, "bootstrap inference requires more than one treated unit");
    detail::check_reps(opt.reps);
    const std::size_t B = static_cast<std::size_t>(opt.reps);
    const Index N = panel.N();
    std::vector<ReplicateEstimate> reps(B);
    std::vector<Index> discards(B, 0);
    parallel_for(B, opt.threads, [&](std::size_t b) {
        auto rng = opt.rng.stream(b);
        std::vector<Index> rows(static_cast<std::size_t>(N));
        for (;;) {
            Index treated = 0;
            for (auto& r : rows) {
                r = static_cast<Index>(uniform_below(rng, static_cast<std::uint64_t>(N)));
                if (!panel.is_control(r)) ++treated;
            }
            if (treated > 0 && treated < N) break;
            if (++discards[b] > 100 * static_cast<Index>(B))
                throw Error(ErrorCode::ResampleExhaustion, "too many bootstrap draws without treated and control units");
        }
        reps[b] = fn(select_rows(panel, rows));
    });

    InferenceResult out;
    out.method = VarianceMethod::bootstrap;
    for (const auto& r : reps) out.replicates.push_back(r.att);
    out.variance = population_variance(out.replicates);
    out.reps_used = static_cast<Index>(B);
    out.reps_discarded = std::accumulate(discards.begin(), discards.end(), Index{0});
    out.per_adoption_variance = detail::per_adoption(schedule, reps);
    detail::finish_result(out, point, opt.ci_level);
    return out;
}

inline InferenceResult bootstrap_variance(const BalancedPanel& panel, const SdidResult& fitted,
                                          const EstimationOptions& est, const InferenceOptions& opt) {
    return bootstrap_with(panel, fitted.schedule, fitted.att, opt,
                          [&](const BalancedPanel& p) { return to_replicate(estimate(p, est)); });
}

/// Placebo: each replicate keeps only the controls, draws N_tr of them without
/// replacement and gives them the actual adoption periods (sorted, in draw
/// order), then re-runs `fn`.
template <class EstimateFn>
InferenceResult placebo_with(const BalancedPanel& panel, const AdoptionSchedule& schedule, double point,
                             const InferenceOptions& opt, EstimateFn&& fn) {
    if (panel.n_co <= panel.n_tr)
        throw Error(ErrorCode::NotEnoughControls,
                    "placebo inference requires more control units than treated units");
    detail::check_reps(opt.reps);
    const std::vector<Index> controls = control_rows(panel);
    std::vector<Index> starts;
    for (Index i = 0; i < panel.N(); ++i)
        if (!panel.is_control(i)) starts.push_back(panel.first_treated[static_cast<std::size_t>(i)]);
    std::sort(starts.begin(), starts.end());

    const std::size_t B = static_cast<std::size_t>(opt.reps);
    const std::size_t n_co = controls.size();
    std::vector<ReplicateEstimate> reps(B);
    parallel_for(B, opt.threads, [&](std::size_t b) {
        auto rng = opt.rng.stream(b);
        std::vector<Index> order(n_co);
        std::iota(order.begin(), order.end(), Index{0});
        std::vector<Index> assigned(n_co, -1);
        for (std::size_t j = 0; j < starts.size(); ++j) {
            const std::size_t pick = j + uniform_below(rng, n_co - j);
            std::swap(order[j], order[pick]);
            assigned[static_cast<std::size_t>(order[j])] = starts[j];
        }
        reps[b] = fn(assign_treatment(panel, controls, assigned));
    });

    InferenceResult out;
    out.method = VarianceMethod::placebo;
    for (const auto& r : reps) out.replicates.push_back(r.att);
    out.variance = population_variance(out.replicates);
    out.reps_used = static_cast<Index>(B);
    out.per_adoption_variance = detail::per_adoption(schedule, reps);
    detail::finish_result(out, point, opt.ci_level);
    return out;
}

inline InferenceResult placebo_variance(const BalancedPanel& panel, const SdidResult& fitted,
                                        const EstimationOptions& est, const InferenceOptions& opt) {
    return placebo_with(panel, fitted.schedule, fitted.att, opt,
                        [&](const BalancedPanel& p) { return to_replicate(estimate(p, est)); });
}

/// Jackknife with the fitted weights (and covariate coefficients) held fixed.
/// Dropping a control renormalizes the remaining omega (uniform if they sum to
/// zero); dropping an adopter re-averages its cohort and shrinks that cohort's
/// aggregation weight.
inline InferenceResult jackknife_variance(const BalancedPanel& panel, const SdidResult& fitted,
                                          double ci_level = 0.95) {
    for (std::size_t k = 0; k < fitted.adoption_estimates.size(); ++k) {
        const auto& e = fitted.adoption_estimates[k];
        if (e.n_treated < 2)
            throw Error(ErrorCode::SingleTreatedUnit,
                        "jackknife inference requires more than one treated unit in every adoption period",
                        {std::to_string(e.adoption_period)});
    }
    if (panel.n_co < 2)
        throw Error(ErrorCode::NotEnoughControls, "jackknife inference requires at least two control units");

    const Index N = panel.N();
    const std::size_t A = fitted.adoption_estimates.size();
    std::vector<double> loo(static_cast<std::size_t>(N));
    std::vector<std::vector<double>> loo_tau(A, std::vector<double>(static_cast<std::size_t>(N)));
    for (Index i = 0; i < N; ++i) {
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < A; ++k) {
            const auto& e = fitted.adoption_estimates[k];
            const auto it = std::find(e.rows.begin(), e.rows.end(), i);
            double tau = e.tau;
            Index n_tr = e.n_treated;
            if (it != e.rows.end()) {
                const Index p = static_cast<Index>(it - e.rows.begin());
                const Index n = e.outcome.rows();
                Matrix Y(n - 1, e.outcome.cols());
                Y.topRows(p) = e.outcome.topRows(p);
                Y.bottomRows(n - 1 - p) = e.outcome.bottomRows(n - 1 - p);
                BlockShape s{e.n_co, e.n_treated, e.adoption_column, e.t_post_a};
                Vector omega = e.unit_weights.omega;
                if (p < e.n_co) {
                    Vector kept(e.n_co - 1);
                    kept.head(p) = omega.head(p);
                    kept.tail(e.n_co - 1 - p) = omega.tail(e.n_co - 1 - p);
                    const double sum = kept.sum();
                    omega = sum > 0.0 ? Vector(kept / sum) : uniform_weights(e.n_co - 1);
                    s.n_co -= 1;
                } else {
                    s.n_tr -= 1;
                    n_tr -= 1;
                }
                tau = tau_with_weights(Y, s, fitted.method, omega, e.time_weights.lambda);
            }
            const double w = static_cast<double>(n_tr * e.t_post_a);
            num += w * tau;
            den += w;
            loo_tau[k][static_cast<std::size_t>(i)] = tau;
        }
        loo[static_cast<std::size_t>(i)] = num / den;
    }

    InferenceResult out;
    out.method = VarianceMethod::jackknife;
    out.variance = jackknife_variance_from(loo, fitted.att);
    out.replicates = loo;
    out.reps_used = N;
    for (std::size_t k = 0; k < A; ++k)
        out.per_adoption_variance.push_back(jackknife_variance_from(loo_tau[k], fitted.adoption_estimates[k].tau));
    detail::finish_result(out, fitted.att, ci_level);
    return out;
}

/// Dispatches on the variance method; `none` returns nullopt.
inline std::optional<InferenceResult> infer(const BalancedPanel& panel, const SdidResult& fitted,
                                            VarianceMethod method, const EstimationOptions& est,
                                            const InferenceOptions& opt) {
    switch (method) {
    case VarianceMethod::bootstrap: return bootstrap_variance(panel, fitted, est, opt);
    case VarianceMethod::jackknife: return jackknife_variance(panel, fitted, opt.ci_level);
    case VarianceMethod::placebo: return placebo_variance(panel, fitted, est, opt);
    case VarianceMethod::none: return std::nullopt;
    }
    return std::nullopt;
}

}  // namespace sdid
