#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "sdid/error.hpp"
#include "sdid/estimator.hpp"
#include "sdid/inference.hpp"
#include "sdid/panel.hpp"

namespace sdid {

struct EventStudySeries {
    long long adoption_period = 0;
    std::vector<long long> periods;
    Vector d;
    Vector se;
    Vector ci_lower;
    Vector ci_upper;
    Vector lambda;  // pre-period weights of the point estimate
    Index reps = 0;
    Index reps_discarded = 0;
};

/// Per-period gap relative to the lambda-weighted pre-treatment gap:
/// d_t = difference_t - sum_{s pre} lambda_s difference_s.
inline Vector event_series(const AdoptionEstimate& est) {
    const Index t_pre = est.adoption_column;
    const double baseline = est.time_weights.lambda.dot(est.difference.head(t_pre));
    return est.difference.array() - baseline;
}

/// Bands d_t -/+ z * sd_t where sd_t is the sample standard deviation
/// (divisor B - 1) of the replicate rows in `replicates` (B x T).
inline void apply_bands(EventStudySeries& es, const Matrix& replicates, double level) {
    const Index B = replicates.rows();
    if (B < 2) throw Error(ErrorCode::InvalidArgument, "event-study bands need at least two replicates");
    const double z = normal_quantile(0.5 + level / 2.0);
    const Vector mean = replicates.colwise().mean().transpose();
    es.se = ((replicates.rowwise() - mean.transpose()).colwise().squaredNorm().transpose() /
             static_cast<double>(B - 1))
                .cwiseSqrt();
    es.ci_lower = es.d - z * es.se;
    es.ci_upper = es.d + z * es.se;
    es.reps = B;
}

/// Event study for the units adopting at period a (plus pure controls), with
/// cluster-bootstrap bands. Each replicate re-fits the weights and uses its
/// own lambda baseline.
inline EventStudySeries event_bands(const BalancedPanel& panel, long long adoption_period,
                                    const EstimationOptions& est, const InferenceOptions& opt) {
    const BalancedPanel sub = subset_for_adoption(panel, adoption_period);
    if (sub.n_tr <= 1)
        throw Error(ErrorCode::TooFewTreated, "event-study bands require more than one treated unit",
                    {std::to_string(adoption_period)});
    detail::check_reps(opt.reps);

    const SdidResult point = estimate(sub, est);
    const AdoptionEstimate& fit = point.adoption_estimates.front();
    EventStudySeries es;
    es.adoption_period = adoption_period;
    es.periods = sub.times;
    es.d = event_series(fit);
    es.lambda = fit.time_weights.lambda;

    const std::size_t B = static_cast<std::size_t>(opt.reps);
    const Index N = sub.N(), T = sub.T();
    Matrix replicates(static_cast<Index>(B), T);
    std::vector<Index> discards(B, 0);
    parallel_for(B, opt.threads, [&](std::size_t b) {
        auto rng = opt.rng.stream(b);
        std::vector<Index> rows(static_cast<std::size_t>(N));
        for (;;) {
            Index treated = 0;
            for (auto& r : rows) {
                r = static_cast<Index>(uniform_below(rng, static_cast<std::uint64_t>(N)));
                if (!sub.is_control(r)) ++treated;
            }
            if (treated > 0 && treated < N) break;
            if (++discards[b] > 100 * static_cast<Index>(B))
                throw Error(ErrorCode::ResampleExhaustion, "too many bootstrap draws without treated and control units");
        }
        const SdidResult r = estimate(select_rows(sub, rows), est);
        replicates.row(static_cast<Index>(b)) = event_series(r.adoption_estimates.front()).transpose();
    });
    apply_bands(es, replicates, opt.ci_level);
    es.reps_discarded = std::accumulate(discards.begin(), discards.end(), Index{0});
    return es;
}

}  // namespace sdid
