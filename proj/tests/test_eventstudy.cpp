#include <gtest/gtest.h>

#include "sdid/eventstudy.hpp"
#include "support/fixtures.hpp"

using namespace sdid;

namespace {

InferenceOptions reps(Index b, std::uint64_t seed = 1, unsigned threads = 1) {
    InferenceOptions o;
    o.reps = b;
    o.rng.seed = seed;
    o.threads = threads;
    return o;
}

}  // namespace

TEST(EventSeries, ConstantDifferenceGivesZero) {
    AdoptionEstimate e;
    e.adoption_column = 3;
    e.difference = Vector::Constant(6, 2.5);
    e.time_weights.lambda = Vector::Constant(3, 1.0 / 3.0);
    const Vector d = event_series(e);
    EXPECT_LE(d.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(EventSeries, SinglePeriodBaseline) {
    AdoptionEstimate e;
    e.adoption_column = 4;
    e.difference = (Vector(7) << 1, 5, -2, 3, 8, 9, 10).finished();
    e.time_weights.lambda = (Vector(4) << 0, 1, 0, 0).finished();
    const Vector d = event_series(e);
    for (Index t = 0; t < 7; ++t) EXPECT_DOUBLE_EQ(d[t], e.difference[t] - 5.0);
}

TEST(EventSeries, LambdaWeightedPreMeanIsZero) {
    fixture::Normal g(1);
    for (int rep = 0; rep < 20; ++rep) {
        fixture::Dgp dgp;
        dgp.start = fixture::starts(10, {{4, 2}, {7, 3}});
        dgp.N = Index(dgp.start.size());
        dgp.T = 10;
        dgp.tau = 2.0;
        const auto p = fixture::make_panel(fixture::simulate(dgp, g), dgp.start);
        for (const auto& e : estimate(p, {}).adoption_estimates) {
            const Vector d = event_series(e);
            EXPECT_LE(std::abs(e.time_weights.lambda.dot(d.head(e.adoption_column))), 1e-9);
        }
    }
}

TEST(EventBands, MockedTwoReplicates) {
    EventStudySeries es;
    es.d = Vector::Constant(3, 1.0);
    Matrix reps(2, 3);
    reps.row(0).setZero();
    reps.row(1).setConstant(2.0);
    apply_bands(es, reps, 0.95);
    for (Index t = 0; t < 3; ++t) {
        EXPECT_DOUBLE_EQ(es.se[t], std::sqrt(2.0));
        EXPECT_NEAR(es.ci_upper[t] - es.d[t], 1.959963984540054 * std::sqrt(2.0), 1e-12);
    }
}

TEST(EventBands, IdenticalUnitsCollapse) {
    Matrix Y(6, 7);
    for (Index t = 0; t < 7; ++t) Y.col(t).setConstant(std::cos(double(t)));
    const auto p = fixture::make_panel(Y, {-1, -1, -1, -1, 4, 4});
    const auto es = event_bands(p, 5, {}, reps(10));
    EXPECT_LE(es.se.cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LE((es.ci_upper - es.ci_lower).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(EventBands, DeterministicAndContainPoint) {
    fixture::Normal g(2);
    fixture::Dgp dgp;
    dgp.start = fixture::starts(12, {{5, 3}, {7, 2}});
    dgp.N = Index(dgp.start.size());
    dgp.T = 10;
    dgp.tau = 3.0;
    const auto p = fixture::make_panel(fixture::simulate(dgp, g), dgp.start);
    const auto a = event_bands(p, 6, {}, reps(20, 5, 1));
    const auto b = event_bands(p, 6, {}, reps(20, 5, 3));
    EXPECT_EQ(a.se, b.se);
    EXPECT_EQ(a.d, b.d);
    EXPECT_EQ(a.periods.size(), std::size_t(p.T()));
    for (Index t = 0; t < a.d.size(); ++t) {
        EXPECT_LE(a.ci_lower[t], a.d[t]);
        EXPECT_GE(a.ci_upper[t], a.d[t]);
    }
    // Bands are built on the cohort subset even though the panel has two.
    const auto sub = subset_for_adoption(p, 6);
    EXPECT_EQ(a.d, event_series(estimate(sub, {}).adoption_estimates.front()));
}

TEST(EventBands, RequiresSeveralTreated) {
    const auto p = fixture::prop99_like();
    EXPECT_THROW(event_bands(p, 1989, {}, reps(5)), Error);
}

TEST(EventBands, CoverageSmoke) {
    // No-effect DGP: share of post periods whose band excludes zero should sit
    // near the nominal 5%.
    const int sims = 200;
    int excluded = 0, total = 0;
    fixture::Normal g(3);
    for (int s = 0; s < sims; ++s) {
        fixture::Dgp dgp;
        dgp.start = fixture::starts(16, {{6, 4}});
        dgp.N = Index(dgp.start.size());
        dgp.T = 9;
        dgp.factor = 0.0;
        const auto p = fixture::make_panel(fixture::simulate(dgp, g), dgp.start);
        const auto es = event_bands(p, 7, {}, reps(200, std::uint64_t(s), 0));
        for (Index t = 6; t < 9; ++t) {
            ++total;
            if (es.ci_lower[t] > 0.0 || es.ci_upper[t] < 0.0) ++excluded;
        }
    }
    const double rate = double(excluded) / double(total);
    RecordProperty("rejection_rate", std::to_string(rate));
    EXPECT_NEAR(rate, 0.05, 0.07);
}
