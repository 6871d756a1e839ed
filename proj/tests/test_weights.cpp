#include <gtest/gtest.h>

#include "sdid/weights.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace sdid;

namespace {

Matrix random_matrix(fixture::Normal& g, Index r, Index c) { return Matrix::NullaryExpr(r, c, [&] { return g(); }); }

void expect_simplex(const Vector& w) {
    EXPECT_GE(w.minCoeff(), 0.0);
    EXPECT_NEAR(w.sum(), 1.0, 1e-8);
}

}  // namespace

TEST(NoiseScale, HandExample) {
    Matrix Y(2, 4);
    Y << 0, 1, 3, 9,  // control; last column is post
        0, 0, 0, 0;
    EXPECT_DOUBLE_EQ(noise_scale(Y, 1, 3).sigma_hat, 0.5);
}

TEST(NoiseScale, ConstantAndLinearControlsGiveZero) {
    Matrix Y(3, 5);
    Y << 4, 4, 4, 4, 4,
        1, 3, 5, 7, 9,
        2, 4, 6, 8, 10;
    EXPECT_EQ(noise_scale(Y, 1, 4).sigma_hat, 0.0);
    EXPECT_EQ(noise_scale(Y.bottomRows(2), 2, 4).sigma_hat, 0.0);
}

TEST(NoiseScale, NeedsTwoPrePeriods) {
    EXPECT_THROW(noise_scale(Matrix::Zero(2, 3), 1, 1), Error);
}

TEST(Regularizer, Examples) {
    EXPECT_DOUBLE_EQ(unit_regularizer(1, 1, {2.0}), 2.0);
    EXPECT_DOUBLE_EQ(unit_regularizer(1, 16, {1.0}), 2.0);
    EXPECT_EQ(unit_regularizer(7, 9, {0.0}), 0.0);
    EXPECT_EQ(time_regularizer({3.0}), 1e-6 * 3.0);
}

TEST(SimplexRidge, ExactColumnMatch) {
    fixture::Normal g(1);
    const Matrix A = random_matrix(g, 8, 4);
    const auto r = solve_simplex_ridge(A, A.col(2), 0.0, false, {});
    EXPECT_NEAR(r.weights[2], 1.0, 1e-6);
    EXPECT_NEAR(r.objective, 0.0, 1e-9);
}

TEST(SimplexRidge, IdenticalColumnsGiveUniform) {
    fixture::Normal g(2);
    const Vector c = random_matrix(g, 6, 1);
    const Matrix A = c.replicate(1, 5);
    const auto r = solve_simplex_ridge(A, random_matrix(g, 6, 1), 0.3, true, {});
    for (Index j = 0; j < 5; ++j) EXPECT_NEAR(r.weights[j], 0.2, 1e-9);
}

TEST(SimplexRidge, GridOracleSixByThree) {
    fixture::Normal g(3);
    for (int rep = 0; rep < 10; ++rep) {
        const Matrix A = random_matrix(g, 6, 3);
        const Vector b = random_matrix(g, 6, 1);
        for (bool icpt : {false, true}) {
            const auto r = solve_simplex_ridge(A, b, 0.2, icpt, {});
            const double grid = oracle::simplex_grid_min(A, b, 0.2 * 0.2 * 6, icpt, 1000);
            // The grid is an upper bound on the minimum; at resolution 1e-3
            // it sits within ~1e-6 of it.
            EXPECT_LE(r.objective, grid + 1e-12);
            EXPECT_NEAR(r.objective, grid, 1e-5);
        }
    }
}

TEST(SimplexRidge, MatchesProjectedGradient) {
    fixture::Normal g(4);
    for (int rep = 0; rep < 40; ++rep) {
        const Index m = 2 + Index(g.below(8)), n = 1 + Index(g.below(7));
        const Matrix A = random_matrix(g, m, n);
        const Vector b = random_matrix(g, m, 1);
        const double pen = g.uniform() < 0.3 ? 0.0 : g.uniform();
        const bool icpt = g.uniform() < 0.5;
        const auto r = solve_simplex_ridge(A, b, pen, icpt, {});
        const auto o = oracle::projected_gradient(A, b, r.penalty_used, icpt);
        EXPECT_NEAR(r.objective, o.objective, 1e-8 * std::max(1.0, o.objective));
        expect_simplex(r.weights);
    }
}

TEST(SimplexRidge, TranslationInvarianceWithIntercept) {
    fixture::Normal g(5);
    const Matrix A = random_matrix(g, 7, 4);
    const Vector b = random_matrix(g, 7, 1);
    const auto r1 = solve_simplex_ridge(A, b, 0.1, true, {});
    const auto r2 = solve_simplex_ridge(A, (b.array() + 3.5).matrix(), 0.1, true, {});
    EXPECT_NEAR(r2.intercept - r1.intercept, 3.5, 1e-9);
    EXPECT_LE((r2.weights - r1.weights).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(SimplexRidge, TraceIsNonIncreasing) {
    fixture::Normal g(6);
    SolverConfig c;
    c.record_trace = true;
    const Matrix A = random_matrix(g, 12, 9);
    const auto r = solve_simplex_ridge(A, random_matrix(g, 12, 1), 0.05, true, c);
    ASSERT_FALSE(r.trace.empty());
    for (std::size_t k = 1; k < r.trace.size(); ++k) EXPECT_LE(r.trace[k], r.trace[k - 1] + 1e-12);
}

TEST(SimplexRidge, IterationLimitIsFlagged) {
    fixture::Normal g(7);
    SolverConfig c;
    c.max_iterations = 1;
    const auto r = solve_simplex_ridge(random_matrix(g, 10, 8), random_matrix(g, 10, 1), 0.01, true, c);
    EXPECT_FALSE(r.converged);
    expect_simplex(r.weights);
}

TEST(UnitWeights, SingleIdenticalControl) {
    Matrix Y(2, 4);
    Y << 1, 2, 4, 5,
        1, 2, 4, 9;
    const BlockShape s{1, 1, 3, 1};
    const auto uw = solve_unit_weights(Y, s, 0.5, true, {});
    EXPECT_NEAR(uw.omega[0], 1.0, 1e-12);
    EXPECT_NEAR(uw.omega0, 0.0, 1e-12);
}

TEST(UnitWeights, SymmetricControlsAroundShiftedTreated) {
    Matrix Y(3, 5);
    Y << 1, 3, 2, 5, 0,
        3, 1, 4, 1, 0,
        7, 7, 8, 8, 0;  // average of controls plus 5
    const BlockShape s{2, 1, 4, 1};
    const auto uw = solve_unit_weights(Y, s, 1.0, true, {});
    EXPECT_NEAR(uw.omega[0], 0.5, 1e-9);
    EXPECT_NEAR(uw.omega[1], 0.5, 1e-9);
    EXPECT_NEAR(uw.omega0, 5.0, 1e-9);
}

TEST(UnitWeights, RandomPanelMatchesOracle) {
    fixture::Normal g(8);
    const auto p = fixture::random_block(g, 4, 2, 5, 3);
    const BlockShape s = block_shape(p);
    const double zeta = unit_regularizer(s.n_tr, s.t_post, noise_scale(p));
    const auto uw = solve_unit_weights(p, zeta, {});
    const Matrix A = p.Y.topLeftCorner(4, 5).transpose();
    const Vector b = p.Y.bottomLeftCorner(2, 5).colwise().mean().transpose();
    const auto o = oracle::projected_gradient(A, b, zeta * zeta * 5, true);
    EXPECT_NEAR(uw.objective, o.objective, 1e-6);
    expect_simplex(uw.omega);
}

TEST(TimeWeights, ConstantControlsGiveUniform) {
    Matrix Y = Matrix::Constant(4, 6, 2.0);
    Y.bottomRows(1).setRandom();
    Y(3, 0) = 0.0;
    const BlockShape s{3, 1, 4, 2};
    const auto tw = solve_time_weights(Y, s, 0.0, {});
    for (Index t = 0; t < 4; ++t) EXPECT_NEAR(tw.lambda[t], 0.25, 1e-9);
}

TEST(TimeWeights, ExactPeriodMatch) {
    fixture::Normal g(9);
    Matrix Y = random_matrix(g, 6, 7);
    Y.block(0, 5, 5, 2) = Y.block(0, 2, 5, 1).replicate(1, 2);  // post = pre column 2
    const BlockShape s{5, 1, 5, 2};
    const auto tw = solve_time_weights(Y, s, 1e-6, {});
    EXPECT_NEAR(tw.lambda[2], 1.0, 1e-4);
}

TEST(TimeWeights, RandomPanelMatchesGrid) {
    fixture::Normal g(10);
    const auto p = fixture::random_block(g, 5, 1, 4, 3);
    const NoiseScale sigma = noise_scale(p);
    const auto tw = solve_time_weights(p, sigma, {});
    const Matrix A = p.Y.topLeftCorner(5, 4);
    const Vector b = p.Y.topRightCorner(5, 3).rowwise().mean();
    const double z = time_regularizer(sigma);
    const double grid = oracle::simplex_grid_min(A, b, z * z * 5, true, 400);
    const auto o = oracle::projected_gradient(A, b, z * z * 5, true);
    EXPECT_LE(tw.objective, grid + 1e-12);
    EXPECT_NEAR(tw.objective, o.objective, 1e-6);
}

TEST(Weights, ScalingLeavesArgminUnchanged) {
    fixture::Normal g(11);
    const auto p = fixture::random_block(g, 6, 2, 6, 3);
    const BlockShape s = block_shape(p);
    const auto w1 = fit_weights(p.Y, s, MethodKind::sdid, {});
    const Matrix Y2 = 7.0 * p.Y;
    const auto w2 = fit_weights(Y2, s, MethodKind::sdid, {});
    EXPECT_NEAR(w2.noise.sigma_hat, 7.0 * w1.noise.sigma_hat, 1e-12);
    EXPECT_NEAR(w2.zeta_unit, 7.0 * w1.zeta_unit, 1e-12);
    EXPECT_LE((w2.unit.omega - w1.unit.omega).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LE((w2.time.lambda - w1.time.lambda).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Weights, FeasibleOnRandomInstances) {
    fixture::Normal g(12);
    for (int rep = 0; rep < 50; ++rep) {
        const auto p = fixture::random_block(g, 2 + Index(g.below(10)), 1 + Index(g.below(3)), 2 + Index(g.below(8)),
                                             1 + Index(g.below(4)));
        const auto w = fit_weights(p.Y, block_shape(p), MethodKind::sdid, {});
        expect_simplex(w.unit.omega);
        expect_simplex(w.time.lambda);
    }
}

TEST(Weights, SdidNeedsTwoPrePeriods) {
    fixture::Normal g(13);
    const auto p = fixture::random_block(g, 3, 1, 1, 3);
    try {
        fit_weights(p.Y, block_shape(p), MethodKind::sdid, {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::TooFewPrePeriods);
    }
    EXPECT_NO_THROW(fit_weights(p.Y, block_shape(p), MethodKind::did, {}));
}
