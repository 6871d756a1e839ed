#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "sdid/error.hpp"
#include "sdid/method.hpp"
#include "sdid/panel.hpp"

namespace sdid {

/// Frank-Wolfe stopping and regularization settings.
struct SolverConfig {
    int max_iterations = 10000;
    /// Outer alternation (covariates, optimized type) stops once the joint
    /// objective decreases by less than this fraction.
    double relative_decrease_tolerance = 1e-5;
    int max_outer_iterations = 500;
    /// Inner solver stops once the duality gap is below this fraction of the
    /// objective at the starting point.
    double gap_tolerance = 1e-11;
    /// Ridge used when the regularization parameter is exactly zero, as a
    /// fraction of the data's mean square.
    double ridge_floor = 1e-12;
    /// Return the starting (uniform) weights without iterating.
    bool freeze_weights = false;
    bool record_trace = false;
};

struct NoiseScale {
    double sigma_hat = 0.0;
};

struct SimplexRidgeResult {
    double intercept = 0.0;
    Vector weights;
    double objective = 0.0;
    double penalty_used = 0.0;  // coefficient multiplying ||w||^2
    double gap = 0.0;
    int iterations = 0;
    bool converged = true;
    std::vector<double> trace;  // objective after each step, when requested
};

struct UnitWeights {
    double omega0 = 0.0;
    Vector omega;  // one per control, sums to 1
    double objective = 0.0;
    int iterations = 0;
    bool converged = true;
};

struct TimeWeights {
    double lambda0 = 0.0;
    Vector lambda;  // one per pre-period, sums to 1
    double objective = 0.0;
    int iterations = 0;
    bool converged = true;
};

/// Weights plus the regularization that produced them for one subproblem.
struct WeightSet {
    UnitWeights unit;
    TimeWeights time;
    NoiseScale noise;
    double zeta_unit = 0.0;
    double zeta_time = 0.0;
};

inline Vector uniform_weights(Index n) { return Vector::Constant(n, 1.0 / static_cast<double>(n)); }

/// Standard deviation of first differences of control pre-period outcomes,
/// normalized by N_co (T_pre - 1). Rows [0, n_co) are controls.
inline NoiseScale noise_scale(const Matrix& Y, Index n_co, Index t_pre) {
    if (t_pre < 2)
        throw Error(ErrorCode::TooFewPrePeriods, "noise scale needs at least two pre-treatment periods");
    if (n_co < 1) throw Error(ErrorCode::NoPureControls, "noise scale needs a control unit");
    const auto pre = Y.topLeftCorner(n_co, t_pre);
    const Matrix diffs = pre.rightCols(t_pre - 1) - pre.leftCols(t_pre - 1);
    const double count = static_cast<double>(n_co * (t_pre - 1));
    const double mean = diffs.sum() / count;
    const double ss = (diffs.array() - mean).square().sum();
    return {std::sqrt(ss / count)};
}

inline NoiseScale noise_scale(const BalancedPanel& panel_sub) {
    const BlockShape s = block_shape(panel_sub);
    return noise_scale(panel_sub.Y, s.n_co, s.t_pre);
}

/// zeta = (N_tr * T_post)^(1/4) * sigma.
inline double unit_regularizer(Index n_tr, Index t_post, NoiseScale sigma) {
    return std::pow(static_cast<double>(n_tr) * static_cast<double>(t_post), 0.25) * sigma.sigma_hat;
}

inline double time_regularizer(NoiseScale sigma) { return 1e-6 * sigma.sigma_hat; }

/// Minimizes ||w0 + A w - target||^2 + penalty^2 * rows * ||w||^2 over w on
/// the probability simplex (w0 free when `intercept`, else 0).
///
/// Pairwise Frank-Wolfe: each step moves mass from the worst support vertex
/// to the best vertex with an exact line search. The intercept is profiled
/// out by centering A and target over rows. All updates go through the Gram
/// matrix, so a step costs O(columns).
inline SimplexRidgeResult solve_simplex_ridge(const Matrix& A, const Vector& target, double penalty,
                                              bool intercept, const SolverConfig& config,
                                              const Vector* initial = nullptr) {
    const Index m = A.rows();
    const Index n = A.cols();
    if (m < 1 || n < 1) throw Error(ErrorCode::InvalidArgument, "simplex ridge needs a nonempty matrix");
    if (target.size() != m) throw Error(ErrorCode::InvalidArgument, "target length must equal rows");
    if (penalty < 0.0) throw Error(ErrorCode::InvalidArgument, "penalty must be nonnegative");

    Matrix Ac = A;
    Vector bc = target;
    if (intercept) {
        Ac.rowwise() -= A.colwise().mean();
        bc.array() -= target.mean();
    }

    double eta = penalty * penalty * static_cast<double>(m);
    if (eta == 0.0) {
        const double ms = std::max(A.squaredNorm() / static_cast<double>(m * n),
                                   target.squaredNorm() / static_cast<double>(m));
        eta = config.ridge_floor * (ms > 0.0 ? ms : 1.0) * static_cast<double>(m);
    }

    SimplexRidgeResult out;
    out.penalty_used = eta;
    Vector w = initial ? *initial : uniform_weights(n);

    if (!config.freeze_weights && n > 1) {
        const Matrix G = Ac.transpose() * Ac;
        const Vector c = Ac.transpose() * bc;
        const double bb = bc.squaredNorm();
        Vector Gw = G * w;
        auto objective = [&] { return w.dot(Gw) - 2.0 * c.dot(w) + bb + eta * w.squaredNorm(); };
        const double f0 = objective();
        const double tol = config.gap_tolerance * f0 + 1e-13 * (bb + G.diagonal().maxCoeff());

        out.converged = false;
        Vector h(n);
        int it = 0;
        for (; it < config.max_iterations; ++it) {
            if (it > 0 && it % 256 == 0) Gw.noalias() = G * w;
            h = Gw + eta * w - c;
            Index s = 0, v = -1;
            for (Index j = 1; j < n; ++j)
                if (h[j] < h[s]) s = j;
            for (Index j = 0; j < n; ++j)
                if (w[j] > 0.0 && (v < 0 || h[j] > h[v])) v = j;
            out.gap = 2.0 * (h.dot(w) - h[s]);
            if (out.gap <= tol || s == v) {
                out.converged = true;
                break;
            }
            const double slope = h[s] - h[v];
            const double curvature = G(s, s) + G(v, v) - 2.0 * G(s, v) + 2.0 * eta;
            double step = curvature > 0.0 ? -slope / curvature : w[v];
            step = std::clamp(step, 0.0, w[v]);
            w[s] += step;
            if (step == w[v] || w[v] - step <= 0.0)
                w[v] = 0.0;
            else
                w[v] -= step;
            Gw.noalias() += step * (G.col(s) - G.col(v));
            if (config.record_trace) out.trace.push_back(objective());
        }
        out.iterations = it;
        w /= w.sum();
    }

    out.intercept = intercept ? target.mean() - A.colwise().mean().dot(w) : 0.0;
    const Vector r = (A * w).array() + out.intercept - target.array();
    out.objective = r.squaredNorm() + eta * w.squaredNorm();
    out.weights = std::move(w);
    return out;
}

/// Unit weights for a block subproblem on outcome matrix Y: columns are the
/// controls' pre-period series, target the treated average.
inline UnitWeights solve_unit_weights(const Matrix& Y, const BlockShape& s, double zeta, bool intercept,
                                      const SolverConfig& config, const Vector* initial = nullptr) {
    const Matrix A = Y.topLeftCorner(s.n_co, s.t_pre).transpose();
    const Vector target = Y.bottomLeftCorner(s.n_tr, s.t_pre).colwise().mean().transpose();
    auto r = solve_simplex_ridge(A, target, zeta, intercept, config, initial);
    return {r.intercept, std::move(r.weights), r.objective, r.iterations, r.converged};
}

inline UnitWeights solve_unit_weights(const BalancedPanel& panel_sub, double zeta, const SolverConfig& config) {
    const BlockShape s = block_shape(panel_sub);
    if (s.t_pre < 2) throw Error(ErrorCode::TooFewPrePeriods, "unit weights need two pre-treatment periods");
    return solve_unit_weights(panel_sub.Y, s, zeta, true, config);
}

/// Time weights: columns are pre-period cross-sections of the controls,
/// target each control's post-period average.
inline TimeWeights solve_time_weights(const Matrix& Y, const BlockShape& s, double zeta,
                                      const SolverConfig& config, const Vector* initial = nullptr) {
    const Matrix A = Y.topLeftCorner(s.n_co, s.t_pre);
    const Vector target = Y.topRightCorner(s.n_co, s.t_post).rowwise().mean();
    auto r = solve_simplex_ridge(A, target, zeta, true, config, initial);
    return {r.intercept, std::move(r.weights), r.objective, r.iterations, r.converged};
}

inline TimeWeights solve_time_weights(const BalancedPanel& panel_sub, NoiseScale sigma,
                                      const SolverConfig& config) {
    const BlockShape s = block_shape(panel_sub);
    if (s.t_pre < 2) throw Error(ErrorCode::TooFewPrePeriods, "time weights need two pre-treatment periods");
    return solve_time_weights(panel_sub.Y, s, time_regularizer(sigma), config);
}

/// Weights for one block subproblem under the given method.
///   sdid: unit and time programs with intercepts.
///   did:  uniform weights.
///   sc:   unit program without intercept and a 1e-6 * sigma ridge; uniform
///         pre-period weights.
/// `noise` is the regularization scale; pass nullopt to compute it from Y.
inline WeightSet fit_weights(const Matrix& Y, const BlockShape& s, MethodKind method,
                             const SolverConfig& config, std::optional<NoiseScale> noise = std::nullopt,
                             const WeightSet* warm = nullptr) {
    WeightSet ws;
    if (method == MethodKind::sdid && s.t_pre < 2)
        throw Error(ErrorCode::TooFewPrePeriods,
                    "sdid needs at least two pre-treatment periods per adoption date");
    if (method == MethodKind::did) {
        ws.unit.omega = uniform_weights(s.n_co);
        ws.time.lambda = uniform_weights(s.t_pre);
        return ws;
    }
    ws.noise = noise ? *noise : (s.t_pre >= 2 ? noise_scale(Y, s.n_co, s.t_pre) : NoiseScale{0.0});
    if (method == MethodKind::sdid) {
        ws.zeta_unit = unit_regularizer(s.n_tr, s.t_post, ws.noise);
        ws.zeta_time = time_regularizer(ws.noise);
        ws.unit = solve_unit_weights(Y, s, ws.zeta_unit, true, config, warm ? &warm->unit.omega : nullptr);
        ws.time = solve_time_weights(Y, s, ws.zeta_time, config, warm ? &warm->time.lambda : nullptr);
    } else {
        ws.zeta_unit = 1e-6 * ws.noise.sigma_hat;
        ws.unit = solve_unit_weights(Y, s, ws.zeta_unit, false, config, warm ? &warm->unit.omega : nullptr);
        ws.time.lambda = uniform_weights(s.t_pre);
    }
    return ws;
}

}  // namespace sdid
