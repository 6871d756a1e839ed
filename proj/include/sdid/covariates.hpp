#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sdid/error.hpp"
#include "sdid/method.hpp"
#include "sdid/panel.hpp"
#include "sdid/weights.hpp"

namespace sdid {

struct CovariateFit {
    /// Coefficients on the original covariate scale.
    Vector beta;
    /// Coefficients on the scale actually fitted (Z-scores when standardized).
    Vector beta_fitted;
    bool standardized = false;
    Vector mean;  // used for Z-scores, empty otherwise
    Vector sd;
    int iterations = 0;
    bool converged = true;
    std::vector<std::string> warnings;
};

struct ProjectedCovariates {
    BalancedPanel residualized;
    CovariateFit fit;
};

struct OptimizedCovariates {
    BalancedPanel residualized;
    CovariateFit fit;
    WeightSet weights;
};

namespace detail {

/// Residual of V after removing unit and time effects, fitted by least squares
/// over the cells where mask is true (alternating projections). Cells outside
/// the mask are left untouched.
inline Matrix two_way_within(const Matrix& V, const BoolMatrix& mask) {
    const Index N = V.rows(), T = V.cols();
    Vector row_n = Vector::Zero(N), col_n = Vector::Zero(T);
    for (Index i = 0; i < N; ++i)
        for (Index t = 0; t < T; ++t)
            if (mask(i, t)) {
                row_n[i] += 1.0;
                col_n[t] += 1.0;
            }
    Matrix R = V;
    const double scale = std::max(1.0, V.cwiseAbs().maxCoeff());
    Vector acc;
    for (int sweep = 0; sweep < 100000; ++sweep) {
        double change = 0.0;
        acc = Vector::Zero(N);
        for (Index i = 0; i < N; ++i)
            for (Index t = 0; t < T; ++t)
                if (mask(i, t)) acc[i] += R(i, t);
        for (Index i = 0; i < N; ++i) {
            if (row_n[i] == 0.0) continue;
            const double m = acc[i] / row_n[i];
            change = std::max(change, std::abs(m));
            for (Index t = 0; t < T; ++t)
                if (mask(i, t)) R(i, t) -= m;
        }
        acc = Vector::Zero(T);
        for (Index i = 0; i < N; ++i)
            for (Index t = 0; t < T; ++t)
                if (mask(i, t)) acc[t] += R(i, t);
        for (Index t = 0; t < T; ++t) {
            if (col_n[t] == 0.0) continue;
            const double m = acc[t] / col_n[t];
            change = std::max(change, std::abs(m));
            for (Index i = 0; i < N; ++i)
                if (mask(i, t)) R(i, t) -= m;
        }
        if (change <= 1e-15 * scale) break;
    }
    return R;
}

/// Least squares with a rank check: a column whose norm collapses relative to
/// `reference` norms, or a rank drop in the pivoted QR, is RankDeficient.
inline Vector checked_least_squares(const Matrix& D, const Vector& y, const Vector& reference) {
    const Index K = D.cols();
    for (Index k = 0; k < K; ++k)
        if (D.col(k).norm() <= 1e-9 * std::max(reference[k], 1e-300))
            throw Error(ErrorCode::RankDeficient,
                        "covariate is collinear with the unit and time fixed effects",
                        {std::to_string(k)});
    Matrix Dn = D;
    Vector norms(K);
    for (Index k = 0; k < K; ++k) {
        norms[k] = D.col(k).norm();
        Dn.col(k) /= norms[k];
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(Dn);
    qr.setThreshold(1e-10);
    if (qr.rank() < K) throw Error(ErrorCode::RankDeficient, "covariates are collinear");
    Vector b = qr.solve(y);
    return b.cwiseQuotient(norms);
}

inline BalancedPanel with_outcome(const BalancedPanel& panel, Matrix Y) {
    BalancedPanel out = panel;
    out.Y = std::move(Y);
    return out;
}

}  // namespace detail

/// Covariate coefficients from a two-way fixed-effects regression on the
/// untreated cells only; residualizes every cell with them.
inline ProjectedCovariates project_out_projected(const BalancedPanel& panel) {
    const Index K = panel.K();
    if (K < 1) throw Error(ErrorCode::InvalidArgument, "projected covariates need at least one covariate");
    const Index N = panel.N(), T = panel.T();
    const BoolMatrix mask = panel.W.unaryExpr([](bool w) { return !w; });
    const Index n_obs = mask.count();

    CovariateFit fit;
    const Index params = N + T + K - 1;
    if (n_obs < params)
        throw Error(ErrorCode::InsufficientUntreatedObservations,
                    std::to_string(n_obs) + " untreated observations for " + std::to_string(params) +
                        " parameters");
    if (n_obs <= N + T + K)
        fit.warnings.push_back("few residual degrees of freedom in the untreated regression");

    const Matrix y_within = detail::two_way_within(panel.Y, mask);
    Matrix D(n_obs, K);
    Vector y(n_obs), reference(K);
    for (Index k = 0; k < K; ++k) {
        const Matrix x_within = detail::two_way_within(panel.X[static_cast<std::size_t>(k)], mask);
        double sum = 0.0, sq = 0.0;
        Index r = 0;
        for (Index i = 0; i < N; ++i)
            for (Index t = 0; t < T; ++t)
                if (mask(i, t)) {
                    D(r++, k) = x_within(i, t);
                    sum += panel.X[static_cast<std::size_t>(k)](i, t);
                }
        const double mean = sum / static_cast<double>(n_obs);
        for (Index i = 0; i < N; ++i)
            for (Index t = 0; t < T; ++t)
                if (mask(i, t)) sq += std::pow(panel.X[static_cast<std::size_t>(k)](i, t) - mean, 2);
        reference[k] = std::sqrt(sq);
    }
    Index r = 0;
    for (Index i = 0; i < N; ++i)
        for (Index t = 0; t < T; ++t)
            if (mask(i, t)) y(r++) = y_within(i, t);

    fit.beta = detail::checked_least_squares(D, y, reference);
    fit.beta_fitted = fit.beta;

    Matrix Yres = panel.Y;
    for (Index k = 0; k < K; ++k) Yres -= fit.beta[k] * panel.X[static_cast<std::size_t>(k)];
    return {detail::with_outcome(panel, std::move(Yres)), std::move(fit)};
}

/// Covariate coefficients found jointly with the weights of one block
/// subproblem: alternate a least-squares step for beta (weights fixed) with a
/// re-fit of the weights on the residualized outcome, until the combined
/// weight objective stops decreasing. The noise scale of the raw outcome sets
/// the regularization throughout.
inline OptimizedCovariates project_out_optimized(const BalancedPanel& panel_sub, MethodKind method,
                                                 const CovariateMode& mode, const SolverConfig& config) {
    const Index K = panel_sub.K();
    if (K < 1) throw Error(ErrorCode::InvalidArgument, "optimized covariates need at least one covariate");
    const BlockShape s = block_shape(panel_sub);
    if (method == MethodKind::sdid && s.t_pre < 2)
        throw Error(ErrorCode::TooFewPrePeriods,
                    "sdid needs at least two pre-treatment periods per adoption date");

    CovariateFit fit;
    fit.standardized = mode.standardize;
    std::vector<Matrix> Z;
    Z.reserve(static_cast<std::size_t>(K));
    if (mode.standardize) {
        fit.mean.resize(K);
        fit.sd.resize(K);
    }
    for (Index k = 0; k < K; ++k) {
        const Matrix& X = panel_sub.X[static_cast<std::size_t>(k)];
        if (!mode.standardize) {
            Z.push_back(X);
            continue;
        }
        const double mean = X.mean();
        const double sd = std::sqrt((X.array() - mean).square().sum() / static_cast<double>(X.size() - 1));
        if (!(sd > 0.0))
            throw Error(ErrorCode::ConstantCovariate, "covariate is constant within the subproblem",
                        {panel_sub.covariate_names.empty() ? std::to_string(k)
                                                           : panel_sub.covariate_names[std::size_t(k)]});
        fit.mean[k] = mean;
        fit.sd[k] = sd;
        Z.push_back((X.array() - mean) / sd);
    }

    const bool intercept = method != MethodKind::sc;
    const bool use_time = method != MethodKind::sc;
    const double unit_norm = 1.0 / std::sqrt(static_cast<double>(s.t_pre));
    const double time_norm = 1.0 / std::sqrt(static_cast<double>(s.n_co));

    // Residuals of the two weight programs, linear in the outcome matrix.
    auto unit_residual = [&](const Matrix& V, const WeightSet& ws) {
        Vector e = V.topLeftCorner(s.n_co, s.t_pre).transpose() * ws.unit.omega -
                   V.bottomLeftCorner(s.n_tr, s.t_pre).colwise().mean().transpose();
        if (intercept) e.array() -= e.mean();
        return Vector(e * unit_norm);
    };
    auto time_residual = [&](const Matrix& V, const WeightSet& ws) {
        Vector e = V.topLeftCorner(s.n_co, s.t_pre) * ws.time.lambda -
                   V.topRightCorner(s.n_co, s.t_post).rowwise().mean();
        e.array() -= e.mean();
        return Vector(e * time_norm);
    };
    auto stacked = [&](const Matrix& V, const WeightSet& ws) {
        const Vector eu = unit_residual(V, ws);
        if (!use_time) return eu;
        const Vector et = time_residual(V, ws);
        Vector out(eu.size() + et.size());
        out << eu, et;
        return out;
    };
    auto joint_objective = [&](const Matrix& V, const WeightSet& ws) {
        double j = stacked(V, ws).squaredNorm() + ws.zeta_unit * ws.zeta_unit * ws.unit.omega.squaredNorm();
        if (use_time) j += ws.zeta_time * ws.zeta_time * ws.time.lambda.squaredNorm();
        return j;
    };

    const std::optional<NoiseScale> noise =
        s.t_pre >= 2 ? std::optional<NoiseScale>(noise_scale(panel_sub.Y, s.n_co, s.t_pre))
                     : std::optional<NoiseScale>(NoiseScale{0.0});

    Vector beta = Vector::Zero(K);
    Vector reference(K);
    for (Index k = 0; k < K; ++k) {
        const Matrix& z = Z[static_cast<std::size_t>(k)];
        reference[k] = (z.array() - z.mean()).matrix().norm() / std::sqrt(static_cast<double>(z.size()));
    }

    Matrix Yres = panel_sub.Y;
    WeightSet ws = fit_weights(Yres, s, method, config, noise);
    double previous = joint_objective(Yres, ws);
    fit.converged = false;
    int outer = 0;
    for (; outer < config.max_outer_iterations; ++outer) {
        // beta step: residual(Y - sum beta_k Z_k) = residual(Y) - sum beta_k residual(Z_k)
        const Vector y = stacked(panel_sub.Y, ws);
        Matrix D(y.size(), K);
        Vector scaled_ref(K);
        for (Index k = 0; k < K; ++k) {
            D.col(k) = stacked(Z[static_cast<std::size_t>(k)], ws);
            scaled_ref[k] = reference[k] * std::sqrt(static_cast<double>(y.size()));
        }
        beta = detail::checked_least_squares(D, y, scaled_ref);
        Yres = panel_sub.Y;
        for (Index k = 0; k < K; ++k) Yres -= beta[k] * Z[static_cast<std::size_t>(k)];

        // weight step, warm-started from the previous weights
        if (method != MethodKind::did) ws = fit_weights(Yres, s, method, config, noise, &ws);
        const double current = joint_objective(Yres, ws);
        const double decrease = previous - current;
        previous = current;
        if (method == MethodKind::did || decrease <= config.relative_decrease_tolerance * std::abs(current) ||
            current == 0.0) {
            fit.converged = true;
            ++outer;
            break;
        }
    }
    fit.iterations = outer;
    fit.beta_fitted = beta;
    fit.beta = mode.standardize ? Vector(beta.cwiseQuotient(fit.sd)) : beta;
    if (!fit.converged) fit.warnings.push_back("covariate alternation hit the iteration limit");
    return {detail::with_outcome(panel_sub, std::move(Yres)), std::move(fit), std::move(ws)};
}

}  // namespace sdid
