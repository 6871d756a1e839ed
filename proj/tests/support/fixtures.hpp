#pragma once

// Synthetic panels for the tests.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sdid/panel.hpp"

namespace fixture {

using sdid::BalancedPanel;
using sdid::Index;
using sdid::Matrix;
using sdid::PanelRecord;

/// Builds a panel through the public record path. `start[i]` is the 0-based
/// column where unit i becomes treated, or -1 for a control.
inline BalancedPanel make_panel(const Matrix& Y, const std::vector<Index>& start,
                                const std::vector<Matrix>& X = {}, long long first_time = 1,
                                const std::vector<std::string>& names = {}) {
    std::vector<PanelRecord> records;
    sdid::ColumnSpec spec;
    for (std::size_t k = 0; k < X.size(); ++k) spec.covariates.push_back("x" + std::to_string(k + 1));
    for (Index i = 0; i < Y.rows(); ++i)
        for (Index t = 0; t < Y.cols(); ++t) {
            PanelRecord r;
            r.unit_id = names.empty() ? std::to_string(i + 1) : names[std::size_t(i)];
            r.time_id = first_time + t;
            r.outcome = Y(i, t);
            r.treated = start[std::size_t(i)] >= 0 && t >= start[std::size_t(i)];
            for (const auto& x : X) r.covariates.push_back(x(i, t));
            records.push_back(std::move(r));
        }
    return sdid::build_panel(records, spec);
}

/// Deterministic normal draws (Box-Muller on mt19937_64 output), so fixtures
/// are identical across standard libraries.
class Normal {
public:
    explicit Normal(std::uint64_t seed) : rng_(seed) {}
    double operator()() {
        if (cached_) {
            cached_ = false;
            return spare_;
        }
        const double u1 = (static_cast<double>(rng_() >> 11) + 0.5) * 0x1.0p-53;
        const double u2 = (static_cast<double>(rng_() >> 11) + 0.5) * 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        cached_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }
    double uniform() { return (static_cast<double>(rng_() >> 11) + 0.5) * 0x1.0p-53; }
    std::uint64_t below(std::uint64_t n) { return rng_() % n; }

private:
    std::mt19937_64 rng_;
    bool cached_ = false;
    double spare_ = 0.0;
};

/// Y_it = a_i + b_t + l_i f_t + tau * D_it + sd * e_it, with rank-one
/// interactive effects so the synthetic weights have work to do.
struct Dgp {
    Index N = 20;
    Index T = 10;
    std::vector<Index> start;  // per unit; -1 = control
    double tau = 0.0;
    double noise = 1.0;
    double factor = 1.0;
};

inline Matrix simulate(const Dgp& d, Normal& g) {
    Matrix Y(d.N, d.T);
    std::vector<double> a(std::size_t(d.N)), l(std::size_t(d.N)), b(std::size_t(d.T)), f(std::size_t(d.T));
    for (auto& v : a) v = 2.0 * g();
    for (auto& v : l) v = g();
    for (Index t = 0; t < d.T; ++t) {
        b[std::size_t(t)] = 0.3 * static_cast<double>(t) + 0.5 * g();
        f[std::size_t(t)] = g();
    }
    for (Index i = 0; i < d.N; ++i)
        for (Index t = 0; t < d.T; ++t) {
            const bool treated = d.start[std::size_t(i)] >= 0 && t >= d.start[std::size_t(i)];
            Y(i, t) = a[std::size_t(i)] + b[std::size_t(t)] + d.factor * l[std::size_t(i)] * f[std::size_t(t)] +
                      (treated ? d.tau : 0.0) + d.noise * g();
        }
    return Y;
}

/// Starts vector with `n_co` controls followed by cohorts {column, size}.
inline std::vector<Index> starts(Index n_co, const std::vector<std::pair<Index, Index>>& cohorts) {
    std::vector<Index> s(std::size_t(n_co), -1);
    for (auto [col, size] : cohorts)
        for (Index k = 0; k < size; ++k) s.push_back(col);
    return s;
}

/// Random block panel with given sizes.
inline BalancedPanel random_block(Normal& g, Index n_co, Index n_tr, Index t_pre, Index t_post, double tau = 1.0) {
    Dgp d;
    d.N = n_co + n_tr;
    d.T = t_pre + t_post;
    d.start = starts(n_co, {{t_pre, n_tr}});
    d.tau = tau;
    return make_panel(simulate(d, g), d.start);
}

/// Shaped like the Proposition 99 panel: 39 states observed 1970-2000 with
/// California (the only treated unit) adopting in 1989. Outcomes mimic
/// per-capita cigarette sales: declining trends, state heterogeneity and a
/// post-1989 drop for California.
inline BalancedPanel prop99_like(std::uint64_t seed = 99) {
    Normal g(seed);
    const Index N = 39, T = 31;
    Matrix Y(N, T);
    std::vector<std::string> names;
    std::vector<Index> start(std::size_t(N), -1);
    for (Index i = 0; i < N; ++i) {
        names.push_back(i == 2 ? "California" : "State" + std::to_string(i + 1));
        const double level = 120.0 + 15.0 * g();
        const double slope = -1.5 + 0.6 * g();
        const double load = g();
        for (Index t = 0; t < T; ++t) {
            const double common = 3.0 * std::sin(0.35 * static_cast<double>(t));
            Y(i, t) = level + slope * static_cast<double>(t) + load * common + 2.0 * g();
        }
    }
    start[2] = 19;  // 1970 + 19 = 1989
    for (Index t = 19; t < T; ++t) Y(2, t) -= 15.0 + 0.5 * static_cast<double>(t - 19);
    return make_panel(Y, start, {}, 1970, names);
}

}  // namespace fixture
