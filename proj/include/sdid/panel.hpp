#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sdid/error.hpp"

namespace sdid {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// One long-format observation. Missing numeric values are NaN.
struct PanelRecord {
    std::string unit_id;
    long long time_id = 0;
    double outcome = 0.0;
    bool treated = false;
    std::vector<double> covariates;
};

/// Names of the fields a dataset maps onto. Only the covariate names are
/// consulted by build_panel; the rest label output.
struct ColumnSpec {
    std::string unit = "unit";
    std::string time = "time";
    std::string outcome = "outcome";
    std::string treatment = "treated";
    std::vector<std::string> covariates;
};

/// Balanced N x T panel. Rows are ordered controls first (ascending id), then
/// treated units by adoption column and id. Immutable once built.
struct BalancedPanel {
    std::vector<std::string> units;
    std::vector<long long> times;
    Matrix Y;
    BoolMatrix W;
    std::vector<Matrix> X;  // K matrices, each N x T
    std::vector<std::string> covariate_names;
    std::string outcome_name = "outcome";
    std::string unit_name = "unit";
    std::string time_name = "time";
    Index n_co = 0;
    Index n_tr = 0;
    /// First treated column per row, -1 for controls.
    std::vector<Index> first_treated;

    Index N() const { return static_cast<Index>(units.size()); }
    Index T() const { return static_cast<Index>(times.size()); }
    Index K() const { return static_cast<Index>(X.size()); }
    bool is_control(Index i) const { return first_treated[static_cast<std::size_t>(i)] < 0; }
};

struct Violation {
    ErrorCode code;
    std::string message;
    std::vector<std::string> ids;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

struct AdoptionSchedule {
    /// Distinct first-treatment periods (calendar values), ascending.
    std::vector<long long> adoption_periods;
    /// Same periods as 0-based column indices into the panel.
    std::vector<Index> adoption_columns;
    /// Per-row adoption period; nullopt for controls.
    std::vector<std::optional<long long>> unit_adoption;
    /// Number of adopters per adoption period.
    std::vector<Index> adopters;
    /// Post-treatment periods per adoption period, T - a + 1 (1-based a).
    std::vector<Index> t_post_a;
    /// Treated unit-periods, sum over a of adopters[a] * t_post_a[a].
    Index t_post = 0;

    Index size() const { return static_cast<Index>(adoption_periods.size()); }

    /// Aggregation weights n_a * T_post_a / T_post.
    std::vector<double> aggregation_weights() const {
        std::vector<double> w(adoption_periods.size());
        for (std::size_t k = 0; k < w.size(); ++k)
            w[k] = static_cast<double>(adopters[k] * t_post_a[k]) / static_cast<double>(t_post);
        return w;
    }
};

/// Shape of a block-design subproblem.
struct BlockShape {
    Index n_co = 0;
    Index n_tr = 0;
    Index t_pre = 0;   // also the 0-based adoption column
    Index t_post = 0;
};

namespace detail {

inline std::optional<double> parse_number(const std::string& s) {
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

/// Sorts ids numerically when every id is a number, lexicographically otherwise.
inline bool all_numeric(const std::vector<std::string>& ids) {
    return std::all_of(ids.begin(), ids.end(),
                       [](const std::string& s) { return parse_number(s).has_value(); });
}

inline auto id_less(bool numeric) {
    return [numeric](const std::string& a, const std::string& b) {
        if (numeric) {
            const double x = *parse_number(a), y = *parse_number(b);
            if (x != y) return x < y;
        }
        return a < b;
    };
}

inline std::vector<Index> first_treated_columns(const BoolMatrix& W) {
    std::vector<Index> first(static_cast<std::size_t>(W.rows()), -1);
    for (Index i = 0; i < W.rows(); ++i)
        for (Index t = 0; t < W.cols(); ++t)
            if (W(i, t)) {
                first[static_cast<std::size_t>(i)] = t;
                break;
            }
    return first;
}

/// Builds a panel from selected parent rows with a new treatment start per
/// row (-1 = control). Rows are reordered controls first, then treated by
/// start column; ties keep the given order.
inline BalancedPanel assemble(const BalancedPanel& parent, const std::vector<Index>& rows,
                              const std::vector<Index>& starts) {
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const Index sa = starts[a] < 0 ? -1 : starts[a];
        const Index sb = starts[b] < 0 ? -1 : starts[b];
        if ((sa < 0) != (sb < 0)) return sa < 0;
        return sa < sb;
    });

    BalancedPanel out;
    const Index n = static_cast<Index>(rows.size());
    const Index T = parent.T();
    out.times = parent.times;
    out.covariate_names = parent.covariate_names;
    out.outcome_name = parent.outcome_name;
    out.unit_name = parent.unit_name;
    out.time_name = parent.time_name;
    out.Y.resize(n, T);
    out.W.resize(n, T);
    out.X.assign(parent.X.size(), Matrix(n, T));
    out.units.reserve(rows.size());
    out.first_treated.reserve(rows.size());
    for (Index r = 0; r < n; ++r) {
        const std::size_t k = order[static_cast<std::size_t>(r)];
        const Index src = rows[k];
        out.units.push_back(parent.units[static_cast<std::size_t>(src)]);
        out.Y.row(r) = parent.Y.row(src);
        for (std::size_t c = 0; c < parent.X.size(); ++c) out.X[c].row(r) = parent.X[c].row(src);
        const Index start = starts[k];
        for (Index t = 0; t < T; ++t) out.W(r, t) = start >= 0 && t >= start;
        out.first_treated.push_back(start);
        if (start < 0)
            ++out.n_co;
        else
            ++out.n_tr;
    }
    return out;
}

}  // namespace detail

/// Checks records against the balance, absorbing-treatment, pure-control and
/// covariate requirements. Collects every violation class found.
inline ValidationReport validate_records(const std::vector<PanelRecord>& records,
                                         const ColumnSpec& spec) {
    ValidationReport report;
    auto add = [&](ErrorCode code, std::string msg, std::vector<std::string> ids) {
        report.violations.push_back({code, std::move(msg), std::move(ids)});
    };
    if (records.empty()) {
        add(ErrorCode::EmptyInput, "no records", {});
        return report;
    }
    const std::size_t K = spec.covariates.size();

    std::map<std::string, std::map<long long, const PanelRecord*>> by_unit;
    std::set<long long> time_set;
    std::vector<std::string> dup_ids, missing_ids, width_ids;
    for (const auto& r : records) {
        time_set.insert(r.time_id);
        auto [it, inserted] = by_unit[r.unit_id].emplace(r.time_id, &r);
        if (!inserted) dup_ids.push_back(r.unit_id + "@" + std::to_string(r.time_id));
        if (r.covariates.size() != K) width_ids.push_back(r.unit_id + "@" + std::to_string(r.time_id));
        bool missing = std::isnan(r.outcome);
        for (double x : r.covariates) missing = missing || std::isnan(x);
        if (missing) missing_ids.push_back(r.unit_id + "@" + std::to_string(r.time_id));
    }
    if (!width_ids.empty())
        add(ErrorCode::UnknownColumn, "records do not carry one value per covariate column", width_ids);
    if (!dup_ids.empty())
        add(ErrorCode::DuplicateRecord, "duplicate (unit, time) pairs", dup_ids);
    if (!missing_ids.empty())
        add(ErrorCode::MissingValue, "outcome or covariate missing", missing_ids);

    const std::vector<long long> times(time_set.begin(), time_set.end());
    for (std::size_t k = 1; k < times.size(); ++k)
        if (times[k] - times[k - 1] != 1) {
            add(ErrorCode::Unbalanced,
                "time ids are not consecutive integers (gap after " + std::to_string(times[k - 1]) + ")",
                {std::to_string(times[k - 1]), std::to_string(times[k])});
            break;
        }
    std::vector<std::string> short_units;
    for (const auto& [unit, obs] : by_unit)
        if (obs.size() != times.size()) short_units.push_back(unit);
    if (!short_units.empty())
        add(ErrorCode::Unbalanced, "units missing periods", short_units);

    std::vector<std::string> flip_units, always_units;
    Index controls = 0;
    for (const auto& [unit, obs] : by_unit) {
        bool seen = false, flipped = false, any = false;
        for (const auto& [t, rec] : obs) {
            if (rec->treated) seen = any = true;
            else if (seen) flipped = true;
        }
        if (flipped) flip_units.push_back(unit);
        if (!obs.empty() && obs.begin()->second->treated && obs.begin()->first == times.front())
            always_units.push_back(unit);
        if (!any) ++controls;
    }
    if (!flip_units.empty())
        add(ErrorCode::NonAbsorbingTreatment, "treatment switches off after adoption", flip_units);
    if (!always_units.empty())
        add(ErrorCode::AlwaysTreated, "units treated in the first period", always_units);
    if (controls == 0)
        add(ErrorCode::NoPureControls, "no never-treated units", {});

    for (std::size_t c = 0; c < K; ++c) {
        double lo = INFINITY, hi = -INFINITY;
        for (const auto& r : records) {
            if (r.covariates.size() != K || std::isnan(r.covariates[c])) continue;
            lo = std::min(lo, r.covariates[c]);
            hi = std::max(hi, r.covariates[c]);
        }
        if (lo == hi)
            add(ErrorCode::ConstantCovariate, "covariate is constant", {spec.covariates[c]});
    }
    return report;
}

/// Validates records and assembles the balanced panel. Throws the first
/// violation found.
inline BalancedPanel build_panel(const std::vector<PanelRecord>& records, const ColumnSpec& spec) {
    const auto report = validate_records(records, spec);
    if (!report.ok()) {
        const auto& v = report.violations.front();
        throw Error(v.code, v.message, v.ids);
    }

    std::map<std::string, std::vector<const PanelRecord*>> by_unit;
    std::set<long long> time_set;
    for (const auto& r : records) {
        by_unit[r.unit_id].push_back(&r);
        time_set.insert(r.time_id);
    }
    const std::vector<long long> times(time_set.begin(), time_set.end());
    const Index T = static_cast<Index>(times.size());
    const std::size_t K = spec.covariates.size();

    std::vector<std::string> ids;
    for (const auto& kv : by_unit) ids.push_back(kv.first);
    std::sort(ids.begin(), ids.end(), detail::id_less(detail::all_numeric(ids)));

    BalancedPanel raw;
    const Index N = static_cast<Index>(ids.size());
    raw.units = ids;
    raw.times = times;
    raw.Y.resize(N, T);
    raw.W.resize(N, T);
    raw.X.assign(K, Matrix(N, T));
    for (Index i = 0; i < N; ++i) {
        auto obs = by_unit[ids[static_cast<std::size_t>(i)]];
        std::sort(obs.begin(), obs.end(),
                  [](const PanelRecord* a, const PanelRecord* b) { return a->time_id < b->time_id; });
        for (Index t = 0; t < T; ++t) {
            const PanelRecord& r = *obs[static_cast<std::size_t>(t)];
            raw.Y(i, t) = r.outcome;
            raw.W(i, t) = r.treated;
            for (std::size_t c = 0; c < K; ++c) raw.X[c](i, t) = r.covariates[c];
        }
    }
    raw.first_treated = detail::first_treated_columns(raw.W);

    std::vector<Index> rows(static_cast<std::size_t>(N));
    std::iota(rows.begin(), rows.end(), Index{0});
    BalancedPanel out = detail::assemble(raw, rows, raw.first_treated);
    out.covariate_names = spec.covariates;
    out.outcome_name = spec.outcome;
    out.unit_name = spec.unit;
    out.time_name = spec.time;
    return out;
}

/// Flattens a panel back into long-format records (row-major, unit then time).
inline std::vector<PanelRecord> to_records(const BalancedPanel& panel) {
    std::vector<PanelRecord> out;
    out.reserve(static_cast<std::size_t>(panel.N() * panel.T()));
    for (Index i = 0; i < panel.N(); ++i)
        for (Index t = 0; t < panel.T(); ++t) {
            PanelRecord r;
            r.unit_id = panel.units[static_cast<std::size_t>(i)];
            r.time_id = panel.times[static_cast<std::size_t>(t)];
            r.outcome = panel.Y(i, t);
            r.treated = panel.W(i, t);
            for (const auto& x : panel.X) r.covariates.push_back(x(i, t));
            out.push_back(std::move(r));
        }
    return out;
}

inline ColumnSpec column_spec_of(const BalancedPanel& panel) {
    return {panel.unit_name, panel.time_name, panel.outcome_name, "treated", panel.covariate_names};
}

inline AdoptionSchedule adoption_schedule(const BalancedPanel& panel) {
    AdoptionSchedule s;
    const Index T = panel.T();
    std::map<Index, Index> counts;
    s.unit_adoption.resize(static_cast<std::size_t>(panel.N()));
    for (Index i = 0; i < panel.N(); ++i) {
        const Index c = panel.first_treated[static_cast<std::size_t>(i)];
        if (c < 0) continue;
        ++counts[c];
        s.unit_adoption[static_cast<std::size_t>(i)] = panel.times[static_cast<std::size_t>(c)];
    }
    for (const auto& [col, n] : counts) {
        s.adoption_columns.push_back(col);
        s.adoption_periods.push_back(panel.times[static_cast<std::size_t>(col)]);
        s.adopters.push_back(n);
        s.t_post_a.push_back(T - col);
        s.t_post += n * (T - col);
    }
    return s;
}

/// Row indices of the pure controls.
inline std::vector<Index> control_rows(const BalancedPanel& panel) {
    std::vector<Index> rows;
    for (Index i = 0; i < panel.N(); ++i)
        if (panel.is_control(i)) rows.push_back(i);
    return rows;
}

/// Row indices of controls plus the units first treated at calendar period a.
inline std::vector<Index> rows_for_adoption(const BalancedPanel& panel, long long a) {
    const auto it = std::find(panel.times.begin(), panel.times.end(), a);
    const Index col = it == panel.times.end() ? -1 : static_cast<Index>(it - panel.times.begin());
    std::vector<Index> rows = control_rows(panel);
    bool found = false;
    for (Index i = 0; i < panel.N(); ++i)
        if (col >= 0 && panel.first_treated[static_cast<std::size_t>(i)] == col) {
            rows.push_back(i);
            found = true;
        }
    if (!found)
        throw Error(ErrorCode::UnknownAdoptionPeriod, "no unit adopts in period " + std::to_string(a),
                    {std::to_string(a)});
    return rows;
}

/// Panel made of the given parent rows (duplicates allowed), keeping each
/// row's own treatment path.
inline BalancedPanel select_rows(const BalancedPanel& parent, const std::vector<Index>& rows) {
    std::vector<Index> starts;
    starts.reserve(rows.size());
    for (Index r : rows) starts.push_back(parent.first_treated[static_cast<std::size_t>(r)]);
    return detail::assemble(parent, rows, starts);
}

/// Panel of the given parent rows with treatment re-assigned: starts[k] is the
/// first treated column of rows[k], or -1 to make it a control.
inline BalancedPanel assign_treatment(const BalancedPanel& parent, const std::vector<Index>& rows,
                                      const std::vector<Index>& starts) {
    return detail::assemble(parent, rows, starts);
}

inline BalancedPanel subset_for_adoption(const BalancedPanel& panel, long long a) {
    return select_rows(panel, rows_for_adoption(panel, a));
}

/// Block-design shape; throws DegenerateDesign unless exactly one adoption
/// column with at least one pre and one post period exists.
inline BlockShape block_shape(const BalancedPanel& panel) {
    BlockShape s;
    Index column = -1;
    for (Index i = 0; i < panel.N(); ++i) {
        const Index c = panel.first_treated[static_cast<std::size_t>(i)];
        if (c < 0) {
            ++s.n_co;
            continue;
        }
        ++s.n_tr;
        if (column >= 0 && c != column)
            throw Error(ErrorCode::DegenerateDesign, "panel is not a block design");
        column = c;
    }
    if (s.n_tr == 0 || s.n_co == 0)
        throw Error(ErrorCode::DegenerateDesign, "block design needs treated and control units");
    if (column < 1)
        throw Error(ErrorCode::DegenerateDesign, "no pre-treatment periods");
    s.t_pre = column;
    s.t_post = panel.T() - column;
    return s;
}

}  // namespace sdid
