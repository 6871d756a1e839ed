#pragma once

#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "sdid/error.hpp"
#include "sdid/panel.hpp"

namespace sdid::csv {

using Row = std::vector<std::string>;

/// Splits one logical CSV record (RFC 4180 quoting; quoted fields may span
/// lines). Returns false at end of input.
inline bool read_row(std::istream& in, Row& row) {
    row.clear();
    std::string field;
    bool quoted = false, any = false;
    char c;
    while (in.get(c)) {
        any = true;
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    field += '"';
                    in.get();
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            break;
        } else if (c != '\r') {
            field += c;
        }
    }
    if (!any) return false;
    row.push_back(std::move(field));
    return true;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

inline bool is_missing(const std::string& s) { return s.empty() || s == "." || s == "NA" || s == "NaN" || s == "nan"; }

inline double parse_real(const std::string& s, const std::string& column, std::size_t line) {
    if (is_missing(s)) return std::numeric_limits<double>::quiet_NaN();
    if (auto v = detail::parse_number(s)) return *v;
    throw Error(ErrorCode::InvalidValue,
                "non-numeric value '" + s + "' in column " + column + " at line " + std::to_string(line),
                {column, std::to_string(line)});
}

/// Reads long-format records from CSV text with a header row.
inline std::vector<PanelRecord> read_records(std::istream& in, const ColumnSpec& spec) {
    Row header;
    if (!read_row(in, header)) throw Error(ErrorCode::EmptyInput, "CSV input has no header row");
    if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t k = 0; k < header.size(); ++k) index.emplace(trim(header[k]), k);
    auto column = [&](const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw Error(ErrorCode::UnknownColumn, "column not found: " + name, {name});
        return it->second;
    };
    const std::size_t cu = column(spec.unit), ct = column(spec.time), cy = column(spec.outcome),
                      cw = column(spec.treatment);
    std::vector<std::size_t> cx;
    for (const auto& name : spec.covariates) cx.push_back(column(name));

    std::vector<PanelRecord> records;
    Row row;
    std::size_t line = 1;
    while (read_row(in, row)) {
        ++line;
        if (row.size() == 1 && trim(row[0]).empty()) continue;
        if (row.size() < header.size())
            throw Error(ErrorCode::InvalidValue, "line " + std::to_string(line) + " has too few fields",
                        {std::to_string(line)});
        PanelRecord r;
        r.unit_id = trim(row[cu]);
        const double t = parse_real(trim(row[ct]), spec.time, line);
        if (std::isnan(t) || t != std::floor(t))
            throw Error(ErrorCode::InvalidValue, "time id must be an integer at line " + std::to_string(line),
                        {spec.time, std::to_string(line)});
        r.time_id = static_cast<long long>(t);
        r.outcome = parse_real(trim(row[cy]), spec.outcome, line);
        const double w = parse_real(trim(row[cw]), spec.treatment, line);
        if (std::isnan(w))
            throw Error(ErrorCode::MissingValue, "treatment missing at line " + std::to_string(line),
                        {r.unit_id + "@" + std::to_string(r.time_id)});
        if (w != 0.0 && w != 1.0)
            throw Error(ErrorCode::InvalidValue, "treatment must be 0 or 1 at line " + std::to_string(line),
                        {spec.treatment, std::to_string(line)});
        r.treated = w == 1.0;
        for (std::size_t k = 0; k < cx.size(); ++k)
            r.covariates.push_back(parse_real(trim(row[cx[k]]), spec.covariates[k], line));
        records.push_back(std::move(r));
    }
    return records;
}

inline std::vector<PanelRecord> read_records(const std::string& path, const ColumnSpec& spec) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path, {path});
    return read_records(in, spec);
}

inline std::string format_real(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

inline std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

/// Writes a panel as long-format CSV (unit, time, outcome, treatment,
/// covariates) using its stored column names.
inline void write_panel(std::ostream& out, const BalancedPanel& panel, const std::string& treatment = "treated") {
    out << quote(panel.unit_name) << ',' << quote(panel.time_name) << ',' << quote(panel.outcome_name) << ','
        << quote(treatment);
    for (const auto& c : panel.covariate_names) out << ',' << quote(c);
    out << '\n';
    for (Index i = 0; i < panel.N(); ++i)
        for (Index t = 0; t < panel.T(); ++t) {
            out << quote(panel.units[std::size_t(i)]) << ',' << panel.times[std::size_t(t)] << ','
                << format_real(panel.Y(i, t)) << ',' << (panel.W(i, t) ? 1 : 0);
            for (const auto& x : panel.X) out << ',' << format_real(x(i, t));
            out << '\n';
        }
}

}  // namespace sdid::csv
