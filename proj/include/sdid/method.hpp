#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "sdid/error.hpp"

namespace sdid {

enum class MethodKind { sdid, did, sc };

constexpr std::string_view to_string(MethodKind m) {
    switch (m) {
    case MethodKind::sdid: return "sdid";
    case MethodKind::did: return "did";
    case MethodKind::sc: return "sc";
    }
    return "sdid";
}

inline MethodKind parse_method(std::string_view s) {
    if (s == "sdid") return MethodKind::sdid;
    if (s == "did") return MethodKind::did;
    if (s == "sc") return MethodKind::sc;
    throw Error(ErrorCode::InvalidArgument, "method must be one of sdid, did or sc", {std::string(s)});
}

enum class CovariateType { optimized, projected };

/// How covariates are removed from the outcome before weight fitting.
/// `standardize` (Z-scores) only affects the optimized type.
struct CovariateMode {
    CovariateType type = CovariateType::optimized;
    bool standardize = true;
};

constexpr std::string_view to_string(CovariateType t) {
    return t == CovariateType::optimized ? "optimized" : "projected";
}

inline CovariateType parse_covariate_type(std::string_view s) {
    if (s == "optimized") return CovariateType::optimized;
    if (s == "projected") return CovariateType::projected;
    throw Error(ErrorCode::InvalidArgument, "covariate type must be optimized or projected",
                {std::string(s)});
}

}  // namespace sdid
