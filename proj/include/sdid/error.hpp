#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sdid {

/// Machine-readable failure classes. Names are stable: they are written to
/// the CLI error object and used by callers to branch on the failure.
enum class ErrorCode {
    // ingestion / validation
    EmptyInput,
    UnknownColumn,
    DuplicateRecord,
    Unbalanced,
    AlwaysTreated,
    NoPureControls,
    NonAbsorbingTreatment,
    MissingValue,
    ConstantCovariate,
    InvalidValue,
    // design
    UnknownAdoptionPeriod,
    TooFewPrePeriods,
    DegenerateDesign,
    // numerics
    NonConvergence,
    RankDeficient,
    InsufficientUntreatedObservations,
    // inference
    TooFewTreated,
    ResampleExhaustion,
    SingleTreatedUnit,
    NotEnoughControls,
    // plumbing
    InvalidArgument,
    Io,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::UnknownColumn: return "UnknownColumn";
    case ErrorCode::DuplicateRecord: return "DuplicateRecord";
    case ErrorCode::Unbalanced: return "Unbalanced";
    case ErrorCode::AlwaysTreated: return "AlwaysTreated";
    case ErrorCode::NoPureControls: return "NoPureControls";
    case ErrorCode::NonAbsorbingTreatment: return "NonAbsorbingTreatment";
    case ErrorCode::MissingValue: return "MissingValue";
    case ErrorCode::ConstantCovariate: return "ConstantCovariate";
    case ErrorCode::InvalidValue: return "InvalidValue";
    case ErrorCode::UnknownAdoptionPeriod: return "UnknownAdoptionPeriod";
    case ErrorCode::TooFewPrePeriods: return "TooFewPrePeriods";
    case ErrorCode::DegenerateDesign: return "DegenerateDesign";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::InsufficientUntreatedObservations: return "InsufficientUntreatedObservations";
    case ErrorCode::TooFewTreated: return "TooFewTreated";
    case ErrorCode::ResampleExhaustion: return "ResampleExhaustion";
    case ErrorCode::SingleTreatedUnit: return "SingleTreatedUnit";
    case ErrorCode::NotEnoughControls: return "NotEnoughControls";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

/// Exception carrying an ErrorCode and the ids (units, periods, columns)
/// that triggered it.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::vector<std::string> ids = {})
        : std::runtime_error(std::string(to_string(code)) + ": " + message),
          code_(code), detail_(message), ids_(std::move(ids)) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }
    const std::vector<std::string>& ids() const noexcept { return ids_; }

private:
    ErrorCode code_;
    std::string detail_;
    std::vector<std::string> ids_;
};

}  // namespace sdid
