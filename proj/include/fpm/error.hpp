#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fpm {

enum class ErrorKind {
    DimensionMismatch,
    InvalidProbability,
    EmptyResult,
    AllMissingColumn,
    InvalidConfig,
    InvalidFractions,
    EmptyCorpus,
    InvalidHyperparameter,
    UnknownToken,
    NoNotes,
    InvalidWidth,
    NegativeWeight,
    EmptyGroup,
    EmptyCell,
    UndefinedMetric,
    EmptyData,
    DegenerateLabels,
    LengthMismatch,
    SingleClass,
    MissingGroupColumn,
    MissingColumn,
    Parse,
    IO,
};

inline std::string_view to_string(ErrorKind k) {
    switch (k) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InvalidProbability: return "InvalidProbability";
    case ErrorKind::EmptyResult: return "EmptyResult";
    case ErrorKind::AllMissingColumn: return "AllMissingColumn";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::InvalidFractions: return "InvalidFractions";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::InvalidHyperparameter: return "InvalidHyperparameter";
    case ErrorKind::UnknownToken: return "UnknownToken";
    case ErrorKind::NoNotes: return "NoNotes";
    case ErrorKind::InvalidWidth: return "InvalidWidth";
    case ErrorKind::NegativeWeight: return "NegativeWeight";
    case ErrorKind::EmptyGroup: return "EmptyGroup";
    case ErrorKind::EmptyCell: return "EmptyCell";
    case ErrorKind::UndefinedMetric: return "UndefinedMetric";
    case ErrorKind::EmptyData: return "EmptyData";
    case ErrorKind::DegenerateLabels: return "DegenerateLabels";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::SingleClass: return "SingleClass";
    case ErrorKind::MissingGroupColumn: return "MissingGroupColumn";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::Parse: return "Parse";
    case ErrorKind::IO: return "IO";
    }
    return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

} // namespace fpm
