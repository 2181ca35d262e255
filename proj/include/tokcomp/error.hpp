// Copyright (C) 2026 The tokcomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tokcomp {

enum class Errc {
    // plan application
    IndexOutOfRange,
    OverlappingGroups,
    EmptyResult,
    InvalidPlan,
    // dump I/O
    BadMagic,
    VersionMismatch,
    ChecksumMismatch,
    NonFiniteValue,
    Truncated,
    IoError,
    // metrics
    MissingClsAttention,
    MissingTextAttention,
    // reduction
    BudgetExceedsTokens,
    RTooLarge,
    NoGrid,
    SingleFrame,
    // quantization
    SingularHessian,
    ShapeMismatch,
    NonPositiveScale,
    // evaluation
    EmptyInput,
    NoFirstTurnCorrect,
    DuplicateQuestions,
    // configuration
    SyntaxError,
    UnknownOperator,
    InvalidParameter,
    InvalidArgument,
};

inline constexpr std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::IndexOutOfRange: return "IndexOutOfRange";
        case Errc::OverlappingGroups: return "OverlappingGroups";
        case Errc::EmptyResult: return "EmptyResult";
        case Errc::InvalidPlan: return "InvalidPlan";
        case Errc::BadMagic: return "BadMagic";
        case Errc::VersionMismatch: return "VersionMismatch";
        case Errc::ChecksumMismatch: return "ChecksumMismatch";
        case Errc::NonFiniteValue: return "NonFiniteValue";
        case Errc::Truncated: return "Truncated";
        case Errc::IoError: return "IoError";
        case Errc::MissingClsAttention: return "MissingClsAttention";
        case Errc::MissingTextAttention: return "MissingTextAttention";
        case Errc::BudgetExceedsTokens: return "BudgetExceedsTokens";
        case Errc::RTooLarge: return "RTooLarge";
        case Errc::NoGrid: return "NoGrid";
        case Errc::SingleFrame: return "SingleFrame";
        case Errc::SingularHessian: return "SingularHessian";
        case Errc::ShapeMismatch: return "ShapeMismatch";
        case Errc::NonPositiveScale: return "NonPositiveScale";
        case Errc::EmptyInput: return "EmptyInput";
        case Errc::NoFirstTurnCorrect: return "NoFirstTurnCorrect";
        case Errc::DuplicateQuestions: return "DuplicateQuestions";
        case Errc::SyntaxError: return "SyntaxError";
        case Errc::UnknownOperator: return "UnknownOperator";
        case Errc::InvalidParameter: return "InvalidParameter";
        case Errc::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

/// Errors raised by configuration parsing, as opposed to bad data.
inline constexpr bool is_config_error(Errc code) noexcept {
    return code == Errc::SyntaxError || code == Errc::UnknownOperator ||
           code == Errc::InvalidParameter;
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code), message_(what) {}

    Errc code() const noexcept { return code_; }
    /// The message without the code prefix, for re-wrapping with context.
    const std::string& message() const noexcept { return message_; }

private:
    Errc code_;
    std::string message_;
};

#define TOKCOMP_CHECK(cond, code, msg)              \
    do {                                            \
        if (!(cond)) {                              \
            throw ::tokcomp::Error((code), (msg));  \
        }                                           \
    } while (false)

}  // namespace tokcomp
