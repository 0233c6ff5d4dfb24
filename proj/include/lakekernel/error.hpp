#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lake {

enum class ErrorCode {
    InvalidTable,
    StorageFailure,
    NotFound,
    CorruptSnapshot,
    BranchExists,
    UnknownRef,
    UnknownBranch,
    UnknownSnapshot,
    UnknownTable,
    StaleHead,
    NoCommonAncestor,
    ParseError,
    CycleOrForwardRef,
    UnknownInput,
    TypeError,
    EvalError,
    Denied,
    UnknownRun,
    InvalidPolicy,
    DuplicateName,
    ShapeError,
    StaleProposal,
    VerifierFailed,
    InvalidState,
    TooLarge,
    InvalidArgument,
};

std::string_view to_string(ErrorCode code);

/// Every failure surfaced by the kernel. The code is stable and machine
/// readable; the message carries the originating reason.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Parse failure with a 1-based source position.
class ParseError : public Error {
public:
    ParseError(std::size_t line, std::size_t column, const std::string& message)
        : Error(ErrorCode::ParseError, "line " + std::to_string(line) + ", column " +
                                           std::to_string(column) + ": " + message),
          line_(line), column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

} // namespace lake
