#include "lakekernel/error.hpp"

namespace lake {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidTable: return "InvalidTable";
    case ErrorCode::StorageFailure: return "StorageFailure";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::CorruptSnapshot: return "CorruptSnapshot";
    case ErrorCode::BranchExists: return "BranchExists";
    case ErrorCode::UnknownRef: return "UnknownRef";
    case ErrorCode::UnknownBranch: return "UnknownBranch";
    case ErrorCode::UnknownSnapshot: return "UnknownSnapshot";
    case ErrorCode::UnknownTable: return "UnknownTable";
    case ErrorCode::StaleHead: return "StaleHead";
    case ErrorCode::NoCommonAncestor: return "NoCommonAncestor";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::CycleOrForwardRef: return "CycleOrForwardRef";
    case ErrorCode::UnknownInput: return "UnknownInput";
    case ErrorCode::TypeError: return "TypeError";
    case ErrorCode::EvalError: return "EvalError";
    case ErrorCode::Denied: return "Denied";
    case ErrorCode::UnknownRun: return "UnknownRun";
    case ErrorCode::InvalidPolicy: return "InvalidPolicy";
    case ErrorCode::DuplicateName: return "DuplicateName";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::StaleProposal: return "StaleProposal";
    case ErrorCode::VerifierFailed: return "VerifierFailed";
    case ErrorCode::InvalidState: return "InvalidState";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

} // namespace lake
