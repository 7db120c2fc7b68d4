#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace conceptseg {

enum class ErrorCode {
    InvalidArgument,
    DimensionMismatch,
    MalformedEncoding,
    InvalidPhrase,
    InvalidPrompt,
    NoTarget,
    SchemaViolation,
    MissingFile,
    DuplicateCase,
    AlignmentError,
    SplitAlreadyAssigned,
    UnknownDataset,
    RegistryMiss,
    InfeasiblePacking,
    UnsupportedMode,
    Transport,
    Timeout,
    MalformedResponse,
    BackendFailure,
    ReplayMiss,
    ActionParse,
    EmptyGroup,
    DatasetMismatch,
    CaseSetMismatch,
    Io,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

} // namespace conceptseg
