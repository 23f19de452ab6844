#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qaemb {

enum class ErrorCode {
    ZeroQuestionsParsed,
    EmptySubset,
    EmptyBank,
    MalformedRecord,
    UnknownTemplate,
    TransportError,
    AuthError,
    ShapeMismatch,
    BankMismatch,
    IncompleteRules,
    InvalidArgument,
    EmptyDataset,
    IndexOutOfRange,
    EmptyTrack,
    RankDeficient,
    NonFinite,
    DegenerateFold,
    NotConverged,
    UnknownDoc,
    NoPositives,
    DegenerateClasses,
    EmptyTraining,
    ConfigInvalid,
    MissingInput,
    IoError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::ZeroQuestionsParsed: return "ZeroQuestionsParsed";
    case ErrorCode::EmptySubset: return "EmptySubset";
    case ErrorCode::EmptyBank: return "EmptyBank";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::UnknownTemplate: return "UnknownTemplate";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::AuthError: return "AuthError";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::BankMismatch: return "BankMismatch";
    case ErrorCode::IncompleteRules: return "IncompleteRules";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::EmptyTrack: return "EmptyTrack";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::DegenerateFold: return "DegenerateFold";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::UnknownDoc: return "UnknownDoc";
    case ErrorCode::NoPositives: return "NoPositives";
    case ErrorCode::DegenerateClasses: return "DegenerateClasses";
    case ErrorCode::EmptyTraining: return "EmptyTraining";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::MissingInput: return "MissingInput";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so the
/// CLI can emit a machine-readable record.
class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), m_code(code), m_message(message)
    {}

    ErrorCode code() const noexcept { return m_code; }
    /// The message without the code prefix.
    const std::string& message() const noexcept { return m_message; }

  private:
    ErrorCode m_code;
    std::string m_message;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message)
{
    throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message)
{
    if (!condition) {
        fail(code, message);
    }
}

}  // namespace qaemb
