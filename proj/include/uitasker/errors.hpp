#pragma once

#include <stdexcept>
#include <string>

namespace uitasker {

// Stable error identifiers, shared with the C API layer.
enum class ErrorCode {
    MalformedSnapshot = 1,
    BudgetExceeded = 2,
    NoCandidates = 3,
    UnparseableResponse = 4,
    UnknownElement = 5,
    ActionNotAllowed = 6,
    Timeout = 7,
    TransportError = 8,
    RateLimited = 9,
    ScriptExhausted = 10,
    ScriptMismatch = 11,
    SpecError = 12,
    NoPath = 13,
    UnknownNode = 14,
    CorruptStore = 15,
    SubstitutionRefused = 16,
    EvalError = 17,
    InvalidArgument = 18,
    IoError = 19,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

#define UITASKER_DEFINE_ERROR(NAME)                                \
    class NAME : public Error {                                    \
    public:                                                        \
        explicit NAME(const std::string& what)                     \
            : Error(ErrorCode::NAME, what) {}                      \
    }

UITASKER_DEFINE_ERROR(MalformedSnapshot);
UITASKER_DEFINE_ERROR(BudgetExceeded);
UITASKER_DEFINE_ERROR(NoCandidates);
UITASKER_DEFINE_ERROR(UnparseableResponse);
UITASKER_DEFINE_ERROR(UnknownElement);
UITASKER_DEFINE_ERROR(ActionNotAllowed);
UITASKER_DEFINE_ERROR(Timeout);
UITASKER_DEFINE_ERROR(TransportError);
UITASKER_DEFINE_ERROR(RateLimited);
UITASKER_DEFINE_ERROR(ScriptExhausted);
UITASKER_DEFINE_ERROR(ScriptMismatch);
UITASKER_DEFINE_ERROR(SpecError);
UITASKER_DEFINE_ERROR(NoPath);
UITASKER_DEFINE_ERROR(UnknownNode);
UITASKER_DEFINE_ERROR(CorruptStore);
UITASKER_DEFINE_ERROR(SubstitutionRefused);
UITASKER_DEFINE_ERROR(EvalError);
UITASKER_DEFINE_ERROR(InvalidArgument);
UITASKER_DEFINE_ERROR(IoError);

#undef UITASKER_DEFINE_ERROR

}  // namespace uitasker
