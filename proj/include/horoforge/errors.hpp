#pragma once

#include <stdexcept>
#include <string>

namespace horoforge {

// Exit code 2 for bad input, 3 for numerical failure.
class Error : public std::runtime_error {
public:
    Error(const std::string& kind, const std::string& what, int code)
        : std::runtime_error(kind + ": " + what), kind_(kind), code_(code) {}
    const std::string& kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return code_; }

private:
    std::string kind_;
    int code_;
};

#define HOROFORGE_ERROR(Name, code)                                              \
    class Name : public Error {                                                  \
    public:                                                                      \
        explicit Name(const std::string& what) : Error(#Name, what, code) {}     \
    };

HOROFORGE_ERROR(ValidationError, 2)
HOROFORGE_ERROR(PreconditionError, 2)
HOROFORGE_ERROR(DegenerateError, 2)
HOROFORGE_ERROR(GeometryError, 2)
HOROFORGE_ERROR(IOError, 2)
HOROFORGE_ERROR(DomainError, 3)
HOROFORGE_ERROR(NumericalError, 3)
HOROFORGE_ERROR(PoleError, 3)
HOROFORGE_ERROR(StepError, 3)
HOROFORGE_ERROR(NoConvergence, 3)
HOROFORGE_ERROR(LogBranchError, 3)
HOROFORGE_ERROR(InvariantViolation, 3)

#undef HOROFORGE_ERROR

} // namespace horoforge
