#pragma once

#include <stdexcept>
#include <string>

namespace s5cl {

enum class ErrorCode {
    invalid_argument = 1,
    io = 2,
    runtime = 3,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message)
{
    throw Error(code, message);
}

[[noreturn]] inline void fail_invalid(const std::string& message)
{
    throw Error(ErrorCode::invalid_argument, message);
}

} // namespace s5cl
