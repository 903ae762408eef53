#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace meter {

/// Broad failure class. Drives CLI exit codes and HTTP status mapping.
enum class ErrorKind {
    validation,
    authorization,
    not_found,
    state,
    conflict,
    storage,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library. `code()` is a stable machine-readable
/// identifier such as "undersized_test_set" or "no_revert_budget".
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string code, const std::string& message)
        : std::runtime_error(message), kind_(kind), code_(std::move(code)) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& code() const noexcept { return code_; }

private:
    ErrorKind kind_;
    std::string code_;
};

[[noreturn]] inline void fail(ErrorKind kind, std::string code, const std::string& message) {
    throw Error(kind, std::move(code), message);
}

[[noreturn]] inline void invalid(std::string code, const std::string& message) {
    throw Error(ErrorKind::validation, std::move(code), message);
}

} // namespace meter
