#pragma once

#include <stdexcept>
#include <string>

namespace longboot {

/// Process exit codes used by the command line front end.
enum class ExitCode : int {
    ok = 0,
    usage = 2,
    validation = 3,
    numerical = 4,
};

/**
 * Base error. The message is prefixed with the module that raised it so that
 * errors surfacing at the CLI read as "data_core: duplicate sample id 'S1'".
 */
class Error : public std::runtime_error {
public:
    Error(std::string module, const std::string& message, ExitCode code)
        : std::runtime_error(module + ": " + message), module_(std::move(module)), code_(code) {}

    [[nodiscard]] const std::string& module() const noexcept { return module_; }
    [[nodiscard]] ExitCode code() const noexcept { return code_; }

private:
    std::string module_;
    ExitCode code_;
};

/// Input text could not be parsed (bad row/column, non-numeric cell).
class MalformedInput : public Error {
public:
    MalformedInput(std::string module, const std::string& message)
        : Error(std::move(module), message, ExitCode::validation) {}
};

/// Parsed input violates a domain invariant.
class ValidationError : public Error {
public:
    ValidationError(std::string module, const std::string& message)
        : Error(std::move(module), message, ExitCode::validation) {}
};

/// A numerical routine could not produce a finite answer.
class NumericalError : public Error {
public:
    NumericalError(std::string module, const std::string& message)
        : Error(std::move(module), message, ExitCode::numerical) {}
};

class UsageError : public Error {
public:
    UsageError(std::string module, const std::string& message)
        : Error(std::move(module), message, ExitCode::usage) {}
};

}  // namespace longboot
