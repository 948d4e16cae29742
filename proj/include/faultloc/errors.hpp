#pragma once

#include <stdexcept>
#include <string>

namespace faultloc {

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorKind : int {
    usage = 2,       // bad command line / bad arguments
    validation = 3,  // config or invariant violation
    data = 4,        // missing/corrupt files, schema mismatch, starved cells
    numerical = 5,   // solver failure, instability
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message)
        : std::runtime_error(std::move(message)), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail_usage(const std::string& msg) { throw Error(ErrorKind::usage, msg); }
[[noreturn]] inline void fail_validation(const std::string& msg) { throw Error(ErrorKind::validation, msg); }
[[noreturn]] inline void fail_data(const std::string& msg) { throw Error(ErrorKind::data, msg); }
[[noreturn]] inline void fail_numerical(const std::string& msg) { throw Error(ErrorKind::numerical, msg); }

}  // namespace faultloc
