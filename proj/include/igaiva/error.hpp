#pragma once

#include <stdexcept>
#include <string>

namespace igaiva {

/// Failure categories. The CLI maps them onto its exit codes.
enum class ErrorKind {
    usage,      // bad arguments or preconditions supplied by the caller
    data,       // malformed or inconsistent input data
    generator,  // text generator / network failure
    internal,   // broken invariant
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct UsageError : Error {
    explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

struct DataError : Error {
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct GeneratorError : Error {
    explicit GeneratorError(const std::string& what) : Error(ErrorKind::generator, what) {}
};

/// Raised when a selection would hand a test-split id to training or generation.
struct LeakageError : Error {
    explicit LeakageError(const std::string& what) : Error(ErrorKind::internal, what) {}
};

}  // namespace igaiva
