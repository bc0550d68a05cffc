#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lgdist {

enum class ErrorKind {
    InvalidArgument,
    CoordinateParity,
    ShapeMismatch,
    OutOfRange,
    DegenerateInput,
    PoolTooSmall,
    NonFinite,
    Format,
    Io,
    Checkpoint,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so the CLI can emit a
/// machine-readable error record.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) {
        fail(kind, message);
    }
}

} // namespace lgdist
