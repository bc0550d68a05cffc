#include "lgdist/error.hpp"

namespace lgdist {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidArgument:
        return "invalid-argument";
    case ErrorKind::CoordinateParity:
        return "coordinate-parity";
    case ErrorKind::ShapeMismatch:
        return "shape-mismatch";
    case ErrorKind::OutOfRange:
        return "out-of-range";
    case ErrorKind::DegenerateInput:
        return "degenerate-input";
    case ErrorKind::PoolTooSmall:
        return "pool-too-small";
    case ErrorKind::NonFinite:
        return "non-finite";
    case ErrorKind::Format:
        return "format";
    case ErrorKind::Io:
        return "io";
    case ErrorKind::Checkpoint:
        return "checkpoint";
    }
    return "unknown";
}

} // namespace lgdist
