#include "spotv2/error.hpp"

namespace spotv2 {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Format: return "format";
        case ErrorKind::EmptyInput: return "empty_input";
        case ErrorKind::NoData: return "no_data";
        case ErrorKind::Argument: return "argument";
        case ErrorKind::Validation: return "validation";
        case ErrorKind::Shape: return "shape";
        case ErrorKind::Config: return "config";
        case ErrorKind::Domain: return "domain";
        case ErrorKind::Degenerate: return "degenerate";
        case ErrorKind::Singular: return "singular";
        case ErrorKind::Internal: return "internal";
        case ErrorKind::Numerical: return "numerical";
        case ErrorKind::Lineage: return "lineage";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

}  // namespace spotv2
