#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spotv2 {

enum class ErrorKind {
    Format,
    EmptyInput,
    NoData,
    Argument,
    Validation,
    Shape,
    Config,
    Domain,
    Degenerate,
    Singular,
    Internal,
    Numerical,
    Lineage,
    Io,
};

std::string_view to_string(ErrorKind kind);

/// Exception carried across every module boundary. The kind is what the CLI
/// maps to exit codes and the machine-readable error payload.
class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

}  // namespace spotv2
