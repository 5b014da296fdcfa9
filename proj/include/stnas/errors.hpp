#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace stnas {

// Error categories map to process exit codes in the CLI.
enum class ErrorCategory : int {
    internal = 1,
    usage = 2,
    config = 3,
    numeric = 4,
    io = 5,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCategory cat, std::string msg) : std::runtime_error(std::move(msg)), category_(cat) {}
    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

// Tensor/operator shape mismatch; message carries the offending node path.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& node_path, const std::string& detail)
        : Error(ErrorCategory::config, node_path + ": " + detail) {}
};

// Non-finite values or other numeric failures at a named node.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& node_path, const std::string& detail)
        : Error(ErrorCategory::numeric, node_path + ": " + detail) {}
};

// API called out of order (e.g. backward before forward).
class StateError : public Error {
public:
    explicit StateError(const std::string& detail) : Error(ErrorCategory::internal, detail) {}
};

// Invalid configuration or contract violation.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& detail) : Error(ErrorCategory::config, detail) {}
};

// Malformed input file; carries the byte offset where parsing failed.
class FormatError : public Error {
public:
    FormatError(const std::string& detail, std::uint64_t byte_offset)
        : Error(ErrorCategory::io, detail + " (byte offset " + std::to_string(byte_offset) + ")"),
          byte_offset_(byte_offset) {}
    std::uint64_t byte_offset() const noexcept { return byte_offset_; }

private:
    std::uint64_t byte_offset_;
};

// Training produced a non-finite loss; carries the iteration index.
class DivergedError : public Error {
public:
    DivergedError(const std::string& detail, int iteration)
        : Error(ErrorCategory::numeric, detail + " (iteration " + std::to_string(iteration) + ")"),
          iteration_(iteration) {}
    int iteration() const noexcept { return iteration_; }

private:
    int iteration_;
};

}  // namespace stnas
