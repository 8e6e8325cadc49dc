#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace covlab {

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorKind {
    usage = 2,     // bad arguments / flag combinations
    data = 3,      // malformed or inconsistent input data
    capacity = 4,  // requested more than the instance can provide
    internal = 5,  // invariant violation; always a bug
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}

    ErrorKind kind() const { return kind_; }
    int exit_code() const { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

// Parse failures carry the byte offset of the offending character.
enum class ParseFault { malformed_token, truncated_line, missing_end_marker, arity_mismatch, unknown_format };

class ParseError : public Error {
public:
    ParseError(ParseFault fault, std::size_t byte_offset, const std::string& msg)
        : Error(ErrorKind::data, msg + " (byte " + std::to_string(byte_offset) + ")"),
          fault_(fault),
          byte_offset_(byte_offset) {}

    ParseFault fault() const { return fault_; }
    std::size_t byte_offset() const { return byte_offset_; }

private:
    ParseFault fault_;
    std::size_t byte_offset_;
};

}  // namespace covlab
