#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dsconv {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor extents or layouts disagree.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Non-finite or otherwise inadmissible numeric input.
class ValueError : public Error {
public:
    using Error::Error;
};

// Invalid bit width, block size, stride or similar parameter.
class ConfigError : public Error {
public:
    using Error::Error;
};

// A scale fit was requested for a block with no usable signal (all-zero wq).
class DegenerateBlockError : public Error {
public:
    using Error::Error;
};

// Malformed serialized artifact. Carries the byte offset where parsing failed.
class FormatError : public Error {
public:
    explicit FormatError(const std::string& msg, std::size_t byte_offset = 0)
        : Error(msg + " (at byte offset " + std::to_string(byte_offset) + ")"),
          byte_offset_(byte_offset) {}

    std::size_t byte_offset() const noexcept { return byte_offset_; }

private:
    std::size_t byte_offset_;
};

}  // namespace dsconv
