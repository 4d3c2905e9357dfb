#pragma once

#include <stdexcept>
#include <string>

namespace lexqa {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input file did not conform to its line format.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A child process (external scorer or embedder) misbehaved.
class ProtocolError : public Error {
public:
    using Error::Error;
};

}  // namespace lexqa
