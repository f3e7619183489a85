#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cws {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Input is empty or too short to be meaningful (empty token list, empty corpus).
class DegenerateInputError : public Error {
  public:
    using Error::Error;
};

class ShapeError : public Error {
  public:
    using Error::Error;
};

class ConfigError : public Error {
  public:
    using Error::Error;
};

class ValidationError : public Error {
  public:
    using Error::Error;
};

class LookupError : public Error {
  public:
    using Error::Error;
};

/// A closure that should be a pure function returned different values.
class DeterminismError : public Error {
  public:
    using Error::Error;
};

class StateError : public Error {
  public:
    using Error::Error;
};

class UnsupportedStrategyError : public Error {
  public:
    using Error::Error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

/// Malformed input line; carries the 1-based line number.
class ParseError : public Error {
  public:
    ParseError(std::string const& source, std::size_t line, std::string const& what)
        : Error(source + ":" + std::to_string(line) + ": " + what), m_line(line)
    {}

    [[nodiscard]] std::size_t line() const noexcept { return m_line; }

  private:
    std::size_t m_line;
};

}  // namespace cws
