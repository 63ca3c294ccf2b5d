#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ktts {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed jamo run handed to composition.
class CompositionError : public Error {
 public:
  CompositionError(std::size_t index, const std::string& what)
      : Error("composition error at symbol " + std::to_string(index) + ": " + what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Symbol missing from the symbol table.
class EncodingError : public Error {
 public:
  EncodingError(std::string symbol, std::size_t position)
      : Error("symbol '" + symbol + "' at position " + std::to_string(position) +
              " is not in the symbol table"),
        symbol_(std::move(symbol)),
        position_(position) {}
  const std::string& symbol() const noexcept { return symbol_; }
  std::size_t position() const noexcept { return position_; }

 private:
  std::string symbol_;
  std::size_t position_;
};

/// Bracketed-tree syntax error; offset counts code points from the start of input.
class ParseError : public Error {
 public:
  ParseError(std::size_t offset, const std::string& what)
      : Error("parse error at offset " + std::to_string(offset) + ": " + what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class AudioError : public Error {
 public:
  using Error::Error;
};

class RateMismatchError : public AudioError {
 public:
  RateMismatchError(int expected, int actual)
      : AudioError("sample rate " + std::to_string(actual) + " Hz does not match expected " +
                   std::to_string(expected) + " Hz"),
        expected_(expected),
        actual_(actual) {}
  int expected() const noexcept { return expected_; }
  int actual() const noexcept { return actual_; }

 private:
  int expected_;
  int actual_;
};

/// Non-finite values; `where` names the layer or loss term.
class NumericError : public Error {
 public:
  explicit NumericError(std::string where)
      : Error("non-finite values in " + where), where_(std::move(where)) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

}  // namespace ktts
