#pragma once

#include <stdexcept>
#include <string>

namespace mnarfuse {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data: bad CSV, schema violations, unknown levels.
class DataError : public Error {
 public:
  using Error::Error;
};

// A least-squares design or linear system without full column rank.
class RankDeficientError : public Error {
 public:
  RankDeficientError(const std::string& what, std::size_t column)
      : Error(what), column_(column) {}
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

// Caller violated a documented precondition (absent variable, bad config).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace mnarfuse
