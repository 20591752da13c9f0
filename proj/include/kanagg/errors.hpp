#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kanagg {

/// Invalid network / training / experiment configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised while reading a delimited table. Row and column are 1-based; 0
/// means "not applicable" (e.g. an empty file has no row).
class IngestionError : public std::runtime_error {
 public:
  IngestionError(const std::string& what, std::size_t row = 0, std::size_t column = 0)
      : std::runtime_error(format(what, row, column)), row_(row), column_(column) {}

  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  static std::string format(const std::string& what, std::size_t row, std::size_t column) {
    std::string out = what;
    if (row != 0) out += " (row " + std::to_string(row);
    if (row != 0 && column != 0) out += ", column " + std::to_string(column);
    if (row != 0) out += ")";
    return out;
  }

  std::size_t row_;
  std::size_t column_;
};

class PreprocessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A forward trace was handed to backward() for a network it does not belong to.
class ConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace kanagg
