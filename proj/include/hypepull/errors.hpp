#pragma once

#include <stdexcept>
#include <string>

namespace hypepull {

/// Error categories map onto the CLI exit codes (2 config, 3 data, 4 numeric).
enum class ErrorKind { Config, Data, Numeric, Domain, Dimension, Unsupported };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::Config, w) {}
};
struct DataError : Error {
  explicit DataError(const std::string& w) : Error(ErrorKind::Data, w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorKind::Numeric, w) {}
};
struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error(ErrorKind::Domain, w) {}
};
struct DimensionError : Error {
  explicit DimensionError(const std::string& w) : Error(ErrorKind::Dimension, w) {}
};
struct UnsupportedError : Error {
  explicit UnsupportedError(const std::string& w) : Error(ErrorKind::Unsupported, w) {}
};

}  // namespace hypepull
