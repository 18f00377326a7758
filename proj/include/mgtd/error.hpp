#pragma once

#include <stdexcept>
#include <string>

namespace mgtd {

// Broad failure classes; the CLI maps each one to a distinct exit code.
enum class ErrorKind { config, data, backend };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorKind::config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class BackendError : public Error {
 public:
  explicit BackendError(const std::string& what)
      : Error(ErrorKind::backend, what) {}
};

}  // namespace mgtd
