#pragma once

#include <stdexcept>
#include <string>

namespace mulsa {

// Root of every error raised by the library. Subclasses name the failure
// category so callers can react without parsing messages.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidActionError : public Error {
 public:
  using Error::Error;
};

class NoDataError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  FormatError(const std::string& message, std::string path)
      : Error(message + " [" + path + "]"), path_(std::move(path)) {}
  explicit FormatError(const std::string& message) : Error(message) {}

  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class RateMismatchError : public Error {
 public:
  using Error::Error;
};

class EpisodeFinishedError : public Error {
 public:
  using Error::Error;
};

class NotAvailableError : public Error {
 public:
  using Error::Error;
};

class VersionMismatchError : public Error {
 public:
  using Error::Error;
};

}  // namespace mulsa
