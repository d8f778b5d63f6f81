#pragma once

#include <stdexcept>
#include <string>

namespace charseg {

/// Failure categories. The numeric values double as CLI exit codes.
enum class ErrorKind : int {
  Usage = 2,
  Io = 3,
  ModelMismatch = 4,
  Diverged = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Violated precondition of a library call (bad index, wrong dimensions).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

/// Malformed input data: markup, dump files, configuration values.
class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

class VocabError : public Error {
 public:
  explicit VocabError(const std::string& what) : Error(ErrorKind::ModelMismatch, what) {}
};

class DivergedError : public Error {
 public:
  explicit DivergedError(const std::string& what) : Error(ErrorKind::Diverged, what) {}
};

}  // namespace charseg
