#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace wet {

// Base for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

// T * e vanished; only possible for rank-deficient transforms.
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

class UnsupportedConfiguration : public Error {
 public:
  using Error::Error;
};

class GenerationFailure : public Error {
 public:
  GenerationFailure(const std::string& what, double best_condition)
      : Error(what), best_condition_(best_condition) {}

  double best_condition() const noexcept { return best_condition_; }

 private:
  double best_condition_;
};

// Suspect/original lists that cannot be paired up by id.
class IdMismatch : public Error {
 public:
  IdMismatch(const std::string& what, std::vector<std::string> ids)
      : Error(what), ids_(std::move(ids)) {}

  const std::vector<std::string>& ids() const noexcept { return ids_; }

 private:
  std::vector<std::string> ids_;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace wet
