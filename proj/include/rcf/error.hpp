#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace rcf {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or map dimensions disagree with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed or incompatible file contents (weights, configs, maps, images).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Bad argument value (out of range, empty list, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Training hit a non-finite loss.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, long iteration, std::string image_id)
      : Error(what), iteration_(iteration), image_id_(std::move(image_id)) {}

  long iteration() const noexcept { return iteration_; }
  const std::string& image_id() const noexcept { return image_id_; }

 private:
  long iteration_;
  std::string image_id_;
};

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << std::forward<Args>(args));
  return oss.str();
}

}  // namespace detail

}  // namespace rcf
