#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stllm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed on-disk data (feature files, manifests, checkpoints, configs).
class FormatError : public Error {
 public:
  enum class Kind { BadMagic, BadVersion, Truncated, Overflow, TrailingBytes, Io, Parse };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Every run was a blank run and blanks were dropped.
class EmptyCollapseError : public Error {
 public:
  using Error::Error;
};

class EmptyMaskError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Generated ids carry no translation separator.
class MalformedOutputError : public Error {
 public:
  MalformedOutputError(const std::string& what, std::string transcript_so_far)
      : Error(what), transcript_(std::move(transcript_so_far)) {}
  const std::string& transcript_so_far() const noexcept { return transcript_; }

 private:
  std::string transcript_;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t step) : Error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

/// Segment counts that must agree do not.
class EvalMismatchError : public Error {
 public:
  using Error::Error;
};

}  // namespace stllm
