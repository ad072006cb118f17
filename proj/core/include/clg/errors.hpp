#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace clg {

// Base of every error thrown by the library. Subclasses name the failure
// category so callers (and tests) can tell a bad shape from a bad file.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class LayoutError : public Error {
 public:
  using Error::Error;
};

class ScheduleError : public Error {
 public:
  using Error::Error;
};

class VocabularyError : public Error {
 public:
  using Error::Error;
};

class SpecError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class CorruptionError : public Error {
 public:
  CorruptionError(const std::string& what, std::uint64_t byte_offset)
      : Error(what + " (at byte offset " + std::to_string(byte_offset) + ")"),
        offset_(byte_offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Raised by the trainer when a loss term becomes NaN/inf.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& term, std::uint64_t iteration)
      : Error("non-finite loss term '" + term + "' at iteration " + std::to_string(iteration)),
        term_(term),
        iteration_(iteration) {}
  const std::string& term() const noexcept { return term_; }
  std::uint64_t iteration() const noexcept { return iteration_; }

 private:
  std::string term_;
  std::uint64_t iteration_;
};

}  // namespace clg
