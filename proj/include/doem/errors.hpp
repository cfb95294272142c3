#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace doem {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller handed us something that breaks a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConditionSViolation : public Error {
 public:
  using Error::Error;
};

class IdxError : public IoError {
 public:
  enum class Kind { BadMagic, Truncated, DimensionOverflow };

  IdxError(Kind kind, std::uint64_t offset, const std::string& what)
      : IoError(what), kind_(kind), offset_(offset) {}

  Kind kind() const { return kind_; }
  std::uint64_t offset() const { return offset_; }

 private:
  Kind kind_;
  std::uint64_t offset_;
};

// Checkpoint or dump whose layout does not match what the reader expects.
class SchemaError : public IoError {
 public:
  SchemaError(std::string field, const std::string& what)
      : IoError(what), field_(std::move(field)) {}

  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace doem
