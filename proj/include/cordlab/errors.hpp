// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cordlab {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct Violation {
  std::string rule;
  std::string detail;
};

class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::string instance_id, std::vector<Violation> violations);
  const std::string& instance_id() const noexcept { return instance_id_; }
  const std::vector<Violation>& violations() const noexcept { return violations_; }

 private:
  std::string instance_id_;
  std::vector<Violation> violations_;
};

/// Assembled model input does not fit max_seq_len.
class LengthError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid experiment or generator configuration; names the offending field.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace cordlab
