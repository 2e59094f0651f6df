#pragma once

#include <stdexcept>
#include <string>

namespace bitlab {

// Requested enumeration exceeds the configured instance-size limit.
class CapacityError : public std::runtime_error {
 public:
  explicit CapacityError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input file; message carries the offending line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Bad or missing configuration entry; message carries the key path.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& key, const std::string& what)
      : std::runtime_error("config key '" + key + "': " + what), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

// Too few or degenerate data points for the requested statistic.
class StatisticsError : public std::runtime_error {
 public:
  explicit StatisticsError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace bitlab
