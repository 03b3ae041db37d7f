#pragma once

#include <stdexcept>
#include <string>

namespace reid3d {

// Malformed or inconsistent input data: bad file contents, schema version
// mismatches, descriptor dimension conflicts, out-of-range indices.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// File could not be parsed at all. Subtype of DataError so callers that
// only care about "the data is bad" can catch the base.
class ParseError : public DataError {
 public:
  explicit ParseError(const std::string& what) : DataError(what) {}
};

// Numeric breakdown: non-finite intermediates, failed factorizations.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Procedural generation could not satisfy its constraints
// (e.g. rejection sampling exhausted its attempt budget).
class GenerationError : public std::runtime_error {
 public:
  explicit GenerationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace reid3d
