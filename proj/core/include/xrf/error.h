#pragma once

#include <stdexcept>
#include <string>

namespace xrf {

class Error : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

/// Incompatible tensor extents.
class DimensionError : public Error {
 public:
    using Error::Error;
};

/// A forward value or gradient became NaN/Inf.
class NonFiniteError : public Error {
 public:
    using Error::Error;
};

class ConfigError : public Error {
 public:
    using Error::Error;
};

/// Malformed or unreadable input data (CSV, PNG, checkpoint).
class DataError : public Error {
 public:
    using Error::Error;
};

/// A class has only positives or only negatives, so no ROC curve exists.
class DegenerateClassError : public DataError {
 public:
    using DataError::DataError;
};

class UnsupportedFamilyError : public Error {
 public:
    using Error::Error;
};

/// Training loss went non-finite; the best checkpoint written so far is kept.
class DivergenceError : public Error {
 public:
    using Error::Error;
};

}  // namespace xrf
