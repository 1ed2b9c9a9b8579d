#pragma once

#include <stdexcept>
#include <string>

namespace discover {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad or inconsistent configuration (CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Shape/dimension mismatches and malformed inputs.
class InputError : public Error {
public:
    using Error::Error;
};

/// Non-finite values or undefined numeric operations.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Batch too small or malformed for the requested estimate.
class BatchError : public Error {
public:
    using Error::Error;
};

/// Knowledge bank missing entries or inconsistent with the corpus.
class BankError : public Error {
public:
    using Error::Error;
};

class SplitError : public Error {
public:
    using Error::Error;
};

class ClusteringError : public Error {
public:
    using Error::Error;
};

class SamplingError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

/// Malformed or unreadable files.
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace discover
