#pragma once

#include <stdexcept>
#include <string>

namespace volta {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit the operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid hyperparameters or CLI configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Dataset content problems: missing classes, too few samples, degenerate batches.
class DataError : public Error {
public:
    using Error::Error;
};

class LabelError : public DataError {
public:
    using DataError::DataError;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class DecodeError : public IoError {
public:
    using IoError::IoError;
};

class CheckpointError : public IoError {
public:
    enum class Kind {
        bad_magic,
        version_mismatch,
        truncated_blob,
        manifest_mismatch,
        architecture_mismatch,
    };

    CheckpointError(Kind kind, const std::string& what) : IoError(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

}  // namespace volta
