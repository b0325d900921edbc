// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace markboard {

/// Operand shapes do not chain (bad matmul dims, mismatched elementwise args, ...).
struct DimensionError : std::invalid_argument {
    explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

/// A value is outside its documented domain (class index out of range, patch out of bounds, ...).
struct DomainError : std::invalid_argument {
    explicit DomainError(const std::string& what) : std::invalid_argument(what) {}
};

/// An API precondition was violated (backward on a non-scalar, clean sample in a trigger batch, ...).
struct ContractError : std::logic_error {
    explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

/// A training phase missed its configured floor; the message names the phase (and bit, if any).
struct TrainingFailure : std::runtime_error {
    explicit TrainingFailure(const std::string& what) : std::runtime_error(what) {}
};

/// Artifact/registry file could not be loaded; the message names the cause.
struct LoadError : std::runtime_error {
    explicit LoadError(const std::string& what) : std::runtime_error(what) {}
};

/// A NaN/Inf escaped into parameters or losses.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Config file failed schema validation; the message names the field.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace markboard
