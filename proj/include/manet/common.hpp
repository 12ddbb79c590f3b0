// Copyright (c) 2026 The manet authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace manet {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor/layer shape violations. Messages name the offending dimension.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Bad configuration values (unknown modality, invalid spec fields, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Non-finite values where finite numbers are required.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Rejection sampling could not satisfy its constraints.
class SamplingError : public Error {
public:
    using Error::Error;
};

/// Filesystem and format failures.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace manet
