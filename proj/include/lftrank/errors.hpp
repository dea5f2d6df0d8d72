// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace lftrank {

// Validation / data problems map to CLI exit code 1; InvariantError maps to 2.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
    using Error::Error;
};

struct ContractError : Error {
    using Error::Error;
};

struct LengthError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

// Checkpoint container and text-format parse failures.
struct FormatError : Error {
    using Error::Error;
};

struct ScheduleError : Error {
    using Error::Error;
};

struct StaleCacheError : Error {
    using Error::Error;
};

// Non-finite loss or gradient during training.
struct NumericError : Error {
    using Error::Error;
};

struct InvariantError : std::logic_error {
    using std::logic_error::logic_error;
};

}  // namespace lftrank
