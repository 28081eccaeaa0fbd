// Copyright (c) 2026 InvNorm authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace invnorm {

// Stable error taxonomy. Codes are mirrored one-to-one by the C API status
// enum, so the numeric values must not be reordered.
enum class ErrorCode : int {
    Shape = 1,
    Numerical = 2,
    SingularJacobian = 3,
    Size = 4,
    SingularLayer = 5,
    State = 6,
    Format = 7,
    Config = 8,
    Training = 9,
    Io = 10,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

#define INVNORM_DEFINE_ERROR(NAME, CODE)                                          \
    class NAME : public Error {                                                   \
    public:                                                                       \
        explicit NAME(const std::string& msg) : Error(ErrorCode::CODE, msg) {}    \
    }

INVNORM_DEFINE_ERROR(ShapeError, Shape);
INVNORM_DEFINE_ERROR(NumericalError, Numerical);
INVNORM_DEFINE_ERROR(SingularJacobianError, SingularJacobian);
INVNORM_DEFINE_ERROR(SizeError, Size);
INVNORM_DEFINE_ERROR(SingularLayerError, SingularLayer);
INVNORM_DEFINE_ERROR(StateError, State);
INVNORM_DEFINE_ERROR(FormatError, Format);
INVNORM_DEFINE_ERROR(ConfigError, Config);
INVNORM_DEFINE_ERROR(TrainingError, Training);
INVNORM_DEFINE_ERROR(IoError, Io);

#undef INVNORM_DEFINE_ERROR

}  // namespace invnorm
