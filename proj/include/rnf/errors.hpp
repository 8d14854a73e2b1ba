#pragma once

#include <stdexcept>
#include <string>

namespace rnf {

// Base of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad arguments, out-of-domain parameters, malformed configs.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

// Operand shapes do not line up (vector lengths, layer widths, trace depth).
class ShapeError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

// File could not be read/written or its contents could not be parsed.
class IoError : public Error {
public:
    using Error::Error;
};

// A calibration file was produced for a different model.
class ModelMismatch : public Error {
public:
    using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

} // namespace rnf
