#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ndgpu {

enum class ErrorCode {
    IncompatibleShapes,
    NotContiguous,
    CountMismatch,
    BadPermutation,
    UnsupportedRank,
    InvalidArgument,
    NoAdapter,
    AllocTooLarge,
    OutOfMemory,
    DoubleFree,
    UseAfterFree,
    DeviceLost,
    ParseError,
    ShaderCompileError,
    DTypeMismatch,
    ShapeMismatch,
    IntegerDivisionUnsupported,
    AxisOutOfRange,
    NonFiniteLoss,
    IoError,
    BindError,
    ProtocolError,
};

std::string_view to_string(ErrorCode code);

// Every library failure is reported as an Error carrying a machine-checkable code.
class Error : public std::runtime_error {
 public:
    Error(ErrorCode code, const std::string& message)
            : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

 private:
    ErrorCode code_;
};

// Raised by the kernel parameter-declaration parser; position is a byte offset into the input.
class ParseError : public Error {
 public:
    ParseError(std::size_t position, const std::string& message)
            : Error(ErrorCode::ParseError, "at " + std::to_string(position) + ": " + message),
              position_(position),
              detail_(message) {}

    std::size_t position() const noexcept { return position_; }
    const std::string& detail() const noexcept { return detail_; }

 private:
    std::size_t position_;
    std::string detail_;
};

// Raised when the shader compiler rejects a module; diagnostics() is the compiler output verbatim.
class ShaderCompileError : public Error {
 public:
    explicit ShaderCompileError(std::string diagnostics)
            : Error(ErrorCode::ShaderCompileError, diagnostics), diagnostics_(std::move(diagnostics)) {}

    const std::string& diagnostics() const noexcept { return diagnostics_; }

 private:
    std::string diagnostics_;
};

}  // namespace ndgpu
