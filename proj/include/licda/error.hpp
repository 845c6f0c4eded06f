#pragma once

#include <stdexcept>
#include <string>

namespace licda {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/layer shape disagreement.
struct DimError : Error {
    explicit DimError(const std::string& msg) : Error("dimension error: " + msg) {}
};

// A documented precondition of an operation was violated.
struct ContractError : Error {
    explicit ContractError(const std::string& msg) : Error("contract error: " + msg) {}
};

// Bad run configuration (missing dataset, empty domain, invalid option).
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("configuration error: " + msg) {}
};

// Dataset / image file problems.
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error("data error: " + msg) {}
};

// Model produced non-finite values or is in an invalid state.
struct CodecError : Error {
    explicit CodecError(const std::string& msg) : Error("codec error: " + msg) {}
};

// Malformed or truncated bitstream.
struct FramingError : Error {
    explicit FramingError(const std::string& msg) : Error("framing error: " + msg) {}
};

// Stream and checkpoint disagree (version, K, ...).
struct CompatError : Error {
    explicit CompatError(const std::string& msg) : Error("compatibility error: " + msg) {}
};

}  // namespace licda
