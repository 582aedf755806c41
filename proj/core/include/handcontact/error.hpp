#pragma once

#include <stdexcept>
#include <string>

namespace hc {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes:
// usage errors are handled by the argument parser, DataError -> 3,
// NumericError -> 4.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& msg) : Error("dimension error: " + msg) {}
};

class IndexError : public Error {
public:
    explicit IndexError(const std::string& msg) : Error("index error: " + msg) {}
};

class InvalidInputError : public Error {
public:
    explicit InvalidInputError(const std::string& msg) : Error("invalid input: " + msg) {}
};

// Operation is well-posed only under a precondition the input violates
// (e.g. signed distance on an open mesh).
class CapabilityError : public Error {
public:
    explicit CapabilityError(const std::string& msg) : Error("capability error: " + msg) {}
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg) : Error("parse error: " + msg) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error("numeric error: " + msg) {}
};

// A randomized generator could not produce a valid sample (e.g. a grasp on
// an unreachable object); callers skip the sample rather than die.
class GenerationFailure : public Error {
public:
    explicit GenerationFailure(const std::string& msg) : Error("generation failure: " + msg) {}
};

}  // namespace hc
