#pragma once

#include <stdexcept>
#include <string>

namespace eqr {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Arity, shape or channel-count mismatch.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Index or value outside its admissible range.
class RangeError : public Error {
public:
    using Error::Error;
};

// Object too large to materialize or value beyond float headroom.
class CapacityError : public Error {
public:
    using Error::Error;
};

// Malformed user input (empty dataset, bad config, bad manifest).
class InputError : public Error {
public:
    using Error::Error;
};

// A documented precondition does not hold (e.g. periodic dataset).
class PreconditionError : public Error {
public:
    using Error::Error;
};

// NaN or infinity surfaced during a computation.
class NumericError : public Error {
public:
    using Error::Error;
};

// Malformed file contents. Carries the byte offset where decoding stopped.
class DecodeError : public Error {
public:
    DecodeError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

}  // namespace eqr
