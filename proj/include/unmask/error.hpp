#pragma once

#include <stdexcept>
#include <string>

namespace unmask {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DivisionByZero : public Error {
public:
    using Error::Error;
};

/// Wrong number of arguments, mismatched shapes, or overlapping index sets.
class ArityError : public Error {
public:
    using Error::Error;
};

/// Fewer interpolation points than the code dimension.
class Underdetermined : public Error {
public:
    using Error::Error;
};

/// Extra interpolation points disagree with the interpolating polynomial.
class InconsistentError : public Error {
public:
    using Error::Error;
};

/// Requested sizes cannot be realized (e.g. more steps than positions).
class InfeasibleError : public Error {
public:
    using Error::Error;
};

/// Conditioning on an event of probability zero.
class ZeroContextError : public Error {
public:
    using Error::Error;
};

class RankError : public Error {
public:
    using Error::Error;
};

/// An exhaustive computation would exceed its configured size cap.
class CapacityError : public Error {
public:
    using Error::Error;
};

}  // namespace unmask
