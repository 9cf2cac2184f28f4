#pragma once

#include <stdexcept>
#include <string>

namespace pregu {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Caller violated a precondition (bad argument, malformed value).
class InputError : public Error {
public:
    using Error::Error;
};

// Operation requires a backend capability that is not available.
class CapabilityError : public Error {
public:
    using Error::Error;
};

// Transport or server-side failure talking to a model backend.
class BackendError : public Error {
public:
    BackendError(const std::string& what, bool retryable)
        : Error(what), retryable_(retryable) {}
    bool retryable() const { return retryable_; }

private:
    bool retryable_;
};

// Linear algebra broke down (singular Gram matrix, etc).
class NumericalError : public Error {
public:
    using Error::Error;
};

// Dataset file unusable: unreadable, empty, or too many bad lines.
class DatasetError : public Error {
public:
    using Error::Error;
};

// A decode produced no parseable answer where one was required.
class ExtractionError : public Error {
public:
    using Error::Error;
};

}  // namespace pregu
