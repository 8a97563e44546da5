#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace relosc {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the domain of a transform (e.g. luminal velocity).
class DomainError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Non-finite intermediate or nondifferentiable point during evaluation.
class EvalError : public Error {
public:
    using Error::Error;
};

/// A precondition or structural invariant on user input does not hold.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Certificate hypotheses are not satisfied where a certified object is required.
class CertificateError : public Error {
public:
    using Error::Error;
};

/// Tangent boundary point whose quadratic Taylor coefficient vanishes.
class TangencyError : public Error {
public:
    using Error::Error;
};

class IntegrationError : public Error {
public:
    using Error::Error;
};

/// Fixed-point search could not produce a certified in-band solution.
class SearchError : public Error {
public:
    using Error::Error;
};

}  // namespace relosc
