#pragma once

#include <stdexcept>
#include <string>

namespace resmin {

/// Base class for all errors thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed input file (bad JSON, bad CSV row, unknown problem spec).
struct ParseError : Error {
    using Error::Error;
};

/// Structurally valid input that violates an invariant; the message names
/// the offending index where one exists.
struct ValidationError : Error {
    using Error::Error;
};

/// refine_mesh called with factor 0.
struct InvalidFactor : Error {
    using Error::Error;
};

/// File could not be opened or written.
struct IoError : Error {
    using Error::Error;
};

/// A problem parameter that must be nonzero was zero.
struct ZeroParameter : Error {
    using Error::Error;
};

/// Evaluation outside the domain of a right-hand side (e.g. sqrt of a
/// nonpositive state).
struct DomainError : Error {
    using Error::Error;
};

/// Evaluation time outside the interval covered by a solution or curve.
struct OutOfRange : Error {
    using Error::Error;
};

/// Adaptive stepsize fell below 16*eps*|t|.
struct StepsizeUnderflow : Error {
    using Error::Error;
};

/// Step cap exceeded before reaching tf.
struct MaxStepsExceeded : Error {
    using Error::Error;
};

/// Root bracketing failed in a safeguarded scalar solve.
struct BracketFailure : Error {
    using Error::Error;
};

/// Lambert W argument outside the requested branch's domain.
struct OutOfBranch : Error {
    using Error::Error;
};

/// Optimizer stopped without meeting its convergence tolerances.
/// The message carries iteration count and final gradient norm.
struct NonConvergence : Error {
    using Error::Error;
};

}  // namespace resmin
