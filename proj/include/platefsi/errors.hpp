#ifndef PLATEFSI_ERRORS_HPP
#define PLATEFSI_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace platefsi {

/// Base class for all toolkit errors. The CLI maps each subclass to a
/// distinct exit code.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input file (bad JSON, wrong field, length mismatch).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Inconsistent dimensions / axis counts / incompatible meshes.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Geometry validation failed with a hard error (disconnected phase,
/// aperiodic indicator).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Constraint map construction failure (chained slaves, bad masters).
class ConstraintError : public Error {
public:
    using Error::Error;
};

/// Linear solver contract violation (indefiniteness, rank deficiency,
/// dense-oracle cap exceeded).
class SolverError : public Error {
public:
    using Error::Error;
};

/// Filesystem / output failures.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace platefsi

#endif
