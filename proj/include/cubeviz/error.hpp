#pragma once

#include <stdexcept>
#include <string>

namespace cubeviz {

/// Base class of every error raised by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// File system failures: missing, unreadable or unwritable paths.
class IoError : public Error
{
public:
    using Error::Error;
};

/// Malformed input documents (headers, sidecars, PNG streams, scene files).
class FormatError : public Error
{
public:
    using Error::Error;
};

/// Inputs that are well-formed but violate a precondition (mismatched grids,
/// invalid parameters, inconsistent metadata).
class InvalidArgument : public Error
{
public:
    using Error::Error;
};

} // namespace cubeviz
