#pragma once

#include <stdexcept>
#include <string>

namespace relight {

/// Base class for every domain error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raster or buffer shapes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A value violates a documented range or invariant.
class ValueError : public Error {
public:
    using Error::Error;
};

/// A file or wire payload could not be parsed.
class FormatError : public Error {
public:
    using Error::Error;
};

/// A required input (asset, field, file) is absent.
class MissingInputError : public Error {
public:
    using Error::Error;
};

}  // namespace relight
