#pragma once

#include <stdexcept>
#include <string>

namespace funad {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad magic or malformed header in a binary file.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Header declares more payload than the file holds.
class TruncationError : public Error {
public:
    using Error::Error;
};

/// Non-finite or otherwise invalid payload values.
class DataError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
public:
    using Error::Error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

/// A probability ratio whose denominator is too small to represent.
class UnderflowError : public Error {
public:
    using Error::Error;
};

/// No image passed the memory-bank filter, or every bank entry was excluded.
class EmptyBankError : public Error {
public:
    using Error::Error;
};

/// AUROC requested on single-class data.
class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

}  // namespace funad
