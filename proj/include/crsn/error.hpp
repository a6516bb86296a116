#ifndef CRSN_ERROR_HPP
#define CRSN_ERROR_HPP

#include <stdexcept>
#include <string>

namespace crsn {

// Error taxonomy used across the library. The CLI maps these onto process
// exit codes: ConfigError -> 2, IoError -> 3, everything else -> 1.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class RangeError : public Error {
public:
    using Error::Error;
};

class DegenerateInputError : public Error {
public:
    using Error::Error;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ContractError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class MeasurementError : public Error {
public:
    using Error::Error;
};

} // namespace crsn

#endif
