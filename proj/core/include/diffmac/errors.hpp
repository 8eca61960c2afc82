#pragma once

#include <stdexcept>
#include <string>

namespace diffmac {

// Error taxonomy shared by every module. All derive from Error so callers
// (the CLI in particular) can catch one type and print the diagnostic.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParameterError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    ValidationError(const std::string& key, const std::string& what)
        : Error("invalid config key '" + key + "': " + what), key_(key) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

}  // namespace diffmac
