#pragma once

#include <stdexcept>
#include <string>

namespace softguide {

// Every error carries the process exit code the CLI should map it to.
class Error : public std::runtime_error {
public:
    Error(const std::string& what, int exit_code) : std::runtime_error(what), code_(exit_code) {}
    int exit_code() const noexcept { return code_; }

private:
    int code_;
};

class InputError : public Error {
public:
    explicit InputError(const std::string& what) : Error(what, 2) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what, 2) {}
};

class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error(what, 2) {}
};

class CapabilityError : public Error {
public:
    explicit CapabilityError(const std::string& what) : Error(what, 2) {}
};

class AssumptionError : public Error {
public:
    explicit AssumptionError(const std::string& what) : Error(what, 3) {}
};

class GeometryError : public Error {
public:
    explicit GeometryError(const std::string& what) : Error(what, 3) {}
};

class ConvergenceError : public Error {
public:
    explicit ConvergenceError(const std::string& what) : Error(what, 4) {}
};

}  // namespace softguide
