#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace arcprobit {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

// Missing or malformed columns in an input table.
class SchemaError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& msg, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + msg), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class OptimizationError : public Error {
public:
    OptimizationError(const std::string& msg, double abscissa)
        : Error(msg + " (at x = " + std::to_string(abscissa) + ")"), abscissa_(abscissa) {}
    double abscissa() const noexcept { return abscissa_; }

private:
    double abscissa_;
};

class RankDeficiencyError : public Error {
public:
    RankDeficiencyError(const std::string& msg, std::size_t column)
        : Error(msg), column_(column) {}
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t column_;
};

class SeparationError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    using Error::Error;
};

class UnderflowError : public Error {
public:
    UnderflowError(const std::string& msg, std::size_t cluster)
        : Error(msg), cluster_(cluster) {}
    std::size_t cluster() const noexcept { return cluster_; }

private:
    std::size_t cluster_;
};

// Problem size beyond what a dense/tensor baseline accepts.
class GuardError : public Error {
public:
    GuardError(const std::string& msg, std::size_t limit)
        : Error(msg), limit_(limit) {}
    std::size_t limit() const noexcept { return limit_; }

private:
    std::size_t limit_;
};

class BootstrapError : public Error {
public:
    using Error::Error;
};

} // namespace arcprobit
