#pragma once

#include <stdexcept>
#include <string>

namespace enscon {

/// Coarse classification used by the CLI to pick an exit status:
/// Config -> 2 (bad input/validation), Runtime -> 1 (numerical/IO failure).
enum class ErrorClass { Config, Runtime };

class Error : public std::runtime_error {
public:
    Error(std::string code, std::string message, ErrorClass cls = ErrorClass::Runtime)
        : std::runtime_error(code + ": " + message), code_(std::move(code)), class_(cls) {}

    const std::string& code() const noexcept { return code_; }
    ErrorClass error_class() const noexcept { return class_; }

private:
    std::string code_;
    ErrorClass class_;
};

struct SyntaxError : Error {
    SyntaxError(std::size_t offset, const std::string& expected, const std::string& got)
        : Error("SyntaxError",
                "at offset " + std::to_string(offset) + ": expected " + expected +
                    ", got " + got,
                ErrorClass::Config),
          offset(offset) {}
    std::size_t offset;
};

struct UnknownIdentifier : Error {
    explicit UnknownIdentifier(const std::string& name, std::size_t offset)
        : Error("UnknownIdentifier",
                "'" + name + "' at offset " + std::to_string(offset), ErrorClass::Config),
          name(name), offset(offset) {}
    std::string name;
    std::size_t offset;
};

struct ParamIndexOutOfRange : Error {
    ParamIndexOutOfRange(int index, int param_dim, std::size_t offset)
        : Error("ParamIndexOutOfRange",
                "b" + std::to_string(index) + " exceeds parameter dimension d=" +
                    std::to_string(param_dim) + " at offset " + std::to_string(offset),
                ErrorClass::Config),
          index(index), param_dim(param_dim) {}
    int index;
    int param_dim;
};

struct NonFiniteResult : Error {
    explicit NonFiniteResult(const std::string& what)
        : Error("NonFiniteResult", what) {}
};

struct NonFiniteEntry : Error {
    NonFiniteEntry(const std::string& matrix, int row, int col, double t, const std::string& beta)
        : Error("NonFiniteEntry",
                matrix + "(" + std::to_string(row) + "," + std::to_string(col) +
                    ") is not finite at t=" + std::to_string(t) + ", beta=" + beta) {}
};

struct UnknownExample : Error {
    explicit UnknownExample(const std::string& name)
        : Error("UnknownExample", "no built-in example named '" + name + "'",
                ErrorClass::Config) {}
};

struct InvalidBounds : Error {
    explicit InvalidBounds(const std::string& what) : Error("InvalidBounds", what, ErrorClass::Config) {}
};

struct OverdeterminedGrid : Error {
    OverdeterminedGrid(int nP, int mN)
        : Error("OverdeterminedGrid",
                "n*P = " + std::to_string(nP) + " exceeds m*N = " + std::to_string(mN) +
                    "; the discretization must satisfy n*P <= m*N",
                ErrorClass::Config) {}
};

struct DimensionMismatch : Error {
    explicit DimensionMismatch(const std::string& what)
        : Error("DimensionMismatch", what, ErrorClass::Config) {}
};

struct ConvergenceFailure : Error {
    explicit ConvergenceFailure(const std::string& what) : Error("ConvergenceFailure", what) {}
};

struct NoUsableRank : Error {
    explicit NoUsableRank(const std::string& what) : Error("NoUsableRank", what) {}
};

struct RankNotSelected : Error {
    RankNotSelected() : Error("RankNotSelected", "truncation rank q has not been selected") {}
};

struct NonFiniteState : Error {
    NonFiniteState(double t, const std::string& beta)
        : Error("NonFiniteState",
                "trajectory blew up (|X| > 1e12 or non-finite) at t=" + std::to_string(t) +
                    ", beta=" + beta) {}
};

struct InsufficientTrials : Error {
    explicit InsufficientTrials(int got)
        : Error("InsufficientTrials",
                "at least 2 trials per parameter point are required for statistics, got " +
                    std::to_string(got),
                ErrorClass::Config) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error("ConfigError", what, ErrorClass::Config) {}
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error("IoError", what) {}
};

} // namespace enscon
