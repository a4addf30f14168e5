#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mfp {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error { public: using Error::Error; };
class NumericError : public Error { public: using Error::Error; };
class ArgumentError : public Error { public: using Error::Error; };
class ControlError : public Error { public: using Error::Error; };
class AlignmentError : public Error { public: using Error::Error; };
class IndependenceError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };

class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, int step)
        : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    int step() const { return step_; }
private:
    int step_;
};

class SolverError : public Error {
public:
    SolverError(const std::string& what, int step)
        : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    int step() const { return step_; }
private:
    int step_;
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, std::vector<double> history)
        : Error(what), history_(std::move(history)) {}
    const std::vector<double>& history() const { return history_; }
private:
    std::vector<double> history_;
};

} // namespace mfp
