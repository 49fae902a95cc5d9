#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace madrop {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid model data: malformed probability rows, negative rewards, bad sizes.
class ModelError : public Error {
public:
    explicit ModelError(const std::string& what) : Error(what) {}
};

/// Mismatched dimensions between related objects (mask vs. model, policy vs. system).
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& what) : Error(what) {}
};

/// Joint state/action space exceeds what the index type or memory budget can hold.
class StateSpaceError : public Error {
public:
    explicit StateSpaceError(const std::string& what) : Error(what) {}
};

/// The chain under the given policy is not ergodic (periodic or reducible),
/// or an iterative scheme that requires ergodicity failed to converge.
class ErgodicityError : public Error {
public:
    explicit ErgodicityError(const std::string& what) : Error(what) {}
};

/// An importance-sampling target places mass where the behavioral policy has none.
class SupportViolation : public Error {
public:
    SupportViolation(int step, std::int64_t state, std::int64_t action)
        : Error("support violation at step " + std::to_string(step) + ": target puts mass on action " +
                std::to_string(action) + " in state " + std::to_string(state) +
                " where the behavioral policy has none"),
          step(step), state(state), action(action) {}

    int step;
    std::int64_t state;
    std::int64_t action;
};

/// An enumeration or iteration cap was exceeded.
class CapExceeded : public Error {
public:
    explicit CapExceeded(const std::string& what) : Error(what) {}
};

/// Malformed or unreadable input file.
class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what) {}
};

} // namespace madrop
