#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace canvas {

/// Sampling or optimization produced a non-finite value. Carries the step
/// index at which the state first went bad.
class NumericDivergence : public std::runtime_error {
public:
    NumericDivergence(const std::string& what, std::size_t step)
        : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// Degenerate numeric input (e.g. zero-variance grid fed to CFG rescaling).
class DegenerateInput : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed file content. Carries the byte offset of the first bad byte.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Run configuration failed schema validation.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training aborted after persistent loss spikes.
class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace canvas
