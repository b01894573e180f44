// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hugdiff {

// Base class for every error raised by the library. Subclasses carry the
// failure category so callers can map them to process exit codes.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A raw attribute value is non-finite or otherwise unusable.
class InvalidAttribute : public Error {
public:
    InvalidAttribute(const std::string& msg, std::size_t index)
        : Error(msg + " (index " + std::to_string(index) + ")"), index(index) {}
    std::size_t index;
};

// Quaternion norm too far from 1 for an operation that requires unit input.
class NormalizationError : public Error {
public:
    using Error::Error;
};

// Array or image dimensions do not match what the operation expects.
class ShapeError : public Error {
public:
    using Error::Error;
};

// A serialized file is corrupt. `byte_offset` locates the first bad byte.
class FormatError : public Error {
public:
    FormatError(const std::string& msg, std::size_t byte_offset)
        : Error(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
          byte_offset(byte_offset) {}
    std::size_t byte_offset;
};

class EmptySurface : public Error {
public:
    using Error::Error;
};

class InsufficientPoints : public Error {
public:
    using Error::Error;
};

class TrainingDiverged : public Error {
public:
    TrainingDiverged(const std::string& msg, int epoch)
        : Error(msg + " (epoch " + std::to_string(epoch) + ")"), epoch(epoch) {}
    int epoch;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class MissingBackView : public Error {
public:
    using Error::Error;
};

class EmptyDepth : public Error {
public:
    using Error::Error;
};

class MissingCondition : public Error {
public:
    using Error::Error;
};

class SamplingDiverged : public Error {
public:
    SamplingDiverged(const std::string& msg, int timestep)
        : Error(msg + " (timestep " + std::to_string(timestep) + ")"), timestep(timestep) {}
    int timestep;
};

class IndexError : public Error {
public:
    using Error::Error;
};

class ScheduleError : public Error {
public:
    using Error::Error;
};

class InvalidGradient : public Error {
public:
    using Error::Error;
};

class IngestError : public Error {
public:
    using Error::Error;
};

} // namespace hugdiff
