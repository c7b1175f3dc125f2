#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mmwmap {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Infeasible or degenerate sensing geometry (delay inside the TX-RX
/// separation, scatterer on top of an antenna, ...).
class GeometryError : public Error {
public:
    using Error::Error;
};

/// Chart grid whose Gram matrices cannot be inverted reliably.
class GridError : public Error {
public:
    GridError(const std::string& what, double condition_number)
        : Error(what), condition_number_(condition_number) {}
    double condition_number() const noexcept { return condition_number_; }

private:
    double condition_number_;
};

/// Malformed observation / config / CSV input. `offset` is the byte offset
/// in the input where the problem was detected (0 if unknown).
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Numerical breakdown inside the tracker (NaN covariance etc.).
class TrackingError : public Error {
public:
    TrackingError(const std::string& what, int track_id)
        : Error(what + " (track " + std::to_string(track_id) + ")"), track_id_(track_id) {}
    int track_id() const noexcept { return track_id_; }

private:
    int track_id_;
};

/// Pipeline stage failure; carries the stage name for the CLI report.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace mmwmap
