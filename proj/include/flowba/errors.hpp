#pragma once

#include <stdexcept>
#include <string>

namespace flowba {

// Base class for all recoverable engine errors. Callers that need to branch on
// the failure kind catch the specific subclass; everything derives from
// std::runtime_error so CLI-level code can report any of them uniformly.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// ---- geometry ----
struct AngleNearPi : Error {
  explicit AngleNearPi(const std::string& msg) : Error(msg) {}
};
struct DegenerateConfiguration : Error {
  explicit DegenerateConfiguration(const std::string& msg) : Error(msg) {}
};

// ---- rasters / shapes ----
struct ShapeMismatch : Error {
  explicit ShapeMismatch(const std::string& msg) : Error(msg) {}
};
struct NoValidPixels : Error {
  explicit NoValidPixels(const std::string& msg) : Error(msg) {}
};

// ---- solver ----
struct SingularSystem : Error {
  explicit SingularSystem(const std::string& msg) : Error(msg) {}
};
struct NonFiniteLoss : Error {
  explicit NonFiniteLoss(const std::string& msg) : Error(msg) {}
};

// ---- pipeline ----
struct InsufficientMotion : Error {
  explicit InsufficientMotion(const std::string& msg) : Error(msg) {}
};
struct TrackingLost : Error {
  explicit TrackingLost(const std::string& msg) : Error(msg) {}
};
struct NoNeighborKeyframe : Error {
  explicit NoNeighborKeyframe(const std::string& msg) : Error(msg) {}
};
struct DegenerateScale : Error {
  explicit DegenerateScale(const std::string& msg) : Error(msg) {}
};

// ---- synthetic scenes ----
struct SpecInfeasible : Error {
  explicit SpecInfeasible(const std::string& msg) : Error(msg) {}
};

// ---- file IO ----
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};
struct BadMagic : IoError {
  explicit BadMagic(const std::string& msg) : IoError(msg) {}
};
struct TruncatedFile : IoError {
  explicit TruncatedFile(const std::string& msg) : IoError(msg) {}
};
struct DimensionMismatch : IoError {
  explicit DimensionMismatch(const std::string& msg) : IoError(msg) {}
};

// ---- metrics ----
struct DegenerateTrajectory : Error {
  explicit DegenerateTrajectory(const std::string& msg) : Error(msg) {}
};
struct EmptyOverlap : Error {
  explicit EmptyOverlap(const std::string& msg) : Error(msg) {}
};

// ---- config ----
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

}  // namespace flowba
