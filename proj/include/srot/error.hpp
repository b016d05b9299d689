#pragma once

#include <stdexcept>
#include <string>

namespace srot {

// Base class for all library errors. Subclasses carry the failure kind in
// the type so callers can catch selectively.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidWeights : Error { using Error::Error; };
struct InvalidPoint : Error { using Error::Error; };
struct InvalidMass : Error { using Error::Error; };
struct EmptyMeasure : Error { using Error::Error; };
struct MassMismatch : Error { using Error::Error; };
struct SolverFailure : Error { using Error::Error; };
struct InvalidArchitecture : Error { using Error::Error; };
struct InvalidDataset : Error { using Error::Error; };
struct InvalidGamma : Error { using Error::Error; };
struct UnsupportedCost : Error { using Error::Error; };
struct MismatchedReference : Error { using Error::Error; };
struct GenerationFailure : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

}  // namespace srot
