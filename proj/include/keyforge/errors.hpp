#pragma once

#include <stdexcept>
#include <string>

namespace keyforge {

/// Base class for all keyforge failures.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// geometry
struct DegenerateCorrespondences final : Error { using Error::Error; };
struct PointAtInfinity final : Error { using Error::Error; };
struct NonInvertibleTransform final : Error { using Error::Error; };

// masks / bitting
struct EmptyMask final : Error { using Error::Error; };
struct NoForeground final : Error { using Error::Error; };
struct MultipleComponents final : Error { using Error::Error; };
struct DegenerateBlade final : Error { using Error::Error; };
struct RayMiss final : Error {
  int pin;
  explicit RayMiss(int pin_index)
      : Error("virtual pin ray hit no foreground at pin " + std::to_string(pin_index)),
        pin(pin_index) {}
};
struct OutOfFrame final : Error { using Error::Error; };
struct LengthMismatch final : Error { using Error::Error; };
struct SpecInvalid final : Error { using Error::Error; };

// model3d
struct ClipNotSimple final : Error { using Error::Error; };
struct NoOverlap final : Error { using Error::Error; };
struct EmptyMesh final : Error { using Error::Error; };
struct IoFailure final : Error { using Error::Error; };

// synth
struct MacsViolation final : Error { using Error::Error; };
struct KeyOutOfFrame final : Error { using Error::Error; };
struct AugmentationClipsKey final : Error { using Error::Error; };

// metrics
struct DimensionMismatch final : Error { using Error::Error; };
struct EmptyPrediction final : Error { using Error::Error; };
struct NoGroundTruth final : Error { using Error::Error; };
struct SingleClass final : Error { using Error::Error; };

// pipeline
struct ManifestParse final : Error {
  long line;
  ManifestParse(long line_number, const std::string& msg)
      : Error("manifest line " + std::to_string(line_number) + ": " + msg),
        line(line_number) {}
};
struct EmptyDataset final : Error { using Error::Error; };
struct ConfigInvalid final : Error { using Error::Error; };

}  // namespace keyforge
