#pragma once

#include <stdexcept>
#include <string>

namespace roomgen {

// Base class for all recoverable roomgen failures.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// correspondence_map called with poses whose centers are not coincident.
struct CentersDiffer : Error {
  using Error::Error;
};

// Interpolated timestep bounds crossed (t_min >= t_max).
struct ScheduleCrossing : Error {
  using Error::Error;
};

// Pose transform requested with d <= d_cam + margin.
struct DegenerateDepth : Error {
  using Error::Error;
};

// Depth estimation found too few opaque pixels in the frozen field.
struct InsufficientOpacity : Error {
  using Error::Error;
};

// render_backward invoked with a sampling state that differs from the
// paired forward render.
struct SamplingMismatch : Error {
  using Error::Error;
};

// Oracle queried from a camera position outside the room box.
struct OutsideRoom : Error {
  using Error::Error;
};

// Attention called with inconsistent feature dimensions.
struct ShapeMismatch : Error {
  using Error::Error;
};

// A gradient component came out NaN/inf; the step is rejected.
struct NonFiniteGradient : Error {
  using Error::Error;
};

// Too many consecutive step failures; the stage gives up.
struct AbortedStage : Error {
  using Error::Error;
};

struct ConfigInvalid : Error {
  using Error::Error;
};

struct CheckpointCorrupt : Error {
  using Error::Error;
};

// Eval requested on a checkpoint without an analytic room config.
struct OracleUnavailable : Error {
  using Error::Error;
};

}  // namespace roomgen
