#pragma once

#include <stdexcept>
#include <string>

namespace symspace {

// Base class for every failure the engine can signal. The CLI maps these to
// exit code 3; anything schema-related is handled separately (exit code 2).
struct EngineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A map returned a non-finite value at some stencil or integration point.
struct EvaluationError : EngineError {
  using EngineError::EngineError;
};

// No atlas chart accepts the point.
struct UncoveredPointError : EngineError {
  using EngineError::EngineError;
};

// Membership-residual derivative is rank-deficient beyond the expected
// codimension, so the tangent space is not well defined numerically.
struct DegeneratePointError : EngineError {
  using EngineError::EngineError;
};

// An ODE trajectory left every chart domain (geodesic escape on an
// incomplete model, or a genuine atlas gap).
struct ChartGapError : EngineError {
  using EngineError::EngineError;
};

// Newton iteration for the chart inverse of exp did not converge.
struct OutOfNormalNeighborhoodError : EngineError {
  using EngineError::EngineError;
};

struct NonFiniteStateError : EngineError {
  using EngineError::EngineError;
};

// Input map fails the bracket/curvature intertwining test.
struct NotAMorphismError : EngineError {
  double residual = 0.0;
  NotAMorphismError(const std::string& what, double r)
      : EngineError(what), residual(r) {}
};

// Bad model parameters (empty quadric, invalid signature, ...).
struct InvalidModelError : EngineError {
  using EngineError::EngineError;
};

}  // namespace symspace
