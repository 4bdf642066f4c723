#pragma once

#include <cstddef>
#include <string>

#include "driftless/tape.hpp"

namespace driftless {

struct GradCheckReport {
  /// max over every parameter entry of |analytic - fd| / max(|analytic|, |fd|, floor)
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_entry = 0;
  double worst_analytic = 0.0;  // the two gradients at the worst entry
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
};

inline constexpr double kGradCheckFloor = 1e-8;

/// Compares backward() against central differences obtained by perturbing
/// each parameter entry in place and replaying the tape. The tape is left with
/// its original values and fresh gradients.
GradCheckReport grad_check(Tape& tape, Var loss, double perturbation,
                           double floor = kGradCheckFloor);

}  // namespace driftless
