#include "driftless/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "driftless/errors.hpp"

namespace driftless {

GradCheckReport grad_check(Tape& tape, Var loss, double perturbation, double floor) {
  if (tape.value(loss).size() != 1) {
    throw ContractError("grad_check: loss must be scalar");
  }
  if (!(perturbation > 0.0 && perturbation <= 1e-3)) {
    throw ContractError("grad_check: perturbation must lie in (0, 1e-3]");
  }
  tape.backward(loss);
  GradCheckReport report;
  for (Var param : tape.parameters()) {
    const Matrix analytic = tape.grad(param);
    const Matrix original = tape.value(param);
    // Only nodes downstream of this parameter change when it is perturbed.
    const std::vector<std::size_t> affected = tape.dependents(param);
    for (std::size_t i = 0; i < original.size(); ++i) {
      Matrix probe = original;
      probe.data()[i] = original.data()[i] + perturbation;
      tape.set_value(param, probe);
      tape.replay(affected);
      const double up = tape.scalar(loss);
      probe.data()[i] = original.data()[i] - perturbation;
      tape.set_value(param, probe);
      tape.replay(affected);
      const double down = tape.scalar(loss);
      const double fd = (up - down) / (2.0 * perturbation);
      const double a = analytic.data()[i];
      const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor});
      ++report.entries_checked;
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_parameter = tape.name(param);
        report.worst_entry = i;
        report.worst_analytic = a;
        report.worst_numeric = fd;
      }
    }
    tape.set_value(param, original);
    tape.replay(affected);
  }
  tape.replay();
  tape.backward(loss);
  return report;
}

}  // namespace driftless
