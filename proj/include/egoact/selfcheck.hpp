#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace egoact {

struct GradcheckReport {
  // (check name, max relative error) for every primitive-level check.
  std::vector<std::pair<std::string, double>> primitives;
  double primitive_max = 0.0;
  double model_max = 0.0;
  bool pass = false;  // primitive_max < 1e-6 and model_max < 1e-4
};

// Finite-difference verification of every autodiff primitive, then of the
// full classifier on a tiny configuration. Logs one line per check.
GradcheckReport run_gradcheck(std::ostream& log);

// Runs the cross-module invariant suite (projection, featurization,
// sampling, numerics, optimizer, serialization round-trips). Logs one
// line per check; returns the number of failures.
int run_selftest(std::ostream& log);

}  // namespace egoact
