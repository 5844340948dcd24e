#pragma once

#include <string>
#include <vector>

#include "boolattn/encoder.hpp"

namespace boolattn {

struct GradCheckEntry {
  std::string param;
  std::int64_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool all_pass = true;
  int checked = 0;
  int failed = 0;
};

/// Finite-difference check of every Boolean-module parameter group through a
/// full encoder forward pass. Runs in soft mode (hard thresholds bypassed) so
/// the loss stays differentiable; the threshold parameters are checked
/// separately against the closed form of their straight-through surrogate.
GradCheckReport run_gradcheck(std::uint64_t seed);

}  // namespace boolattn
