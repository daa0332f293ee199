#pragma once

#include "attntul/tensor.hpp"

#include <cstddef>
#include <functional>
#include <span>

namespace attntul::ad {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t worst_input = 0;  // index into `inputs` of the worst coordinate
  std::size_t worst_index = 0;
  double analytic = 0.0;        // tape gradient at the worst coordinate
  double numeric = 0.0;         // central difference at the worst coordinate
  std::size_t kinks = 0;        // coordinates skipped by reject_kinks
  bool passed = false;
};

// Compares tape gradients of the scalar f() with respect to each tensor in
// `inputs` against central differences (f(x + h e) - f(x - h e)) / 2h.
// f must read the inputs by handle so in-place perturbation is visible.
// Per-coordinate relative error is |a - n| / max(|a|, |n|, floor).
// With reject_kinks, coordinates whose step-h and step-h/2 differences
// disagree (a relu, max or sparsemax-support boundary within reach) are
// counted in `kinks` and left out of the error.
GradCheckReport finite_difference_check(const std::function<Tensor()>& f,
                                         std::span<Tensor> inputs, double h = 1e-5,
                                         double tolerance = 1e-6, double floor = 1e-6,
                                         bool reject_kinks = false);

}  // namespace attntul::ad
