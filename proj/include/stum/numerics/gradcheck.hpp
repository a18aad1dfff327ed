#pragma once

#include "stum/numerics/layers.hpp"
#include "stum/numerics/rng.hpp"

namespace stum::num {

struct GradCheckResult {
  double max_rel_error = 0.0;
  int coords_checked = 0;
  int coords_skipped = 0;  // perturbation crossed a leaky-relu kink
};

// Compares tape gradients against central finite differences. Runs in a
// 64-bit shadow copy of the network so float32 quantization cannot mask
// errors. The loss is the mean squared output. Coordinates whose +/- eps
// evaluations land on different sides of a leaky-relu kink are skipped:
// finite differences are meaningless across the non-differentiable point.
GradCheckResult grad_check(const LayerStack& net, const Tensor& input, double eps,
                           int max_coords_per_param = 20, uint64_t seed = 0x57C4);

// Convenience overload returning just the max relative error.
double grad_check_error(const LayerStack& net, const Tensor& input, double eps);

}  // namespace stum::num
