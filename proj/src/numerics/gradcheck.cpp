#include "stum/numerics/gradcheck.hpp"

#include <algorithm>

namespace stum::num {

namespace {

double loss_value(LayerStackT<double>& net, const Tensor64& input,
                  std::vector<uint8_t>* signs) {
  Tape64 tape;
  if (signs) tape.record_relu_signs(signs);
  auto x = tape.input(input);
  auto y = net.forward(tape, x, RunMode::train_frozen);
  double s = 0;
  for (double v : tape.value(y).data) s += v * v;
  return s / static_cast<double>(tape.value(y).numel());
}

}  // namespace

GradCheckResult grad_check(const LayerStack& net, const Tensor& input, double eps,
                           int max_coords_per_param, uint64_t seed) {
  check(eps > 0, "grad_check: eps must be positive");
  for (const auto& p : net.params) {
    check(p.value.all_finite(), "grad_check: non-finite parameter " + p.name);
  }
  auto shadow = to_double(net);
  const Tensor64 x = cast_tensor<double>(input);

  // Analytic gradients of the mean squared output.
  {
    Tape64 tape;
    auto xin = tape.input(x);
    auto y = shadow.forward(tape, xin, RunMode::train_frozen);
    const auto& yv = tape.value(y);
    Tensor64 target(yv.shape);  // zeros; mse(out, 0) == mean squared output
    auto loss = tape.mse(y, std::move(target));
    for (auto& p : shadow.params) p.zero_grad();
    tape.backward(loss);
  }

  GradCheckResult result;
  Rng rng(seed);
  for (auto& p : shadow.params) {
    const size_t n = p.value.numel();
    std::vector<size_t> coords;
    if (static_cast<int>(n) <= max_coords_per_param) {
      coords.resize(n);
      for (size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      Rng prng = rng.fork(p.name);
      for (int i = 0; i < max_coords_per_param; ++i) {
        coords.push_back(prng.below(n));
      }
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    }
    for (size_t ci : coords) {
      const double saved = p.value.data[ci];
      std::vector<uint8_t> signs_plus, signs_minus;
      p.value.data[ci] = saved + eps;
      const double lp = loss_value(shadow, x, &signs_plus);
      p.value.data[ci] = saved - eps;
      const double lm = loss_value(shadow, x, &signs_minus);
      p.value.data[ci] = saved;
      if (signs_plus != signs_minus) {
        ++result.coords_skipped;
        continue;
      }
      const double numeric = (lp - lm) / (2.0 * eps);
      const double analytic = p.grad.data[ci];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic - numeric) / denom;
      result.max_rel_error = std::max(result.max_rel_error, rel);
      ++result.coords_checked;
    }
  }
  return result;
}

double grad_check_error(const LayerStack& net, const Tensor& input, double eps) {
  return grad_check(net, input, eps).max_rel_error;
}

}  // namespace stum::num
