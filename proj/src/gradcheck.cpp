#include "attntul/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace attntul::ad {

namespace {
constexpr double kKinkTolerance = 1e-8;
}  // namespace

GradCheckReport finite_difference_check(const std::function<Tensor()>& f,
                                         std::span<Tensor> inputs, double h, double tolerance,
                                         double floor, bool reject_kinks) {
  std::vector<bool> tracked;
  for (auto& x : inputs) {
    tracked.push_back(x.requires_grad());
    x.set_requires_grad(true);
    x.zero_grad();
  }

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor y = f();
    tape.backward(y);
  }
  for (auto& x : inputs) analytic.emplace_back(x.grad().begin(), x.grad().end());

  GradCheckReport report;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto values = inputs[t].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + h;
      const double up = f().item();
      values[i] = orig - h;
      const double down = f().item();
      values[i] = orig;
      const double numeric = (up - down) / (2.0 * h);

      if (reject_kinks) {
        // a kink inside [x - h, x + h] makes the h and h/2 differences disagree
        values[i] = orig + h / 2;
        const double up2 = f().item();
        values[i] = orig - h / 2;
        const double down2 = f().item();
        values[i] = orig;
        const double half = (up2 - down2) / h;
        if (std::abs(numeric - half) > kKinkTolerance * std::max(1.0, std::abs(numeric))) {
          ++report.kinks;
          continue;
        }
      }

      const double a = analytic[t][i];
      const double abs_err = std::abs(a - numeric);
      const double rel_err = abs_err / std::max({std::abs(a), std::abs(numeric), floor});
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel_err > report.max_rel_error || report.coordinates == 0) {
        report.max_rel_error = rel_err;
        report.worst_input = t;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
      ++report.coordinates;
    }
  }
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    inputs[t].zero_grad();
    inputs[t].set_requires_grad(tracked[t]);
  }
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace attntul::ad
