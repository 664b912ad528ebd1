#include "mmer/grad_check.hpp"

#include <cmath>

namespace mmer::nn {

GradCheckReport grad_check(const std::function<TensorD()>& f, std::vector<TensorD> inputs,
                           double tol, double h) {
  for (auto& in : inputs) in.zero_grad();
  TensorD out = f();
  out.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& in : inputs) analytic.push_back(in.grad());

  GradCheckReport report;
  for (size_t idx = 0; idx < inputs.size(); ++idx) {
    auto& data = inputs[idx].data();
    for (size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double up = f().item();
      data[i] = saved - h;
      const double down = f().item();
      data[i] = saved;

      const double fd = (up - down) / (2.0 * h);
      const double a = analytic[idx][i];
      const double rel =
          std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1.0});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst = "input " + std::to_string(idx) + ", coord " + std::to_string(i);
      }
    }
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

}  // namespace mmer::nn
