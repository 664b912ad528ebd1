#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mmer/tensor.hpp"

namespace mmer::nn {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst;  // "input 2, coord 17"
  bool pass = false;
};

// Central finite differences (h on a double-precision shadow evaluation)
// against the tape's analytic gradients. `f` must rebuild its graph from the
// current contents of `inputs` on every call and return a scalar.
// Per-coordinate relative error |a - fd| / max(|a|, |fd|, 1).
GradCheckReport grad_check(const std::function<TensorD()>& f, std::vector<TensorD> inputs,
                           double tol, double h = 1e-3);

}  // namespace mmer::nn
