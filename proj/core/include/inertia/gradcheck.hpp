#pragma once

#include <functional>
#include <string>
#include <vector>

#include "inertia/model.hpp"

namespace inertia::model {

struct TensorCheck {
  std::string name;
  std::size_t entries = 0;
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-8)
  double max_abs_error = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;  // one per trainable tensor, model order
  double worst = 0.0;
  bool pass = true;
};

using ScalarLoss = std::function<double(const TinyModel&)>;

// Central differences over every trainable entry of m, compared tensor by
// tensor against `analytic`. m is perturbed in place and restored.
GradCheckReport finite_difference_check(TinyModel& m, const ScalarLoss& loss, const Gradients& analytic,
                                        double h = 1e-4, double tol = 1e-3);

}  // namespace inertia::model
