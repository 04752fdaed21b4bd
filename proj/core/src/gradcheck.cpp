#include "inertia/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "inertia/error.hpp"

namespace inertia::model {

GradCheckReport finite_difference_check(TinyModel& m, const ScalarLoss& loss, const Gradients& analytic, double h,
                                        double tol) {
  if (!(h > 0.0)) fail(ErrorCode::InvalidConfig, "finite-difference step must be positive");
  GradCheckReport report;
  for (auto& p : m.parameters()) {
    const Matrix& a = analytic.get(p.name);
    if (a.rows() != p.value.rows() || a.cols() != p.value.cols())
      fail(ErrorCode::InvalidInput, "gradient shape mismatch for " + p.name);
    Matrix numeric(p.value.rows(), p.value.cols());
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      double& x = p.value.data()[i];
      const double orig = x;
      x = orig + h;
      m.sync_bias_from_parameters();
      const double up = loss(m);
      x = orig - h;
      m.sync_bias_from_parameters();
      const double down = loss(m);
      x = orig;
      m.sync_bias_from_parameters();
      numeric.data()[i] = (up - down) / (2.0 * h);
    }
    TensorCheck c;
    c.name = p.name;
    c.entries = static_cast<std::size_t>(p.value.size());
    const double denom = std::max({a.norm(), numeric.norm(), 1e-8});
    c.rel_error = (a - numeric).norm() / denom;
    c.max_abs_error = (a - numeric).cwiseAbs().maxCoeff();
    c.pass = std::isfinite(c.rel_error) && c.rel_error < tol;
    report.worst = std::max(report.worst, c.rel_error);
    report.pass = report.pass && c.pass;
    report.tensors.push_back(std::move(c));
  }
  return report;
}

}  // namespace inertia::model
