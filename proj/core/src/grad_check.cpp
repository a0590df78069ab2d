#include "daner/grad_check.hpp"

#include <cmath>

#include "daner/error.hpp"

namespace daner {

std::vector<Tensor<double>> finite_diff_grad(const std::function<double()>& f,
                                             const std::vector<Tensor<double>*>& params,
                                             double eps) {
  std::vector<Tensor<double>> grads;
  grads.reserve(params.size());
  for (Tensor<double>* p : params) {
    Tensor<double> g(p->shape());
    for (std::int64_t i = 0; i < p->size(); ++i) {
      const double saved = (*p)[i];
      (*p)[i] = saved + eps;
      const double up = f();
      (*p)[i] = saved - eps;
      const double down = f();
      (*p)[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        fail(ErrorKind::NonFinite, "objective returned a non-finite value during perturbation");
      g[i] = (up - down) / (2.0 * eps);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

double max_relative_error(const Tensor<double>& a, const Tensor<double>& b, double floor) {
  if (!a.same_shape(b)) fail(ErrorKind::ShapeMismatch, "relative error on mismatched shapes");
  double worst = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::fabs(a[i]), std::fabs(b[i]), floor});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace daner
