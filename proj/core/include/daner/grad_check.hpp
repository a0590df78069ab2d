#pragma once

#include <functional>
#include <vector>

#include "daner/tensor.hpp"

namespace daner {

/// Central-difference gradient oracle: (f(p + eps*e) - f(p - eps*e)) / (2*eps)
/// per coordinate of every tensor in `params`. `f` must be deterministic
/// (fixed data, dropout disabled) and is re-evaluated after each in-place
/// perturbation; tensors are restored before returning. Double precision
/// only -- central differences are meaningless at single precision.
std::vector<Tensor<double>> finite_diff_grad(const std::function<double()>& f,
                                             const std::vector<Tensor<double>*>& params,
                                             double eps = 1e-5);

/// max over elements of |a-b| / max(|a|, |b|, floor)
double max_relative_error(const Tensor<double>& a, const Tensor<double>& b,
                          double floor = 1e-8);

}  // namespace daner
