#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "advchar/model.hpp"
#include "advchar/tensor.hpp"

namespace advchar {

// Moment accumulators for bias-corrected Adam. Moments are sized lazily on the
// first step to match the parameter tensors.
template <typename T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<Matrix<T>> first;
  std::vector<Matrix<T>> second;
};

// One Adam update applied in place to params. Throws ShapeError when shapes
// disagree and NumericalError on non-finite gradients.
template <typename T>
void adam_step(AdamState<T>& state, std::span<Matrix<T>* const> params,
               std::span<const Matrix<T>* const> grads, double lr);

template <typename T>
void adam_step(AdamState<T>& state, ParameterSet<T>& params,
               const ParameterSet<T>& grads, double lr);

}  // namespace advchar
