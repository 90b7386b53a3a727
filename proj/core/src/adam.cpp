#include "advchar/adam.hpp"

#include <cmath>
#include <string>

#include "advchar/error.hpp"

namespace advchar {

template <typename T>
void adam_step(AdamState<T>& state, std::span<Matrix<T>* const> params,
               std::span<const Matrix<T>* const> grads, double lr) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam: " + std::to_string(params.size()) + " parameter tensors but " +
                     std::to_string(grads.size()) + " gradient tensors");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i]->rows() || params[i]->cols() != grads[i]->cols()) {
      throw ShapeError("adam: gradient shape differs from parameter shape for tensor " +
                       std::to_string(i));
    }
    if (!grads[i]->allFinite()) {
      throw NumericalError("adam: non-finite gradient in tensor " + std::to_string(i));
    }
  }
  if (state.first.empty()) {
    for (const Matrix<T>* p : params) {
      state.first.push_back(Matrix<T>::Zero(p->rows(), p->cols()));
      state.second.push_back(Matrix<T>::Zero(p->rows(), p->cols()));
    }
  } else if (state.first.size() != params.size()) {
    throw ShapeError("adam: state was built for a different parameter list");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(state.beta1);
  const T b2 = static_cast<T>(state.beta2);
  const T correction1 = static_cast<T>(1.0 - std::pow(state.beta1, t));
  const T correction2 = static_cast<T>(1.0 - std::pow(state.beta2, t));
  const T step_size = static_cast<T>(lr);
  const T eps = static_cast<T>(state.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto m = state.first[i].array();
    auto v = state.second[i].array();
    const auto g = grads[i]->array();
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g.square();
    params[i]->array() -=
        step_size * (m / correction1) / ((v / correction2).sqrt() + eps);
  }
}

template <typename T>
void adam_step(AdamState<T>& state, ParameterSet<T>& params,
               const ParameterSet<T>& grads, double lr) {
  std::vector<Matrix<T>*> p;
  std::vector<const Matrix<T>*> g;
  params.for_each([&](auto, Matrix<T>& m) { p.push_back(&m); });
  grads.for_each([&](auto, const Matrix<T>& m) { g.push_back(&m); });
  adam_step<T>(state, std::span<Matrix<T>* const>(p),
               std::span<const Matrix<T>* const>(g), lr);
}

template void adam_step<float>(AdamState<float>&, std::span<Matrix<float>* const>,
                               std::span<const Matrix<float>* const>, double);
template void adam_step<double>(AdamState<double>&, std::span<Matrix<double>* const>,
                                std::span<const Matrix<double>* const>, double);
template void adam_step<float>(AdamState<float>&, ParameterSet<float>&,
                               const ParameterSet<float>&, double);
template void adam_step<double>(AdamState<double>&, ParameterSet<double>&,
                                const ParameterSet<double>&, double);

}  // namespace advchar
