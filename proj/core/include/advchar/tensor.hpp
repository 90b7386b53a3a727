#pragma once

#include <Eigen/Core>

namespace advchar {

// Default scalar for models, attacks and checkpoints. Double-precision
// instantiations of the model exist for oracle checks.
using Real = float;

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

// Row i is the embedding of sequence position i.
template <typename T>
using EmbeddingSeq = Matrix<T>;

template <typename T>
using Logits = RowVector<T>;

// Index of the largest entry; ties go to the lowest index.
template <typename Derived>
int argmax(const Eigen::MatrixBase<Derived>& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace advchar
