#pragma once

#include <cmath>
#include <utility>

#include "cevo/errors.hpp"
#include "cevo/tensor.hpp"

namespace cevo {

/// Mean absolute error over every element and its gradient with respect to
/// `predicted`: sign(p - t) / N, with 0 at exact ties.
template <typename T>
std::pair<T, Tensor<T>> mae_loss(const Tensor<T>& predicted, const Tensor<T>& target) {
  if (predicted.shape() != target.shape())
    throw ConfigError("mae_loss shape mismatch: " + to_string(predicted.shape()) + " vs " + to_string(target.shape()));
  const auto n = static_cast<T>(predicted.size());
  Tensor<T> grad(predicted.shape());
  T sum{0};
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const T d = predicted[i] - target[i];
    sum += std::abs(d);
    grad[i] = d > T{0} ? T{1} / n : (d < T{0} ? T{-1} / n : T{0});
  }
  return {sum / n, std::move(grad)};
}

}  // namespace cevo
