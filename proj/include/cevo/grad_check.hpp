#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "cevo/errors.hpp"
#include "cevo/network.hpp"

namespace cevo {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  /// Components whose +/-epsilon probe flipped a ReLU on or off; the
  /// difference quotient straddles a kink there and is not comparable.
  std::size_t skipped_at_kinks = 0;
};

/// Compares backward() against central differences for every parameter.
///
/// The scalar probed is L = sum_j r_j * y_j with r drawn from a fixed seed,
/// so every output contributes. Relative error is
/// |analytic - numeric| / max(|analytic|, |numeric|, denominator_floor).
template <typename T>
GradCheckResult grad_check(const Network<T>& net, const Tensor<T>& input, T epsilon,
                           T denominator_floor = T(1e-6)) {
  if (!(epsilon > T{0})) throw ConfigError("grad_check epsilon must be positive");
  using Matrix = RowMatrix<T>;
  Network<T> work = net;

  const Matrix x = Eigen::Map<const Matrix>(input.data().data(), 1, static_cast<long>(input.size()));
  if (static_cast<std::size_t>(x.cols()) != net.input_size())
    throw ConfigError("grad_check input has " + std::to_string(x.cols()) + " elements, network expects " +
                      std::to_string(net.input_size()));

  std::mt19937_64 rng(0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix r(1, static_cast<long>(net.output_size()));
  for (long j = 0; j < r.cols(); ++j) r(0, j) = static_cast<T>(u(rng));

  work.forward_matrix(x);
  const GradientTape<T> tape = work.backward_matrix(r);
  work.release_activations();

  // acts[i] = output of layer i - 1 (acts[0] = input); relu on/off masks per layer.
  auto run_from = [&](const Network<T>& n, std::size_t first, Matrix in, std::vector<std::vector<bool>>* masks) {
    for (std::size_t i = first; i < n.layer_count(); ++i) {
      const auto& l = n.layers()[i];
      in = detail::layer_linear(l, in, static_cast<Matrix*>(nullptr));
      detail::apply_activation(l.spec.activation, in);
      if (masks && l.spec.activation == Activation::relu) {
        std::vector<bool> m(static_cast<std::size_t>(in.size()));
        for (long k = 0; k < in.size(); ++k) m[static_cast<std::size_t>(k)] = in.data()[k] > T{0};
        masks->push_back(std::move(m));
      }
    }
    return in;
  };

  std::vector<Matrix> acts{x};
  for (std::size_t i = 0; i + 1 < net.layer_count(); ++i) {
    Matrix next = detail::layer_linear(net.layers()[i], acts.back(), static_cast<Matrix*>(nullptr));
    detail::apply_activation(net.layers()[i].spec.activation, next);
    acts.push_back(std::move(next));
  }

  GradCheckResult result;
  for (std::size_t li = 0; li < work.layer_count(); ++li) {
    std::vector<std::vector<bool>> base_masks;
    run_from(work, li, acts[li], &base_masks);
    auto probe = [&](T& param, T analytic) {
      const T saved = param;
      std::vector<std::vector<bool>> mp, mm;
      param = saved + epsilon;
      const T lp = (run_from(work, li, acts[li], &mp) * r.transpose())(0, 0);
      param = saved - epsilon;
      const T lm = (run_from(work, li, acts[li], &mm) * r.transpose())(0, 0);
      param = saved;
      if (mp != base_masks || mm != base_masks) {
        ++result.skipped_at_kinks;
        return;
      }
      const T numeric = (lp - lm) / (T{2} * epsilon);
      const T denom = std::max({std::abs(analytic), std::abs(numeric), denominator_floor});
      result.max_relative_error = std::max(result.max_relative_error, double(std::abs(analytic - numeric) / denom));
      ++result.checked;
    };
    auto& l = work.layers()[li];
    if (li + 1 == work.layer_count() && l.spec.kind == LayerKind::dense) {
      // Output layer: a weight or bias only moves its own unit, so the
      // difference quotient needs that unit alone.
      const std::size_t in = l.spec.in_size;
      const Matrix& a = acts[li];
      auto unit = [&](std::size_t j) {
        T z = l.spec.use_bias ? l.bias[j] : T{0};
        for (std::size_t i = 0; i < in; ++i) z += a(0, static_cast<long>(i)) * l.weights[j * in + i];
        Matrix m(1, 1);
        m(0, 0) = z;
        detail::apply_activation(l.spec.activation, m);
        return m(0, 0);
      };
      auto probe_unit = [&](T& param, std::size_t j, T analytic) {
        const T saved = param;
        const T y0 = unit(j);
        param = saved + epsilon;
        const T yp = unit(j);
        param = saved - epsilon;
        const T ym = unit(j);
        param = saved;
        if (l.spec.activation == Activation::relu && ((yp > T{0}) != (y0 > T{0}) || (ym > T{0}) != (y0 > T{0}))) {
          ++result.skipped_at_kinks;
          return;
        }
        const T numeric = r(0, static_cast<long>(j)) * (yp - ym) / (T{2} * epsilon);
        const T denom = std::max({std::abs(analytic), std::abs(numeric), denominator_floor});
        result.max_relative_error = std::max(result.max_relative_error, double(std::abs(analytic - numeric) / denom));
        ++result.checked;
      };
      for (std::size_t k = 0; k < l.weights.size(); ++k) probe_unit(l.weights[k], k / in, tape.weight_grads[li][k]);
      for (std::size_t k = 0; k < l.bias.size(); ++k) probe_unit(l.bias[k], k, tape.bias_grads[li][k]);
      continue;
    }
    for (std::size_t k = 0; k < l.weights.size(); ++k) probe(l.weights[k], tape.weight_grads[li][k]);
    for (std::size_t k = 0; k < l.bias.size(); ++k) probe(l.bias[k], tape.bias_grads[li][k]);
  }
  return result;
}

}  // namespace cevo
