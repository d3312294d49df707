#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cevo/binary_io.hpp"
#include "cevo/errors.hpp"
#include "cevo/network.hpp"

namespace cevo {

namespace detail {

template <typename T>
void check_tape(const Network<T>& net, const GradientTape<T>& tape) {
  if (tape.weight_grads.size() != net.layer_count() || tape.bias_grads.size() != net.layer_count())
    throw ConfigError("gradient tape has " + std::to_string(tape.weight_grads.size()) + " layers, network has " +
                      std::to_string(net.layer_count()));
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    const auto& l = net.layers()[i];
    if (tape.weight_grads[i].size() != l.weights.size() || tape.bias_grads[i].size() != l.bias.size())
      throw ConfigError("gradient tape shape mismatch at layer " + std::to_string(i));
    if (!tape.weight_grads[i].all_finite() || !tape.bias_grads[i].all_finite())
      throw TrainingError("non-finite gradient in layer " + std::to_string(i) + " (" + to_string(l.spec.kind) + ")");
  }
}

}  // namespace detail

/// w <- w - lr * grad for every parameter.
template <typename T>
void sgd_step(Network<T>& net, const GradientTape<T>& tape, T lr) {
  detail::check_tape(net, tape);
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    auto& l = net.layers()[i];
    for (std::size_t k = 0; k < l.weights.size(); ++k) l.weights[k] -= lr * tape.weight_grads[i][k];
    for (std::size_t k = 0; k < l.bias.size(); ++k) l.bias[k] -= lr * tape.bias_grads[i][k];
  }
}

/// Adam with bias correction (Kingma & Ba defaults).
template <typename T = double>
class Adam {
 public:
  T lr = T(1e-3), beta1 = T(0.9), beta2 = T(0.999), eps = T(1e-8);

  Adam() = default;
  explicit Adam(T learning_rate) : lr(learning_rate) {}

  void step(Network<T>& net, const GradientTape<T>& tape) {
    detail::check_tape(net, tape);
    if (m_.empty()) {
      m_.assign(net.parameter_count(), T{0});
      v_.assign(net.parameter_count(), T{0});
    }
    if (m_.size() != net.parameter_count()) throw StateError("Adam state belongs to a different network");
    ++t_;
    const T c1 = T{1} - std::pow(beta1, static_cast<T>(t_));
    const T c2 = T{1} - std::pow(beta2, static_cast<T>(t_));
    std::size_t k = 0;
    auto update = [&](T& w, T g) {
      m_[k] = beta1 * m_[k] + (T{1} - beta1) * g;
      v_[k] = beta2 * v_[k] + (T{1} - beta2) * g * g;
      w -= lr * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps);
      ++k;
    };
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
      auto& l = net.layers()[i];
      for (std::size_t j = 0; j < l.weights.size(); ++j) update(l.weights[j], tape.weight_grads[i][j]);
      for (std::size_t j = 0; j < l.bias.size(); ++j) update(l.bias[j], tape.bias_grads[i][j]);
    }
  }

  std::uint64_t steps() const { return t_; }

  void write(BinaryWriter& w) const {
    w.f64(static_cast<double>(lr));
    w.u64(t_);
    w.u64(m_.size());
    for (T v : m_) w.f64(static_cast<double>(v));
    for (T v : v_) w.f64(static_cast<double>(v));
  }

  void read(BinaryReader& r) {
    lr = static_cast<T>(r.f64());
    t_ = r.u64();
    const auto n = r.u64();
    m_.assign(n, T{0});
    v_.assign(n, T{0});
    for (T& v : m_) v = static_cast<T>(r.f64());
    for (T& v : v_) v = static_cast<T>(r.f64());
  }

 private:
  std::vector<T> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace cevo
