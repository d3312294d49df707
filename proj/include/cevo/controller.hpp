#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cevo/actions.hpp"
#include "cevo/autoencoder.hpp"
#include "cevo/network.hpp"

namespace cevo {

/// Sigmoid MLP from the chokepoint to four action outputs, no biases.
/// With `health_input` the normalised health is appended as one extra input.
struct ControllerSpec {
  std::size_t encoding_size = 128;
  bool health_input = false;
  std::size_t hidden1 = 16;
  std::size_t hidden2 = 8;
  static constexpr std::size_t outputs = 4;

  std::size_t input_size() const { return encoding_size + (health_input ? 1 : 0); }
  std::size_t weight_count() const { return input_size() * hidden1 + hidden1 * hidden2 + hidden2 * outputs; }

  std::vector<LayerSpec> layers() const {
    if (encoding_size == 0 || hidden1 == 0 || hidden2 == 0) throw ConfigError("controller sizes must be positive");
    return {LayerSpec::dense(input_size(), hidden1, Activation::sigmoid, false),
            LayerSpec::dense(hidden1, hidden2, Activation::sigmoid, false),
            LayerSpec::dense(hidden2, outputs, Activation::sigmoid, false)};
  }

  friend bool operator==(const ControllerSpec&, const ControllerSpec&) = default;
};

/// Genome layout: layer 1 weights, then layer 2, then layer 3. Inside a
/// layer, the weight from input i to unit j sits at offset j * in + i.
inline Network<double> load_genome(const ControllerSpec& spec, std::span<const double> genome) {
  if (genome.size() != spec.weight_count())
    throw ConfigError("genome has " + std::to_string(genome.size()) + " values, controller with " +
                      std::to_string(spec.input_size()) + " inputs expects " + std::to_string(spec.weight_count()));
  for (std::size_t i = 0; i < genome.size(); ++i)
    if (!std::isfinite(genome[i])) throw ConfigError("genome value " + std::to_string(i) + " is not finite");
  Network<double> net(spec.layers());
  net.set_flat_parameters(std::vector<double>(genome.begin(), genome.end()));
  return net;
}

inline Network<double> load_genome(const ControllerSpec& spec, const Eigen::VectorXd& genome) {
  return load_genome(spec, std::span<const double>(genome.data(), static_cast<std::size_t>(genome.size())));
}

inline std::vector<double> flatten(const Network<double>& net) { return net.flat_parameters(); }

/// Thresholds the first three outputs (strictly above 0.5) and turns the
/// fourth into a frame count, ceil(5 * v).
inline ActionCommand decode_outputs(std::span<const double> out) {
  if (out.size() != ControllerSpec::outputs) throw ConfigError("controller produces exactly 4 outputs");
  ActionCommand cmd;
  cmd.actions.turn_left = out[0] > 0.5;
  cmd.actions.turn_right = out[1] > 0.5;
  cmd.actions.move_forward = out[2] > 0.5;
  const double r = std::ceil(static_cast<double>(kDecisionInterval) * out[3]);
  cmd.repeat = static_cast<int>(std::clamp(r, 0.0, static_cast<double>(kDecisionInterval)));
  return cmd;
}

inline std::vector<double> controller_outputs(const Network<double>& net, const ControllerSpec& spec, const Encoding& enc,
                                              std::optional<double> health = std::nullopt) {
  if (enc.size() != spec.encoding_size)
    throw ConfigError("encoding has " + std::to_string(enc.size()) + " values, controller expects " +
                      std::to_string(spec.encoding_size));
  if (health && !spec.health_input) throw ConfigError("health given to a controller without a health input");
  if (!health && spec.health_input) throw ConfigError("controller with a health input needs the health value");
  RowMatrix<double> x(1, static_cast<long>(spec.input_size()));
  for (std::size_t i = 0; i < enc.size(); ++i) x(0, static_cast<long>(i)) = enc.values[i];
  if (health) {
    if (!(*health >= 0.0 && *health <= 1.0)) throw ConfigError("normalised health must lie in [0, 1]");
    x(0, static_cast<long>(spec.encoding_size)) = *health;
  }
  const auto y = net.infer(x);
  return {y.data(), y.data() + y.size()};
}

inline ActionCommand decide(const Network<double>& net, const ControllerSpec& spec, const Encoding& enc,
                            std::optional<double> health = std::nullopt) {
  return decode_outputs(controller_outputs(net, spec, enc, health));
}

/// A genome bound to its network; what the harness hands each episode.
class Controller {
 public:
  Controller(ControllerSpec spec, std::span<const double> genome) : spec_(spec), net_(load_genome(spec, genome)) {}
  Controller(ControllerSpec spec, const Eigen::VectorXd& genome) : spec_(spec), net_(load_genome(spec, genome)) {}

  const ControllerSpec& spec() const { return spec_; }
  const Network<double>& network() const { return net_; }

  ActionCommand decide(const Encoding& enc, std::optional<double> health = std::nullopt) const {
    return cevo::decide(net_, spec_, enc, health);
  }

 private:
  ControllerSpec spec_;
  Network<double> net_;
};

}  // namespace cevo
