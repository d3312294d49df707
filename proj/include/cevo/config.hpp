#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cevo/autoencoder.hpp"
#include "cevo/cmaes.hpp"
#include "cevo/controller.hpp"
#include "cevo/environment.hpp"
#include "cevo/errors.hpp"

namespace cevo {

enum class Variant : std::uint32_t { A, B, C, D, E, baseline1_random_input, baseline2_random_evolution };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::A: return "A";
    case Variant::B: return "B";
    case Variant::C: return "C";
    case Variant::D: return "D";
    case Variant::E: return "E";
    case Variant::baseline1_random_input: return "baseline1_random_input";
    case Variant::baseline2_random_evolution: return "baseline2_random_evolution";
  }
  return "?";
}

inline const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v{Variant::A, Variant::B, Variant::C, Variant::D, Variant::E,
                                      Variant::baseline1_random_input, Variant::baseline2_random_evolution};
  return v;
}

inline Variant variant_from_string(const std::string& s) {
  for (auto v : all_variants())
    if (s == to_string(v)) return v;
  throw ConfigError("unknown variant '" + s + "'");
}

struct CmaesSettings {
  std::size_t lambda = 0;  // 0: default for the genome length
  std::size_t mu = 0;
  double sigma0 = 0.5;
  CovarianceMode mode = CovarianceMode::full;
  friend bool operator==(const CmaesSettings&, const CmaesSettings&) = default;
};

struct ExperimentConfig {
  Variant variant = Variant::A;
  std::uint64_t master_seed = 1;
  std::size_t generations = 400;
  std::size_t novelty_generations = 30;
  std::size_t episodes_per_fitness = 10;
  std::size_t eval_episodes = 1000;
  std::size_t sparsity_frames = 1000;
  // Epochs for the two fresh autoencoders trained on the final buffer so
  // both topologies get a sparsity figure; 0 skips the comparison.
  std::size_t sparsity_compare_epochs = 10;
  std::size_t checkpoint_every = 1;
  std::size_t recon_every = 10;
  std::size_t recon_frames = 4;
  // Worker threads for population evaluation; results do not depend on it.
  std::size_t jobs = 1;

  WorldConfig world;
  AutoencoderConfig autoencoder;
  TrainingConfig training;
  CmaesSettings cmaes;
  ControllerSpec controller;

  bool health_input() const { return variant == Variant::B; }
  bool deadly_mines() const { return variant == Variant::C; }
  bool consistency_fitness() const { return variant == Variant::E; }
  AutoencoderVariant autoencoder_variant() const {
    return variant == Variant::D || variant == Variant::E ? AutoencoderVariant::alternative : AutoencoderVariant::standard;
  }
  bool random_input_training() const { return variant == Variant::baseline2_random_evolution; }
  bool random_input_eval() const {
    return variant == Variant::baseline1_random_input || variant == Variant::baseline2_random_evolution;
  }

  /// Writes everything the variant (and the frame size) decides.
  void apply_variant() {
    world.deadly_mines = deadly_mines();
    autoencoder.variant = autoencoder_variant();
    autoencoder.height = static_cast<std::size_t>(world.frame_height);
    autoencoder.width = static_cast<std::size_t>(world.frame_width);
    controller.health_input = health_input();
    controller.encoding_size = autoencoder.chokepoint;
  }

  void validate() const {
    if (generations == 0) throw ConfigError("experiment.generations must be positive");
    if (novelty_generations > generations) throw ConfigError("experiment.novelty_generations exceeds generations");
    if (episodes_per_fitness == 0) throw ConfigError("experiment.episodes_per_fitness must be positive");
    if (eval_episodes == 0) throw ConfigError("experiment.eval_episodes must be positive");
    if (sparsity_frames == 0) throw ConfigError("experiment.sparsity_frames must be positive");
    if (jobs == 0) throw ConfigError("experiment.jobs must be positive");
    world.validate();
    if (autoencoder.height != std::size_t(world.frame_height) || autoencoder.width != std::size_t(world.frame_width))
      throw ConfigError("autoencoder input size differs from the rendered frame size");
    autoencoder_layers(autoencoder);
    if (training.batch_size == 0) throw ConfigError("autoencoder.batch_size must be positive");
    if (training.buffer_capacity == 0) throw ConfigError("autoencoder.buffer_capacity must be positive");
    if (!(training.learning_rate > 0.0) || !std::isfinite(training.learning_rate))
      throw ConfigError("autoencoder.learning_rate must be positive");
    if (!std::isfinite(training.filter_threshold)) throw ConfigError("autoencoder.filter_threshold must be finite");
    if (controller.encoding_size != autoencoder.chokepoint)
      throw ConfigError("controller input does not match the chokepoint size");
    controller.layers();
    cmaes_config().resolved();
  }

  CmaesConfig cmaes_config(std::uint64_t seed = 0) const {
    CmaesConfig c;
    c.dimension = controller.weight_count();
    c.lambda = cmaes.lambda;
    c.mu = cmaes.mu;
    c.sigma0 = cmaes.sigma0;
    c.mode = cmaes.mode;
    c.seed = seed;
    return c;
  }
};

/// Full-size settings: 120x160 frames, 400 generations, 10 games per fitness.
inline ExperimentConfig full_preset() {
  ExperimentConfig c;
  c.apply_variant();
  return c;
}

/// Single-desktop settings: 60x80 frames, 40 generations of 12 genomes.
inline ExperimentConfig desk_preset() {
  ExperimentConfig c;
  c.generations = 40;
  c.novelty_generations = 10;
  c.episodes_per_fitness = 5;
  c.eval_episodes = 200;
  c.sparsity_compare_epochs = 5;
  c.recon_every = 5;
  c.world.frame_height = 60;
  c.world.frame_width = 80;
  // With 8 packs nothing in a 12-member population reaches one, so survival
  // fitness is a flat 200 and 40 generations learn nothing.
  c.world.health_packs = 24;
  c.cmaes.lambda = 12;
  c.cmaes.mode = CovarianceMode::diagonal;
  c.training.buffer_capacity = 2000;
  c.training.max_presentations = 2000;
  c.apply_variant();
  return c;
}

/// Seconds-long run for plumbing checks: 16x20 frames, tiny autoencoder.
inline ExperimentConfig smoke_preset() {
  ExperimentConfig c;
  c.generations = 3;
  c.novelty_generations = 1;
  c.episodes_per_fitness = 2;
  c.eval_episodes = 10;
  c.sparsity_frames = 50;
  c.sparsity_compare_epochs = 1;
  c.recon_every = 1;
  c.recon_frames = 2;
  c.world.frame_height = 16;
  c.world.frame_width = 20;
  c.world.max_frames = 400;
  c.autoencoder.encoder_width = 64;
  c.autoencoder.chokepoint = 32;
  c.autoencoder.decoder_widths[0] = 64;
  c.autoencoder.decoder_widths[1] = 128;
  c.cmaes.lambda = 6;
  c.cmaes.mode = CovarianceMode::diagonal;
  c.training.buffer_capacity = 200;
  c.training.max_presentations = 200;
  c.apply_variant();
  return c;
}

inline ExperimentConfig preset(const std::string& name) {
  if (name == "full") return full_preset();
  if (name == "desk") return desk_preset();
  if (name == "smoke") return smoke_preset();
  throw ConfigError("unknown preset '" + name + "' (known: full, desk, smoke)");
}

struct RunConfig {
  std::string preset = "full";
  ExperimentConfig experiment = full_preset();
  std::string output_dir = "run";
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  using nlohmann::json;
  json conv = json::array();
  for (const auto& s : c.autoencoder.conv) conv.push_back({s.filter_h, s.filter_w, s.stride, s.filters});
  return {
      {"master_seed", c.master_seed},
      {"experiment",
       {{"variant", to_string(c.variant)},
        {"generations", c.generations},
        {"novelty_generations", c.novelty_generations},
        {"episodes_per_fitness", c.episodes_per_fitness},
        {"eval_episodes", c.eval_episodes},
        {"sparsity_frames", c.sparsity_frames},
        {"sparsity_compare_epochs", c.sparsity_compare_epochs},
        {"checkpoint_every", c.checkpoint_every},
        {"recon_every", c.recon_every},
        {"recon_frames", c.recon_frames}}},
      {"environment",
       {{"room_width", c.world.room_width},
        {"room_height", c.world.room_height},
        {"frame_height", c.world.frame_height},
        {"frame_width", c.world.frame_width},
        {"fov_degrees", c.world.fov_degrees},
        {"start_health", c.world.start_health},
        {"acid_damage", c.world.acid_damage},
        {"acid_interval", c.world.acid_interval},
        {"health_pack_heal", c.world.health_pack_heal},
        {"mine_damage", c.world.mine_damage},
        {"max_frames", c.world.max_frames},
        {"health_packs", c.world.health_packs},
        {"mines", c.world.mines},
        {"turn_degrees", c.world.turn_degrees},
        {"move_speed", c.world.move_speed},
        {"pickup_radius", c.world.pickup_radius},
        {"agent_radius", c.world.agent_radius}}},
      {"autoencoder",
       {{"conv", conv},
        {"encoder_width", c.autoencoder.encoder_width},
        {"chokepoint", c.autoencoder.chokepoint},
        {"decoder_widths", {c.autoencoder.decoder_widths[0], c.autoencoder.decoder_widths[1]}},
        {"optimizer", c.training.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
        {"learning_rate", c.training.learning_rate},
        {"batch_size", c.training.batch_size},
        {"epochs_per_generation", c.training.epochs_per_generation},
        {"max_presentations", c.training.max_presentations},
        {"buffer_capacity", c.training.buffer_capacity},
        {"filter_threshold", c.training.filter_threshold}}},
      {"cmaes",
       {{"lambda", c.cmaes.lambda},
        {"mu", c.cmaes.mu},
        {"sigma0", c.cmaes.sigma0},
        {"mode", c.cmaes.mode == CovarianceMode::full ? "full" : "diagonal"}}},
      {"controller", {{"hidden1", c.controller.hidden1}, {"hidden2", c.controller.hidden2}}},
  };
}

namespace detail {

/// Line of the key at `path`, found by walking the raw text one key at a
/// time; 0 when it cannot be located.
inline std::size_t key_line(const std::string& text, const std::vector<std::string>& path) {
  std::size_t pos = 0;
  for (const auto& key : path) {
    const std::string quoted = "\"" + key + "\"";
    for (;;) {
      pos = text.find(quoted, pos);
      if (pos == std::string::npos) return 0;
      pos += quoted.size();
      std::size_t p = pos;
      while (p < text.size() && std::isspace(static_cast<unsigned char>(text[p]))) ++p;
      if (p < text.size() && text[p] == ':') break;
    }
  }
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n'));
}

class ConfigParser {
 public:
  using json = nlohmann::json;
  using Path = std::vector<std::string>;

  ConfigParser(const std::string& text, std::string source) : text_(text), source_(std::move(source)) {}

  [[noreturn]] void fail(const Path& path, const std::string& msg) const {
    std::string dotted;
    for (const auto& p : path) dotted += (dotted.empty() ? "" : ".") + p;
    const auto line = key_line(text_, path);
    throw ConfigError(source_ + ":" + (line ? std::to_string(line) : std::string("?")) + ": " + dotted + ": " + msg);
  }

  void object(const json& j, const Path& path, const std::map<std::string, std::function<void(const json&, const Path&)>>& fields) const {
    if (!j.is_object()) fail(path, "expected an object");
    for (const auto& [key, value] : j.items()) {
      Path p = path;
      p.push_back(key);
      const auto it = fields.find(key);
      if (it == fields.end()) fail(p, "unknown key");
      try {
        it->second(value, p);
      } catch (const ConfigError& e) {
        if (std::string(e.what()).rfind(source_ + ":", 0) == 0) throw;
        fail(p, e.what());
      }
    }
  }

  template <class T>
  std::function<void(const json&, const Path&)> uint(T& out) const {
    return [this, &out](const json& j, const Path& p) {
      if (!j.is_number_unsigned()) fail(p, "expected a non-negative integer");
      out = static_cast<T>(j.get<std::uint64_t>());
    };
  }
  std::function<void(const json&, const Path&)> integer(int& out) const {
    return [this, &out](const json& j, const Path& p) {
      if (!j.is_number_integer()) fail(p, "expected an integer");
      const auto v = j.get<std::int64_t>();
      if (v < INT32_MIN || v > INT32_MAX) fail(p, "integer out of range");
      out = static_cast<int>(v);
    };
  }
  std::function<void(const json&, const Path&)> number(double& out) const {
    return [this, &out](const json& j, const Path& p) {
      if (!j.is_number()) fail(p, "expected a number");
      out = j.get<double>();
    };
  }
  std::function<void(const json&, const Path&)> choice(const std::vector<std::string>& names,
                                                       std::function<void(std::size_t)> set) const {
    return [this, names, set](const json& j, const Path& p) {
      if (!j.is_string()) fail(p, "expected a string");
      const auto s = j.get<std::string>();
      for (std::size_t i = 0; i < names.size(); ++i)
        if (s == names[i]) return set(i);
      std::string known;
      for (const auto& n : names) known += (known.empty() ? "" : ", ") + n;
      fail(p, "unknown value '" + s + "' (expected one of " + known + ")");
    };
  }

  const std::string& text() const { return text_; }

 private:
  const std::string& text_;
  std::string source_;
};

}  // namespace detail

/// Strict parse of a run config. Unknown keys, wrong types and unknown
/// presets are ConfigErrors whose message starts with "source:line:".
inline RunConfig parse_run_config(const std::string& text, const std::string& source = "<config>") {
  using json = nlohmann::json;
  using Path = detail::ConfigParser::Path;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  detail::ConfigParser P(text, source);
  if (!doc.is_object()) P.fail({}, "top level must be an object");

  RunConfig rc;
  if (doc.contains("preset")) {
    if (!doc["preset"].is_string()) P.fail({"preset"}, "expected a string");
    rc.preset = doc["preset"].get<std::string>();
    try {
      rc.experiment = preset(rc.preset);
    } catch (const ConfigError& e) {
      P.fail({"preset"}, e.what());
    }
  }
  auto& c = rc.experiment;
  auto& w = c.world;
  auto& a = c.autoencoder;
  auto& t = c.training;
  auto nothing = [](const json&, const Path&) {};

  P.object(doc, {}, {
      {"preset", nothing},
      {"output_dir", [&](const json& j, const Path& p) {
         if (!j.is_string() || j.get<std::string>().empty()) P.fail(p, "expected a non-empty string");
         rc.output_dir = j.get<std::string>();
       }},
      {"master_seed", P.uint(c.master_seed)},
      {"experiment", [&](const json& j, const Path& p) {
         P.object(j, p, {
             {"variant", [&](const json& v, const Path& q) {
                if (!v.is_string()) P.fail(q, "expected a string");
                c.variant = variant_from_string(v.get<std::string>());
              }},
             {"generations", P.uint(c.generations)},
             {"novelty_generations", P.uint(c.novelty_generations)},
             {"episodes_per_fitness", P.uint(c.episodes_per_fitness)},
             {"eval_episodes", P.uint(c.eval_episodes)},
             {"sparsity_frames", P.uint(c.sparsity_frames)},
             {"sparsity_compare_epochs", P.uint(c.sparsity_compare_epochs)},
             {"checkpoint_every", P.uint(c.checkpoint_every)},
             {"recon_every", P.uint(c.recon_every)},
             {"recon_frames", P.uint(c.recon_frames)},
             {"jobs", P.uint(c.jobs)},
         });
       }},
      {"environment", [&](const json& j, const Path& p) {
         P.object(j, p, {
             {"room_width", P.integer(w.room_width)},
             {"room_height", P.integer(w.room_height)},
             {"frame_height", P.integer(w.frame_height)},
             {"frame_width", P.integer(w.frame_width)},
             {"fov_degrees", P.number(w.fov_degrees)},
             {"start_health", P.number(w.start_health)},
             {"acid_damage", P.number(w.acid_damage)},
             {"acid_interval", P.integer(w.acid_interval)},
             {"health_pack_heal", P.number(w.health_pack_heal)},
             {"mine_damage", P.number(w.mine_damage)},
             {"max_frames", P.integer(w.max_frames)},
             {"health_packs", P.integer(w.health_packs)},
             {"mines", P.integer(w.mines)},
             {"turn_degrees", P.number(w.turn_degrees)},
             {"move_speed", P.number(w.move_speed)},
             {"pickup_radius", P.number(w.pickup_radius)},
             {"agent_radius", P.number(w.agent_radius)},
         });
       }},
      {"autoencoder", [&](const json& j, const Path& p) {
         P.object(j, p, {
             {"conv", [&](const json& v, const Path& q) {
                if (!v.is_array()) P.fail(q, "expected an array of [filter_h, filter_w, stride, filters]");
                a.conv.clear();
                for (const auto& s : v) {
                  if (!s.is_array() || s.size() != 4) P.fail(q, "each stage is [filter_h, filter_w, stride, filters]");
                  for (const auto& x : s)
                    if (!x.is_number_unsigned() || x.get<std::uint64_t>() == 0) P.fail(q, "stage values must be positive integers");
                  a.conv.push_back({s[0].get<std::size_t>(), s[1].get<std::size_t>(), s[2].get<std::size_t>(), s[3].get<std::size_t>()});
                }
              }},
             {"encoder_width", P.uint(a.encoder_width)},
             {"chokepoint", P.uint(a.chokepoint)},
             {"decoder_widths", [&](const json& v, const Path& q) {
                if (!v.is_array() || v.size() != 2 || !v[0].is_number_unsigned() || !v[1].is_number_unsigned())
                  P.fail(q, "expected two non-negative integers");
                a.decoder_widths[0] = v[0].get<std::size_t>();
                a.decoder_widths[1] = v[1].get<std::size_t>();
              }},
             {"optimizer", P.choice({"sgd", "adam"}, [&](std::size_t i) { t.optimizer = static_cast<OptimizerKind>(i); })},
             {"learning_rate", P.number(t.learning_rate)},
             {"batch_size", P.uint(t.batch_size)},
             {"epochs_per_generation", P.uint(t.epochs_per_generation)},
             {"max_presentations", P.uint(t.max_presentations)},
             {"buffer_capacity", P.uint(t.buffer_capacity)},
             {"filter_threshold", P.number(t.filter_threshold)},
         });
       }},
      {"cmaes", [&](const json& j, const Path& p) {
         P.object(j, p, {
             {"lambda", P.uint(c.cmaes.lambda)},
             {"mu", P.uint(c.cmaes.mu)},
             {"sigma0", P.number(c.cmaes.sigma0)},
             {"mode", P.choice({"full", "diagonal"}, [&](std::size_t i) { c.cmaes.mode = static_cast<CovarianceMode>(i); })},
         });
       }},
      {"controller", [&](const json& j, const Path& p) {
         P.object(j, p, {
             {"hidden1", P.uint(c.controller.hidden1)},
             {"hidden2", P.uint(c.controller.hidden2)},
         });
       }},
  });

  c.apply_variant();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return rc;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path);
}

}  // namespace cevo
