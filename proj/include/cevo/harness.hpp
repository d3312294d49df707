#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cevo/autoencoder.hpp"
#include "cevo/binary_io.hpp"
#include "cevo/cmaes.hpp"
#include "cevo/config.hpp"
#include "cevo/controller.hpp"
#include "cevo/environment.hpp"
#include "cevo/errors.hpp"

namespace cevo {

// ---------------------------------------------------------------- seeds

enum class Stream : std::uint64_t {
  autoencoder = 1,
  cmaes = 2,
  training = 3,
  training_noise = 4,
  eval = 5,
  eval_noise = 6,
  sparsity = 7,
  compare = 8,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Every random stream of a run is a pure function of the master seed and
/// a few indices, so nothing depends on evaluation order.
inline std::uint64_t derive_seed(std::uint64_t master, Stream s, std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = splitmix64(master ^ splitmix64(static_cast<std::uint64_t>(s)));
  h = splitmix64(h ^ splitmix64(a + 0x51ull));
  return splitmix64(h ^ splitmix64(b + 0xA3ull));
}

// ------------------------------------------------------------- fitness

enum class Phase : std::uint32_t { novelty = 0, survival = 1 };

inline const char* to_string(Phase p) { return p == Phase::novelty ? "novelty" : "survival"; }

inline double novelty_fitness(std::span<const double> errors) {
  if (errors.empty()) throw ConfigError("novelty fitness needs at least one decision frame");
  return std::accumulate(errors.begin(), errors.end(), 0.0) / double(errors.size());
}

/// Mean reconstruction error over the episode's decision-point frames.
inline double novelty_fitness(const EpisodeResult& episode, const Autoencoder& ae) {
  if (episode.frames.empty()) throw ConfigError("novelty fitness needs an episode with retained frames");
  std::vector<const Frame*> ptrs;
  for (const auto& f : episode.frames) ptrs.push_back(&f);
  const auto errs = ae.recon_errors(ptrs);
  return novelty_fitness(errs);
}

inline double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

inline double population_std(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / double(v.size()));
}

/// Mean score, or for the consistency variant 5/3 of the mean minus the
/// population standard deviation.
inline double survival_fitness(std::span<const double> scores, Variant v) {
  if (scores.empty()) throw ConfigError("survival fitness needs at least one score");
  const double m = mean_of(scores);
  if (v != Variant::E) return m;
  return 5.0 * m / 3.0 - population_std(scores);
}

// ------------------------------------------------------------- buckets

enum class Bucket : std::uint32_t { solved = 0, good = 1, mediocre = 2, bad = 3 };

inline const char* to_string(Bucket b) {
  switch (b) {
    case Bucket::solved: return "Solved";
    case Bucket::good: return "Good";
    case Bucket::mediocre: return "Mediocre";
    case Bucket::bad: return "Bad";
  }
  return "?";
}

constexpr int kSolvedScore = 2000;

inline Bucket bucket(int score) {
  if (score < 0 || score > kSolvedScore) throw ConfigError("score " + std::to_string(score) + " outside [0, 2000]");
  if (score == kSolvedScore) return Bucket::solved;
  if (score >= 1000) return Bucket::good;
  if (score >= 500) return Bucket::mediocre;
  return Bucket::bad;
}

struct EvalSummary {
  std::size_t episodes = 0;
  double mean = 0.0;
  double std_dev = 0.0;  // population
  std::array<std::size_t, 4> counts{};  // indexed by Bucket

  std::size_t count(Bucket b) const { return counts[static_cast<std::size_t>(b)]; }
  friend bool operator==(const EvalSummary&, const EvalSummary&) = default;
};

inline EvalSummary summarize(std::span<const int> scores) {
  if (scores.empty()) throw ConfigError("cannot summarise zero episodes");
  EvalSummary s;
  s.episodes = scores.size();
  std::vector<double> d(scores.begin(), scores.end());
  s.mean = mean_of(d);
  s.std_dev = population_std(d);
  for (int v : scores) ++s.counts[static_cast<std::size_t>(bucket(v))];
  return s;
}

inline nlohmann::json to_json(const EvalSummary& s) {
  return {{"episodes", s.episodes},
          {"mean", s.mean},
          {"std_dev", s.std_dev},
          {"solved", s.count(Bucket::solved)},
          {"good", s.count(Bucket::good)},
          {"mediocre", s.count(Bucket::mediocre)},
          {"bad", s.count(Bucket::bad)}};
}

inline const char* csv_header() { return "Network,Mean,std dev,Solved,Good,Mediocre,Bad"; }

inline std::string csv_row(const std::string& network, const EvalSummary& s) {
  char buf[96];
  std::snprintf(buf, sizeof buf, ",%.2f,%.2f,%zu,%zu,%zu,%zu", s.mean, s.std_dev, s.count(Bucket::solved),
                s.count(Bucket::good), s.count(Bucket::mediocre), s.count(Bucket::bad));
  return network + buf;
}

// ------------------------------------------------------------ statistics

struct MannWhitney {
  double u = 0.0;  // U of the first sample
  double z = 0.0;
  double p = 1.0;  // one-sided: first sample stochastically greater
};

/// Normal approximation with midranks, tie correction and continuity
/// correction.
inline MannWhitney mann_whitney_greater(std::span<const double> x, std::span<const double> y) {
  if (x.empty() || y.empty()) throw ConfigError("Mann-Whitney test needs two non-empty samples");
  const std::size_t n1 = x.size(), n2 = y.size(), n = n1 + n2;
  std::vector<std::pair<double, bool>> all;
  for (double v : x) all.push_back({v, true});
  for (double v : y) all.push_back({v, false});
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum = 0.0, tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && all[j].first == all[i].first) ++j;
    const double mid = 0.5 * double(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (all[k].second) rank_sum += mid;
    const double t = double(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  MannWhitney r;
  r.u = rank_sum - double(n1) * double(n1 + 1) / 2.0;
  const double mu = double(n1) * double(n2) / 2.0;
  const double var = double(n1) * double(n2) / 12.0 * (double(n + 1) - tie_term / (double(n) * double(n - 1)));
  if (!(var > 0.0)) return r;
  r.z = (r.u - mu - 0.5) / std::sqrt(var);
  r.p = 0.5 * std::erfc(r.z / std::sqrt(2.0));
  return r;
}

// -------------------------------------------------------------- policies

enum class InputMode { real, random };

/// Stand-in encoding for the random-input baselines.
inline Encoding uniform_encoding(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Encoding enc;
  enc.values.resize(n);
  for (auto& v : enc.values) v = u(rng);
  return enc;
}

/// Controller driven by the autoencoder's encoding of each decision frame,
/// or by uniform [0, 1) noise of the same length.
inline Policy make_policy(std::shared_ptr<const Controller> ctl, const Autoencoder* ae, InputMode mode,
                          std::uint64_t noise_seed) {
  if (mode == InputMode::real && !ae) throw ConfigError("real-input policy needs an autoencoder");
  auto rng = std::make_shared<std::mt19937_64>(noise_seed);
  return [ctl, ae, mode, rng](const Frame& frame, double health) -> Decision {
    const Encoding enc = mode == InputMode::real ? ae->encode(frame) : uniform_encoding(*rng, ctl->spec().encoding_size);
    const auto h = ctl->spec().health_input ? std::optional<double>(health) : std::nullopt;
    return {ctl->decide(enc, h), hash_values(enc.values)};
  };
}

/// Runs `work(i)` for i in [0, n) on up to `jobs` threads; the first
/// exception (lowest i) is rethrown after all threads finish.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& work) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t t) {
    for (std::size_t i = t; i < n; i += jobs) {
      try {
        work(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < jobs; ++t) threads.emplace_back(run, t);
  run(0);
  for (auto& th : threads) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Scores of `n` fresh-seed episodes. Episode i uses the same spawn seed for
/// every genome and input mode, so comparisons are paired by spawn.
inline std::vector<int> play_scores(const ExperimentConfig& cfg, const Controller& ctl, const Autoencoder* ae,
                                    InputMode mode, std::size_t n) {
  auto shared = std::make_shared<const Controller>(ctl);
  std::vector<int> scores(n);
  parallel_for(n, cfg.jobs, [&](std::size_t i) {
    const auto seed = derive_seed(cfg.master_seed, Stream::eval, i);
    const auto policy = make_policy(shared, ae, mode, derive_seed(cfg.master_seed, Stream::eval_noise, i));
    scores[i] = run_episode(cfg.world, seed, policy).score;
  });
  return scores;
}

inline EvalSummary evaluate(const ExperimentConfig& cfg, std::span<const double> genome, const Autoencoder& ae,
                            std::size_t n_episodes) {
  return summarize(play_scores(cfg, Controller(cfg.controller, genome), &ae, InputMode::real, n_episodes));
}

inline EvalSummary baseline_random_input(const ExperimentConfig& cfg, std::span<const double> genome,
                                         std::size_t n_episodes) {
  return summarize(play_scores(cfg, Controller(cfg.controller, genome), nullptr, InputMode::random, n_episodes));
}

/// Decision-point frames from consecutive episodes until `n_frames` are in
/// hand (the last episode is cut short).
inline std::vector<Frame> collect_decision_frames(const WorldConfig& world, std::size_t n_frames,
                                                  const std::function<Policy(std::uint64_t)>& policy_for,
                                                  std::uint64_t master) {
  std::vector<Frame> out;
  for (std::uint64_t ep = 0; out.size() < n_frames; ++ep) {
    const auto seed = derive_seed(master, Stream::sparsity, ep);
    auto r = run_episode(world, seed, policy_for(seed), {true});
    for (auto& f : r.frames) {
      if (out.size() == n_frames) break;
      out.push_back(std::move(f));
    }
  }
  return out;
}

inline double sparsity_report(const Autoencoder& ae, const WorldConfig& world,
                              const std::function<Policy(std::uint64_t)>& policy_for, std::size_t n_frames,
                              std::uint64_t master) {
  const auto frames = collect_decision_frames(world, n_frames, policy_for, master);
  return sparsity(ae, frames);
}

// ----------------------------------------------------------- generations

struct GenerationRecord {
  std::size_t generation = 0;
  Phase phase = Phase::novelty;
  std::vector<double> fitness;      // per member, maximised
  std::vector<double> mean_scores;  // per member, whatever the phase
  double best = 0.0, mean = 0.0, std_dev = 0.0;
  double sigma = 0.0;               // step size after tell
  std::size_t buffer_size = 0;
  std::uint64_t frames_seen = 0, frames_admitted = 0;
  std::vector<double> ae_loss;
  double wall_seconds = 0.0;        // not part of the manifest
};

inline nlohmann::json to_json(const GenerationRecord& r, bool with_wall = false) {
  nlohmann::json j{{"generation", r.generation},
                   {"phase", to_string(r.phase)},
                   {"fitness", r.fitness},
                   {"mean_scores", r.mean_scores},
                   {"best", r.best},
                   {"mean", r.mean},
                   {"std_dev", r.std_dev},
                   {"sigma", r.sigma},
                   {"buffer_size", r.buffer_size},
                   {"frames_seen", r.frames_seen},
                   {"frames_admitted", r.frames_admitted},
                   {"ae_loss", r.ae_loss}};
  if (with_wall) j["wall_seconds"] = r.wall_seconds;
  return j;
}

inline GenerationRecord record_from_json(const nlohmann::json& j) {
  GenerationRecord r;
  r.generation = j.at("generation").get<std::size_t>();
  r.phase = j.at("phase").get<std::string>() == "novelty" ? Phase::novelty : Phase::survival;
  r.fitness = j.at("fitness").get<std::vector<double>>();
  r.mean_scores = j.at("mean_scores").get<std::vector<double>>();
  r.best = j.at("best").get<double>();
  r.mean = j.at("mean").get<double>();
  r.std_dev = j.at("std_dev").get<double>();
  r.sigma = j.at("sigma").get<double>();
  r.buffer_size = j.at("buffer_size").get<std::size_t>();
  r.frames_seen = j.at("frames_seen").get<std::uint64_t>();
  r.frames_admitted = j.at("frames_admitted").get<std::uint64_t>();
  r.ae_loss = j.at("ae_loss").get<std::vector<double>>();
  r.wall_seconds = j.value("wall_seconds", 0.0);
  return r;
}

/// Best survival-phase member so far, with the autoencoder it was scored
/// against (later training would shift the encodings it learned to read).
struct Champion {
  std::size_t generation = 0;
  std::size_t member = 0;
  double fitness = 0.0;
  std::vector<double> genome;
  Autoencoder autoencoder;
};

inline Phase phase_for(const ExperimentConfig& cfg, std::size_t generation) {
  return generation < cfg.novelty_generations ? Phase::novelty : Phase::survival;
}

// ---------------------------------------------------------- genome files

inline void save_genome(const std::string& path, const ControllerSpec& spec, std::span<const double> genome) {
  if (genome.size() != spec.weight_count()) throw ConfigError("genome length does not match the controller");
  BinaryWriter w;
  w.bytes("CEGN");
  w.u32(1);
  w.u64(spec.encoding_size);
  w.u32(spec.health_input ? 1 : 0);
  w.u64(spec.hidden1);
  w.u64(spec.hidden2);
  w.u64(genome.size());
  w.f64s(genome);
  w.save(path);
}

struct GenomeFile {
  ControllerSpec spec;
  std::vector<double> genome;
};

inline GenomeFile load_genome_file(const std::string& path) {
  auto r = BinaryReader::load(path);
  r.expect("CEGN");
  if (r.u32() != 1) throw FormatError("unsupported genome file version in '" + path + "'");
  GenomeFile g;
  g.spec.encoding_size = r.u64();
  g.spec.health_input = r.u32() != 0;
  g.spec.hidden1 = r.u64();
  g.spec.hidden2 = r.u64();
  const auto n = r.u64();
  if (n != g.spec.weight_count()) throw FormatError("genome file '" + path + "' length disagrees with its header");
  g.genome.resize(n);
  r.f64s(g.genome);
  if (!r.at_end()) throw FormatError("trailing bytes in genome file '" + path + "'");
  return g;
}

// ------------------------------------------------------------ experiment

/// Per-member evaluation output. Offers are every decision frame in
/// (episode, frame) order; only the frames that can still be in the FIFO
/// after this member's own offers keep their pixels.
struct MemberOutcome {
  std::vector<double> scores;
  std::vector<double> novelty;
  std::vector<double> offer_errors;
  std::vector<std::pair<std::size_t, Frame>> kept;
};

class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg)
      : cfg_(std::move(cfg)),
        cmaes_(cfg_.cmaes_config(derive_seed(cfg_.master_seed, Stream::cmaes))),
        ae_(cfg_.autoencoder, derive_seed(cfg_.master_seed, Stream::autoencoder)),
        buffer_(cfg_.training.buffer_capacity, cfg_.training.filter_threshold) {
    cfg_.validate();
  }

  const ExperimentConfig& config() const { return cfg_; }
  ExperimentConfig& mutable_config() { return cfg_; }
  const Cmaes& cmaes() const { return cmaes_; }
  const Autoencoder& autoencoder() const { return ae_; }
  const ExperienceBuffer& buffer() const { return buffer_; }
  const std::vector<GenerationRecord>& records() const { return records_; }
  const std::optional<Champion>& champion() const { return champion_; }

  std::size_t generation() const { return records_.size(); }
  bool finished() const { return generation() >= cfg_.generations; }
  Phase phase_of(std::size_t g) const { return phase_for(cfg_, g); }

  MemberOutcome evaluate_member(const std::vector<double>& genome, std::size_t gen, std::size_t member) const {
    auto ctl = std::make_shared<const Controller>(cfg_.controller, genome);
    const auto mode = cfg_.random_input_training() ? InputMode::random : InputMode::real;
    const std::size_t cap = buffer_.capacity();
    const double thr = buffer_.filter_threshold();
    MemberOutcome out;
    std::vector<std::pair<std::size_t, Frame>> admitted;  // ring of the latest `cap`
    std::size_t admitted_total = 0;
    for (std::size_t e = 0; e < cfg_.episodes_per_fitness; ++e) {
      const auto seed = derive_seed(cfg_.master_seed, Stream::training, gen, e);
      const auto noise = derive_seed(cfg_.master_seed, Stream::training_noise, gen, member * 100003 + e);
      auto r = run_episode(cfg_.world, seed, make_policy(ctl, &ae_, mode, noise), {true});
      std::vector<const Frame*> ptrs;
      for (const auto& f : r.frames) ptrs.push_back(&f);
      const auto errs = ae_.recon_errors(ptrs);
      out.scores.push_back(r.score);
      out.novelty.push_back(novelty_fitness(errs));
      for (std::size_t k = 0; k < errs.size(); ++k) {
        const std::size_t idx = out.offer_errors.size();
        out.offer_errors.push_back(errs[k]);
        if (!(errs[k] >= thr)) continue;
        if (admitted.size() < cap)
          admitted.emplace_back(idx, std::move(r.frames[k]));
        else
          admitted[admitted_total % cap] = {idx, std::move(r.frames[k])};
        ++admitted_total;
      }
    }
    std::sort(admitted.begin(), admitted.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    out.kept = std::move(admitted);
    return out;
  }

  GenerationRecord run_generation() {
    if (finished()) throw StateError("experiment already ran all " + std::to_string(cfg_.generations) + " generations");
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t gen = generation();
    GenerationRecord rec;
    rec.generation = gen;
    rec.phase = phase_of(gen);

    const auto genomes = cmaes_.ask();
    const std::size_t lambda = genomes.size();
    std::vector<std::vector<double>> gv(lambda);
    for (std::size_t i = 0; i < lambda; ++i) gv[i].assign(genomes[i].data(), genomes[i].data() + genomes[i].size());

    rec.fitness.resize(lambda);
    rec.mean_scores.resize(lambda);
    // Waves of `jobs` members; the collector offers each wave's frames in
    // member order, so the buffer never depends on thread timing.
    const std::size_t jobs = std::max<std::size_t>(1, cfg_.jobs);
    for (std::size_t start = 0; start < lambda; start += jobs) {
      const std::size_t end = std::min(lambda, start + jobs);
      std::vector<MemberOutcome> wave(end - start);
      parallel_for(end - start, jobs, [&](std::size_t k) { wave[k] = evaluate_member(gv[start + k], gen, start + k); });
      for (std::size_t k = 0; k < wave.size(); ++k) {
        auto& o = wave[k];
        auto kept = o.kept.begin();
        for (std::size_t i = 0; i < o.offer_errors.size(); ++i) {
          Frame f;
          if (kept != o.kept.end() && kept->first == i) f = std::move((kept++)->second);
          buffer_.offer_scored(std::move(f), o.offer_errors[i]);
        }
        const std::size_t m = start + k;
        rec.mean_scores[m] = mean_of(o.scores);
        rec.fitness[m] = rec.phase == Phase::novelty ? mean_of(o.novelty) : survival_fitness(o.scores, cfg_.variant);
        if (!std::isfinite(rec.fitness[m]))
          throw NumericError("generation " + std::to_string(gen) + ": fitness of member " + std::to_string(m) +
                             " is not finite");
      }
    }

    std::vector<double> negated(lambda);
    for (std::size_t i = 0; i < lambda; ++i) negated[i] = -rec.fitness[i];
    cmaes_.tell(negated);

    if (rec.phase == Phase::survival) {
      const auto best = static_cast<std::size_t>(std::max_element(rec.fitness.begin(), rec.fitness.end()) - rec.fitness.begin());
      if (!champion_ || rec.fitness[best] > champion_->fitness)
        champion_ = Champion{gen, best, rec.fitness[best], gv[best], ae_.frozen_copy()};
    }

    rec.ae_loss = ae_.train_epochs(buffer_, cfg_.training.epochs_per_generation, cfg_.training);

    rec.best = *std::max_element(rec.fitness.begin(), rec.fitness.end());
    rec.mean = mean_of(rec.fitness);
    rec.std_dev = population_std(rec.fitness);
    rec.sigma = cmaes_.sigma();
    rec.buffer_size = buffer_.size();
    rec.frames_seen = buffer_.frames_seen();
    rec.frames_admitted = buffer_.frames_admitted();
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    records_.push_back(rec);
    return rec;
  }

  /// Genome and autoencoder used for final evaluation: the best survival
  /// member, or the search mean with the current autoencoder when the run
  /// never reached the survival phase.
  std::pair<std::vector<double>, const Autoencoder*> final_policy() const {
    if (champion_) return {champion_->genome, &champion_->autoencoder};
    const auto& m = cmaes_.mean();
    return {std::vector<double>(m.data(), m.data() + m.size()), &ae_};
  }

  nlohmann::json manifest() const {
    nlohmann::json gens = nlohmann::json::array();
    for (const auto& r : records_) gens.push_back(to_json(r));
    nlohmann::json j{{"config", to_json(cfg_)}, {"generations", gens}};
    if (champion_)
      j["champion"] = {{"generation", champion_->generation}, {"member", champion_->member}, {"fitness", champion_->fitness}};
    return j;
  }

  void write(BinaryWriter& w) const {
    w.bytes("CEXP");
    w.u32(1);
    w.str(to_json(cfg_).dump());
    cmaes_.write(w);
    ae_.write(w);
    buffer_.write(w);
    w.u32(champion_ ? 1 : 0);
    if (champion_) {
      w.u64(champion_->generation);
      w.u64(champion_->member);
      w.f64(champion_->fitness);
      w.u64(champion_->genome.size());
      w.f64s(champion_->genome);
      champion_->autoencoder.write(w);
    }
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : records_) recs.push_back(to_json(r, true));
    w.str(recs.dump());
  }

  /// Restores a checkpoint written by an experiment with the same config
  /// (jobs aside).
  void read(BinaryReader& r) {
    r.expect("CEXP");
    if (r.u32() != 1) throw FormatError("unsupported experiment checkpoint version");
    if (r.str() != to_json(cfg_).dump()) throw ConfigError("checkpoint was written under a different configuration");
    cmaes_.read(r);
    ae_.read(r);
    buffer_.read(r);
    champion_.reset();
    if (r.u32()) {
      Champion c;
      c.generation = r.u64();
      c.member = r.u64();
      c.fitness = r.f64();
      c.genome.resize(r.u64());
      if (c.genome.size() != cfg_.controller.weight_count()) throw FormatError("checkpoint champion has the wrong length");
      r.f64s(c.genome);
      c.autoencoder.read(r);
      champion_ = std::move(c);
    }
    records_.clear();
    try {
      for (const auto& j : nlohmann::json::parse(r.str())) records_.push_back(record_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("checkpoint generation records: ") + e.what());
    }
    if (cmaes_.generation() != records_.size()) throw FormatError("checkpoint optimizer and records disagree");
  }

  void save_checkpoint(const std::string& path) const {
    BinaryWriter w;
    write(w);
    const std::string tmp = path + ".tmp";
    w.save(tmp);
    std::filesystem::rename(tmp, path);
  }

  void load_checkpoint(const std::string& path) {
    auto r = BinaryReader::load(path);
    read(r);
    if (!r.at_end()) throw FormatError("trailing bytes in checkpoint '" + path + "'");
  }

 private:
  ExperimentConfig cfg_;
  Cmaes cmaes_;
  Autoencoder ae_;
  ExperienceBuffer buffer_;
  std::vector<GenerationRecord> records_;
  std::optional<Champion> champion_;
};

}  // namespace cevo
