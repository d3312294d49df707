#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cevo/config.hpp"
#include "cevo/harness.hpp"

namespace cevo {

// Output directory of a training run:
//   config.json      resolved config echo
//   checkpoint.bin   latest resumable state
//   manifest.json    records, evaluation, sparsity (no wall-clock)
//   timing.json      wall-clock seconds per generation
//   champion.genome  evaluated genome
//   champion.ae      autoencoder the champion was scored against
//   results.csv      evaluation rows
//   recon/           input|reconstruction pairs every recon_every generations
namespace run_files {
inline constexpr const char* config = "config.json";
inline constexpr const char* checkpoint = "checkpoint.bin";
inline constexpr const char* manifest = "manifest.json";
inline constexpr const char* timing = "timing.json";
inline constexpr const char* genome = "champion.genome";
inline constexpr const char* autoencoder = "champion.ae";
inline constexpr const char* csv = "results.csv";
inline constexpr const char* recon = "recon";
}  // namespace run_files

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw FormatError("cannot open '" + tmp + "' for writing");
    out << text;
    if (!out) throw FormatError("short write to '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
}

/// Config echo stored at the front of a checkpoint.
inline ExperimentConfig checkpoint_config(const std::string& path) {
  auto r = BinaryReader::load(path);
  r.expect("CEXP");
  if (r.u32() != 1) throw FormatError("unsupported experiment checkpoint version");
  const auto echo = r.str();
  try {
    return parse_run_config(echo, path).experiment;
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
}

inline Experiment load_experiment(const std::string& checkpoint_path) {
  Experiment ex(checkpoint_config(checkpoint_path));
  ex.load_checkpoint(checkpoint_path);
  return ex;
}

/// Side-by-side input|reconstruction images of `frames`.
inline std::vector<std::string> write_recon_pairs(const Autoencoder& ae, const std::vector<const Frame*>& frames,
                                                  const std::filesystem::path& dir, const std::string& stem) {
  std::vector<std::string> written;
  if (frames.empty()) return written;
  std::filesystem::create_directories(dir);
  const auto recon = ae.reconstruct_batch(frames);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "%s_%03zu.ppm", stem.c_str(), i);
    const auto path = (dir / name).string();
    write_ppm(path, side_by_side(*frames[i], recon[i]));
    written.push_back(path);
  }
  return written;
}

inline std::function<Policy(std::uint64_t)> policy_factory(const ExperimentConfig& cfg, std::span<const double> genome,
                                                           const Autoencoder* ae, InputMode mode) {
  auto ctl = std::make_shared<const Controller>(cfg.controller, genome);
  return [ctl, ae, mode](std::uint64_t seed) { return make_policy(ctl, ae, mode, seed); };
}

inline nlohmann::json eval_json(const EvalSummary& s, const std::vector<int>& scores, InputMode mode) {
  auto j = to_json(s);
  j["input"] = mode == InputMode::real ? "real" : "random";
  j["scores"] = scores;
  return j;
}

inline std::string summary_table(const std::vector<std::pair<std::string, EvalSummary>>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(28) << "Network" << std::right << std::setw(10) << "Mean" << std::setw(10) << "std dev"
     << std::setw(8) << "Solved" << std::setw(8) << "Good" << std::setw(10) << "Mediocre" << std::setw(8) << "Bad" << '\n';
  for (const auto& [name, s] : rows)
    os << std::left << std::setw(28) << name << std::right << std::fixed << std::setprecision(2) << std::setw(10)
       << s.mean << std::setw(10) << s.std_dev << std::setw(8) << s.count(Bucket::solved) << std::setw(8)
       << s.count(Bucket::good) << std::setw(10) << s.count(Bucket::mediocre) << std::setw(8) << s.count(Bucket::bad)
       << '\n';
  return os.str();
}

/// Evaluation, sparsity report and artifacts for a finished experiment.
inline nlohmann::json finalize_run(const Experiment& ex, const std::filesystem::path& dir, std::ostream& log) {
  const auto& cfg = ex.config();
  const auto [genome, ae] = ex.final_policy();
  save_genome((dir / run_files::genome).string(), cfg.controller, genome);
  ae->save((dir / run_files::autoencoder).string());

  auto m = ex.manifest();
  const Controller ctl(cfg.controller, genome);
  std::vector<std::pair<std::string, EvalSummary>> rows;

  const auto main_mode = cfg.random_input_eval() ? InputMode::random : InputMode::real;
  log << "evaluating champion over " << cfg.eval_episodes << " episodes (" << (main_mode == InputMode::real ? "real" : "random")
      << " input)\n";
  const auto scores = play_scores(cfg, ctl, ae, main_mode, cfg.eval_episodes);
  const auto summary = summarize(scores);
  m["evaluation"] = eval_json(summary, scores, main_mode);
  rows.push_back({to_string(cfg.variant), summary});

  if (main_mode == InputMode::real) {
    log << "evaluating the same genome on random input\n";
    const auto rnd = play_scores(cfg, ctl, nullptr, InputMode::random, cfg.eval_episodes);
    const auto rs = summarize(rnd);
    m["random_input_evaluation"] = eval_json(rs, rnd, InputMode::random);
    const std::vector<double> a(scores.begin(), scores.end()), b(rnd.begin(), rnd.end());
    const auto mw = mann_whitney_greater(a, b);
    m["real_vs_random_input"] = {{"u", mw.u}, {"z", mw.z}, {"p", mw.p}};
    rows.push_back({std::string(to_string(cfg.variant)) + " (random input)", rs});
  }

  log << "sparsity over " << cfg.sparsity_frames << " decision frames\n";
  const auto frames = collect_decision_frames(cfg.world, cfg.sparsity_frames, policy_factory(cfg, genome, ae, main_mode),
                                              cfg.master_seed);
  nlohmann::json sp{{"frames", frames.size()}, {"run", sparsity(*ae, frames)},
                    {"run_topology", to_string(cfg.autoencoder.variant)}};
  if (cfg.sparsity_compare_epochs > 0 && !ex.buffer().empty()) {
    // Fresh autoencoders of both topologies, same buffer, same budget.
    TrainingConfig t = cfg.training;
    t.max_presentations = cfg.sparsity_compare_epochs * ex.buffer().size();
    for (auto v : {AutoencoderVariant::standard, AutoencoderVariant::alternative}) {
      AutoencoderConfig ac = cfg.autoencoder;
      ac.variant = v;
      if (v != cfg.autoencoder.variant) ac.conv.clear();
      Autoencoder fresh(ac, derive_seed(cfg.master_seed, Stream::compare, static_cast<std::uint64_t>(v)));
      const auto trace = fresh.train_epochs(ex.buffer(), cfg.sparsity_compare_epochs, t);
      sp[to_string(v)] = {{"sparsity", sparsity(fresh, frames)}, {"final_loss", trace.empty() ? 0.0 : trace.back()}};
    }
    sp["compare_epochs"] = cfg.sparsity_compare_epochs;
  }
  m["sparsity"] = sp;

  write_text(dir / run_files::manifest, m.dump(2) + "\n");
  std::string csv = std::string(csv_header()) + "\n";
  for (const auto& [name, s] : rows) csv += csv_row(name, s) + "\n";
  write_text(dir / run_files::csv, csv);
  log << summary_table(rows);
  return m;
}

struct TrainOptions {
  bool restart = false;  // ignore an existing checkpoint
  // Stop after this many generations in this invocation (checkpoint kept);
  // 0 runs to the end.
  std::size_t max_generations = 0;
};

/// Runs (or resumes) the generational loop into rc.output_dir and, once all
/// generations are done, writes the manifest and champion artifacts.
/// Returns the manifest, or null when stopped early.
inline nlohmann::json train_run(const RunConfig& rc, std::ostream& log, const TrainOptions& opt = {}) {
  const std::filesystem::path dir = rc.output_dir;
  std::filesystem::create_directories(dir);
  const auto& cfg = rc.experiment;
  Experiment ex(cfg);
  const auto ckpt = dir / run_files::checkpoint;
  if (!opt.restart && std::filesystem::exists(ckpt)) {
    ex.load_checkpoint(ckpt.string());
    ex.mutable_config().jobs = cfg.jobs;
    log << "resuming at generation " << ex.generation() << '\n';
  }
  auto echo = to_json(cfg);
  echo["preset"] = rc.preset;
  echo["output_dir"] = rc.output_dir;
  write_text(dir / run_files::config, echo.dump(2) + "\n");

  std::size_t ran = 0;
  while (!ex.finished()) {
    if (opt.max_generations && ran == opt.max_generations) return nullptr;
    const auto r = ex.run_generation();
    ++ran;
    char line[200];
    std::snprintf(line, sizeof line, "gen %3zu %-8s best %10.4f mean %10.4f sigma %.4f buffer %zu loss %.5f (%.1fs)\n",
                  r.generation, to_string(r.phase), r.best, r.mean, r.sigma, r.buffer_size,
                  r.ae_loss.empty() ? 0.0 : r.ae_loss.back(), r.wall_seconds);
    log << line << std::flush;
    const std::size_t done = r.generation + 1;
    if (cfg.recon_every && cfg.recon_frames && done % cfg.recon_every == 0) {
      std::vector<const Frame*> frames;
      const auto& buf = ex.buffer().frames();
      for (std::size_t i = buf.size() > cfg.recon_frames ? buf.size() - cfg.recon_frames : 0; i < buf.size(); ++i)
        frames.push_back(&buf[i]);
      char stem[32];
      std::snprintf(stem, sizeof stem, "gen%04zu", done);
      write_recon_pairs(ex.autoencoder(), frames, dir / run_files::recon, stem);
    }
    if (ex.finished() || (cfg.checkpoint_every && done % cfg.checkpoint_every == 0)) ex.save_checkpoint(ckpt.string());
  }

  nlohmann::json timing = nlohmann::json::array();
  for (const auto& r : ex.records()) timing.push_back({{"generation", r.generation}, {"wall_seconds", r.wall_seconds}});
  write_text(dir / run_files::timing, timing.dump(2) + "\n");
  return finalize_run(ex, dir, log);
}

}  // namespace cevo
