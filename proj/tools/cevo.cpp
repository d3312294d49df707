// cevo: train, evaluate and inspect autoencoder-driven neuroevolution runs.
//
// Exit codes: 0 success, 1 runtime failure (checkpoint kept), 2 bad input
// (config, genome, checkpoint or command line).

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cevo/bench.hpp"
#include "cevo/runner.hpp"

using namespace cevo;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0, kRuntime = 1, kBadInput = 2;

void apply_seed_env(ExperimentConfig& c) {
  if (const char* s = std::getenv("CEVO_SEED")) {
    try {
      std::size_t used = 0;
      c.master_seed = std::stoull(s, &used);
      if (used != std::string(s).size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw ConfigError(std::string("CEVO_SEED must be an unsigned integer, got '") + s + "'");
    }
  }
}

int cmd_train(const std::string& config_path, std::size_t jobs, bool restart, bool dry_run, std::size_t max_gens,
              const std::string& output_dir) {
  auto rc = load_run_config(config_path);
  apply_seed_env(rc.experiment);
  if (jobs) rc.experiment.jobs = jobs;
  if (!output_dir.empty()) rc.output_dir = output_dir;
  if (dry_run) {
    const auto& c = rc.experiment;
    auto j = to_json(c);
    j["preset"] = rc.preset;
    j["output_dir"] = rc.output_dir;
    std::cout << j.dump(2) << '\n';
    std::cout << "genome length " << c.controller.weight_count() << ", population "
              << c.cmaes_config().resolved().lambda << ", autoencoder parameters "
              << Network<double>(autoencoder_layers(c.autoencoder)).parameter_count() << '\n';
    return kOk;
  }
  try {
    train_run(rc, std::cout, {restart, max_gens});
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\nlast checkpoint kept in " << rc.output_dir << '\n';
    return kRuntime;
  }
  return kOk;
}

int cmd_eval(const std::string& genome_path, const std::string& config_path, std::size_t episodes, bool random_input,
             std::string ae_path, std::string csv_path, std::string name, std::size_t jobs) {
  auto rc = load_run_config(config_path);
  apply_seed_env(rc.experiment);
  auto& cfg = rc.experiment;
  if (jobs) cfg.jobs = jobs;
  const auto g = load_genome_file(genome_path);
  if (!(g.spec == cfg.controller))
    throw ConfigError("genome '" + genome_path + "' has " + std::to_string(g.spec.input_size()) + " inputs and " +
                      std::to_string(g.genome.size()) + " weights; the config's controller takes " +
                      std::to_string(cfg.controller.input_size()) + " inputs and " +
                      std::to_string(cfg.controller.weight_count()) + " weights");
  if (!episodes) episodes = cfg.eval_episodes;
  std::optional<Autoencoder> ae;
  if (!random_input) {
    if (ae_path.empty()) ae_path = (fs::path(genome_path).parent_path() / run_files::autoencoder).string();
    ae = Autoencoder::load(ae_path);
    const auto& ac = ae->config();
    if (ac.height != cfg.autoencoder.height || ac.width != cfg.autoencoder.width || ac.chokepoint != cfg.controller.encoding_size)
      throw ConfigError("autoencoder '" + ae_path + "' does not match the config's frame or encoding size");
  }
  const auto scores = play_scores(cfg, Controller(cfg.controller, g.genome), ae ? &*ae : nullptr,
                                  random_input ? InputMode::random : InputMode::real, episodes);
  const auto s = summarize(scores);
  if (name.empty()) name = std::string(to_string(cfg.variant)) + (random_input ? " (random input)" : "");
  std::cout << summary_table({{name, s}});
  if (csv_path.empty()) csv_path = (fs::path(genome_path).parent_path() / "eval.csv").string();
  write_text(csv_path, std::string(csv_header()) + "\n" + csv_row(name, s) + "\n");
  std::cout << "wrote " << csv_path << '\n';
  return kOk;
}

int cmd_recon(const std::string& checkpoint, std::size_t n_frames, std::string out_dir) {
  const auto ex = load_experiment(checkpoint);
  if (n_frames == 0) return kOk;
  const auto& cfg = ex.config();
  const auto [genome, ae] = ex.final_policy();
  const auto mode = cfg.random_input_training() ? InputMode::random : InputMode::real;
  const auto frames = collect_decision_frames(cfg.world, n_frames, policy_factory(cfg, genome, ae, mode), cfg.master_seed);
  std::vector<const Frame*> ptrs;
  for (const auto& f : frames) ptrs.push_back(&f);
  if (out_dir.empty()) out_dir = (fs::path(checkpoint).parent_path() / run_files::recon).string();
  for (const auto& p : write_recon_pairs(*ae, ptrs, out_dir, "champion")) std::cout << p << '\n';
  return kOk;
}

int cmd_bench(const std::string& suite) {
  bool pass = true;
  auto show = [&](const std::string& name, const SuiteReport& r) {
    for (const auto& l : r.lines) std::cout << "  " << l << '\n';
    std::printf("%s: %s (%.1fs)\n", name.c_str(), r.pass ? "PASS" : "FAIL", r.seconds);
    pass = pass && r.pass;
  };
  if (suite == "cmaes" || suite == "all") show("cmaes", cmaes_suite());
  if (suite == "grad" || suite == "all") show("grad", grad_suite());
  if (suite == "env" || suite == "all") show("env", env_suite());
  return pass ? kOk : kRuntime;
}

int cmd_export(const std::string& checkpoint, const std::string& out, const std::string& format) {
  const auto ex = load_experiment(checkpoint);
  const auto genome = ex.final_policy().first;
  const auto& spec = ex.config().controller;
  if (format == "binary") {
    save_genome(out, spec, genome);
  } else if (format == "json") {
    nlohmann::json j{{"encoding_size", spec.encoding_size},
                     {"health_input", spec.health_input},
                     {"hidden1", spec.hidden1},
                     {"hidden2", spec.hidden2},
                     {"weights", genome}};
    write_text(out, j.dump() + "\n");
  } else {
    std::string csv;
    char buf[40];
    for (double v : genome) {
      std::snprintf(buf, sizeof buf, "%.17g\n", v);
      csv += buf;
    }
    write_text(out, csv);
  }
  std::cout << "wrote " << genome.size() << " weights to " << out << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cevo: autoencoder-driven neuroevolution in a raycast arena"};
  app.require_subcommand(1);

  std::string config, genome, ae_path, csv_path, name, checkpoint, out, output_dir, suite = "all", format = "binary";
  std::size_t jobs = 0, episodes = 0, n_frames = 8, max_gens = 0;
  bool restart = false, dry_run = false, random_input = false;

  auto* train = app.add_subcommand("train", "run or resume the generational loop");
  train->add_option("config", config, "run config (JSON)")->required();
  train->add_option("--jobs,-j", jobs, "evaluation threads (results do not depend on it)");
  train->add_option("--output-dir,-o", output_dir, "override output_dir");
  train->add_option("--max-generations", max_gens, "stop after this many generations (checkpoint kept)");
  train->add_flag("--restart", restart, "ignore an existing checkpoint");
  train->add_flag("--dry-run", dry_run, "print the resolved config and exit");

  auto* eval = app.add_subcommand("eval", "evaluate a genome over fresh-seed episodes");
  eval->add_option("--genome,-g", genome, "genome file")->required();
  eval->add_option("--config,-c", config, "run config (JSON)")->required();
  eval->add_option("--episodes,-n", episodes, "episodes (default: config eval_episodes)");
  eval->add_flag("--random-input", random_input, "feed uniform noise instead of encodings");
  eval->add_option("--autoencoder", ae_path, "autoencoder file (default: champion.ae beside the genome)");
  eval->add_option("--csv", csv_path, "CSV output (default: eval.csv beside the genome)");
  eval->add_option("--name", name, "row label");
  eval->add_option("--jobs,-j", jobs, "evaluation threads");

  auto* recon = app.add_subcommand("recon", "write input|reconstruction pairs from champion play");
  recon->add_option("checkpoint", checkpoint, "checkpoint.bin")->required();
  recon->add_option("-n,--frames", n_frames, "decision frames to dump");
  recon->add_option("--out", out, "output directory (default: recon/ beside the checkpoint)");

  auto* bench = app.add_subcommand("bench", "run the cmaes, grad or env benchmark suite");
  bench->add_option("suite", suite, "cmaes | grad | env | all")->check(CLI::IsMember({"cmaes", "grad", "env", "all"}));

  auto* exp = app.add_subcommand("export-genome", "write the champion genome from a checkpoint");
  exp->add_option("checkpoint", checkpoint, "checkpoint.bin")->required();
  exp->add_option("--out,-o", out, "output path")->required();
  exp->add_option("--format", format, "binary | json | csv")->check(CLI::IsMember({"binary", "json", "csv"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kBadInput;
  }

  try {
    if (*train) return cmd_train(config, jobs, restart, dry_run, max_gens, output_dir);
    if (*eval) return cmd_eval(genome, config, episodes, random_input, ae_path, csv_path, name, jobs);
    if (*recon) return cmd_recon(checkpoint, n_frames, out);
    if (*bench) return cmd_bench(suite);
    if (*exp) return cmd_export(checkpoint, out, format);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadInput;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}
