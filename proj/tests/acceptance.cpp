// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,2,...] [--workdir DIR] [--jobs N]
//
// Criterion 7 trains two desk-scale runs and takes tens of minutes; the
// runs are resumed from DIR when their checkpoints are already there.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "cevo/bench.hpp"
#include "cevo/runner.hpp"

using namespace cevo;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Options {
  fs::path workdir = fs::temp_directory_path() / "cevo_acceptance";
  std::size_t jobs = 1;
};

std::string num(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome gradients(const Options&) {
  const auto r = grad_suite(20, 1e-4);
  return {r.pass && r.seconds < 120.0, r.lines.back() + ", 20 seeds, " + num(r.seconds, 3) + "s"};
}

Outcome cmaes_benchmarks(const Options&) {
  const auto r = cmaes_suite(10);
  return {r.pass && r.seconds < 60.0, r.lines.back() + ", " + num(r.seconds, 3) + "s"};
}

Outcome controller_decode(const Options&) {
  const double out[] = {0.2, 0.7, 0.7, 0.6};
  const auto cmd = decode_outputs(out);
  const auto w = act_window(cmd);
  const ActionSet both{false, true, true}, none{};
  bool ok = cmd.repeat == 3 && w[0] == both && w[1] == both && w[2] == both && w[3] == none && w[4] == none &&
            w[0].to_string() == "{1,2}";
  struct Row {
    double out[4];
    ActionSet actions;
    int repeat;
  };
  const Row rows[] = {
      {{0.5, 0.5, 0.5, 0.3}, {}, 2},
      {{std::nextafter(0.5, 1.0), 0.5, 0.5, 0.3}, {true, false, false}, 2},
      {{0.9, 0.9, 0.9, 1.0}, {true, true, true}, 5},
      {{0.1, 0.1, 0.1, 0.0}, {}, 0},
      {{0.1, 0.1, 0.1, 0.2}, {}, 1},
      {{0.1, 0.1, 0.1, std::nextafter(0.2, 1.0)}, {}, 2},
      {{0.1, 0.1, 0.1, 0.8}, {}, 4},
  };
  for (const auto& r : rows) {
    const auto c = decode_outputs(r.out);
    ok = ok && c.actions == r.actions && c.repeat == r.repeat;
  }
  return {ok, "[0.2,0.7,0.7,0.6] -> " + w[0].to_string() + " x" + std::to_string(cmd.repeat) + " then idle; " +
                  std::to_string(std::size(rows)) + " boundary rows"};
}

Outcome parameter_count(const Options&) {
  const ControllerSpec spec;
  const Network<double> net(spec.layers());
  std::size_t biases = 0;
  for (const auto& l : net.layers()) biases += l.bias.size();
  const bool ok = spec.weight_count() == 2208 && net.parameter_count() == 2208 && biases == 0;
  return {ok, std::to_string(net.parameter_count()) + " parameters, " + std::to_string(biases) + " biases"};
}

Outcome filter_semantics(const Options&) {
  // A zero network reconstructs everything as 0.5, so a frame with k of
  // 960 channels at 0.375 (rest at 0.5) has error exactly k * 0.125 / 960.
  AutoencoderConfig cfg;
  cfg.height = 16;
  cfg.width = 20;
  cfg.encoder_width = 64;
  cfg.chokepoint = 32;
  cfg.decoder_widths[0] = 64;
  cfg.decoder_widths[1] = 128;
  Autoencoder ae(cfg, 1);
  auto p = ae.network().flat_parameters();
  std::fill(p.begin(), p.end(), 0.0);
  ae.network().set_flat_parameters(p);
  auto frame = [](std::size_t k) {
    Frame f(16, 20);
    std::fill(f.pixels.begin(), f.pixels.end(), 0.5f);
    for (std::size_t i = 0; i < k; ++i) f.pixels[i] = 0.375f;
    return f;
  };
  ExperienceBuffer buf(10, 0.05);
  const bool at = ae.offer(buf, frame(384));      // 0.05
  const bool below = ae.offer(buf, frame(383));   // 0.04990
  const bool above = ae.offer(buf, frame(385));   // 0.05013
  const bool far = ae.offer(buf, frame(288));     // 0.0375
  const double e384 = recon_error(frame(384), ae.reconstruct(frame(384)));
  const bool ok = at && !below && above && !far && e384 == 0.05 && buf.size() == 2;
  return {ok, "error 0.05 admitted, 0.0499 and 0.0375 rejected, 0.0501 admitted"};
}

Outcome autoencoder_learning(const Options&) {
  const auto t0 = std::chrono::steady_clock::now();
  WorldConfig w;
  w.frame_height = 60;
  w.frame_width = 80;
  ExperienceBuffer corpus(64, 0.0);
  for (std::uint64_t k = 0; k < 64; ++k) {
    Environment env(w);
    corpus.offer_scored(env.reset(1000 + k), 1.0);
  }
  AutoencoderConfig ac;
  ac.height = 60;
  ac.width = 80;
  Autoencoder ae(ac, 64);
  std::vector<const Frame*> ptrs;
  for (const auto& f : corpus.frames()) ptrs.push_back(&f);
  auto mean_error = [&] {
    const auto e = ae.recon_errors(ptrs);
    return mean_of(e);
  };
  const double before = mean_error();
  ae.train_epochs(corpus, 500, TrainingConfig{});
  const double after = mean_error();
  const double secs = seconds_since(t0);
  const bool ok = before / after >= 5.0 && after < 0.05 && secs < 600.0;
  return {ok, "mean error " + num(before) + " -> " + num(after) + " (" + num(before / after, 3) + "x) in " +
                  num(secs, 3) + "s"};
}

RunConfig desk_run(const Options& o, const std::string& name, Variant v) {
  RunConfig rc;
  rc.preset = "desk";
  rc.experiment = desk_preset();
  rc.experiment.variant = v;
  rc.experiment.apply_variant();
  rc.experiment.jobs = o.jobs;
  rc.output_dir = (o.workdir / name).string();
  return rc;
}

nlohmann::json manifest_of(const Options& o, const std::string& name, Variant v) {
  const auto rc = desk_run(o, name, v);
  std::cout << "  training " << name << " in " << rc.output_dir << std::endl;
  return train_run(rc, std::cout);
}

std::vector<double> scores_of(const nlohmann::json& eval) {
  std::vector<double> s;
  for (const auto& v : eval.at("scores")) s.push_back(v.get<double>());
  return s;
}

Outcome end_to_end(const Options& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto a = manifest_of(o, "desk-A", Variant::A);
  const auto b2 = manifest_of(o, "desk-baseline2", Variant::baseline2_random_evolution);
  const auto real = scores_of(a.at("evaluation"));
  const auto rnd = scores_of(a.at("random_input_evaluation"));
  const auto evo = scores_of(b2.at("evaluation"));
  const auto p1 = mann_whitney_greater(real, rnd).p, p2 = mann_whitney_greater(real, evo).p;
  const bool ok = real.size() == 200 && mean_of(real) > mean_of(rnd) && mean_of(real) > mean_of(evo) && p1 < 0.05 &&
                  p2 < 0.05;
  return {ok, "champion " + num(mean_of(real)) + " vs random input " + num(mean_of(rnd)) + " (p=" + num(p1, 3) +
                  ") vs random-input-evolved " + num(mean_of(evo)) + " (p=" + num(p2, 3) + "), " +
                  num(seconds_since(t0) / 60.0, 3) + " min"};
}

Outcome phase_switch(const Options& o) {
  const auto full = full_preset();
  bool ok = true;
  for (std::size_t g = 0; g < full.generations; ++g) ok = ok && (phase_for(full, g) == Phase::novelty) == (g < 30);
  // Run logs: a short run with a mid-run switch, plus the desk runs if present.
  auto cfg = smoke_preset();
  cfg.generations = 6;
  cfg.novelty_generations = 3;
  Experiment ex(cfg);
  std::string phases;
  while (!ex.finished()) {
    const auto r = ex.run_generation();
    phases += r.phase == Phase::novelty ? 'n' : 's';
    ok = ok && (r.phase == Phase::novelty) == (r.generation < 3);
  }
  std::string detail = "full preset 0-29 novelty, 30-399 survival; smoke log " + phases;
  for (const auto* name : {"desk-A", "desk-baseline2"}) {
    const auto path = o.workdir / name / run_files::manifest;
    if (!fs::exists(path)) continue;
    const auto m = read_json(path);
    const auto ng = m.at("config").at("experiment").at("novelty_generations").get<std::size_t>();
    std::size_t n = 0;
    for (const auto& r : m.at("generations")) {
      const bool nov = r.at("phase") == "novelty";
      ok = ok && nov == (r.at("generation").get<std::size_t>() < ng);
      n += nov;
    }
    detail += std::string("; ") + name + " log " + std::to_string(n) + " novelty / " +
              std::to_string(m.at("generations").size()) + " records";
  }
  return {ok, detail};
}

Outcome bucketing(const Options&) {
  const std::pair<int, Bucket> table[] = {{0, Bucket::bad},       {499, Bucket::bad},   {500, Bucket::mediocre},
                                          {999, Bucket::mediocre}, {1000, Bucket::good}, {1999, Bucket::good},
                                          {2000, Bucket::solved}};
  bool ok = true;
  std::string got;
  for (const auto& [s, b] : table) {
    ok = ok && bucket(s) == b;
    got += std::to_string(s) + "=" + to_string(bucket(s)) + " ";
  }
  ok = ok && std::string(csv_header()) == "Network,Mean,std dev,Solved,Good,Mediocre,Bad";
  return {ok, got + "| " + csv_header()};
}

Outcome determinism_and_resume(const Options& o) {
  const auto t0 = std::chrono::steady_clock::now();
  auto cfg = desk_preset();
  cfg.generations = 5;
  cfg.novelty_generations = 2;
  cfg.jobs = o.jobs;
  auto run_all = [&] {
    Experiment ex(cfg);
    while (!ex.finished()) ex.run_generation();
    return ex.manifest().dump() + "|" + nlohmann::json(ex.champion()->genome).dump();
  };
  const auto first = run_all();
  const auto second = run_all();
  fs::create_directories(o.workdir);
  const auto ckpt = (o.workdir / "resume.bin").string();
  {
    Experiment ex(cfg);
    ex.run_generation();
    ex.run_generation();
    ex.save_checkpoint(ckpt);
  }
  std::string resumed;
  {
    Experiment ex(cfg);
    ex.load_checkpoint(ckpt);
    while (!ex.finished()) ex.run_generation();
    resumed = ex.manifest().dump() + "|" + nlohmann::json(ex.champion()->genome).dump();
  }
  fs::remove(ckpt);
  const bool ok = first == second && first == resumed;
  return {ok, std::string("5-generation desk run: rerun ") + (first == second ? "identical" : "DIFFERS") +
                  ", resume after 2 " + (first == resumed ? "identical" : "DIFFERS") + ", " +
                  num(seconds_since(t0), 3) + "s"};
}

Outcome sparsity_metric(const Options& o) {
  const std::vector<Encoding> ones{Encoding{std::vector<double>(128, 1.0)}};
  const double stub = sparsity(std::span<const Encoding>(ones));
  bool ok = stub == 128.0;
  // Both topologies get a trained value in every run manifest.
  RunConfig rc;
  rc.preset = "smoke";
  rc.experiment = smoke_preset();
  rc.output_dir = (o.workdir / "smoke").string();
  std::ostringstream quiet;
  const auto m = train_run(rc, quiet, {true, 0});
  const auto& sp = m.at("sparsity");
  ok = ok && sp.contains("standard") && sp.contains("alternative");
  std::string detail = "all-ones stub " + num(stub) + "; smoke manifest standard " +
                       num(sp.at("standard").at("sparsity").get<double>()) + " / alternative " +
                       num(sp.at("alternative").at("sparsity").get<double>()) + " (chokepoint 32)";
  const auto desk = o.workdir / "desk-A" / run_files::manifest;
  if (fs::exists(desk)) {
    const auto d = read_json(desk).at("sparsity");
    detail += "; desk standard " + num(d.at("standard").at("sparsity").get<double>()) + " / alternative " +
              num(d.at("alternative").at("sparsity").get<double>());
  }
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string t; std::getline(ss, t, ',');) only.insert(std::stoi(t));
    } else if (a == "--workdir" && i + 1 < argc) {
      opt.workdir = argv[++i];
    } else if (a == "--jobs" && i + 1 < argc) {
      opt.jobs = std::stoul(argv[++i]);
    } else {
      std::cerr << "usage: acceptance [--only 1,2,...] [--workdir DIR] [--jobs N]\n";
      return 2;
    }
  }

  const std::vector<std::tuple<int, const char*, std::function<Outcome(const Options&)>>> criteria{
      {1, "gradient correctness", gradients},
      {2, "CMA-ES benchmarks", cmaes_benchmarks},
      {3, "controller decode", controller_decode},
      {4, "controller parameter count", parameter_count},
      {5, "buffer filter boundary", filter_semantics},
      {6, "autoencoder learning", autoencoder_learning},
      {7, "desk-scale evolution beats random input", end_to_end},
      {8, "phase switch", phase_switch},
      {9, "bucketing and CSV columns", bucketing},
      {10, "determinism and resume", determinism_and_resume},
      {11, "sparsity metric", sparsity_metric},
  };
  int failed = 0;
  for (const auto& [id, title, fn] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    Outcome r;
    try {
      r = fn(opt);
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    failed += !r.pass;
    std::printf("[%s] %2d %s: %s\n", r.pass ? "PASS" : "FAIL", id, title, r.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
