#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cevo/autoencoder.hpp"
#include "cevo/cmaes.hpp"
#include "cevo/controller.hpp"
#include "cevo/environment.hpp"
#include "cevo/grad_check.hpp"

namespace cevo {

/// Outcome of one benchmark suite: a pass flag plus human-readable lines,
/// failing cases first.
struct SuiteReport {
  bool pass = true;
  double seconds = 0.0;
  std::vector<std::string> lines;
};

namespace detail {

inline double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

}  // namespace detail

/// Evaluations until the best value seen drops below `target`, or 0 when
/// the budget runs out first.
inline std::size_t cmaes_evals_to_target(Cmaes& es, const std::function<double(const Genome&)>& f, double target,
                                         std::size_t budget) {
  std::size_t evals = 0;
  double best = INFINITY;
  while (evals < budget) {
    const auto xs = es.ask();
    std::vector<double> fs;
    for (const auto& x : xs) fs.push_back(f(x));
    es.tell(fs);
    for (double v : fs) {
      ++evals;
      best = std::min(best, v);
      if (best < target) return evals;
    }
  }
  return 0;
}

inline double sphere(const Genome& x) { return x.squaredNorm(); }

inline double rosenbrock(const Genome& x) {
  double s = 0.0;
  for (long i = 0; i + 1 < x.size(); ++i) {
    const double a = x[i + 1] - x[i] * x[i], b = 1.0 - x[i];
    s += 100.0 * a * a + b * b;
  }
  return s;
}

/// 10-D sphere below 1e-10 within 2000 evaluations on every seed, 5-D
/// Rosenbrock below 1e-6 within 15000 on at least 8 of 10.
inline SuiteReport cmaes_suite(std::size_t seeds = 10) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteReport rep;
  auto cfg = [](std::size_t n, std::uint64_t seed, double m0) {
    CmaesConfig c;
    c.dimension = n;
    c.seed = seed;
    c.sigma0 = 0.5;
    c.initial_mean.assign(n, m0);
    return c;
  };
  std::size_t sphere_ok = 0, rosen_ok = 0;
  for (std::uint64_t s = 1; s <= seeds; ++s) {
    Cmaes es(cfg(10, s, 1.0));
    const auto e = cmaes_evals_to_target(es, sphere, 1e-10, 2000);
    sphere_ok += e > 0;
    rep.lines.push_back("sphere-10 seed " + std::to_string(s) + ": " + (e ? std::to_string(e) + " evals" : "budget exhausted"));
  }
  for (std::uint64_t s = 1; s <= seeds; ++s) {
    Cmaes es(cfg(5, s, 0.0));
    const auto e = cmaes_evals_to_target(es, rosenbrock, 1e-6, 15000);
    rosen_ok += e > 0;
    rep.lines.push_back("rosenbrock-5 seed " + std::to_string(s) + ": " + (e ? std::to_string(e) + " evals" : "budget exhausted"));
  }
  rep.pass = sphere_ok == seeds && 10 * rosen_ok >= 8 * seeds;
  rep.lines.push_back("sphere " + std::to_string(sphere_ok) + "/" + std::to_string(seeds) + ", rosenbrock " +
                      std::to_string(rosen_ok) + "/" + std::to_string(seeds));
  rep.seconds = detail::elapsed_since(t0);
  return rep;
}

/// Backprop against central differences on the 16x20 standard autoencoder
/// and the 128-16-8-4 controller, one random network pair per seed.
inline SuiteReport grad_suite(std::size_t seeds = 20, double tolerance = 1e-4) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteReport rep;
  AutoencoderConfig mini;
  mini.height = 16;
  mini.width = 20;
  mini.encoder_width = 64;
  mini.chokepoint = 32;
  mini.decoder_widths[0] = 64;
  mini.decoder_widths[1] = 128;
  const auto ae_layers = autoencoder_layers(mini);
  const ControllerSpec ctl;
  double worst = 0.0;
  for (std::uint64_t s = 0; s < seeds; ++s) {
    std::mt19937_64 rng(1000 + s);
    std::uniform_real_distribution<double> unit(0.0, 1.0), small(-0.1, 0.1);
    Network<double> ae(ae_layers);
    ae.init_glorot(rng);
    // Non-zero biases keep units away from the ReLU kink at the origin.
    for (auto& l : ae.layers())
      for (auto& b : l.bias.data()) b = small(rng);
    Tensor<double> x({mini.height, mini.width, Frame::channels});
    for (auto& v : x.data()) v = unit(rng);
    const auto ra = grad_check(ae, x, 1e-4);

    Network<double> c(ctl.layers());
    std::normal_distribution<double> n(0.0, 1.0);
    auto p = c.flat_parameters();
    for (auto& v : p) v = n(rng);
    c.set_flat_parameters(p);
    Tensor<double> e({ctl.input_size()});
    for (auto& v : e.data()) v = unit(rng);
    const auto rc = grad_check(c, e, 1e-4);

    const double err = std::max(ra.max_relative_error, rc.max_relative_error);
    worst = std::max(worst, err);
    const bool ok = err < tolerance && ra.checked >= ae.parameter_count() * 9 / 10 && rc.checked == ctl.weight_count();
    rep.pass = rep.pass && ok;
    rep.lines.push_back(detail::fmt("seed %.0f: autoencoder %.3g, controller %.3g", double(s), ra.max_relative_error,
                                    rc.max_relative_error) +
                        " (" + std::to_string(ra.checked) + "/" + std::to_string(ae.parameter_count()) +
                        " checked, " + std::to_string(ra.skipped_at_kinks) + " at kinks)" + (ok ? "" : "  FAIL"));
  }
  rep.lines.push_back(detail::fmt("max relative error %.3g (tolerance %.0e)", worst, tolerance));
  rep.seconds = detail::elapsed_since(t0);
  return rep;
}

/// Random action sequences played twice from the same seed must give the
/// same state after every frame and the same final image.
inline SuiteReport env_suite(std::size_t sequences = 100, const WorldConfig& world = [] {
  WorldConfig w;
  w.frame_height = 60;
  w.frame_width = 80;
  return w;
}()) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteReport rep;
  std::mt19937_64 seeds(7);
  std::size_t ok = 0;
  for (std::size_t k = 0; k < sequences; ++k) {
    const std::uint64_t seed = seeds();
    std::mt19937_64 rng(seed ^ 0x5eedull);
    std::vector<ActionSet> acts(600);
    for (auto& a : acts) {
      const auto bits = rng();
      a = {bool(bits & 1), bool(bits & 2), bool(bits & 4)};
    }
    Environment a(world), b(world);
    a.reset(seed);
    b.reset(seed);
    bool same = true;
    for (const auto& act : acts) {
      if (a.done()) break;
      a.advance(act);
      b.advance(act);
      same = same && a.state() == b.state();
    }
    same = same && a.render() == b.render();
    ok += same;
    if (!same) rep.lines.push_back("sequence " + std::to_string(k) + " (seed " + std::to_string(seed) + ") diverged");
  }
  rep.pass = ok == sequences;
  rep.lines.push_back(std::to_string(ok) + "/" + std::to_string(sequences) + " sequences replay identically");
  rep.seconds = detail::elapsed_since(t0);
  return rep;
}

}  // namespace cevo
