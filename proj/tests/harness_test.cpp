#include <algorithm>
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "cevo/harness.hpp"

using namespace cevo;

namespace {

ExperimentConfig tiny(std::size_t generations = 3, std::size_t novelty = 1) {
  auto c = smoke_preset();
  c.generations = generations;
  c.novelty_generations = novelty;
  c.world.max_frames = 300;
  c.validate();
  return c;
}

std::vector<double> gaussian_genome(const ControllerSpec& spec, std::uint64_t seed, double sd) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sd);
  std::vector<double> g(spec.weight_count());
  for (auto& v : g) v = n(rng);
  return g;
}

Autoencoder zero_autoencoder(const AutoencoderConfig& cfg) {
  Autoencoder ae(cfg, 1);
  auto p = ae.network().flat_parameters();
  std::fill(p.begin(), p.end(), 0.0);
  ae.network().set_flat_parameters(p);
  return ae;
}

Frame scene(const WorldConfig& w, double x, double y, double angle, std::vector<Item> items = {}) {
  Environment env(w);
  env.reset(1);
  auto& s = env.mutable_state();
  s.x = x;
  s.y = y;
  s.angle = angle;
  s.items = std::move(items);
  return env.render();
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("cevo_harness_" + name)).string();
}

}  // namespace

TEST(SurvivalFitness, Examples) {
  const std::vector<double> flat(10, 600.0);
  EXPECT_EQ(survival_fitness(flat, Variant::A), 600.0);
  EXPECT_EQ(survival_fitness(flat, Variant::D), 600.0);
  EXPECT_DOUBLE_EQ(survival_fitness(flat, Variant::E), 1000.0);
  const std::vector<double> two{500.0, 700.0};
  EXPECT_DOUBLE_EQ(survival_fitness(two, Variant::E), 900.0);
  EXPECT_DOUBLE_EQ(survival_fitness(two, Variant::B), 600.0);
  EXPECT_THROW(survival_fitness(std::vector<double>{}, Variant::A), ConfigError);
}

TEST(SurvivalFitness, ConsistencyVariantIsBoundedByFiveThirdsOfTheCap) {
  const std::vector<double> best(10, 2000.0);
  EXPECT_NEAR(survival_fitness(best, Variant::E), 10000.0 / 3.0, 1e-9);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> u(0, 2000);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> s(10);
    for (auto& v : s) v = u(rng);
    EXPECT_LE(survival_fitness(s, Variant::E), 10000.0 / 3.0 + 1e-9);
    EXPECT_LE(survival_fitness(s, Variant::E), survival_fitness(s, Variant::A) * 5.0 / 3.0 + 1e-9);
  }
}

TEST(Bucket, BoundarySet) {
  EXPECT_EQ(bucket(0), Bucket::bad);
  EXPECT_EQ(bucket(499), Bucket::bad);
  EXPECT_EQ(bucket(500), Bucket::mediocre);
  EXPECT_EQ(bucket(999), Bucket::mediocre);
  EXPECT_EQ(bucket(1000), Bucket::good);
  EXPECT_EQ(bucket(1999), Bucket::good);
  EXPECT_EQ(bucket(2000), Bucket::solved);
  EXPECT_THROW(bucket(-1), ConfigError);
  EXPECT_THROW(bucket(2001), ConfigError);
}

TEST(Bucket, PartitionsTheScoreRange) {
  std::array<int, 4> n{};
  Bucket prev = Bucket::bad;
  for (int s = 0; s <= 2000; ++s) {
    const Bucket b = bucket(s);
    ++n[static_cast<std::size_t>(b)];
    // Buckets only move upward as the score grows.
    EXPECT_LE(static_cast<int>(b), static_cast<int>(prev));
    prev = b;
  }
  EXPECT_EQ(n[0], 1);
  EXPECT_EQ(n[1], 1000);
  EXPECT_EQ(n[2], 500);
  EXPECT_EQ(n[3], 500);
}

TEST(Summary, CountsMeanAndCsv) {
  const std::vector<int> scores{200, 499, 500, 1000, 2000, 2000};
  const auto s = summarize(scores);
  EXPECT_EQ(s.episodes, 6u);
  EXPECT_DOUBLE_EQ(s.mean, 6199.0 / 6.0);
  EXPECT_EQ(s.count(Bucket::solved), 2u);
  EXPECT_EQ(s.count(Bucket::good), 1u);
  EXPECT_EQ(s.count(Bucket::mediocre), 1u);
  EXPECT_EQ(s.count(Bucket::bad), 2u);
  EXPECT_EQ(std::string(csv_header()), "Network,Mean,std dev,Solved,Good,Mediocre,Bad");
  EXPECT_EQ(csv_row("A", summarize(std::vector<int>{200, 400})), "A,300.00,100.00,0,0,0,2");
  EXPECT_THROW(summarize(std::vector<int>{}), ConfigError);
}

TEST(NoveltyFitness, MeanOfDecisionFrameErrors) {
  EXPECT_DOUBLE_EQ(novelty_fitness(std::vector<double>{0.1, 0.3}), 0.2);
  EXPECT_THROW(novelty_fitness(std::vector<double>{}), ConfigError);
}

TEST(NoveltyFitness, PerfectReconstructionScoresZero) {
  // A zero network reconstructs every frame as flat 0.5.
  const auto cfg = tiny();
  const auto ae = zero_autoencoder(cfg.autoencoder);
  EpisodeResult ep;
  for (int i = 0; i < 3; ++i) {
    Frame f(16, 20);
    std::fill(f.pixels.begin(), f.pixels.end(), 0.5f);
    ep.frames.push_back(f);
  }
  EXPECT_EQ(novelty_fitness(ep, ae), 0.0);
  EXPECT_THROW(novelty_fitness(EpisodeResult{}, ae), ConfigError);
}

TEST(NoveltyFitness, MemorisedCorridorIsLessNovelThanAnUnseenRegion) {
  auto cfg = tiny();
  const auto& w = cfg.world;
  ExperienceBuffer corridor(64, 0.0);
  for (int i = 0; i < 10; ++i) corridor.offer_scored(scene(w, 1.5 + 0.5 * i, 1.5, 0.0), 1.0);
  Autoencoder ae(cfg.autoencoder, 3);
  TrainingConfig t;
  t.batch_size = 10;
  ae.train_epochs(corridor, 400, t);

  EpisodeResult revisit, explore;
  for (int i = 0; i < 4; ++i) revisit.frames.push_back(scene(w, 1.75 + 0.5 * i, 1.5, 0.0));
  const std::vector<Item> items{{ItemKind::health_pack, 7.0, 7.5}, {ItemKind::mine, 6.5, 8.5},
                                {ItemKind::health_pack, 8.0, 6.2}};
  for (int i = 0; i < 4; ++i) explore.frames.push_back(scene(w, 9.5 - 0.3 * i, 9.5, 1.25 * std::numbers::pi, items));
  const double known = novelty_fitness(revisit, ae), unknown = novelty_fitness(explore, ae);
  EXPECT_LT(known, unknown);
  EXPECT_LT(known, 0.05);
}

TEST(MannWhitney, MatchesReferenceValues) {
  // scipy.stats.mannwhitneyu(..., alternative="greater", method="asymptotic")
  struct Case {
    std::vector<double> x, y;
    double u, p;
  };
  const Case cases[] = {
      {{3, 4, 5, 6, 7, 8}, {1, 2, 3, 4, 5}, 25.5, 0.0330077157606155},
      {{200, 200, 250, 300, 352, 410, 500}, {200, 200, 200, 210, 220, 230}, 33.0, 0.04551972250104499},
      {{1, 2, 3}, {4, 5, 6}, 0.0, 0.9854518341293739},
      {{5, 5, 5}, {5, 5, 5}, 4.5, 1.0},
  };
  for (const auto& c : cases) {
    const auto r = mann_whitney_greater(c.x, c.y);
    EXPECT_DOUBLE_EQ(r.u, c.u);
    EXPECT_NEAR(r.p, c.p, 1e-12);
  }
  EXPECT_THROW(mann_whitney_greater(std::vector<double>{}, std::vector<double>{1.0}), ConfigError);
}

TEST(Seeds, StreamsAndIndicesGiveDistinctSeeds) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t m : {0ull, 1ull})
    for (auto s : {Stream::training, Stream::eval, Stream::sparsity})
      for (std::uint64_t a = 0; a < 20; ++a)
        for (std::uint64_t b = 0; b < 5; ++b) seen.insert(derive_seed(m, s, a, b));
  EXPECT_EQ(seen.size(), 2u * 3 * 20 * 5);
  EXPECT_EQ(derive_seed(7, Stream::eval, 3), derive_seed(7, Stream::eval, 3));
}

TEST(Evaluate, IdlePolicyDrainsToTwoHundred) {
  // Zero weights: every output is 0.5, so no action fires.
  const auto cfg = tiny();
  const Autoencoder ae(cfg.autoencoder, 5);
  const std::vector<double> idle(cfg.controller.weight_count(), 0.0);
  const auto s = evaluate(cfg, idle, ae, 25);
  EXPECT_EQ(s.mean, 200.0);
  EXPECT_EQ(s.std_dev, 0.0);
  EXPECT_EQ(s.count(Bucket::bad), 25u);
  const auto r = baseline_random_input(cfg, idle, 25);
  EXPECT_EQ(r, s);
}

TEST(Evaluate, ReproducibleAndCountsSum) {
  auto cfg = tiny();
  const Autoencoder ae(cfg.autoencoder, 6);
  const auto g = gaussian_genome(cfg.controller, 7, 1.0);
  const auto a = evaluate(cfg, g, ae, 30), b = evaluate(cfg, g, ae, 30);
  EXPECT_EQ(a, b);
  std::size_t total = 0;
  for (auto c : a.counts) total += c;
  EXPECT_EQ(total, 30u);
  cfg.jobs = 3;
  EXPECT_EQ(evaluate(cfg, g, ae, 30), a);
  EXPECT_EQ(baseline_random_input(cfg, g, 30), baseline_random_input(tiny(), g, 30));
}

TEST(Evaluate, RandomGenomesLandInTheBadBand) {
  auto cfg = tiny();
  cfg.world.max_frames = 2000;
  const Autoencoder ae(cfg.autoencoder, 8);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto g = gaussian_genome(cfg.controller, 100 + s, cfg.cmaes.sigma0);
    const auto r = evaluate(cfg, g, ae, 100);
    EXPECT_LT(r.mean, 500.0) << "genome " << s;
  }
}

TEST(RandomInput, UniformUnitEncodings) {
  std::mt19937_64 rng(9);
  double lo = 1, hi = 0, sum = 0;
  const int n = 20000;
  for (int i = 0; i < n / 100; ++i) {
    const auto e = uniform_encoding(rng, 100);
    ASSERT_EQ(e.size(), 100u);
    for (double v : e.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
    }
  }
  EXPECT_GE(lo, 0.0);
  EXPECT_LT(hi, 1.0);
  EXPECT_NEAR(sum / n, 0.5, 0.01);
}

TEST(RandomInput, PolicyIgnoresTheFrame) {
  auto cfg = tiny();
  auto ctl = std::make_shared<const Controller>(cfg.controller, gaussian_genome(cfg.controller, 10, 1.0));
  auto p1 = make_policy(ctl, nullptr, InputMode::random, 11);
  auto p2 = make_policy(ctl, nullptr, InputMode::random, 11);
  Frame black(16, 20), white(16, 20);
  std::fill(white.pixels.begin(), white.pixels.end(), 1.0f);
  for (int i = 0; i < 20; ++i) {
    const auto a = p1(black, 0.5), b = p2(white, 0.5);
    EXPECT_EQ(a.encoding_hash, b.encoding_hash);
    EXPECT_EQ(a.command, b.command);
  }
  EXPECT_THROW(make_policy(ctl, nullptr, InputMode::real, 1), ConfigError);
}

TEST(Sparsity, ZeroAutoencoderReportsZeroAndValuesStayInRange) {
  const auto cfg = tiny();
  const std::vector<double> g = gaussian_genome(cfg.controller, 12, 1.0);
  auto ctl = std::make_shared<const Controller>(cfg.controller, g);
  const auto zero = zero_autoencoder(cfg.autoencoder);
  auto policy_for = [&](const Autoencoder* ae) {
    return [ctl, ae](std::uint64_t seed) { return make_policy(ctl, ae, InputMode::real, seed); };
  };
  EXPECT_EQ(sparsity_report(zero, cfg.world, policy_for(&zero), 60, 1), 0.0);
  const Autoencoder ae(cfg.autoencoder, 13);
  const double s = sparsity_report(ae, cfg.world, policy_for(&ae), 60, 1);
  EXPECT_GE(s, 0.0);
  EXPECT_LE(s, double(cfg.autoencoder.chokepoint));
  EXPECT_EQ(collect_decision_frames(cfg.world, 60, policy_for(&ae), 1).size(), 60u);
}

TEST(Experiment, PhaseSwitchAndRecordShape) {
  const auto cfg = tiny(4, 2);
  Experiment ex(cfg);
  while (!ex.finished()) {
    const auto r = ex.run_generation();
    EXPECT_EQ(r.phase == Phase::novelty, r.generation < 2) << r.generation;
    ASSERT_EQ(r.fitness.size(), ex.cmaes().population_size());
    for (double f : r.fitness) {
      EXPECT_TRUE(std::isfinite(f));
      if (r.phase == Phase::novelty) {
        EXPECT_GE(f, 0.0);
        EXPECT_LE(f, 1.0);
      } else {
        EXPECT_GE(f, 1.0);
      }
    }
    EXPECT_LE(r.buffer_size, cfg.training.buffer_capacity);
    EXPECT_EQ(r.ae_loss.size(), r.buffer_size ? 1u : 0u);
  }
  EXPECT_EQ(ex.records().size(), 4u);
  EXPECT_EQ(ex.cmaes().generation(), 4u);
  ASSERT_TRUE(ex.champion().has_value());
  EXPECT_GE(ex.champion()->generation, 2u);
  EXPECT_THROW(ex.run_generation(), StateError);
  const auto m = ex.manifest();
  EXPECT_EQ(m["generations"].size(), 4u);
  EXPECT_EQ(m["generations"][1]["phase"], "novelty");
  EXPECT_EQ(m["generations"][2]["phase"], "survival");
  EXPECT_FALSE(m["generations"][0].contains("wall_seconds"));
}

TEST(Experiment, EveryDecisionFrameIsOffered) {
  const auto cfg = tiny(1, 1);
  const Experiment ex(cfg);
  const auto g = gaussian_genome(cfg.controller, 15, 1.0);
  const auto o = ex.evaluate_member(g, 0, 3);
  auto ctl = std::make_shared<const Controller>(cfg.controller, g);
  std::size_t decisions = 0;
  for (std::size_t e = 0; e < cfg.episodes_per_fitness; ++e) {
    const auto seed = derive_seed(cfg.master_seed, Stream::training, 0, e);
    const auto r = run_episode(cfg.world, seed, make_policy(ctl, &ex.autoencoder(), InputMode::real, 0));
    decisions += r.decisions.size();
    EXPECT_EQ(o.scores[e], r.score);
  }
  EXPECT_EQ(o.offer_errors.size(), decisions);
  for (const auto& [i, f] : o.kept) {
    EXPECT_GE(o.offer_errors[i], cfg.training.filter_threshold);
    EXPECT_EQ(ex.autoencoder().recon_errors(std::vector<const Frame*>{&f}).front(), o.offer_errors[i]);
  }

  Experiment run(cfg);
  const auto r = run.run_generation();
  EXPECT_GT(r.frames_seen, 0u);
  EXPECT_LE(r.frames_admitted, r.frames_seen);
  EXPECT_EQ(r.buffer_size, std::min<std::uint64_t>(r.frames_admitted, cfg.training.buffer_capacity));
  for (const auto& f : run.buffer().frames()) EXPECT_EQ(f.size(), 16u * 20 * 3);
}

TEST(Experiment, KeptFramesAreTheLatestAdmissions) {
  auto cfg = tiny(1, 1);
  cfg.training.buffer_capacity = 5;
  cfg.training.filter_threshold = 0.0;
  const Experiment ex(cfg);
  const auto o = ex.evaluate_member(gaussian_genome(cfg.controller, 16, 1.0), 0, 0);
  ASSERT_GT(o.offer_errors.size(), 5u);
  ASSERT_EQ(o.kept.size(), 5u);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(o.kept[k].first, o.offer_errors.size() - 5 + k);
}

TEST(Experiment, IdenticalSeedsGiveIdenticalManifestsAcrossJobCounts) {
  auto cfg = tiny(3, 1);
  Experiment a(cfg);
  cfg.jobs = 4;
  Experiment b(cfg);
  while (!a.finished()) a.run_generation();
  while (!b.finished()) b.run_generation();
  EXPECT_EQ(a.manifest().dump(), b.manifest().dump());
  EXPECT_EQ(a.champion()->genome, b.champion()->genome);
  cfg.master_seed = 2;
  Experiment c(cfg);
  c.run_generation();
  EXPECT_NE(c.records()[0].fitness, a.records()[0].fitness);
}

TEST(Experiment, CheckpointResumeMatchesUninterruptedRun) {
  const auto cfg = tiny(5, 2);
  Experiment full(cfg);
  while (!full.finished()) full.run_generation();

  const auto path = temp_path("resume.bin");
  {
    Experiment first(cfg);
    first.run_generation();
    first.run_generation();
    first.save_checkpoint(path);
  }
  Experiment resumed(cfg);
  resumed.load_checkpoint(path);
  EXPECT_EQ(resumed.generation(), 2u);
  while (!resumed.finished()) resumed.run_generation();
  EXPECT_EQ(resumed.manifest().dump(), full.manifest().dump());

  // Section by section, so a mismatch names the part and offset instead of
  // dumping megabytes. Records are skipped: they carry wall-clock time.
  auto same = [](const char* part, auto write_a, auto write_b) {
    BinaryWriter wa, wb;
    write_a(wa);
    write_b(wb);
    const auto& a = wa.buffer();
    const auto& b = wb.buffer();
    const auto at = std::mismatch(a.begin(), a.end(), b.begin(), b.end()).first - a.begin();
    EXPECT_TRUE(a == b) << part << " differs at byte " << at << " of " << a.size();
  };
  same("cmaes", [&](auto& w) { full.cmaes().write(w); }, [&](auto& w) { resumed.cmaes().write(w); });
  same("autoencoder", [&](auto& w) { full.autoencoder().write(w); }, [&](auto& w) { resumed.autoencoder().write(w); });
  same("buffer", [&](auto& w) { full.buffer().write(w); }, [&](auto& w) { resumed.buffer().write(w); });
  ASSERT_TRUE(full.champion() && resumed.champion());
  same("champion autoencoder", [&](auto& w) { full.champion()->autoencoder.write(w); },
       [&](auto& w) { resumed.champion()->autoencoder.write(w); });
  EXPECT_EQ(full.champion()->genome, resumed.champion()->genome);
  EXPECT_EQ(full.champion()->fitness, resumed.champion()->fitness);
  // Whole checkpoint up to the records string and its u64 length prefix
  // (the length moves with the digits of the wall-clock times).
  auto before_records = [](const Experiment& ex) {
    BinaryWriter w;
    ex.write(w);
    const auto& b = w.buffer();
    const auto at = b.rfind("[{\"ae_loss\"");
    EXPECT_NE(at, std::string::npos);
    return b.substr(0, at - sizeof(std::uint64_t));
  };
  same("checkpoint before records", [&](auto& w) { w.bytes(before_records(full)); },
       [&](auto& w) { w.bytes(before_records(resumed)); });
  std::filesystem::remove(path);
}

TEST(Experiment, CheckpointRejectsOtherConfigsAndCorruption) {
  const auto cfg = tiny(2, 1);
  Experiment a(cfg);
  a.run_generation();
  const auto path = temp_path("other.bin");
  a.save_checkpoint(path);
  auto other = cfg;
  other.episodes_per_fitness = 3;
  Experiment b(other);
  EXPECT_THROW(b.load_checkpoint(path), ConfigError);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "CEXP junk";
  }
  Experiment c(cfg);
  EXPECT_THROW(c.load_checkpoint(path), FormatError);
  std::filesystem::remove(path);
}

TEST(Experiment, RandomInputEvolutionRuns) {
  auto cfg = tiny(2, 1);
  cfg.variant = Variant::baseline2_random_evolution;
  cfg.apply_variant();
  Experiment ex(cfg);
  while (!ex.finished()) ex.run_generation();
  EXPECT_TRUE(ex.config().random_input_training());
  EXPECT_TRUE(ex.champion().has_value());
}

TEST(GenomeFile, RoundTripAndValidation) {
  ControllerSpec spec;
  spec.health_input = true;
  const auto g = gaussian_genome(spec, 14, 1.0);
  const auto path = temp_path("genome.bin");
  save_genome(path, spec, g);
  const auto back = load_genome_file(path);
  EXPECT_EQ(back.spec, spec);
  EXPECT_EQ(back.genome, g);
  EXPECT_THROW(save_genome(path, ControllerSpec{}, g), ConfigError);
  {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out << 'x';
  }
  EXPECT_THROW(load_genome_file(path), FormatError);
  std::filesystem::remove(path);
}
