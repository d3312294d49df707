#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cevo/binary_io.hpp"
#include "cevo/errors.hpp"

namespace cevo {

using Genome = Eigen::VectorXd;

enum class CovarianceMode : std::uint32_t { full = 0, diagonal = 1 };

struct CmaesConfig {
  std::size_t dimension = 0;
  std::size_t lambda = 0;  // 0: 4 + floor(3 ln n)
  std::size_t mu = 0;      // 0: floor(lambda / 2)
  double sigma0 = 0.5;
  std::vector<double> initial_mean;  // empty: origin
  std::uint64_t seed = 0;
  CovarianceMode mode = CovarianceMode::full;

  static std::size_t default_lambda(std::size_t n) {
    return 4 + static_cast<std::size_t>(std::floor(3.0 * std::log(static_cast<double>(n))));
  }

  /// Copy with defaults filled in; throws ConfigError on invalid settings.
  CmaesConfig resolved() const {
    CmaesConfig c = *this;
    if (c.dimension < 1) throw ConfigError("cmaes: dimension must be >= 1");
    if (c.lambda == 0) c.lambda = default_lambda(c.dimension);
    if (c.lambda < 2) throw ConfigError("cmaes: population size must be >= 2");
    if (c.mu == 0) c.mu = c.lambda / 2;
    if (c.mu < 1 || c.mu > c.lambda)
      throw ConfigError("cmaes: parent count " + std::to_string(c.mu) + " outside [1, " + std::to_string(c.lambda) + "]");
    if (!(c.sigma0 > 0) || !std::isfinite(c.sigma0)) throw ConfigError("cmaes: sigma0 must be positive and finite");
    if (c.initial_mean.empty()) c.initial_mean.assign(c.dimension, 0.0);
    if (c.initial_mean.size() != c.dimension)
      throw ConfigError("cmaes: initial mean has " + std::to_string(c.initial_mean.size()) + " entries, expected " +
                        std::to_string(c.dimension));
    for (double v : c.initial_mean)
      if (!std::isfinite(v)) throw ConfigError("cmaes: initial mean must be finite");
    return c;
  }
};

/// Learning rates and recombination weights derived from n, lambda and mu.
struct CmaesConstants {
  std::vector<double> weights;
  double mueff = 0, cs = 0, ds = 0, cc = 0, c1 = 0, cmu = 0, chi_n = 0;
  std::size_t eigen_interval = 1;

  static CmaesConstants make(std::size_t n_, std::size_t lambda, std::size_t mu, CovarianceMode mode) {
    CmaesConstants k;
    const double n = static_cast<double>(n_);
    k.weights.resize(mu);
    for (std::size_t i = 0; i < mu; ++i)
      k.weights[i] = std::log((static_cast<double>(lambda) + 1.0) / 2.0) - std::log(static_cast<double>(i + 1));
    // lambda = 2 (or mu = lambda) can leave the last weight at or below zero
    for (auto& w : k.weights) w = std::max(w, 1e-12);
    const double sum = std::accumulate(k.weights.begin(), k.weights.end(), 0.0);
    double sq = 0;
    for (auto& w : k.weights) {
      w /= sum;
      sq += w * w;
    }
    k.mueff = 1.0 / sq;
    k.cs = (k.mueff + 2.0) / (n + k.mueff + 5.0);
    k.ds = 1.0 + 2.0 * std::max(0.0, std::sqrt((k.mueff - 1.0) / (n + 1.0)) - 1.0) + k.cs;
    k.cc = (4.0 + k.mueff / n) / (n + 4.0 + 2.0 * k.mueff / n);
    k.c1 = 2.0 / ((n + 1.3) * (n + 1.3) + k.mueff);
    k.cmu = std::min(1.0 - k.c1, 2.0 * (k.mueff - 2.0 + 1.0 / k.mueff) / ((n + 2.0) * (n + 2.0) + k.mueff));
    if (mode == CovarianceMode::diagonal) {
      // separable variant: the diagonal learns (n + 2) / 3 times faster
      const double f = (n + 2.0) / 3.0;
      k.c1 = std::min(1.0, k.c1 * f);
      k.cmu = std::min(1.0 - k.c1, k.cmu * f);
    }
    k.chi_n = std::sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
    if (mode == CovarianceMode::full) {
      const double g = 1.0 / (10.0 * n * (k.c1 + k.cmu));
      k.eigen_interval = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(g)));
    }
    return k;
  }
};

/// Everything that evolves between generations. For diagonal mode `cov`
/// is n x 1 (the variances) and `basis` is empty.
struct CmaesState {
  Genome mean;
  double sigma = 0;
  Eigen::MatrixXd cov;
  Eigen::VectorXd path_sigma, path_c;
  Eigen::MatrixXd basis;   // eigenvectors of cov (full mode)
  Eigen::VectorXd scales;  // square roots of the eigenvalues
  std::uint64_t generation = 0;
  std::uint64_t eigen_generation = 0;
};

struct RankedSample {
  Genome genome;
  double fitness = 0;
  std::size_t rank = 0;
};

/// Ranks by fitness (minimisation), ties broken by position.
inline std::vector<RankedSample> rank_samples(const std::vector<Genome>& genomes, const std::vector<double>& fitness) {
  if (genomes.size() != fitness.size())
    throw ConfigError("rank_samples: " + std::to_string(genomes.size()) + " genomes but " +
                      std::to_string(fitness.size()) + " fitness values");
  std::vector<std::size_t> order(genomes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fitness[a] < fitness[b]; });
  std::vector<RankedSample> out(genomes.size());
  for (std::size_t r = 0; r < order.size(); ++r) out[order[r]] = {genomes[order[r]], fitness[order[r]], r};
  return out;
}

class Cmaes {
 public:
  Cmaes() = default;

  explicit Cmaes(const CmaesConfig& config) : cfg_(config.resolved()) {
    k_ = CmaesConstants::make(cfg_.dimension, cfg_.lambda, cfg_.mu, cfg_.mode);
    const auto n = static_cast<long>(cfg_.dimension);
    s_.mean = Eigen::Map<const Genome>(cfg_.initial_mean.data(), n);
    s_.sigma = cfg_.sigma0;
    s_.path_sigma = Eigen::VectorXd::Zero(n);
    s_.path_c = Eigen::VectorXd::Zero(n);
    if (cfg_.mode == CovarianceMode::full) {
      s_.cov = Eigen::MatrixXd::Identity(n, n);
      s_.basis = Eigen::MatrixXd::Identity(n, n);
    } else {
      s_.cov = Eigen::MatrixXd::Ones(n, 1);
    }
    s_.scales = Eigen::VectorXd::Ones(n);
    rng_.seed(cfg_.seed);
  }

  const CmaesConfig& config() const { return cfg_; }
  const CmaesConstants& constants() const { return k_; }
  const CmaesState& state() const { return s_; }
  std::size_t dimension() const { return cfg_.dimension; }
  std::size_t population_size() const { return cfg_.lambda; }
  std::uint64_t generation() const { return s_.generation; }
  double sigma() const { return s_.sigma; }
  const Genome& mean() const { return s_.mean; }

  /// Direct access for tests and tools; the eigendecomposition is
  /// recomputed (with repair) before the next ask.
  CmaesState& mutable_state() {
    eigen_dirty_ = true;
    return s_;
  }

  std::vector<Genome> ask() {
    const auto n = static_cast<long>(cfg_.dimension);
    if (eigen_dirty_ || (cfg_.mode == CovarianceMode::full && s_.generation - s_.eigen_generation >= k_.eigen_interval))
      update_eigensystem();
    pending_y_.assign(cfg_.lambda, Eigen::VectorXd(n));
    std::vector<Genome> out(cfg_.lambda);
    Eigen::VectorXd z(n);
    for (std::size_t k = 0; k < cfg_.lambda; ++k) {
      for (long i = 0; i < n; ++i) z[i] = normal_(rng_);
      if (cfg_.mode == CovarianceMode::full)
        pending_y_[k].noalias() = s_.basis * s_.scales.cwiseProduct(z);
      else
        pending_y_[k] = s_.scales.cwiseProduct(z);
      out[k] = s_.mean + s_.sigma * pending_y_[k];
    }
    pending_x_ = out;
    return out;
  }

  /// `fitness[k]` belongs to the k-th genome of the last ask (minimisation).
  void tell(const std::vector<double>& fitness) {
    if (pending_y_.empty()) throw StateError("cmaes: tell called without a preceding ask");
    if (fitness.size() != cfg_.lambda)
      throw ConfigError("cmaes: tell got " + std::to_string(fitness.size()) + " fitness values, expected " +
                        std::to_string(cfg_.lambda));
    for (std::size_t k = 0; k < fitness.size(); ++k)
      if (!std::isfinite(fitness[k]))
        throw NumericError("cmaes: fitness of sample " + std::to_string(k) + " is not finite");
    const auto ranked = rank_samples(pending_x_, fitness);
    std::vector<std::size_t> order(cfg_.lambda);
    for (std::size_t k = 0; k < cfg_.lambda; ++k) order[ranked[k].rank] = k;

    if (!best_ || fitness[order[0]] < best_->second) best_ = {pending_x_[order[0]], fitness[order[0]]};

    const auto n = static_cast<long>(cfg_.dimension);
    const double nd = static_cast<double>(cfg_.dimension);
    Eigen::VectorXd yw = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < cfg_.mu; ++i) yw += k_.weights[i] * pending_y_[order[i]];
    s_.mean = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < cfg_.mu; ++i) s_.mean += k_.weights[i] * pending_x_[order[i]];

    // C^{-1/2} yw from the cached eigensystem
    Eigen::VectorXd inv_sqrt_yw;
    if (cfg_.mode == CovarianceMode::full)
      inv_sqrt_yw = s_.basis * (s_.basis.transpose() * yw).cwiseQuotient(s_.scales);
    else
      inv_sqrt_yw = yw.cwiseQuotient(s_.scales);
    s_.path_sigma = (1.0 - k_.cs) * s_.path_sigma + std::sqrt(k_.cs * (2.0 - k_.cs) * k_.mueff) * inv_sqrt_yw;
    const double ps_norm = s_.path_sigma.norm();
    const double decay = 1.0 - std::pow(1.0 - k_.cs, 2.0 * static_cast<double>(s_.generation + 1));
    const bool hsig = ps_norm / std::sqrt(decay) < (1.4 + 2.0 / (nd + 1.0)) * k_.chi_n;
    s_.path_c = (1.0 - k_.cc) * s_.path_c;
    if (hsig) s_.path_c += std::sqrt(k_.cc * (2.0 - k_.cc) * k_.mueff) * yw;

    const double c1a = k_.c1 * (1.0 - (hsig ? 0.0 : 1.0) * k_.cc * (2.0 - k_.cc));
    const double keep = 1.0 - c1a - k_.cmu;
    if (cfg_.mode == CovarianceMode::full) {
      Eigen::MatrixXd rank_mu = Eigen::MatrixXd::Zero(n, n);
      for (std::size_t i = 0; i < cfg_.mu; ++i)
        rank_mu.selfadjointView<Eigen::Lower>().rankUpdate(pending_y_[order[i]], k_.weights[i]);
      Eigen::MatrixXd next = keep * s_.cov;
      next.selfadjointView<Eigen::Lower>().rankUpdate(s_.path_c, k_.c1);
      next.triangularView<Eigen::Lower>() += k_.cmu * rank_mu;
      // mirror the lower triangle so C is exactly symmetric
      next.triangularView<Eigen::StrictlyUpper>() = next.transpose();
      s_.cov = std::move(next);
    } else {
      Eigen::VectorXd rank_mu = Eigen::VectorXd::Zero(n);
      for (std::size_t i = 0; i < cfg_.mu; ++i) rank_mu += k_.weights[i] * pending_y_[order[i]].cwiseAbs2();
      s_.cov = keep * s_.cov + k_.c1 * s_.path_c.cwiseAbs2() + k_.cmu * rank_mu;
    }

    s_.sigma *= std::exp(std::min(1.0, (k_.cs / k_.ds) * (ps_norm / k_.chi_n - 1.0)));
    if (!std::isfinite(s_.sigma) || !(s_.sigma > 0))
      throw NumericError("cmaes: step size became " + std::to_string(s_.sigma) + " at generation " +
                         std::to_string(s_.generation));
    if (!s_.mean.allFinite()) throw NumericError("cmaes: mean became non-finite");
    ++s_.generation;
    if (cfg_.mode == CovarianceMode::diagonal) update_eigensystem();
    pending_y_.clear();
    pending_x_.clear();
  }

  /// Order-independent form: each sample's genome must come from the last ask.
  void tell(const std::vector<RankedSample>& samples) {
    if (pending_x_.empty()) throw StateError("cmaes: tell called without a preceding ask");
    if (samples.size() != cfg_.lambda)
      throw ConfigError("cmaes: tell got " + std::to_string(samples.size()) + " samples, expected " +
                        std::to_string(cfg_.lambda));
    std::vector<double> fitness(cfg_.lambda, std::numeric_limits<double>::quiet_NaN());
    std::vector<bool> seen(cfg_.lambda, false);
    for (const auto& s : samples) {
      std::size_t k = 0;
      while (k < cfg_.lambda && (seen[k] || !(pending_x_[k] == s.genome))) ++k;
      if (k == cfg_.lambda) throw ConfigError("cmaes: sample genome was not produced by the last ask");
      seen[k] = true;
      fitness[k] = s.fitness;
    }
    tell(fitness);
  }

  bool has_best() const { return best_.has_value(); }

  std::pair<Genome, double> best() const {
    if (!best_) throw StateError("cmaes: best() before any tell");
    return *best_;
  }

  /// Recomputes the eigensystem of C, clamping eigenvalues below 1e-14 of
  /// the largest. Throws NumericError when C is not finite.
  void update_eigensystem() {
    eigen_dirty_ = false;
    s_.eigen_generation = s_.generation;
    if (!s_.cov.allFinite()) throw NumericError("cmaes: covariance matrix is not finite");
    if (cfg_.mode == CovarianceMode::diagonal) {
      const double top = s_.cov.maxCoeff();
      if (!(top > 0)) throw NumericError("cmaes: covariance diagonal is not positive");
      s_.cov = s_.cov.cwiseMax(1e-14 * top);
      s_.scales = s_.cov.col(0).cwiseSqrt();
      return;
    }
    s_.cov.triangularView<Eigen::StrictlyUpper>() = s_.cov.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s_.cov);
    if (es.info() != Eigen::Success) {
      // retry once on a jittered copy
      const double jitter = 1e-12 * std::max(1.0, s_.cov.diagonal().cwiseAbs().maxCoeff());
      s_.cov.diagonal().array() += jitter;
      es.compute(s_.cov);
      if (es.info() != Eigen::Success) throw NumericError("cmaes: eigendecomposition of C failed");
    }
    Eigen::VectorXd ev = es.eigenvalues();
    const double top = ev.maxCoeff();
    if (!(top > 0) || !std::isfinite(top)) throw NumericError("cmaes: covariance matrix has no positive eigenvalue");
    const double floor = 1e-14 * top;
    if (ev.minCoeff() < floor) {
      ev = ev.cwiseMax(floor);
      s_.cov = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
      s_.cov.triangularView<Eigen::StrictlyUpper>() = s_.cov.transpose();
    }
    s_.basis = es.eigenvectors();
    s_.scales = ev.cwiseSqrt();
  }

  void write(BinaryWriter& w) const {
    w.bytes("CECM");
    w.u32(1);
    w.u64(cfg_.dimension);
    w.u64(cfg_.lambda);
    w.u64(cfg_.mu);
    w.f64(cfg_.sigma0);
    w.u64(cfg_.initial_mean.size());
    w.f64s(cfg_.initial_mean);
    w.u64(cfg_.seed);
    w.u32(static_cast<std::uint32_t>(cfg_.mode));
    w.u64(s_.generation);
    w.u64(s_.eigen_generation);
    w.u32(eigen_dirty_ ? 1 : 0);
    w.f64(s_.sigma);
    put(w, s_.mean);
    put(w, s_.cov);
    put(w, s_.path_sigma);
    put(w, s_.path_c);
    put(w, s_.basis);
    put(w, s_.scales);
    std::ostringstream rs;
    rs << rng_ << ' ' << normal_;
    w.str(rs.str());
    w.u32(best_ ? 1 : 0);
    if (best_) {
      put(w, best_->first);
      w.f64(best_->second);
    }
    w.u64(pending_x_.size());
    for (std::size_t k = 0; k < pending_x_.size(); ++k) {
      put(w, pending_x_[k]);
      put(w, pending_y_[k]);
    }
  }

  void read(BinaryReader& r) {
    r.expect("CECM");
    if (r.u32() != 1) throw FormatError("unsupported cmaes checkpoint version");
    CmaesConfig c;
    c.dimension = r.u64();
    c.lambda = r.u64();
    c.mu = r.u64();
    c.sigma0 = r.f64();
    c.initial_mean.resize(r.u64());
    if (c.initial_mean.size() != c.dimension) throw FormatError("cmaes checkpoint: mean length mismatch");
    r.f64s(c.initial_mean);
    c.seed = r.u64();
    const auto mode = r.u32();
    if (mode > 1) throw FormatError("unknown covariance mode in cmaes checkpoint");
    c.mode = static_cast<CovarianceMode>(mode);
    try {
      cfg_ = c.resolved();
    } catch (const ConfigError& e) {
      throw FormatError(std::string("cmaes checkpoint: ") + e.what());
    }
    k_ = CmaesConstants::make(cfg_.dimension, cfg_.lambda, cfg_.mu, cfg_.mode);
    const auto n = static_cast<long>(cfg_.dimension);
    s_.generation = r.u64();
    s_.eigen_generation = r.u64();
    eigen_dirty_ = r.u32() != 0;
    s_.sigma = r.f64();
    s_.mean = get_vector(r, n);
    s_.cov = get_matrix(r, n, cfg_.mode == CovarianceMode::full ? n : 1);
    s_.path_sigma = get_vector(r, n);
    s_.path_c = get_vector(r, n);
    s_.basis = get_matrix(r, cfg_.mode == CovarianceMode::full ? n : 0, cfg_.mode == CovarianceMode::full ? n : 0);
    s_.scales = get_vector(r, n);
    std::istringstream rs(r.str());
    rs >> rng_ >> normal_;
    if (!rs) throw FormatError("cmaes checkpoint: corrupt random generator state");
    best_.reset();
    if (r.u32()) {
      Genome g = get_vector(r, n);
      best_ = std::pair<Genome, double>{std::move(g), r.f64()};
    }
    const auto pending = r.u64();
    if (pending != 0 && pending != cfg_.lambda) throw FormatError("cmaes checkpoint: bad pending sample count");
    pending_x_.resize(pending);
    pending_y_.resize(pending);
    for (std::size_t k = 0; k < pending; ++k) {
      pending_x_[k] = get_vector(r, n);
      pending_y_[k] = get_vector(r, n);
    }
  }

  void save(const std::string& path) const {
    BinaryWriter w;
    write(w);
    w.save(path);
  }

  static Cmaes load(const std::string& path) {
    auto r = BinaryReader::load(path);
    Cmaes c;
    c.read(r);
    if (!r.at_end()) throw FormatError("cmaes checkpoint: trailing bytes in " + path);
    return c;
  }

  friend bool operator==(const Cmaes& a, const Cmaes& b) {
    BinaryWriter wa, wb;
    a.write(wa);
    b.write(wb);
    return wa.buffer() == wb.buffer();
  }

 private:
  static void put(BinaryWriter& w, const Eigen::MatrixXd& m) {
    w.u64(static_cast<std::uint64_t>(m.rows()));
    w.u64(static_cast<std::uint64_t>(m.cols()));
    for (long j = 0; j < m.cols(); ++j)
      for (long i = 0; i < m.rows(); ++i) w.f64(m(i, j));
  }
  static void put(BinaryWriter& w, const Eigen::VectorXd& v) { put(w, Eigen::MatrixXd(v)); }

  static Eigen::MatrixXd get_matrix(BinaryReader& r, long rows, long cols) {
    const auto gr = static_cast<long>(r.u64()), gc = static_cast<long>(r.u64());
    if (gr != rows || gc != cols) throw FormatError("cmaes checkpoint: matrix has unexpected shape");
    Eigen::MatrixXd m(rows, cols);
    for (long j = 0; j < cols; ++j)
      for (long i = 0; i < rows; ++i) m(i, j) = r.f64();
    return m;
  }
  static Eigen::VectorXd get_vector(BinaryReader& r, long n) { return get_matrix(r, n, 1).col(0); }

  CmaesConfig cfg_;
  CmaesConstants k_;
  CmaesState s_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
  bool eigen_dirty_ = false;
  std::vector<Genome> pending_x_;
  std::vector<Eigen::VectorXd> pending_y_;
  std::optional<std::pair<Genome, double>> best_;
};

}  // namespace cevo
