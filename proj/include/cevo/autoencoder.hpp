#pragma once

// Convolutional autoencoder over RGB frames: conv encoder -> fc chokepoint ->
// fully connected decoder back to H x W x 3, plus the filtered experience
// buffer it is trained from between generations.
//
// Two topologies:
//   standard     conv stack over the H x W x 3 image.
//   alternative  the image is viewed as 3 x H x W with the W image columns
//                acting as channels, so the first filter spans all three
//                colour planes and every column at once.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cevo/binary_io.hpp"
#include "cevo/errors.hpp"
#include "cevo/frame.hpp"
#include "cevo/network.hpp"
#include "cevo/optim.hpp"

namespace cevo {

enum class AutoencoderVariant : std::uint32_t { standard = 0, alternative = 1 };

inline const char* to_string(AutoencoderVariant v) { return v == AutoencoderVariant::standard ? "standard" : "alternative"; }

struct ConvStage {
  std::size_t filter_h = 0, filter_w = 0, stride = 1, filters = 0;
  friend bool operator==(const ConvStage&, const ConvStage&) = default;
};

struct AutoencoderConfig {
  AutoencoderVariant variant = AutoencoderVariant::standard;
  std::size_t height = 120;
  std::size_t width = 160;
  /// Empty selects the built-in stack for the resolution (see default_conv_stack).
  std::vector<ConvStage> conv;
  std::size_t encoder_width = 512;   // fc1
  std::size_t chokepoint = 128;      // fc2
  std::size_t decoder_widths[2] = {512, 1024};  // fc3, fc4

  friend bool operator==(const AutoencoderConfig& a, const AutoencoderConfig& b) {
    return a.variant == b.variant && a.height == b.height && a.width == b.width && a.conv == b.conv &&
           a.encoder_width == b.encoder_width && a.chokepoint == b.chokepoint &&
           a.decoder_widths[0] == b.decoder_widths[0] && a.decoder_widths[1] == b.decoder_widths[1];
  }
};

enum class OptimizerKind : std::uint32_t { sgd = 0, adam = 1 };

struct TrainingConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs_per_generation = 1;
  /// Upper bound on frames presented per train_epochs call.
  std::size_t max_presentations = 50000;
  std::size_t buffer_capacity = 10000;
  double filter_threshold = 0.05;
};

/// Conv stacks for the supported resolutions. 120x160 is the full-size
/// layout; 60x80 halves conv1's filter and stride so every later layer sees
/// the same extents; 16x20 is a miniature used by the gradient tests.
inline std::vector<ConvStage> default_conv_stack(AutoencoderVariant v, std::size_t h, std::size_t w) {
  const bool std_v = v == AutoencoderVariant::standard;
  if (h == 120 && w == 160)
    return std_v ? std::vector<ConvStage>{{8, 8, 4, 32}, {4, 4, 3, 64}, {4, 4, 3, 64}}
                 : std::vector<ConvStage>{{3, 8, 4, 64}, {1, 4, 2, 128}, {1, 4, 2, 256}};
  if (h == 60 && w == 80)
    return std_v ? std::vector<ConvStage>{{4, 4, 2, 32}, {4, 4, 3, 64}, {4, 4, 3, 64}}
                 : std::vector<ConvStage>{{3, 4, 2, 64}, {1, 4, 2, 128}, {1, 4, 2, 256}};
  if (h == 16 && w == 20)
    return std_v ? std::vector<ConvStage>{{4, 4, 2, 8}, {2, 2, 2, 16}, {2, 2, 2, 16}}
                 : std::vector<ConvStage>{{3, 4, 2, 8}, {1, 2, 2, 16}, {1, 2, 2, 16}};
  throw ConfigError("no built-in conv stack for " + std::to_string(h) + "x" + std::to_string(w) +
                    "; set autoencoder.conv explicitly");
}

/// Layer list realising `cfg`. Conv layers use "same" padding and ReLU; the
/// decoder's last layer is sigmoid so reconstructions stay inside (0, 1).
inline std::vector<LayerSpec> autoencoder_layers(const AutoencoderConfig& cfg) {
  if (cfg.height == 0 || cfg.width == 0 || cfg.chokepoint == 0) throw ConfigError("autoencoder sizes must be positive");
  const auto stack = cfg.conv.empty() ? default_conv_stack(cfg.variant, cfg.height, cfg.width) : cfg.conv;
  std::size_t h = cfg.height, w = cfg.width, c = Frame::channels;
  if (cfg.variant == AutoencoderVariant::alternative) {
    h = Frame::channels;
    w = cfg.height;
    c = cfg.width;
  }
  std::vector<LayerSpec> layers;
  for (const auto& st : stack) {
    layers.push_back(LayerSpec::conv2d(h, w, c, st.filter_h, st.filter_w, st.stride, st.filters, Activation::relu,
                                       Padding::same));
    h = layers.back().out_h();
    w = layers.back().out_w();
    c = st.filters;
  }
  const std::size_t flat = h * w * c;
  layers.push_back(LayerSpec::dense(flat, cfg.encoder_width, Activation::relu));
  layers.push_back(LayerSpec::dense(cfg.encoder_width, cfg.chokepoint, Activation::relu));
  layers.push_back(LayerSpec::dense(cfg.chokepoint, cfg.decoder_widths[0], Activation::relu));
  layers.push_back(LayerSpec::dense(cfg.decoder_widths[0], cfg.decoder_widths[1], Activation::relu));
  layers.push_back(LayerSpec::dense(cfg.decoder_widths[1], cfg.height * cfg.width * Frame::channels, Activation::sigmoid));
  return layers;
}

/// Chokepoint activations (ReLU, so every value is >= 0).
struct Encoding {
  std::vector<double> values;
  std::size_t size() const { return values.size(); }
  friend bool operator==(const Encoding&, const Encoding&) = default;
};

/// Bounded FIFO of frames the autoencoder reconstructed poorly.
class ExperienceBuffer {
 public:
  ExperienceBuffer() = default;
  ExperienceBuffer(std::size_t capacity, double filter_threshold) : capacity_(capacity), threshold_(filter_threshold) {
    if (capacity == 0) throw ConfigError("experience buffer capacity must be positive");
  }

  /// Admits `frame` iff its reconstruction error is not below the threshold;
  /// evicts the oldest frame on overflow.
  bool offer_scored(Frame frame, double error) {
    ++seen_;
    if (!(error >= threshold_)) return false;
    if (frames_.size() == capacity_) frames_.pop_front();
    frames_.push_back(std::move(frame));
    ++admitted_;
    return true;
  }

  std::size_t size() const { return frames_.size(); }
  bool empty() const { return frames_.empty(); }
  std::size_t capacity() const { return capacity_; }
  double filter_threshold() const { return threshold_; }
  const std::deque<Frame>& frames() const { return frames_; }
  /// Frames offered so far, and how many of them were admitted.
  std::uint64_t frames_seen() const { return seen_; }
  std::uint64_t frames_admitted() const { return admitted_; }

  void write(BinaryWriter& w) const {
    w.bytes("CEXB");
    w.u64(capacity_);
    w.f64(threshold_);
    w.u64(seen_);
    w.u64(admitted_);
    w.u64(frames_.size());
    for (const auto& f : frames_) {
      w.u32(static_cast<std::uint32_t>(f.height));
      w.u32(static_cast<std::uint32_t>(f.width));
      w.f32s(f.pixels);
    }
  }

  void read(BinaryReader& r) {
    r.expect("CEXB");
    capacity_ = r.u64();
    threshold_ = r.f64();
    seen_ = r.u64();
    admitted_ = r.u64();
    const auto n = r.u64();
    if (n > capacity_) throw FormatError("experience buffer holds more frames than its capacity");
    frames_.clear();
    for (std::uint64_t i = 0; i < n; ++i) {
      const auto h = r.u32(), w = r.u32();
      Frame f(h, w);
      r.f32s(f.pixels);
      frames_.push_back(std::move(f));
    }
  }

 private:
  std::deque<Frame> frames_;
  std::size_t capacity_ = 10000;
  double threshold_ = 0.05;
  std::uint64_t seen_ = 0, admitted_ = 0;
};

class Autoencoder {
 public:
  using Matrix = RowMatrix<double>;

  Autoencoder() = default;

  Autoencoder(AutoencoderConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), net_(autoencoder_layers(cfg_)), rng_(seed) {
    net_.init_glorot(rng_);
  }

  const AutoencoderConfig& config() const { return cfg_; }
  const Network<double>& network() const { return net_; }

  /// Same weights, no optimizer state; what evaluation snapshots keep.
  Autoencoder frozen_copy() const {
    Autoencoder a;
    a.cfg_ = cfg_;
    a.net_ = net_;
    a.rng_ = rng_;
    return a;
  }
  Network<double>& network() { return net_; }

  /// Index of the fc2 layer whose output is the encoding.
  std::size_t chokepoint_layer() const { return net_.layer_count() - 4; }
  std::size_t chokepoint_size() const { return cfg_.chokepoint; }

  /// Network input rows for `frames` (with the axis swap for the
  /// alternative topology).
  Matrix input_rows(std::span<const Frame* const> frames) const {
    const std::size_t n = cfg_.height * cfg_.width * Frame::channels;
    Matrix x(static_cast<long>(frames.size()), static_cast<long>(n));
    for (std::size_t i = 0; i < frames.size(); ++i) {
      check_frame(*frames[i]);
      double* row = x.row(static_cast<long>(i)).data();
      const auto& px = frames[i]->pixels;
      if (cfg_.variant == AutoencoderVariant::standard) {
        std::copy(px.begin(), px.end(), row);
      } else {
        const std::size_t h = cfg_.height, w = cfg_.width;
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t xx = 0; xx < w; ++xx)
            for (std::size_t c = 0; c < Frame::channels; ++c)
              row[(c * h + y) * w + xx] = px[(y * w + xx) * Frame::channels + c];
      }
    }
    return x;
  }

  Matrix target_rows(std::span<const Frame* const> frames) const {
    Matrix t(static_cast<long>(frames.size()), static_cast<long>(cfg_.height * cfg_.width * Frame::channels));
    for (std::size_t i = 0; i < frames.size(); ++i)
      std::copy(frames[i]->pixels.begin(), frames[i]->pixels.end(), t.row(static_cast<long>(i)).data());
    return t;
  }

  Encoding encode(const Frame& frame) const {
    const Frame* f = &frame;
    return encode_batch(std::span<const Frame* const>(&f, 1)).front();
  }

  std::vector<Encoding> encode_batch(std::span<const Frame* const> frames) const {
    const Matrix z = net_.infer(input_rows(frames), 0, chokepoint_layer() + 1);
    std::vector<Encoding> out(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i)
      out[i].values.assign(z.row(static_cast<long>(i)).data(), z.row(static_cast<long>(i)).data() + z.cols());
    return out;
  }

  /// Decoder output for an arbitrary chokepoint vector.
  Frame decode(const Encoding& enc) const {
    if (enc.size() != cfg_.chokepoint) throw ConfigError("encoding length does not match chokepoint size");
    const Matrix z = Eigen::Map<const Matrix>(enc.values.data(), 1, static_cast<long>(enc.size()));
    return to_frame(net_.infer(z, chokepoint_layer() + 1), 0);
  }

  Frame reconstruct(const Frame& frame) const {
    const Frame* f = &frame;
    return reconstruct_batch(std::span<const Frame* const>(&f, 1)).front();
  }

  std::vector<Frame> reconstruct_batch(std::span<const Frame* const> frames) const {
    const Matrix y = net_.infer(input_rows(frames));
    std::vector<Frame> out;
    out.reserve(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) out.push_back(to_frame(y, static_cast<long>(i)));
    return out;
  }

  /// Reconstruction error of each frame, processed in chunks.
  std::vector<double> recon_errors(std::span<const Frame* const> frames, std::size_t chunk = 64) const {
    std::vector<double> out;
    out.reserve(frames.size());
    for (std::size_t at = 0; at < frames.size(); at += chunk) {
      const auto part = frames.subspan(at, std::min(chunk, frames.size() - at));
      const Matrix y = net_.infer(input_rows(part));
      const Matrix t = target_rows(part);
      for (long i = 0; i < y.rows(); ++i) {
        // Frames hold floats; compare against the float-rounded output.
        double sum = 0.0;
        for (long j = 0; j < y.cols(); ++j) sum += std::abs(double(float(y(i, j))) - t(i, j));
        out.push_back(sum / double(y.cols()));
      }
    }
    return out;
  }

  /// Admits `frame` to `buffer` iff recon_error(frame, reconstruct(frame)) is
  /// at least the buffer's threshold.
  bool offer(ExperienceBuffer& buffer, const Frame& frame) const {
    const Frame* f = &frame;
    const double err = recon_errors(std::span<const Frame* const>(&f, 1)).front();
    return buffer.offer_scored(frame, err);
  }

  /// Mini-batch training over the buffer in a seeded shuffled order.
  /// Returns the mean MAE of each epoch (measured on each batch before its
  /// update). Stops early once train.max_presentations frames were used.
  std::vector<double> train_epochs(const ExperienceBuffer& buffer, std::size_t epochs, const TrainingConfig& train) {
    std::vector<double> trace;
    if (buffer.empty() || epochs == 0) return trace;
    if (train.batch_size == 0) throw ConfigError("batch_size must be positive");
    adam_.lr = train.learning_rate;
    std::vector<const Frame*> all;
    for (const auto& f : buffer.frames()) all.push_back(&f);
    std::vector<std::size_t> order(all.size());
    std::size_t presented = 0;
    for (std::size_t e = 0; e < epochs && presented < train.max_presentations; ++e) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng_);
      double loss_sum = 0.0;
      std::size_t count = 0;
      for (std::size_t at = 0; at < order.size() && presented < train.max_presentations; at += train.batch_size) {
        const std::size_t n = std::min({train.batch_size, order.size() - at, train.max_presentations - presented});
        std::vector<const Frame*> batch(n);
        for (std::size_t i = 0; i < n; ++i) batch[i] = all[order[at + i]];
        const Matrix x = input_rows(batch);
        const Matrix t = target_rows(batch);
        const Matrix y = net_.forward_matrix(x);
        const double denom = double(y.size());
        Matrix grad(y.rows(), y.cols());
        double loss = 0.0;
        for (long k = 0; k < y.size(); ++k) {
          const double d = y.data()[k] - t.data()[k];
          loss += std::abs(d);
          grad.data()[k] = d > 0 ? 1.0 / denom : (d < 0 ? -1.0 / denom : 0.0);
        }
        const auto tape = net_.backward_matrix(grad);
        if (train.optimizer == OptimizerKind::adam)
          adam_.step(net_, tape);
        else
          sgd_step(net_, tape, train.learning_rate);
        loss_sum += loss / double(y.cols());
        count += n;
        presented += n;
      }
      net_.release_activations();
      trace.push_back(loss_sum / double(count));
    }
    return trace;
  }

  void write(BinaryWriter& w) const {
    w.bytes("CEAE");
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(cfg_.variant));
    w.u64(cfg_.height);
    w.u64(cfg_.width);
    w.u64(cfg_.encoder_width);
    w.u64(cfg_.chokepoint);
    w.u64(cfg_.decoder_widths[0]);
    w.u64(cfg_.decoder_widths[1]);
    w.u64(cfg_.conv.size());
    for (const auto& c : cfg_.conv) {
      w.u64(c.filter_h);
      w.u64(c.filter_w);
      w.u64(c.stride);
      w.u64(c.filters);
    }
    write_network(w, net_);
    adam_.write(w);
    std::ostringstream rs;
    rs << rng_;
    w.str(rs.str());
  }

  void read(BinaryReader& r) {
    r.expect("CEAE");
    if (r.u32() != 1) throw FormatError("unsupported autoencoder checkpoint version");
    const auto variant = r.u32();
    if (variant > 1) throw FormatError("unknown autoencoder variant");
    cfg_.variant = static_cast<AutoencoderVariant>(variant);
    cfg_.height = r.u64();
    cfg_.width = r.u64();
    cfg_.encoder_width = r.u64();
    cfg_.chokepoint = r.u64();
    cfg_.decoder_widths[0] = r.u64();
    cfg_.decoder_widths[1] = r.u64();
    cfg_.conv.resize(r.u64());
    for (auto& c : cfg_.conv) {
      c.filter_h = r.u64();
      c.filter_w = r.u64();
      c.stride = r.u64();
      c.filters = r.u64();
    }
    net_ = read_network<double>(r);
    std::vector<LayerSpec> expect;
    try {
      expect = autoencoder_layers(cfg_);
    } catch (const ConfigError& e) {
      throw FormatError(std::string("autoencoder checkpoint: ") + e.what());
    }
    if (expect.size() != net_.layer_count()) throw FormatError("autoencoder checkpoint layer count mismatch");
    for (std::size_t i = 0; i < expect.size(); ++i)
      if (!(expect[i] == net_.layers()[i].spec)) throw FormatError("autoencoder checkpoint layer mismatch");
    adam_.read(r);
    std::istringstream rs(r.str());
    rs >> rng_;
    if (!rs) throw FormatError("autoencoder checkpoint has a corrupt RNG state");
  }

  void save(const std::string& path) const {
    BinaryWriter w;
    write(w);
    w.save(path);
  }

  static Autoencoder load(const std::string& path) {
    auto r = BinaryReader::load(path);
    Autoencoder a;
    a.read(r);
    if (!r.at_end()) throw FormatError("trailing bytes in autoencoder file '" + path + "'");
    return a;
  }

 private:
  void check_frame(const Frame& f) const {
    if (f.height != cfg_.height || f.width != cfg_.width || f.size() != cfg_.height * cfg_.width * Frame::channels)
      throw ConfigError("frame is " + std::to_string(f.height) + "x" + std::to_string(f.width) +
                        ", autoencoder expects " + std::to_string(cfg_.height) + "x" + std::to_string(cfg_.width));
  }

  Frame to_frame(const Matrix& y, long row) const {
    Frame f(cfg_.height, cfg_.width);
    for (std::size_t k = 0; k < f.size(); ++k) f.pixels[k] = static_cast<float>(y(row, static_cast<long>(k)));
    return f;
  }

  AutoencoderConfig cfg_;
  Network<double> net_;
  Adam<double> adam_;
  std::mt19937_64 rng_;
};

/// Mean over encodings of the per-frame sum of chokepoint activations,
/// each clamped to [0, 1] so one frame contributes at most chokepoint size.
inline double sparsity(std::span<const Encoding> encodings) {
  if (encodings.empty()) throw ConfigError("sparsity needs at least one encoding");
  double total = 0.0;
  for (const auto& e : encodings)
    for (double v : e.values) total += std::clamp(v, 0.0, 1.0);
  return total / double(encodings.size());
}

inline double sparsity(const Autoencoder& ae, std::span<const Frame> frames) {
  if (frames.empty()) throw ConfigError("sparsity needs at least one frame");
  std::vector<const Frame*> ptrs;
  for (const auto& f : frames) ptrs.push_back(&f);
  const auto enc = ae.encode_batch(ptrs);
  return sparsity(std::span<const Encoding>(enc));
}

}  // namespace cevo
