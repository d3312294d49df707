#pragma once

// Small feed-forward network engine: valid/same-padded 2-D convolutions and
// dense layers over HWC tensors, with exact backpropagation.
//
// Activations travel between layers as row-major matrices with one sample
// per row. A conv layer's output row is its {out_h, out_w, filters} tensor
// flattened in HWC order, which is also what a following dense layer reads,
// so the conv -> dense flatten is a pure reinterpretation.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "cevo/binary_io.hpp"
#include "cevo/errors.hpp"
#include "cevo/tensor.hpp"

namespace cevo {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class LayerKind : std::uint32_t { conv2d = 1, dense = 2 };
enum class Activation : std::uint32_t { identity = 0, relu = 1, sigmoid = 2 };

/// valid: no padding, floor((in - f) / stride) + 1 outputs.
/// same:  minimal zero padding giving ceil(in / stride) outputs, split with
///        the smaller half before the data.
enum class Padding : std::uint32_t { valid = 0, same = 1 };

inline const char* to_string(LayerKind k) { return k == LayerKind::conv2d ? "conv2d" : "dense"; }

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    default: return "identity";
  }
}

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  Activation activation = Activation::identity;
  bool use_bias = true;

  // conv2d
  std::size_t in_h = 0, in_w = 0, in_c = 0;
  std::size_t filter_h = 0, filter_w = 0, stride = 1, filters = 0;
  Padding padding = Padding::valid;

  // dense
  std::size_t in_size = 0, out_size = 0;

  static LayerSpec conv2d(std::size_t in_h, std::size_t in_w, std::size_t in_c, std::size_t filter_h,
                          std::size_t filter_w, std::size_t stride, std::size_t filters, Activation act,
                          Padding pad = Padding::valid, bool bias = true) {
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.activation = act;
    s.use_bias = bias;
    s.in_h = in_h;
    s.in_w = in_w;
    s.in_c = in_c;
    s.filter_h = filter_h;
    s.filter_w = filter_w;
    s.stride = stride;
    s.filters = filters;
    s.padding = pad;
    s.validate();
    return s;
  }

  static LayerSpec dense(std::size_t in, std::size_t out, Activation act, bool bias = true) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.activation = act;
    s.use_bias = bias;
    s.in_size = in;
    s.out_size = out;
    s.validate();
    return s;
  }

  void validate() const {
    if (kind == LayerKind::dense) {
      if (in_size == 0 || out_size == 0) throw ConfigError("dense layer sizes must be positive");
      return;
    }
    if (in_h == 0 || in_w == 0 || in_c == 0 || filter_h == 0 || filter_w == 0 || stride == 0 || filters == 0)
      throw ConfigError("conv2d extents, stride and filter count must be positive");
    if (padding == Padding::valid && (filter_h > in_h || filter_w > in_w))
      throw ConfigError("conv2d filter " + std::to_string(filter_h) + "x" + std::to_string(filter_w) +
                        " larger than unpadded input " + std::to_string(in_h) + "x" + std::to_string(in_w));
  }

  static std::size_t out_extent(std::size_t in, std::size_t f, std::size_t stride, Padding pad) {
    if (pad == Padding::same) return (in + stride - 1) / stride;
    return (in - f) / stride + 1;
  }

  static std::size_t pad_before(std::size_t in, std::size_t f, std::size_t stride, Padding pad) {
    if (pad == Padding::valid) return 0;
    const std::size_t out = out_extent(in, f, stride, pad);
    const std::size_t covered = (out - 1) * stride + f;
    return covered > in ? (covered - in) / 2 : 0;
  }

  std::size_t out_h() const { return out_extent(in_h, filter_h, stride, padding); }
  std::size_t out_w() const { return out_extent(in_w, filter_w, stride, padding); }
  std::size_t pad_top() const { return pad_before(in_h, filter_h, stride, padding); }
  std::size_t pad_left() const { return pad_before(in_w, filter_w, stride, padding); }
  std::size_t patch_size() const { return filter_h * filter_w * in_c; }

  Shape input_shape() const { return kind == LayerKind::dense ? Shape{in_size} : Shape{in_h, in_w, in_c}; }
  Shape output_shape() const { return kind == LayerKind::dense ? Shape{out_size} : Shape{out_h(), out_w(), filters}; }
  std::size_t input_size() const { return element_count(input_shape()); }
  std::size_t output_size() const { return element_count(output_shape()); }

  /// Dense weights are {out, in}; conv weights are {filters, fh, fw, in_c}.
  Shape weight_shape() const {
    return kind == LayerKind::dense ? Shape{out_size, in_size} : Shape{filters, filter_h, filter_w, in_c};
  }
  std::size_t bias_size() const { return use_bias ? (kind == LayerKind::dense ? out_size : filters) : 0; }
  std::size_t parameter_count() const { return element_count(weight_shape()) + bias_size(); }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

template <typename T>
struct Layer {
  LayerSpec spec;
  Tensor<T> weights;
  Tensor<T> bias;  // empty when !spec.use_bias
};

/// Per-layer parameter gradients, shaped like the parameters they belong to.
template <typename T>
struct GradientTape {
  std::vector<Tensor<T>> weight_grads;
  std::vector<Tensor<T>> bias_grads;
};

namespace detail {

template <typename T>
void apply_activation(Activation act, RowMatrix<T>& z) {
  switch (act) {
    case Activation::relu: z = z.cwiseMax(T{0}); break;
    case Activation::sigmoid:
      // Kept strictly inside (0, 1) even where exp saturates.
      z = z.unaryExpr([](T v) {
        const T s = T{1} / (T{1} + std::exp(-v));
        return std::clamp(s, std::numeric_limits<T>::min(), T{1} - std::numeric_limits<T>::epsilon() / 2);
      });
      break;
    case Activation::identity: break;
  }
}

/// dZ from dA given the layer output A.
template <typename T>
void activation_backward(Activation act, const RowMatrix<T>& a, RowMatrix<T>& grad) {
  switch (act) {
    case Activation::relu: grad = (a.array() > T{0}).select(grad, T{0}); break;
    case Activation::sigmoid: grad.array() *= a.array() * (T{1} - a.array()); break;
    case Activation::identity: break;
  }
}

/// Gathers every receptive field into one row: (N * out_h * out_w) x patch_size.
template <typename T>
void im2col(const LayerSpec& s, const RowMatrix<T>& x, RowMatrix<T>& patches) {
  const std::size_t oh = s.out_h(), ow = s.out_w();
  const auto pt = static_cast<long>(s.pad_top()), pl = static_cast<long>(s.pad_left());
  const auto ih = static_cast<long>(s.in_h), iw = static_cast<long>(s.in_w);
  patches.setZero(x.rows() * static_cast<long>(oh * ow), static_cast<long>(s.patch_size()));
  for (long n = 0; n < x.rows(); ++n) {
    const T* src = x.row(n).data();
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T* dst = patches.row(n * static_cast<long>(oh * ow) + static_cast<long>(oy * ow + ox)).data();
        for (std::size_t ky = 0; ky < s.filter_h; ++ky) {
          const long iy = static_cast<long>(oy * s.stride + ky) - pt;
          if (iy < 0 || iy >= ih) continue;
          for (std::size_t kx = 0; kx < s.filter_w; ++kx) {
            const long ix = static_cast<long>(ox * s.stride + kx) - pl;
            if (ix < 0 || ix >= iw) continue;
            std::copy_n(src + (iy * iw + ix) * static_cast<long>(s.in_c), s.in_c,
                        dst + (ky * s.filter_w + kx) * s.in_c);
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters patch gradients back onto the input layout.
template <typename T>
void col2im(const LayerSpec& s, const RowMatrix<T>& dpatches, RowMatrix<T>& dx) {
  const std::size_t oh = s.out_h(), ow = s.out_w();
  const auto pt = static_cast<long>(s.pad_top()), pl = static_cast<long>(s.pad_left());
  const auto ih = static_cast<long>(s.in_h), iw = static_cast<long>(s.in_w);
  for (long n = 0; n < dx.rows(); ++n) {
    T* dst = dx.row(n).data();
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const T* src = dpatches.row(n * static_cast<long>(oh * ow) + static_cast<long>(oy * ow + ox)).data();
        for (std::size_t ky = 0; ky < s.filter_h; ++ky) {
          const long iy = static_cast<long>(oy * s.stride + ky) - pt;
          if (iy < 0 || iy >= ih) continue;
          for (std::size_t kx = 0; kx < s.filter_w; ++kx) {
            const long ix = static_cast<long>(ox * s.stride + kx) - pl;
            if (ix < 0 || ix >= iw) continue;
            T* d = dst + (iy * iw + ix) * static_cast<long>(s.in_c);
            const T* g = src + (ky * s.filter_w + kx) * s.in_c;
            for (std::size_t c = 0; c < s.in_c; ++c) d[c] += g[c];
          }
        }
      }
    }
  }
}

template <typename T>
Eigen::Map<const RowMatrix<T>> weight_matrix(const Layer<T>& l) {
  const auto rows = static_cast<long>(l.spec.kind == LayerKind::dense ? l.spec.out_size : l.spec.filters);
  const auto cols = static_cast<long>(l.spec.kind == LayerKind::dense ? l.spec.in_size : l.spec.patch_size());
  return Eigen::Map<const RowMatrix<T>>(l.weights.data().data(), rows, cols);
}

/// Pre-activation of one layer. `patches` receives the im2col matrix for
/// conv layers (needed again by backward).
template <typename T>
RowMatrix<T> layer_linear(const Layer<T>& l, const RowMatrix<T>& x, RowMatrix<T>* patches) {
  const auto w = weight_matrix(l);
  RowMatrix<T> z;
  if (l.spec.kind == LayerKind::dense) {
    z.noalias() = x * w.transpose();
  } else {
    RowMatrix<T> local;
    RowMatrix<T>& p = patches ? *patches : local;
    im2col(l.spec, x, p);
    z.noalias() = p * w.transpose();  // (N*P) x F, same memory as N x (P*F)
  }
  if (l.spec.use_bias) {
    const Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(l.bias.data().data(),
                                                                  static_cast<long>(l.bias.size()));
    z.rowwise() += b;
  }
  if (l.spec.kind == LayerKind::conv2d)
    z = Eigen::Map<RowMatrix<T>>(z.data(), x.rows(), static_cast<long>(l.spec.output_size())).eval();
  return z;
}

}  // namespace detail

template <typename T = double>
class Network {
 public:
  using Matrix = RowMatrix<T>;

  Network() = default;

  /// Builds the layer stack with zero parameters. Consecutive layers must
  /// agree on element count; conv -> conv must agree on exact extents.
  explicit Network(std::vector<LayerSpec> specs) {
    if (specs.empty()) throw ConfigError("network needs at least one layer");
    for (std::size_t i = 0; i < specs.size(); ++i) {
      specs[i].validate();
      if (i > 0) {
        const LayerSpec& prev = specs[i - 1];
        const LayerSpec& cur = specs[i];
        const bool exact = cur.kind == LayerKind::conv2d && prev.kind == LayerKind::conv2d;
        if (exact ? prev.output_shape() != cur.input_shape() : prev.output_size() != cur.input_size())
          throw ConfigError("layer " + std::to_string(i) + " (" + to_string(cur.kind) + ") expects input " +
                            to_string(cur.input_shape()) + " but layer " + std::to_string(i - 1) + " produces " +
                            to_string(prev.output_shape()));
      }
      Layer<T> l{specs[i], Tensor<T>(specs[i].weight_shape()), {}};
      if (specs[i].use_bias) l.bias = Tensor<T>(Shape{specs[i].bias_size()});
      layers_.push_back(std::move(l));
    }
  }

  const std::vector<Layer<T>>& layers() const { return layers_; }
  std::vector<Layer<T>>& layers() { return layers_; }
  std::size_t layer_count() const { return layers_.size(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.spec.parameter_count();
    return n;
  }

  Shape input_shape() const { return layers_.front().spec.input_shape(); }
  Shape output_shape() const { return layers_.back().spec.output_shape(); }
  std::size_t input_size() const { return layers_.front().spec.input_size(); }
  std::size_t output_size() const { return layers_.back().spec.output_size(); }

  /// Uniform Glorot initialisation, s = sqrt(6 / (fan_in + fan_out)); biases 0.
  void init_glorot(std::mt19937_64& rng) {
    for (auto& l : layers_) {
      const auto& s = l.spec;
      const double fan_in = s.kind == LayerKind::dense ? double(s.in_size) : double(s.patch_size());
      const double fan_out =
          s.kind == LayerKind::dense ? double(s.out_size) : double(s.filter_h * s.filter_w * s.filters);
      const double lim = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> u(-lim, lim);
      for (auto& w : l.weights.data()) w = static_cast<T>(u(rng));
      std::fill(l.bias.data().begin(), l.bias.data().end(), T{0});
    }
  }

  /// Forward pass retaining activations for backward. Accepts either one
  /// sample shaped like input_shape() or a batch shaped {N, input_shape()...}.
  Tensor<T> forward(const Tensor<T>& input) {
    const std::size_t n = batch_size_of(input);
    Matrix x = Eigen::Map<const Matrix>(input.data().data(), static_cast<long>(n), static_cast<long>(input_size()));
    Matrix y = forward_matrix(x);
    return to_tensor(y, n, input.shape().size() != input_shape().size());
  }

  /// Batch forward over rows, retaining activations.
  Matrix forward_matrix(const Matrix& x) {
    check_rows(x, 0);
    inputs_.assign(layers_.size(), Matrix{});
    outputs_.assign(layers_.size(), Matrix{});
    patches_.assign(layers_.size(), Matrix{});
    const Matrix* cur = &x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (layers_[i].spec.kind == LayerKind::dense) inputs_[i] = *cur;
      outputs_[i] = detail::layer_linear(layers_[i], *cur, &patches_[i]);
      detail::apply_activation(layers_[i].spec.activation, outputs_[i]);
      cur = &outputs_[i];
    }
    has_forward_ = true;
    return outputs_.back();
  }

  /// Stateless forward through layers [first, last). Safe to call
  /// concurrently on a shared network.
  Matrix infer(const Matrix& x, std::size_t first = 0, std::size_t last = SIZE_MAX) const {
    last = std::min(last, layers_.size());
    if (first >= last) throw ConfigError("empty layer range");
    check_rows(x, first);
    Matrix cur = x;
    for (std::size_t i = first; i < last; ++i) {
      cur = detail::layer_linear(layers_[i], cur, static_cast<Matrix*>(nullptr));
      detail::apply_activation(layers_[i].spec.activation, cur);
    }
    return cur;
  }

  Tensor<T> infer(const Tensor<T>& input) const {
    const std::size_t n = batch_size_of(input);
    Matrix x = Eigen::Map<const Matrix>(input.data().data(), static_cast<long>(n), static_cast<long>(input_size()));
    return to_tensor(infer(x), n, input.shape().size() != input_shape().size());
  }

  /// Gradients of a scalar loss given dLoss/dOutput for the last forward.
  GradientTape<T> backward(const Tensor<T>& loss_grad) {
    if (!has_forward_) throw StateError("backward called before forward");
    const auto n = outputs_.back().rows();
    if (loss_grad.size() != static_cast<std::size_t>(n) * output_size())
      throw ConfigError("loss gradient has " + std::to_string(loss_grad.size()) + " elements, expected " +
                        std::to_string(static_cast<std::size_t>(n) * output_size()));
    return backward_matrix(Eigen::Map<const Matrix>(loss_grad.data().data(), n, static_cast<long>(output_size())));
  }

  GradientTape<T> backward_matrix(const Matrix& loss_grad) {
    if (!has_forward_) throw StateError("backward called before forward");
    if (loss_grad.rows() != outputs_.back().rows() || loss_grad.cols() != outputs_.back().cols())
      throw ConfigError("loss gradient shape does not match the last forward output");
    GradientTape<T> tape;
    tape.weight_grads.resize(layers_.size());
    tape.bias_grads.resize(layers_.size());
    Matrix grad = loss_grad;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      const Layer<T>& l = layers_[i];
      detail::activation_backward(l.spec.activation, outputs_[i], grad);
      const auto w = detail::weight_matrix(l);
      Tensor<T> dw(l.spec.weight_shape());
      Eigen::Map<Matrix> dwm(dw.data().data(), w.rows(), w.cols());
      const long batch = grad.rows();
      if (l.spec.kind == LayerKind::dense) {
        dwm.noalias() = grad.transpose() * inputs_[i];
        if (l.spec.use_bias) tape.bias_grads[i] = column_sums(grad, l.spec.out_size);
        if (i > 0) grad = (grad * w).eval();
      } else {
        const long rows = batch * static_cast<long>(l.spec.out_h() * l.spec.out_w());
        Eigen::Map<const Matrix> g(grad.data(), rows, static_cast<long>(l.spec.filters));
        dwm.noalias() = g.transpose() * patches_[i];
        if (l.spec.use_bias) tape.bias_grads[i] = column_sums(g, l.spec.filters);
        if (i > 0) {
          Matrix dpatches = g * w;
          Matrix dx = Matrix::Zero(batch, static_cast<long>(l.spec.input_size()));
          detail::col2im(l.spec, dpatches, dx);
          grad = std::move(dx);
        }
      }
      tape.weight_grads[i] = std::move(dw);
    }
    return tape;
  }

  bool has_retained_activations() const { return has_forward_; }

  /// Drops retained activations (they can be large for batched training).
  void release_activations() {
    inputs_.clear();
    outputs_.clear();
    patches_.clear();
    has_forward_ = false;
  }

  /// All parameters flattened layer by layer: weights row-major, then bias.
  std::vector<T> flat_parameters() const {
    std::vector<T> out;
    out.reserve(parameter_count());
    for (const auto& l : layers_) {
      out.insert(out.end(), l.weights.data().begin(), l.weights.data().end());
      out.insert(out.end(), l.bias.data().begin(), l.bias.data().end());
    }
    return out;
  }

  void set_flat_parameters(const std::vector<T>& flat) {
    if (flat.size() != parameter_count())
      throw ConfigError("parameter vector has length " + std::to_string(flat.size()) + ", expected " +
                        std::to_string(parameter_count()));
    auto it = flat.begin();
    for (auto& l : layers_) {
      std::copy_n(it, l.weights.size(), l.weights.data().begin());
      it += static_cast<long>(l.weights.size());
      std::copy_n(it, l.bias.size(), l.bias.data().begin());
      it += static_cast<long>(l.bias.size());
    }
  }

  friend bool operator==(const Network& a, const Network& b) {
    if (a.layers_.size() != b.layers_.size()) return false;
    for (std::size_t i = 0; i < a.layers_.size(); ++i) {
      const auto &x = a.layers_[i], &y = b.layers_[i];
      if (!(x.spec == y.spec) || x.weights != y.weights || x.bias != y.bias) return false;
    }
    return true;
  }

 private:
  // Plain row-by-row accumulation: Eigen's colwise().sum() picks its
  // summation order from the destination's alignment, which breaks bitwise
  // reproducibility across heap layouts.
  template <typename M>
  static Tensor<T> column_sums(const M& m, std::size_t cols) {
    Tensor<T> out(Shape{cols});
    T* dst = out.data().data();
    for (long r = 0; r < m.rows(); ++r) {
      const T* src = m.data() + r * m.cols();
      for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
    }
    return out;
  }

  std::size_t batch_size_of(const Tensor<T>& input) const {
    const Shape expected = input_shape();
    const Shape& got = input.shape();
    if (got == expected) return 1;
    if (got.size() == expected.size() + 1 && std::equal(expected.begin(), expected.end(), got.begin() + 1))
      return got.front();
    throw ConfigError("layer 0 (" + std::string(to_string(layers_.front().spec.kind)) + ") expects input " +
                      to_string(expected) + ", got " + to_string(got));
  }

  void check_rows(const Matrix& x, std::size_t layer) const {
    const auto want = layers_.at(layer).spec.input_size();
    if (static_cast<std::size_t>(x.cols()) != want)
      throw ConfigError("layer " + std::to_string(layer) + " (" + to_string(layers_[layer].spec.kind) +
                        ") expects " + std::to_string(want) + " inputs per sample, got " + std::to_string(x.cols()));
  }

  Tensor<T> to_tensor(const Matrix& y, std::size_t n, bool batched) const {
    Shape shape = output_shape();
    if (batched) shape.insert(shape.begin(), n);
    return Tensor<T>(std::move(shape), std::vector<T>(y.data(), y.data() + y.size()));
  }

  std::vector<Layer<T>> layers_;
  std::vector<Matrix> inputs_, outputs_, patches_;
  bool has_forward_ = false;
};

// ---------------------------------------------------------------------------
// Weight file: "CEVO", u32 version, u32 layer count, then per layer
// u32 kind, u32 activation, u32 use_bias, kind-specific u32 spec integers
// (conv: in_h in_w in_c filter_h filter_w stride filters padding;
//  dense: in_size out_size), weights and biases as little-endian f64.

inline constexpr std::uint32_t kWeightFormatVersion = 1;

template <typename T>
void write_network(BinaryWriter& w, const Network<T>& net) {
  w.bytes("CEVO");
  w.u32(kWeightFormatVersion);
  w.u32(static_cast<std::uint32_t>(net.layer_count()));
  for (const auto& l : net.layers()) {
    const LayerSpec& s = l.spec;
    w.u32(static_cast<std::uint32_t>(s.kind));
    w.u32(static_cast<std::uint32_t>(s.activation));
    w.u32(s.use_bias ? 1u : 0u);
    if (s.kind == LayerKind::conv2d) {
      for (std::size_t v : {s.in_h, s.in_w, s.in_c, s.filter_h, s.filter_w, s.stride, s.filters})
        w.u32(static_cast<std::uint32_t>(v));
      w.u32(static_cast<std::uint32_t>(s.padding));
    } else {
      w.u32(static_cast<std::uint32_t>(s.in_size));
      w.u32(static_cast<std::uint32_t>(s.out_size));
    }
    for (T v : l.weights.data()) w.f64(static_cast<double>(v));
    for (T v : l.bias.data()) w.f64(static_cast<double>(v));
  }
}

template <typename T = double>
Network<T> read_network(BinaryReader& r) {
  r.expect("CEVO");
  if (const auto v = r.u32(); v != kWeightFormatVersion)
    throw FormatError("unsupported weight format version " + std::to_string(v));
  const auto count = r.u32();
  if (count == 0 || count > 4096) throw FormatError("implausible layer count " + std::to_string(count));
  std::vector<LayerSpec> specs;
  std::vector<std::pair<std::vector<double>, std::vector<double>>> params;
  for (std::uint32_t i = 0; i < count; ++i) {
    LayerSpec s;
    const auto kind = r.u32(), act = r.u32(), bias = r.u32();
    if (kind != 1 && kind != 2) throw FormatError("unknown layer type tag " + std::to_string(kind));
    if (act > 2 || bias > 1) throw FormatError("bad layer header in layer " + std::to_string(i));
    s.kind = static_cast<LayerKind>(kind);
    s.activation = static_cast<Activation>(act);
    s.use_bias = bias == 1;
    if (s.kind == LayerKind::conv2d) {
      for (std::size_t* f : {&s.in_h, &s.in_w, &s.in_c, &s.filter_h, &s.filter_w, &s.stride, &s.filters}) *f = r.u32();
      const auto pad = r.u32();
      if (pad > 1) throw FormatError("unknown padding mode in layer " + std::to_string(i));
      s.padding = static_cast<Padding>(pad);
    } else {
      s.in_size = r.u32();
      s.out_size = r.u32();
    }
    try {
      s.validate();
    } catch (const ConfigError& e) {
      throw FormatError("layer " + std::to_string(i) + ": " + e.what());
    }
    specs.push_back(s);
    std::vector<double> w(element_count(s.weight_shape())), b(s.bias_size());
    r.f64s(w);
    r.f64s(b);
    params.emplace_back(std::move(w), std::move(b));
  }
  Network<T> net;
  try {
    net = Network<T>(specs);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("inconsistent layer stack: ") + e.what());
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& [w, b] = params[i];
    std::transform(w.begin(), w.end(), net.layers()[i].weights.data().begin(), [](double v) { return T(v); });
    std::transform(b.begin(), b.end(), net.layers()[i].bias.data().begin(), [](double v) { return T(v); });
  }
  return net;
}

template <typename T>
void save_network(const Network<T>& net, const std::string& path) {
  BinaryWriter w;
  write_network(w, net);
  w.save(path);
}

template <typename T = double>
Network<T> load_network(const std::string& path) {
  auto r = BinaryReader::load(path);
  auto net = read_network<T>(r);
  if (!r.at_end()) throw FormatError("trailing bytes after network in '" + path + "'");
  return net;
}

}  // namespace cevo
