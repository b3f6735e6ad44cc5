#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dexhand/common.hpp"
#include "dexhand/image.hpp"
#include "dexhand/rng.hpp"

namespace dexhand {

inline constexpr int kConvKernel = 5;
inline constexpr int kConvStride = 2;
inline constexpr int kConvPad = 2;

/// Spatial extent after one stride-2 same-padded convolution.
inline constexpr int conv_out_extent(int in) { return (in - 1) / kConvStride + 1; }

/**
 * @brief Behavior-cloning network: three 5x5 stride-2 relu convolutions
 * (8/16/32 channels) into three dense layers (128/64/15) with sigmoid
 * outputs, one probability per joint command bit.
 *
 * Activations are stored channels-by-pixels, matching the interleaved image
 * buffer, so convolutions run as one GEMM over an im2col matrix. The scalar
 * type is a template parameter: float for training, double for gradient
 * verification.
 */
template <class T>
struct CnnModelT {
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

  struct ConvLayer {
    int in_ch = 0;
    int out_ch = 0;
    Matrix W;  // out_ch x (kernel*kernel*in_ch)
    Matrix b;  // out_ch x 1
  };
  struct DenseLayer {
    Matrix W;  // out x in
    Matrix b;  // out x 1
  };

  int in_rows = kImageRows;
  int in_cols = kImageCols;
  std::array<int, 3> conv_channels{8, 16, 32};
  std::array<int, 3> dense_widths{128, 64, kNumJoints};
  std::array<ConvLayer, 3> conv;
  std::array<DenseLayer, 3> dense;

  int flat_size() const {
    int r = in_rows, c = in_cols;
    for (int l = 0; l < 3; ++l) {
      r = conv_out_extent(r);
      c = conv_out_extent(c);
    }
    return conv_channels[2] * r * c;
  }
};

using CnnModel = CnnModelT<float>;

namespace detail {

/// Standard normal draw with a fixed counter, for reproducible init.
inline double normal_at(const SplitMix64& rng, std::uint64_t i) {
  double u1 = std::max(rng.uniform_at(2 * i), 1e-300);
  double u2 = rng.uniform_at(2 * i + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

template <class Matrix>
void fill_gaussian(Matrix& m, double stddev, const SplitMix64& rng, std::uint64_t& counter) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      m(i, j) = static_cast<typename Matrix::Scalar>(stddev * normal_at(rng, counter++));
}

}  // namespace detail

/// Seeded He initialization (final layer gets the smaller Xavier-style scale).
template <class T>
CnnModelT<T> make_cnn(int in_rows, int in_cols, std::uint64_t seed,
                      std::array<int, 3> conv_channels = {8, 16, 32},
                      std::array<int, 3> dense_widths = {128, 64, kNumJoints}) {
  if (dense_widths[2] != kNumJoints) throw ShapeError("make_cnn: final layer must have 15 outputs");
  CnnModelT<T> m;
  m.in_rows = in_rows;
  m.in_cols = in_cols;
  m.conv_channels = conv_channels;
  m.dense_widths = dense_widths;
  SplitMix64 rng(seed);
  std::uint64_t counter = 0;
  int in_ch = kImageChannels;
  for (int l = 0; l < 3; ++l) {
    auto& layer = m.conv[l];
    layer.in_ch = in_ch;
    layer.out_ch = conv_channels[l];
    const int fan_in = in_ch * kConvKernel * kConvKernel;
    layer.W.resize(layer.out_ch, fan_in);
    detail::fill_gaussian(layer.W, std::sqrt(2.0 / fan_in), rng, counter);
    layer.b = CnnModelT<T>::Matrix::Zero(layer.out_ch, 1);
    in_ch = layer.out_ch;
  }
  int in_dim = m.flat_size();
  for (int l = 0; l < 3; ++l) {
    auto& layer = m.dense[l];
    layer.W.resize(dense_widths[l], in_dim);
    const double scale = l == 2 ? 1.0 : 2.0;
    detail::fill_gaussian(layer.W, std::sqrt(scale / in_dim), rng, counter);
    layer.b = CnnModelT<T>::Matrix::Zero(dense_widths[l], 1);
    in_dim = dense_widths[l];
  }
  return m;
}

/// All parameter tensors in a fixed order (conv W/b pairs, then dense W/b).
template <class T>
std::vector<typename CnnModelT<T>::Matrix*> model_tensors(CnnModelT<T>& m) {
  std::vector<typename CnnModelT<T>::Matrix*> out;
  for (auto& c : m.conv) {
    out.push_back(&c.W);
    out.push_back(&c.b);
  }
  for (auto& d : m.dense) {
    out.push_back(&d.W);
    out.push_back(&d.b);
  }
  return out;
}

template <class T>
std::vector<const typename CnnModelT<T>::Matrix*> model_tensors(const CnnModelT<T>& m) {
  std::vector<const typename CnnModelT<T>::Matrix*> out;
  for (const auto& c : m.conv) {
    out.push_back(&c.W);
    out.push_back(&c.b);
  }
  for (const auto& d : m.dense) {
    out.push_back(&d.W);
    out.push_back(&d.b);
  }
  return out;
}

template <class T>
CnnModelT<T> zeros_like(const CnnModelT<T>& m) {
  CnnModelT<T> z = m;
  for (auto* t : model_tensors(z)) t->setZero();
  return z;
}

namespace detail {

template <class T>
using MatT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

/// Gather 5x5 stride-2 patches of x (channels x pixels, row-major pixel
/// index) into columns, zero-padding two pixels at the borders. Both the
/// source pixels and the destination patch slots are contiguous along kx, so
/// interior rows move as one run of 5 * ch scalars.
template <class T>
void im2col(const MatT<T>& x, int rows, int cols, MatT<T>& out) {
  const int ch = static_cast<int>(x.rows());
  const int out_rows = conv_out_extent(rows), out_cols = conv_out_extent(cols);
  const Eigen::Index patch = static_cast<Eigen::Index>(ch) * kConvKernel * kConvKernel;
  out.setZero(patch, static_cast<Eigen::Index>(out_rows) * out_cols);
  const T* src = x.data();
  for (int oy = 0; oy < out_rows; ++oy)
    for (int ox = 0; ox < out_cols; ++ox) {
      T* dst = out.data() + (static_cast<Eigen::Index>(oy) * out_cols + ox) * patch;
      const int ix0 = ox * kConvStride - kConvPad;
      for (int ky = 0; ky < kConvKernel; ++ky) {
        const int iy = oy * kConvStride + ky - kConvPad;
        if (iy < 0 || iy >= rows) continue;
        const Eigen::Index row_base = static_cast<Eigen::Index>(iy) * cols;
        if (ix0 >= 0 && ix0 + kConvKernel <= cols) {
          std::copy_n(src + (row_base + ix0) * ch, kConvKernel * ch, dst + ky * kConvKernel * ch);
        } else {
          for (int kx = 0; kx < kConvKernel; ++kx) {
            const int ix = ix0 + kx;
            if (ix < 0 || ix >= cols) continue;
            std::copy_n(src + (row_base + ix) * ch, ch, dst + (ky * kConvKernel + kx) * ch);
          }
        }
      }
    }
}

/// Scatter-add of im2col columns back onto the input grid.
template <class T>
void col2im(const MatT<T>& cols_grad, int ch, int rows, int cols, MatT<T>& dx) {
  const int out_rows = conv_out_extent(rows), out_cols = conv_out_extent(cols);
  const Eigen::Index patch = static_cast<Eigen::Index>(ch) * kConvKernel * kConvKernel;
  dx.setZero(ch, static_cast<Eigen::Index>(rows) * cols);
  T* dst = dx.data();
  const T* src = cols_grad.data();
  for (int oy = 0; oy < out_rows; ++oy)
    for (int ox = 0; ox < out_cols; ++ox) {
      const T* colp = src + (static_cast<Eigen::Index>(oy) * out_cols + ox) * patch;
      const int ix0 = ox * kConvStride - kConvPad;
      for (int ky = 0; ky < kConvKernel; ++ky) {
        const int iy = oy * kConvStride + ky - kConvPad;
        if (iy < 0 || iy >= rows) continue;
        const Eigen::Index row_base = static_cast<Eigen::Index>(iy) * cols;
        for (int kx = 0; kx < kConvKernel; ++kx) {
          const int ix = ix0 + kx;
          if (ix < 0 || ix >= cols) continue;
          T* d = dst + (row_base + ix) * ch;
          const T* s = colp + (ky * kConvKernel + kx) * ch;
          for (int c = 0; c < ch; ++c) d[c] += s[c];
        }
      }
    }
}

template <class T>
T stable_sigmoid(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  T e = std::exp(z);
  return e / (T(1) + e);
}

/// Per-sample forward scratch, reused across the batch. The gathered patch
/// matrices are kept per layer so the backward pass reads them instead of
/// regathering.
template <class T>
struct Activations {
  MatT<T> x0, x1, x2;        // layer inputs, channels x pixels
  MatT<T> a1, a2, a3;        // conv pre-activations
  MatT<T> patches[3];        // im2col matrices per conv layer
  MatT<T> h0, h1, h2;        // dense inputs (flat, column vectors)
  MatT<T> z1, z2, z3;        // dense pre-activations
  MatT<T> g, gcols, dx;      // backward scratch
};

/// Per-sample conv-stage cache kept alive between the forward and backward
/// halves of a batch, so the dense stage can run as whole-batch matrix
/// products in between.
template <class T>
struct ConvCache {
  MatT<T> a1, a2, a3;   // conv pre-activations
  MatT<T> patches[3];   // im2col matrices per conv layer
};

/// Batch-level training scratch. Reused across steps to avoid re-touching
/// hundreds of megabytes of freshly mapped pages every call.
template <class T>
struct BatchWorkspace {
  std::vector<ConvCache<T>> samples;
  MatT<T> x0, x1, x2;                 // conv forward scratch (per sample)
  MatT<T> H0, H1, H2;                 // dense inputs, one column per sample
  MatT<T> Z1, Z2, Z3;                 // dense pre-activations
  MatT<T> G3, G2, G1, Gflat;          // dense backward
  MatT<T> g, gcols, dx;               // conv backward scratch (per sample)
};

template <class T>
void forward_sample(const CnnModelT<T>& model, const Image& img, Activations<T>& act) {
  const Eigen::Index pixels = static_cast<Eigen::Index>(model.in_rows) * model.in_cols;
  act.x0 = Eigen::Map<const Eigen::MatrixXf>(img.data.data(), kImageChannels, pixels)
               .template cast<T>();
  int rows = model.in_rows, cols = model.in_cols;
  const MatT<T>* x = &act.x0;
  MatT<T>* pre[3] = {&act.a1, &act.a2, &act.a3};
  MatT<T>* post[3] = {&act.x1, &act.x2, nullptr};
  for (int l = 0; l < 3; ++l) {
    im2col(*x, rows, cols, act.patches[l]);
    pre[l]->noalias() = model.conv[l].W * act.patches[l];
    pre[l]->colwise() += model.conv[l].b.col(0);
    rows = conv_out_extent(rows);
    cols = conv_out_extent(cols);
    if (l < 2) {
      *post[l] = pre[l]->cwiseMax(T(0));
      x = post[l];
    }
  }
  MatT<T> x3 = act.a3.cwiseMax(T(0));
  act.h0 = Eigen::Map<const MatT<T>>(x3.data(), x3.size(), 1);
  act.z1.noalias() = model.dense[0].W * act.h0;
  act.z1 += model.dense[0].b;
  act.h1 = act.z1.cwiseMax(T(0));
  act.z2.noalias() = model.dense[1].W * act.h1;
  act.z2 += model.dense[1].b;
  act.h2 = act.z2.cwiseMax(T(0));
  act.z3.noalias() = model.dense[2].W * act.h2;
  act.z3 += model.dense[2].b;
}

}  // namespace detail

/**
 * @brief Joint-command probabilities for one camera frame.
 *
 * @throws ShapeError if the image does not match the model's input shape.
 */
template <class T>
std::array<double, kNumJoints> forward(const CnnModelT<T>& model, const Image& img) {
  if (img.rows != model.in_rows || img.cols != model.in_cols || img.channels != kImageChannels)
    throw ShapeError("forward: image shape does not match the model");
  detail::Activations<T> act;
  detail::forward_sample(model, img, act);
  std::array<double, kNumJoints> p{};
  for (int i = 0; i < kNumJoints; ++i)
    p[i] = static_cast<double>(detail::stable_sigmoid(act.z3(i, 0)));
  return p;
}

/// Threshold probabilities at 0.5; the tie goes to holding still.
template <class T>
Command15 predict_commands(const CnnModelT<T>& model, const Image& img) {
  std::array<double, kNumJoints> p = forward(model, img);
  Command15 cmd{};
  for (int i = 0; i < kNumJoints; ++i) cmd[i] = p[i] > 0.5 ? 1 : 0;
  return cmd;
}

/**
 * @brief Mean binary cross-entropy over the batch and 15 outputs, with
 * gradients for every parameter tensor.
 *
 * The loss is computed from logits in the softplus form, so saturated
 * predictions stay finite. Samples are accumulated in index order.
 *
 * @throws ShapeError on an empty batch or mismatched image/label counts.
 */
template <class T>
std::pair<double, CnnModelT<T>> loss_and_grad(const CnnModelT<T>& model,
                                              std::span<const Image> images,
                                              std::span<const Command15> labels) {
  using Matrix = detail::MatT<T>;
  if (images.empty() || images.size() != labels.size())
    throw ShapeError("loss_and_grad: empty batch or image/label count mismatch");
  CnnModelT<T> grads = zeros_like(model);
  static thread_local detail::BatchWorkspace<T> ws;
  const int batch = static_cast<int>(images.size());
  double loss = 0.0;
  const T scale = T(1) / static_cast<T>(images.size() * kNumJoints);

  int rows[4], cols[4];
  rows[0] = model.in_rows;
  cols[0] = model.in_cols;
  for (int l = 0; l < 3; ++l) {
    rows[l + 1] = conv_out_extent(rows[l]);
    cols[l + 1] = conv_out_extent(cols[l]);
  }
  const Eigen::Index pixels0 = static_cast<Eigen::Index>(rows[0]) * cols[0];
  const Eigen::Index flat = model.dense[0].W.cols();

  if (static_cast<int>(ws.samples.size()) < batch) ws.samples.resize(batch);
  ws.H0.resize(flat, batch);

  // Convolution stage per sample, caching patches and pre-activations so the
  // dense stage can run as whole-batch products.
  for (int n = 0; n < batch; ++n) {
    if (images[n].rows != model.in_rows || images[n].cols != model.in_cols)
      throw ShapeError("loss_and_grad: image shape does not match the model");
    auto& sc = ws.samples[n];
    ws.x0 = Eigen::Map<const Eigen::MatrixXf>(images[n].data.data(), kImageChannels, pixels0)
                .template cast<T>();
    const Matrix* x = &ws.x0;
    Matrix* pre[3] = {&sc.a1, &sc.a2, &sc.a3};
    Matrix* post[3] = {&ws.x1, &ws.x2, nullptr};
    for (int l = 0; l < 3; ++l) {
      detail::im2col(*x, rows[l], cols[l], sc.patches[l]);
      pre[l]->noalias() = model.conv[l].W * sc.patches[l];
      pre[l]->colwise() += model.conv[l].b.col(0);
      if (l < 2) {
        *post[l] = pre[l]->cwiseMax(T(0));
        x = post[l];
      }
    }
    ws.H0.col(n) = Eigen::Map<const Matrix>(sc.a3.data(), flat, 1).cwiseMax(T(0));
  }

  // Dense stage over the whole batch.
  ws.Z1.noalias() = model.dense[0].W * ws.H0;
  ws.Z1.colwise() += model.dense[0].b.col(0);
  ws.H1 = ws.Z1.cwiseMax(T(0));
  ws.Z2.noalias() = model.dense[1].W * ws.H1;
  ws.Z2.colwise() += model.dense[1].b.col(0);
  ws.H2 = ws.Z2.cwiseMax(T(0));
  ws.Z3.noalias() = model.dense[2].W * ws.H2;
  ws.Z3.colwise() += model.dense[2].b.col(0);

  // Loss from logits in the softplus form, so saturated predictions stay
  // finite.
  ws.G3.resize(kNumJoints, batch);
  for (int n = 0; n < batch; ++n)
    for (int i = 0; i < kNumJoints; ++i) {
      const T z = ws.Z3(i, n);
      const T y = static_cast<T>(labels[n][i]);
      loss += static_cast<double>(std::max(z, T(0)) - y * z +
                                  std::log1p(std::exp(-std::abs(z))));
      ws.G3(i, n) = (detail::stable_sigmoid(z) - y) * scale;
    }

  grads.dense[2].W.noalias() = ws.G3 * ws.H2.transpose();
  grads.dense[2].b = ws.G3.rowwise().sum();
  ws.G2.noalias() = model.dense[2].W.transpose() * ws.G3;
  ws.G2 = ws.G2.cwiseProduct((ws.Z2.array() > T(0)).template cast<T>().matrix());
  grads.dense[1].W.noalias() = ws.G2 * ws.H1.transpose();
  grads.dense[1].b = ws.G2.rowwise().sum();
  ws.G1.noalias() = model.dense[1].W.transpose() * ws.G2;
  ws.G1 = ws.G1.cwiseProduct((ws.Z1.array() > T(0)).template cast<T>().matrix());
  grads.dense[0].W.noalias() = ws.G1 * ws.H0.transpose();
  grads.dense[0].b = ws.G1.rowwise().sum();
  ws.Gflat.noalias() = model.dense[0].W.transpose() * ws.G1;

  // Convolution backward per sample. The gradient below the first layer is
  // never needed, so that scatter is skipped.
  for (int n = 0; n < batch; ++n) {
    auto& sc = ws.samples[n];
    ws.g = Eigen::Map<const Matrix>(ws.Gflat.data() + static_cast<Eigen::Index>(n) * flat,
                                    model.conv_channels[2],
                                    static_cast<Eigen::Index>(rows[3]) * cols[3])
               .cwiseProduct((sc.a3.array() > T(0)).template cast<T>().matrix());
    const Matrix* conv_pre[2] = {&sc.a1, &sc.a2};
    for (int l = 2; l >= 0; --l) {
      grads.conv[l].W.noalias() += ws.g * sc.patches[l].transpose();
      grads.conv[l].b += ws.g.rowwise().sum();
      if (l == 0) break;
      ws.gcols.noalias() = model.conv[l].W.transpose() * ws.g;
      detail::col2im(ws.gcols, model.conv[l].in_ch, rows[l], cols[l], ws.dx);
      ws.g = ws.dx.cwiseProduct((conv_pre[l - 1]->array() > T(0)).template cast<T>().matrix());
    }
  }
  return {loss / static_cast<double>(images.size() * kNumJoints), std::move(grads)};
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamState {
  CnnModelT<T> m, v;

  explicit AdamState(const CnnModelT<T>& model) : m(zeros_like(model)), v(zeros_like(model)) {}
};

/// One bias-corrected Adam step. `step` starts at 1.
template <class T>
void adam_update(CnnModelT<T>& params, const CnnModelT<T>& grads, AdamState<T>& state, int step,
                 const AdamConfig& cfg = {}) {
  if (step < 1) throw RangeError("adam_update: step must be >= 1");
  auto p = model_tensors(params);
  auto g = model_tensors(grads);
  auto m = model_tensors(state.m);
  auto v = model_tensors(state.v);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T mc = static_cast<T>(1.0 - std::pow(cfg.beta1, step));
  const T vc = static_cast<T>(1.0 - std::pow(cfg.beta2, step));
  for (std::size_t i = 0; i < p.size(); ++i) {
    *m[i] = b1 * *m[i] + (T(1) - b1) * *g[i];
    *v[i] = b2 * *v[i] + (T(1) - b2) * g[i]->cwiseProduct(*g[i]);
    p[i]->array() -= static_cast<T>(cfg.lr) * (m[i]->array() / mc) /
                     ((v[i]->array() / vc).sqrt() + static_cast<T>(cfg.eps));
  }
}

struct TrainConfig {
  AdamConfig adam{};
  int batch_size = 75;
  int epochs = 45;
  int steps_per_epoch = 2;
  std::array<double, 2> luminance_range{0.2, 1.2};
  std::uint64_t seed = 1;
  std::array<int, 3> conv_channels{8, 16, 32};
  std::array<int, 3> dense_widths{128, 64, kNumJoints};

  void validate() const {
    if (!(adam.lr > 0.0)) throw DomainError("train: lr must be positive");
    if (batch_size < 1) throw DomainError("train: batch_size must be at least 1");
    if (epochs < 1 || steps_per_epoch < 1)
      throw DomainError("train: epochs and steps_per_epoch must be at least 1");
    if (!(luminance_range[0] > 0.0 && luminance_range[0] <= luminance_range[1]))
      throw DomainError("train: luminance range must satisfy 0 < low <= high");
  }

  nlohmann::json to_json() const {
    return {{"lr", adam.lr},
            {"beta1", adam.beta1},
            {"beta2", adam.beta2},
            {"eps", adam.eps},
            {"batch_size", batch_size},
            {"epochs", epochs},
            {"steps_per_epoch", steps_per_epoch},
            {"luminance_range", luminance_range},
            {"seed", seed},
            {"conv_channels", conv_channels},
            {"dense_widths", dense_widths}};
  }

  std::uint64_t hash() const { return fnv1a64(to_json().dump()); }
};

struct TrainReport {
  std::vector<double> epoch_loss;
  std::array<double, kNumJoints> per_joint_accuracy{};
  double mean_accuracy = 0.0;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;

  bool operator==(const TrainReport&) const = default;
};

namespace detail {

/// Deterministic Fisher-Yates permutation; `counter` advances per draw.
inline void shuffle_indices(std::vector<int>& idx, const SplitMix64& rng, std::uint64_t& counter) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    auto j = static_cast<std::size_t>(rng.uniform_at(counter++) * static_cast<double>(i));
    if (j >= i) j = i - 1;
    std::swap(idx[i - 1], idx[j]);
  }
}

}  // namespace detail

/// Fraction of dataset samples whose thresholded prediction matches the
/// label, per joint.
template <class T, class DatasetLike>
std::array<double, kNumJoints> command_accuracy(const CnnModelT<T>& model, const DatasetLike& ds) {
  std::array<double, kNumJoints> acc{};
  if (ds.inputs.empty()) return acc;
  for (std::size_t n = 0; n < ds.inputs.size(); ++n) {
    Command15 pred = predict_commands(model, ds.inputs[n]);
    for (int i = 0; i < kNumJoints; ++i)
      if (pred[i] == ds.labels[n][i]) acc[i] += 1.0;
  }
  for (double& a : acc) a /= static_cast<double>(ds.inputs.size());
  return acc;
}

/**
 * @brief Behavior-cloning training loop.
 *
 * He-initialized from the seed, epoch-shuffled with a dedicated substream,
 * per-sample luminance augmentation drawn from another. Batches wrap around
 * datasets smaller than batch_size. Bit-deterministic given (dataset, cfg).
 *
 * @throws EmptyDatasetError for an empty dataset.
 */
template <class DatasetLike>
std::pair<CnnModel, TrainReport> train(const DatasetLike& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (ds.inputs.empty()) throw EmptyDatasetError("train: empty dataset");
  const int n = static_cast<int>(ds.inputs.size());
  CnnModel model = make_cnn<float>(ds.inputs[0].rows, ds.inputs[0].cols, cfg.seed,
                                   cfg.conv_channels, cfg.dense_widths);
  AdamState<float> opt(model);
  SplitMix64 root(cfg.seed);
  SplitMix64 shuffle_rng = root.substream(1);
  SplitMix64 aug_rng = root.substream(2);
  std::uint64_t shuffle_counter = 0;

  TrainReport report;
  report.config_hash = cfg.hash();
  report.seed = cfg.seed;

  std::vector<int> order(ds.inputs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Image> batch_images(cfg.batch_size);
  std::vector<Command15> batch_labels(cfg.batch_size);

  int step_global = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    detail::shuffle_indices(order, shuffle_rng, shuffle_counter);
    double loss_sum = 0.0;
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      for (int k = 0; k < cfg.batch_size; ++k) {
        const int idx = order[static_cast<std::size_t>((step * cfg.batch_size + k) % n)];
        const double span = cfg.luminance_range[1] - cfg.luminance_range[0];
        const double factor =
            cfg.luminance_range[0] +
            span * aug_rng.uniform_at(static_cast<std::uint64_t>(step_global) * cfg.batch_size + k);
        batch_images[k] = augment_luminance(ds.inputs[idx], factor);
        batch_labels[k] = ds.labels[idx];
      }
      auto [loss, grads] = loss_and_grad(model, std::span<const Image>(batch_images),
                                         std::span<const Command15>(batch_labels));
      ++step_global;
      adam_update(model, grads, opt, step_global, cfg.adam);
      loss_sum += loss;
    }
    report.epoch_loss.push_back(loss_sum / cfg.steps_per_epoch);
  }
  report.per_joint_accuracy = command_accuracy(model, ds);
  report.mean_accuracy =
      std::accumulate(report.per_joint_accuracy.begin(), report.per_joint_accuracy.end(), 0.0) /
      kNumJoints;
  return {std::move(model), std::move(report)};
}

// ---------------------------------------------------------------------------
// Checkpoints: magic, version, scalar width, architecture, then each tensor
// as (rows, cols, raw little-endian data). A JSON sidecar at path + ".json"
// records the hyperparameters for humans and tooling.

inline constexpr char kCheckpointMagic[4] = {'D', 'X', 'H', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void write_raw_value(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_raw_value(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace detail

template <class T>
void save_checkpoint(const CnnModelT<T>& model, const std::string& path,
                     const nlohmann::json& extra_sidecar = nlohmann::json::object()) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open " + path);
  out.write(kCheckpointMagic, 4);
  detail::write_raw_value(out, kCheckpointVersion);
  detail::write_raw_value(out, static_cast<std::uint32_t>(sizeof(T)));
  detail::write_raw_value(out, static_cast<std::int32_t>(model.in_rows));
  detail::write_raw_value(out, static_cast<std::int32_t>(model.in_cols));
  for (int c : model.conv_channels) detail::write_raw_value(out, static_cast<std::int32_t>(c));
  for (int d : model.dense_widths) detail::write_raw_value(out, static_cast<std::int32_t>(d));
  auto tensors = model_tensors(model);
  detail::write_raw_value(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto* t : tensors) {
    detail::write_raw_value(out, static_cast<std::uint32_t>(t->rows()));
    detail::write_raw_value(out, static_cast<std::uint32_t>(t->cols()));
    out.write(reinterpret_cast<const char*>(t->data()),
              static_cast<std::streamsize>(sizeof(T) * t->size()));
  }
  out.flush();
  if (!out) throw IoError("save_checkpoint: write failed for " + path);

  nlohmann::json sidecar = extra_sidecar;
  sidecar["format_version"] = kCheckpointVersion;
  sidecar["scalar_bytes"] = sizeof(T);
  sidecar["in_rows"] = model.in_rows;
  sidecar["in_cols"] = model.in_cols;
  sidecar["conv_channels"] = model.conv_channels;
  sidecar["dense_widths"] = model.dense_widths;
  std::ofstream side(path + ".json", std::ios::binary);
  if (!side) throw IoError("save_checkpoint: cannot open sidecar for " + path);
  side << sidecar.dump(2) << "\n";
}

template <class T = float>
CnnModelT<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string_view(magic, 4) != std::string_view(kCheckpointMagic, 4))
    throw ParseError(1, "load_checkpoint: bad magic in " + path);
  if (detail::read_raw_value<std::uint32_t>(in) != kCheckpointVersion)
    throw ParseError(1, "load_checkpoint: unsupported version in " + path);
  if (detail::read_raw_value<std::uint32_t>(in) != sizeof(T))
    throw ParseError(1, "load_checkpoint: scalar width mismatch in " + path);
  CnnModelT<T> model;
  model.in_rows = detail::read_raw_value<std::int32_t>(in);
  model.in_cols = detail::read_raw_value<std::int32_t>(in);
  for (int& c : model.conv_channels) c = detail::read_raw_value<std::int32_t>(in);
  for (int& d : model.dense_widths) d = detail::read_raw_value<std::int32_t>(in);
  CnnModelT<T> shaped = make_cnn<T>(model.in_rows, model.in_cols, 0, model.conv_channels,
                                    model.dense_widths);
  model = std::move(shaped);
  auto tensors = model_tensors(model);
  if (detail::read_raw_value<std::uint32_t>(in) != tensors.size())
    throw ParseError(1, "load_checkpoint: tensor count mismatch in " + path);
  for (auto* t : tensors) {
    const auto rows = detail::read_raw_value<std::uint32_t>(in);
    const auto cols = detail::read_raw_value<std::uint32_t>(in);
    if (rows != static_cast<std::uint32_t>(t->rows()) ||
        cols != static_cast<std::uint32_t>(t->cols()))
      throw ParseError(1, "load_checkpoint: tensor shape mismatch in " + path);
    in.read(reinterpret_cast<char*>(t->data()), static_cast<std::streamsize>(sizeof(T) * t->size()));
  }
  if (!in) throw ParseError(1, "load_checkpoint: truncated tensor data in " + path);
  return model;
}

/**
 * @brief Compare analytic gradients against central finite differences at
 * sampled parameter coordinates. Returns the worst relative error.
 *
 * Intended for the double instantiation on a small input variant, where
 * finite-difference noise is far below the comparison threshold.
 */
template <class T>
double gradient_check(CnnModelT<T>& model, std::span<const Image> images,
                      std::span<const Command15> labels, int coords_per_tensor,
                      std::uint64_t seed) {
  auto [loss, grads] = loss_and_grad(static_cast<const CnnModelT<T>&>(model), images, labels);
  (void)loss;
  auto params = model_tensors(model);
  auto analytic = model_tensors(grads);
  SplitMix64 rng(seed);
  std::uint64_t counter = 0;
  double worst = 0.0;
  for (std::size_t ti = 0; ti < params.size(); ++ti) {
    auto& tensor = *params[ti];
    for (int k = 0; k < coords_per_tensor; ++k) {
      const auto flat =
          static_cast<Eigen::Index>(rng.uniform_at(counter++) * static_cast<double>(tensor.size()));
      const Eigen::Index idx = std::min(flat, static_cast<Eigen::Index>(tensor.size() - 1));
      const T saved = tensor.data()[idx];
      const T h = static_cast<T>(1e-5) * std::max(T(1), std::abs(saved));
      tensor.data()[idx] = saved + h;
      double lp = loss_and_grad(static_cast<const CnnModelT<T>&>(model), images, labels).first;
      tensor.data()[idx] = saved - h;
      double lm = loss_and_grad(static_cast<const CnnModelT<T>&>(model), images, labels).first;
      tensor.data()[idx] = saved;
      const double fd = (lp - lm) / (2.0 * static_cast<double>(h));
      const double an = static_cast<double>(analytic[ti]->data()[idx]);
      const double rel = std::abs(an - fd) / std::max(1e-6, std::abs(an) + std::abs(fd));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace dexhand

