#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "dexhand/common.hpp"

namespace dexhand {

inline constexpr int kImageRows = 160;
inline constexpr int kImageCols = 320;
inline constexpr int kImageChannels = 3;

/**
 * @brief Dense float image, interleaved channels, values nominally in [0, 1].
 *
 * Element (y, x, c) sits at data[(y * cols + x) * channels + c], so the
 * buffer doubles as a channels-by-pixels column-major matrix for the
 * network's im2col path.
 */
struct Image {
  int rows = 0;
  int cols = 0;
  int channels = kImageChannels;
  std::vector<float> data;

  static Image zeros(int rows, int cols, int channels = kImageChannels) {
    Image img;
    img.rows = rows;
    img.cols = cols;
    img.channels = channels;
    img.data.assign(static_cast<std::size_t>(rows) * cols * channels, 0.0f);
    return img;
  }

  float& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * cols + x) * channels + c]; }
  float at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * cols + x) * channels + c]; }

  bool same_shape(const Image& o) const {
    return rows == o.rows && cols == o.cols && channels == o.channels;
  }
};

/**
 * @brief RGB to full-range YUV (BT.601 luma, chroma offset to 0.5).
 *
 * Maps [0, 1] RGB into [0, 1] on all three channels; white lands at
 * (1, 0.5, 0.5) and any gray keeps both chroma channels at 0.5.
 */
inline Image rgb_to_yuv(const Image& img) {
  if (img.channels != 3) throw SizeError("rgb_to_yuv: need 3 channels");
  Image out = img;
  for (std::size_t i = 0; i < img.data.size(); i += 3) {
    const float r = img.data[i], g = img.data[i + 1], b = img.data[i + 2];
    out.data[i] = 0.299f * r + 0.587f * g + 0.114f * b;
    out.data[i + 1] = 0.5f - 0.168736f * r - 0.331264f * g + 0.5f * b;
    out.data[i + 2] = 0.5f + 0.5f * r - 0.418688f * g - 0.081312f * b;
  }
  return out;
}

/**
 * @brief Separable Gaussian blur, kernel truncated at 3 sigma, edges replicated.
 *
 * sigma = 0 returns the input unchanged.
 */
inline Image gaussian_blur(const Image& img, double sigma) {
  if (sigma < 0.0) throw RangeError("gaussian_blur: sigma must be non-negative");
  if (sigma == 0.0) return img;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<float> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    double w = std::exp(-0.5 * (k * k) / (sigma * sigma));
    kernel[k + radius] = static_cast<float>(w);
    sum += w;
  }
  for (float& w : kernel) w = static_cast<float>(w / sum);

  Image tmp = img, out = img;
  auto clamp_idx = [](int v, int n) { return std::clamp(v, 0, n - 1); };
  for (int y = 0; y < img.rows; ++y)
    for (int x = 0; x < img.cols; ++x)
      for (int c = 0; c < img.channels; ++c) {
        float acc = 0.0f;
        for (int k = -radius; k <= radius; ++k)
          acc += kernel[k + radius] * img.at(y, clamp_idx(x + k, img.cols), c);
        tmp.at(y, x, c) = acc;
      }
  for (int y = 0; y < img.rows; ++y)
    for (int x = 0; x < img.cols; ++x)
      for (int c = 0; c < img.channels; ++c) {
        float acc = 0.0f;
        for (int k = -radius; k <= radius; ++k)
          acc += kernel[k + radius] * tmp.at(clamp_idx(y + k, img.rows), x, c);
        out.at(y, x, c) = acc;
      }
  return out;
}

/// Clamp every value into [0, 1]. Idempotent.
inline Image normalize01(const Image& img) {
  Image out = img;
  for (float& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

/**
 * @brief Scale the luma channel of a YUV image by factor, clamped to [0, 1].
 *
 * Chroma channels pass through untouched.
 *
 * @throws RangeError for factors outside [0.2, 1.2].
 */
inline Image augment_luminance(const Image& img, double factor) {
  if (factor < 0.2 || factor > 1.2) throw RangeError("augment_luminance: factor outside [0.2, 1.2]");
  Image out = img;
  for (std::size_t i = 0; i < out.data.size(); i += out.channels)
    out.data[i] = std::clamp(static_cast<float>(factor) * out.data[i], 0.0f, 1.0f);
  return out;
}

struct PreprocessConfig {
  bool to_yuv = true;
  double blur_sigma = 1.0;
  bool normalize = true;
  std::array<double, 2> luminance_range{0.2, 1.2};

  void validate() const {
    if (blur_sigma < 0.0) throw DomainError("preprocess: blur_sigma must be non-negative");
    if (!(luminance_range[0] > 0.0 && luminance_range[0] <= luminance_range[1]))
      throw DomainError("preprocess: luminance range must satisfy 0 < low <= high");
  }
};

/**
 * @brief Camera-frame conditioning: YUV conversion, blur, clamp to [0, 1].
 *
 * @throws SizeError unless the input is exactly 160x320x3.
 */
inline Image preprocess_image(const Image& img, const PreprocessConfig& cfg) {
  if (img.rows != kImageRows || img.cols != kImageCols || img.channels != kImageChannels)
    throw SizeError("preprocess_image: expected 160x320x3 input");
  Image out = cfg.to_yuv ? rgb_to_yuv(img) : img;
  if (cfg.blur_sigma > 0.0) out = gaussian_blur(out, cfg.blur_sigma);
  if (cfg.normalize) out = normalize01(out);
  return out;
}

/// Binary PPM (P6, maxval 255) reader producing floats in [0, 1].
inline Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_ppm: cannot open " + path);
  std::string magic;
  int cols = 0, rows = 0, maxval = 0;
  in >> magic >> cols >> rows >> maxval;
  if (magic != "P6" || cols <= 0 || rows <= 0 || maxval != 255)
    throw ParseError(1, "read_ppm: expected P6 with maxval 255 in " + path);
  in.get();  // single whitespace after the header
  Image img = Image::zeros(rows, cols);
  std::vector<unsigned char> raw(img.data.size());
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!in) throw ParseError(1, "read_ppm: truncated pixel data in " + path);
  for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / 255.0f;
  return img;
}

/// Binary PPM dump, values clamped to [0, 255].
inline void write_ppm(const Image& img, const std::string& path) {
  if (img.channels != 3) throw SizeError("write_ppm: need 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_ppm: cannot open " + path);
  out << "P6\n" << img.cols << " " << img.rows << "\n255\n";
  for (float v : img.data) {
    int byte = static_cast<int>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
    char b = static_cast<char>(byte);
    out.write(&b, 1);
  }
  if (!out) throw IoError("write_ppm: write failed for " + path);
}

}  // namespace dexhand
