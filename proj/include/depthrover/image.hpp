#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace depthrover {

/// Row-major raster: rows are image lines (y), columns are x.
template <typename T>
using Raster = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using GrayImage = Raster<std::uint8_t>;
using Mask = Raster<bool>;

/// Per-pixel metric or scene-unit depth. Invalid pixels hold +inf.
struct DepthMap {
  Raster<double> values;
  Mask valid;

  DepthMap() = default;
  DepthMap(int width, int height)
      : values(Raster<double>::Constant(height, width,
                                        std::numeric_limits<double>::infinity())),
        valid(Mask::Constant(height, width, false)) {}

  int width() const { return int(values.cols()); }
  int height() const { return int(values.rows()); }
  double at(int x, int y) const { return values(y, x); }
  bool is_valid(int x, int y) const { return valid(y, x); }
};

constexpr float kInvalidDisparity = -1.0f;

/// Subpixel disparity in pixels. Invalid pixels hold kInvalidDisparity.
struct DisparityMap {
  Raster<float> values;
  Mask valid;
  int num_disparities = 0;

  DisparityMap() = default;
  DisparityMap(int width, int height, int num_disparities)
      : values(Raster<float>::Constant(height, width, kInvalidDisparity)),
        valid(Mask::Constant(height, width, false)),
        num_disparities(num_disparities) {}

  int width() const { return int(values.cols()); }
  int height() const { return int(values.rows()); }

  void invalidate(int x, int y) {
    values(y, x) = kInvalidDisparity;
    valid(y, x) = false;
  }
  void set(int x, int y, float d) {
    values(y, x) = d;
    valid(y, x) = true;
  }
  double valid_fraction() const {
    return valid.size() ? double(valid.count()) / double(valid.size()) : 0.0;
  }
};

/// 8-bit interleaved RGB.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_png(const std::filesystem::path& path, const GrayImage& image);
void write_png(const std::filesystem::path& path, const RgbImage& image);
/// Color inputs are converted to gray by libpng.
GrayImage read_png(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const GrayImage& image);
std::vector<std::uint8_t> encode_png(const RgbImage& image);

/// Single-channel little-endian PFM ("Pf", negative scale, bottom-up rows).
void write_pfm(const std::filesystem::path& path, const Raster<float>& raster);
Raster<float> read_pfm(const std::filesystem::path& path);

/// Invalid pixels are written as +inf.
void write_depth_pfm(const std::filesystem::path& path, const DepthMap& depth);
/// Non-finite or non-positive samples load as invalid.
DepthMap read_depth_pfm(const std::filesystem::path& path);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);

/// Jet-style colormap of valid depths in [min_value, max_value]; invalid
/// pixels are black. `stride` subsamples both axes.
RgbImage colorize_depth(const DepthMap& depth, double min_value, double max_value,
                        int stride = 1);

}  // namespace depthrover
