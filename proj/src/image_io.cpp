#include "depthrover/image.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <png.h>

namespace depthrover {
namespace {

png_image make_png_header(int width, int height, png_uint_32 format) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = png_uint_32(width);
  img.height = png_uint_32(height);
  img.format = format;
  return img;
}

void write_png_file(const std::filesystem::path& path, int width, int height,
                    png_uint_32 format, const void* pixels) {
  png_image img = make_png_header(width, height, format);
  if (!png_image_write_to_file(&img, path.c_str(), 0, pixels, 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw IoError("cannot write " + path.string() + ": " + msg);
  }
}

std::vector<std::uint8_t> encode_png_memory(int width, int height, png_uint_32 format,
                                            const void* pixels) {
  png_image img = make_png_header(width, height, format);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, pixels, 0, nullptr))
    throw IoError(std::string("png size query failed: ") + img.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, pixels, 0, nullptr))
    throw IoError(std::string("png encode failed: ") + img.message);
  out.resize(size);
  return out;
}

static_assert(std::endian::native == std::endian::little,
              "PFM writer assumes a little-endian host");

}  // namespace

void write_png(const std::filesystem::path& path, const GrayImage& image) {
  write_png_file(path, int(image.cols()), int(image.rows()), PNG_FORMAT_GRAY,
                 image.data());
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  write_png_file(path, image.width, image.height, PNG_FORMAT_RGB, image.data.data());
}

GrayImage read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw IoError("cannot read " + path.string() + ": " + img.message);
  img.format = PNG_FORMAT_GRAY;
  GrayImage out(img.height, img.width);
  if (!png_image_finish_read(&img, nullptr, out.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw IoError("cannot decode " + path.string() + ": " + msg);
  }
  return out;
}

std::vector<std::uint8_t> encode_png(const GrayImage& image) {
  return encode_png_memory(int(image.cols()), int(image.rows()), PNG_FORMAT_GRAY,
                           image.data());
}

std::vector<std::uint8_t> encode_png(const RgbImage& image) {
  return encode_png_memory(image.width, image.height, PNG_FORMAT_RGB,
                           image.data.data());
}

void write_pfm(const std::filesystem::path& path, const Raster<float>& raster) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "Pf\n" << raster.cols() << ' ' << raster.rows() << "\n-1.0\n";
  for (Eigen::Index y = raster.rows() - 1; y >= 0; --y)
    out.write(reinterpret_cast<const char*>(raster.row(y).data()),
              std::streamsize(raster.cols() * sizeof(float)));
  if (!out) throw IoError("write failed: " + path.string());
}

Raster<float> read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  long width = 0, height = 0;
  double scale = 0;
  in >> magic >> width >> height >> scale;
  if (magic != "Pf" || width <= 0 || height <= 0 || scale == 0)
    throw IoError("not a single-channel PFM: " + path.string());
  if (scale > 0) throw IoError("big-endian PFM not supported: " + path.string());
  in.get();  // single whitespace after the scale line
  Raster<float> raster(height, width);
  for (long y = height - 1; y >= 0; --y)
    in.read(reinterpret_cast<char*>(raster.row(y).data()),
            std::streamsize(width * sizeof(float)));
  if (!in) throw IoError("truncated PFM: " + path.string());
  return raster;
}

void write_depth_pfm(const std::filesystem::path& path, const DepthMap& depth) {
  Raster<float> r(depth.height(), depth.width());
  for (int y = 0; y < depth.height(); ++y)
    for (int x = 0; x < depth.width(); ++x)
      r(y, x) = depth.valid(y, x) ? float(depth.values(y, x))
                                  : std::numeric_limits<float>::infinity();
  write_pfm(path, r);
}

DepthMap read_depth_pfm(const std::filesystem::path& path) {
  const Raster<float> r = read_pfm(path);
  DepthMap depth(int(r.cols()), int(r.rows()));
  for (Eigen::Index y = 0; y < r.rows(); ++y)
    for (Eigen::Index x = 0; x < r.cols(); ++x)
      if (std::isfinite(r(y, x)) && r(y, x) > 0) {
        depth.values(y, x) = r(y, x);
        depth.valid(y, x) = true;
      }
  return depth;
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  static constexpr char table[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += table[(n >> 18) & 63];
    out += table[(n >> 12) & 63];
    out += table[(n >> 6) & 63];
    out += table[n & 63];
  }
  if (i + 1 == bytes.size()) {
    const std::uint32_t n = bytes[i] << 16;
    out += table[(n >> 18) & 63];
    out += table[(n >> 12) & 63];
    out += "==";
  } else if (i + 2 == bytes.size()) {
    const std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += table[(n >> 18) & 63];
    out += table[(n >> 12) & 63];
    out += table[(n >> 6) & 63];
    out += '=';
  }
  return out;
}

RgbImage colorize_depth(const DepthMap& depth, double min_value, double max_value,
                        int stride) {
  stride = std::max(stride, 1);
  RgbImage img;
  img.width = (depth.width() + stride - 1) / stride;
  img.height = (depth.height() + stride - 1) / stride;
  img.data.assign(std::size_t(img.width) * img.height * 3, 0);
  const double span = std::max(max_value - min_value, 1e-12);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const int sx = x * stride, sy = y * stride;
      if (!depth.valid(sy, sx)) continue;
      // near = red, far = blue
      const double t = std::clamp((depth.values(sy, sx) - min_value) / span, 0.0, 1.0);
      const double v = 1.0 - t;
      const auto channel = [v](double offset) {
        return std::uint8_t(255.0 * std::clamp(1.5 - std::abs(4.0 * v - offset), 0.0, 1.0));
      };
      auto* px = &img.data[(std::size_t(y) * img.width + x) * 3];
      px[0] = channel(3.0);
      px[1] = channel(2.0);
      px[2] = channel(1.0);
    }
  }
  return img;
}

}  // namespace depthrover
