#pragma once

#include <png.h>

#include <cstdio>
#include <string>
#include <vector>

#include "sitvos/pipeline.hpp"
#include "sitvos/tensor.hpp"

namespace sitvos {

namespace detail {

inline void write_png_buffer(const std::string& path, png_uint_32 format, std::size_t h,
                             std::size_t w, const std::vector<unsigned char>& buf) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("png write failed for " + path + ": " + msg);
  }
}

inline std::vector<unsigned char> read_png_buffer(const std::string& path, png_uint_32 format,
                                                  std::size_t channels, std::size_t& h,
                                                  std::size_t& w) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("cannot read png " + path + ": " + msg);
  }
  image.format = format;
  h = image.height;
  w = image.width;
  std::vector<unsigned char> buf(h * w * channels);
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("malformed png " + path + ": " + msg);
  }
  return buf;
}

}  // namespace detail

// 8-bit RGB frame; tensor values in [0,1] are quantized by rounding.
template <typename T>
void write_rgb_png(const std::string& path, const Tensor<T>& frame) {
  if (frame.rank() != 3 || frame.extent(0) != 3)
    throw DimensionError("write_rgb_png: expected [3,h,w], got " + shape_str(frame.shape()));
  const std::size_t h = frame.extent(1), w = frame.extent(2), hw = h * w;
  std::vector<unsigned char> buf(hw * 3);
  for (std::size_t i = 0; i < hw; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::min(std::max(static_cast<double>(frame[c * hw + i]), 0.0), 1.0);
      buf[i * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
  detail::write_png_buffer(path, PNG_FORMAT_RGB, h, w, buf);
}

template <typename T>
Tensor<T> read_rgb_png(const std::string& path) {
  std::size_t h = 0, w = 0;
  const std::vector<unsigned char> buf = detail::read_png_buffer(path, PNG_FORMAT_RGB, 3, h, w);
  Tensor<T> frame({3, h, w});
  const std::size_t hw = h * w;
  for (std::size_t i = 0; i < hw; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      frame[c * hw + i] = static_cast<T>(buf[i * 3 + c]) / T(255);
  return frame;
}

// Single-channel 8-bit annotation: pixel value = object id, 0 = background.
inline void write_label_png(const std::string& path, const LabelMap& labels) {
  std::vector<unsigned char> buf(labels.h * labels.w);
  for (std::size_t i = 0; i < buf.size(); ++i) {
    if (labels.ids[i] < 0 || labels.ids[i] > 255)
      throw ContractError("write_label_png: object id out of 8-bit range");
    buf[i] = static_cast<unsigned char>(labels.ids[i]);
  }
  detail::write_png_buffer(path, PNG_FORMAT_GRAY, labels.h, labels.w, buf);
}

inline LabelMap read_label_png(const std::string& path) {
  std::size_t h = 0, w = 0;
  const std::vector<unsigned char> buf = detail::read_png_buffer(path, PNG_FORMAT_GRAY, 1, h, w);
  LabelMap labels(h, w);
  for (std::size_t i = 0; i < buf.size(); ++i) labels.ids[i] = buf[i];
  return labels;
}

}  // namespace sitvos
