#pragma once

#include <Eigen/Dense>

#include "raap/tensor.hpp"

namespace raap {

/// H x W x C real image stored as an (H*W) x C matrix, one row per pixel in
/// row-major pixel order. Doubles as a dense per-pixel feature map.
struct FeatureImage {
  int height = 0;
  int width = 0;
  Matrix pixels;

  FeatureImage() = default;
  FeatureImage(int h, int w, int channels) : height(h), width(w), pixels(Matrix::Zero(Eigen::Index(h) * w, channels)) {}

  int channels() const { return static_cast<int>(pixels.cols()); }
  bool empty() const { return height == 0 || width == 0; }
  Eigen::Index index(int x, int y) const { return Eigen::Index(y) * width + x; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

  double& at(int x, int y, int c) { return pixels(index(x, y), c); }
  double at(int x, int y, int c) const { return pixels(index(x, y), c); }
  auto pixel(int x, int y) { return pixels.row(index(x, y)); }
  auto pixel(int x, int y) const { return pixels.row(index(x, y)); }

  friend bool operator==(const FeatureImage& a, const FeatureImage& b) {
    return a.height == b.height && a.width == b.width && a.pixels.rows() == b.pixels.rows() &&
           a.pixels.cols() == b.pixels.cols() && a.pixels == b.pixels;
  }
};

/// Mirror about the vertical axis: pixel (x, y) moves to (W-1-x, y).
inline FeatureImage hflip(const FeatureImage& image) {
  FeatureImage out(image.height, image.width, image.channels());
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      out.pixel(image.width - 1 - x, y) = image.pixel(x, y);
    }
  }
  return out;
}

}  // namespace raap
