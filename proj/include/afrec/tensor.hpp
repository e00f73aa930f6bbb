#pragma once

#include <Eigen/Dense>

namespace afrec {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Channel-major activation volume. Column y * width + x holds the channel
// vector at grid position (y, x).
struct Tensor3 {
  int channels = 0;
  int height = 0;
  int width = 0;
  Matrix data;

  Tensor3() = default;
  Tensor3(int c, int h, int w) : channels(c), height(h), width(w), data(Matrix::Zero(c, h * w)) {}

  int positions() const { return height * width; }
  double& at(int c, int y, int x) { return data(c, y * width + x); }
  double at(int c, int y, int x) const { return data(c, y * width + x); }

  bool operator==(const Tensor3& other) const {
    return channels == other.channels && height == other.height && width == other.width &&
           data == other.data;
  }
};

// RGB image, three channels, values in [0, 1].
using Image = Tensor3;

// D x G x G backbone output.
using FeatureMap = Tensor3;

}  // namespace afrec
