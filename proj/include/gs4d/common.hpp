#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace gs4d {

template <class S> using Vec2 = Eigen::Matrix<S, 2, 1>;
template <class S> using Vec3 = Eigen::Matrix<S, 3, 1>;
template <class S> using Vec4 = Eigen::Matrix<S, 4, 1>;
template <class S> using Mat2 = Eigen::Matrix<S, 2, 2>;
template <class S> using Mat3 = Eigen::Matrix<S, 3, 3>;
template <class S> using Mat23 = Eigen::Matrix<S, 2, 3>;

/// Malformed or inconsistent input data (files, manifests, shapes).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite values or numerically degenerate configurations.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad command-line usage.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

template <class S>
inline S sigmoid(S x) {
  if (x >= S(0)) {
    return S(1) / (S(1) + std::exp(-x));
  }
  const S e = std::exp(x);
  return e / (S(1) + e);
}

template <class S>
inline S logit(S p) {
  return std::log(p / (S(1) - p));
}

template <class S>
inline S sq(S x) {
  return x * x;
}

template <class S>
inline S clamp01(S x) {
  return x < S(0) ? S(0) : (x > S(1) ? S(1) : x);
}

}  // namespace gs4d
