#pragma once

#include <cmath>
#include <span>

#include "eids/core/error.hpp"
#include "eids/core/mat.hpp"

namespace eids::tinyformer {

inline constexpr double kTwoPi = 6.283185307179586476925287;

// Classic sine/cosine table: out[p, 2i] = sin(pos_p / 10000^(2i/d_m)),
// out[p, 2i+1] = cos(same). Positions may be integer indices (static) or
// packet timestamps (dynamic); the formula does not care.
template <typename Real>
Mat<Real> pe_sinusoidal(std::span<const Real> positions, int d_m) {
  if (d_m % 2 != 0) throw InvalidSpec("pe_sinusoidal needs even d_m");
  Mat<Real> out(positions.size(), static_cast<std::size_t>(d_m));
  for (std::size_t p = 0; p < positions.size(); ++p) {
    Real* row = out.row(p);
    for (int i = 0; i < d_m / 2; ++i) {
      const double denom =
          std::pow(10000.0, (2.0 * i) / static_cast<double>(d_m));
      const double arg = static_cast<double>(positions[p]) / denom;
      row[2 * i] = static_cast<Real>(std::sin(arg));
      row[2 * i + 1] = static_cast<Real>(std::cos(arg));
    }
  }
  return out;
}

// Fourier-feature encoding with learnable frequencies:
// out[p, 2i] = sin(2π f_i pos_p), out[p, 2i+1] = cos(2π f_i pos_p).
template <typename Real>
Mat<Real> pe_fourier(std::span<const Real> positions,
                     std::span<const Real> freqs) {
  Mat<Real> out(positions.size(), freqs.size() * 2);
  for (std::size_t p = 0; p < positions.size(); ++p) {
    Real* row = out.row(p);
    for (std::size_t i = 0; i < freqs.size(); ++i) {
      const double arg =
          kTwoPi * static_cast<double>(freqs[i]) * static_cast<double>(positions[p]);
      row[2 * i] = static_cast<Real>(std::sin(arg));
      row[2 * i + 1] = static_cast<Real>(std::cos(arg));
    }
  }
  return out;
}

// Gradient of pe_fourier w.r.t. each frequency, accumulated from the
// encoding's upstream gradient.
template <typename Real>
void pe_fourier_freq_grad(std::span<const Real> positions,
                          std::span<const Real> freqs,
                          const Mat<Real>& upstream,
                          std::span<Real> freq_grad) {
  for (std::size_t p = 0; p < positions.size(); ++p) {
    const Real* g = upstream.row(p);
    const double pos = static_cast<double>(positions[p]);
    for (std::size_t i = 0; i < freqs.size(); ++i) {
      const double arg = kTwoPi * static_cast<double>(freqs[i]) * pos;
      const double dsin = kTwoPi * pos * std::cos(arg);
      const double dcos = -kTwoPi * pos * std::sin(arg);
      freq_grad[i] += static_cast<Real>(
          static_cast<double>(g[2 * i]) * dsin +
          static_cast<double>(g[2 * i + 1]) * dcos);
    }
  }
}

inline double rope_theta(int pair_index, double base, int denom_dim) {
  return std::pow(base,
                  -static_cast<double>(pair_index) / static_cast<double>(denom_dim));
}

// Rotates consecutive coordinate pairs (x_{2i}, x_{2i+1}) of each row by
// angle pos_p * theta_i. Applied to queries and keys so attention scores
// depend on position differences only.
template <typename Real>
void rope_rotate_inplace(Mat<Real>& x, std::span<const Real> positions,
                         Real theta_base, int theta_denom_dim) {
  if (x.cols % 2 != 0) throw InvalidSpec("rope needs an even row width");
  if (x.rows != positions.size())
    throw ShapeMismatch("rope: one position per row required");
  for (std::size_t p = 0; p < x.rows; ++p) {
    Real* row = x.row(p);
    const double pos = static_cast<double>(positions[p]);
    for (std::size_t i = 0; i < x.cols / 2; ++i) {
      const double angle =
          pos * rope_theta(static_cast<int>(i),
                           static_cast<double>(theta_base), theta_denom_dim);
      const Real c = static_cast<Real>(std::cos(angle));
      const Real s = static_cast<Real>(std::sin(angle));
      const Real x0 = row[2 * i];
      const Real x1 = row[2 * i + 1];
      row[2 * i] = c * x0 - s * x1;
      row[2 * i + 1] = s * x0 + c * x1;
    }
  }
}

template <typename Real>
Mat<Real> rope_rotate(Mat<Real> x, std::span<const Real> positions,
                      Real theta_base, int theta_denom_dim) {
  rope_rotate_inplace(x, positions, theta_base, theta_denom_dim);
  return x;
}

// Inverse rotation (transpose of the rotation matrix); used by the
// backward pass to map gradients through the rotation.
template <typename Real>
void rope_rotate_backward_inplace(Mat<Real>& g, std::span<const Real> positions,
                                  Real theta_base, int theta_denom_dim) {
  for (std::size_t p = 0; p < g.rows; ++p) {
    Real* row = g.row(p);
    const double pos = static_cast<double>(positions[p]);
    for (std::size_t i = 0; i < g.cols / 2; ++i) {
      const double angle =
          pos * rope_theta(static_cast<int>(i),
                           static_cast<double>(theta_base), theta_denom_dim);
      const Real c = static_cast<Real>(std::cos(angle));
      const Real s = static_cast<Real>(std::sin(angle));
      const Real g0 = row[2 * i];
      const Real g1 = row[2 * i + 1];
      row[2 * i] = c * g0 + s * g1;
      row[2 * i + 1] = -s * g0 + c * g1;
    }
  }
}

}  // namespace eids::tinyformer
