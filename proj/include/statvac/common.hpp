// Distributed under the MIT License. See LICENSE for details.

/// @file common.hpp
/// Small fixed-size linear algebra helpers, symmetric 3x3 storage
/// conventions, and the deterministic RNG used across the project.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace statvac {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

/// Symmetric 3x3 tensors are stored with component order
///   0:(x,x) 1:(x,y) 2:(x,z) 3:(y,y) 4:(y,z) 5:(z,z).
using Sym3 = std::array<double, 6>;

/// sym_index[i][j] maps a full index pair to the packed slot.
inline constexpr int sym_index[3][3] = {{0, 1, 2}, {1, 3, 4}, {2, 4, 5}};

/// Multiplicity of each packed slot in a full double contraction.
inline constexpr double sym_mult[6] = {1.0, 2.0, 2.0, 1.0, 2.0, 1.0};

/// Row/column indices of each packed slot.
inline constexpr int sym_row[6] = {0, 0, 0, 1, 1, 2};
inline constexpr int sym_col[6] = {0, 1, 2, 1, 2, 2};

inline constexpr Sym3 sym3_identity = {1.0, 0.0, 0.0, 1.0, 0.0, 1.0};

inline double dot(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
          a[0] * b[1] - a[1] * b[0]};
}

inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

inline Vec3 normalized(const Vec3& a) {
  const double n = norm(a);
  return {a[0] / n, a[1] / n, a[2] / n};
}

inline Vec3 operator+(const Vec3& a, const Vec3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}

inline Vec3 operator-(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

inline Vec3 operator*(double s, const Vec3& a) {
  return {s * a[0], s * a[1], s * a[2]};
}

inline Sym3 operator+(const Sym3& a, const Sym3& b) {
  Sym3 r;
  for (int c = 0; c < 6; ++c) r[c] = a[c] + b[c];
  return r;
}

inline Sym3 operator-(const Sym3& a, const Sym3& b) {
  Sym3 r;
  for (int c = 0; c < 6; ++c) r[c] = a[c] - b[c];
  return r;
}

inline Sym3 operator*(double s, const Sym3& a) {
  Sym3 r;
  for (int c = 0; c < 6; ++c) r[c] = s * a[c];
  return r;
}

inline double sym_get(const Sym3& s, int i, int j) {
  return s[sym_index[i][j]];
}

/// Matrix action of a packed symmetric tensor on a vector.
inline Vec3 sym_apply(const Sym3& s, const Vec3& v) {
  Vec3 out{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out[i] += sym_get(s, i, j) * v[j];
  return out;
}

/// v^i s_ij w^j.
inline double sym_quad(const Sym3& s, const Vec3& v, const Vec3& w) {
  return dot(v, sym_apply(s, w));
}

inline double sym_trace(const Sym3& s) { return s[0] + s[3] + s[5]; }

/// Full double contraction sum_ij a_ij b_ij.
inline double sym_contract(const Sym3& a, const Sym3& b) {
  double r = 0.0;
  for (int c = 0; c < 6; ++c) r += sym_mult[c] * a[c] * b[c];
  return r;
}

inline double sym_det(const Sym3& s) {
  return s[0] * (s[3] * s[5] - s[4] * s[4]) -
         s[1] * (s[1] * s[5] - s[4] * s[2]) +
         s[2] * (s[1] * s[4] - s[3] * s[2]);
}

inline Sym3 sym_inverse(const Sym3& s) {
  const double d = sym_det(s);
  if (d == 0.0) throw std::runtime_error("sym_inverse: singular tensor");
  const double inv = 1.0 / d;
  Sym3 r;
  r[0] = (s[3] * s[5] - s[4] * s[4]) * inv;
  r[1] = (s[2] * s[4] - s[1] * s[5]) * inv;
  r[2] = (s[1] * s[4] - s[2] * s[3]) * inv;
  r[3] = (s[0] * s[5] - s[2] * s[2]) * inv;
  r[4] = (s[1] * s[2] - s[0] * s[4]) * inv;
  r[5] = (s[0] * s[3] - s[1] * s[1]) * inv;
  return r;
}

/// Sylvester test for positive definiteness (leading principal minors).
inline bool sym_positive_definite(const Sym3& s) {
  if (s[0] <= 0.0) return false;
  if (s[0] * s[3] - s[1] * s[1] <= 0.0) return false;
  return sym_det(s) > 0.0;
}

inline Sym3 sym_outer(const Vec3& a, const Vec3& b) {
  Sym3 r;
  for (int c = 0; c < 6; ++c) {
    const int i = sym_row[c], j = sym_col[c];
    r[c] = 0.5 * (a[i] * b[j] + a[j] * b[i]);
  }
  return r;
}

inline Mat3 mat_mul(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
  return r;
}

inline Vec3 mat_apply(const Mat3& a, const Vec3& v) {
  Vec3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r[i] += a[i][j] * v[j];
  return r;
}

inline double mat_det(const Mat3& a) {
  return a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
         a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
         a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
}

inline Mat3 mat_inverse(const Mat3& a) {
  const double d = mat_det(a);
  if (d == 0.0) throw std::runtime_error("mat_inverse: singular matrix");
  const double inv = 1.0 / d;
  Mat3 r;
  r[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) * inv;
  r[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) * inv;
  r[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) * inv;
  r[1][0] = (a[1][2] * a[2][0] - a[1][0] * a[2][2]) * inv;
  r[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) * inv;
  r[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) * inv;
  r[2][0] = (a[1][0] * a[2][1] - a[1][1] * a[2][0]) * inv;
  r[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) * inv;
  r[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) * inv;
  return r;
}

/// Symmetric part of a general matrix, packed.
inline Sym3 mat_sym(const Mat3& a) {
  Sym3 r;
  for (int c = 0; c < 6; ++c) {
    const int i = sym_row[c], j = sym_col[c];
    r[c] = 0.5 * (a[i][j] + a[j][i]);
  }
  return r;
}

/// Deterministic 64-bit linear congruential generator.
///
/// state <- state * 6364136223846793005 + 1442695040888963407  (mod 2^64),
/// doubles are drawn from the top 53 bits, uniform in [0, 1).
/// The same seed always produces the same stream on every platform; no
/// global state is involved.
class Lcg {
 public:
  explicit Lcg(std::uint64_t seed = 42) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ = state_ * 6364136223846793005ULL + 1442695040888963407ULL;
    return state_;
  }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

/// Max-norm of a plain coefficient vector.
inline double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace statvac
