// Distributed under the MIT License. See LICENSE for details.

/// @file surface.hpp
/// Star-shaped closed surfaces about the origin, described by a radius
/// function r(theta, phi) expanded in real spherical harmonics.
///
/// Convention: the basis functions are unnormalized associated Legendre
/// harmonics without Condon-Shortley phase,
///   (l, 0)    -> P_l(cos theta)
///   (l, m>0)  -> cos(m phi) P_l^m(cos theta)
///   (l, m<0)  -> sin(|m| phi) P_l^{|m|}(cos theta),
/// so {{0,0,R}} is the round sphere of radius R and {{0,0,1},{2,0,0.1}}
/// is r = 1 + 0.1 P_2(cos theta).

#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "statvac/common.hpp"

namespace statvac {

struct HarmonicCoeff {
  int l = 0;
  int m = 0;
  double value = 0.0;
};

/// Value and parametric derivatives of the radius at one direction.
struct RadiusJet {
  double r = 0, rt = 0, rp = 0;      // value, d/dtheta, d/dphi
  double rtt = 0, rtp = 0, rpp = 0;  // second derivatives
};

/// Unit radial direction and its parametric derivatives.
inline Vec3 sphere_dir(double th, double ph) {
  return {std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph),
          std::cos(th)};
}
inline Vec3 sphere_dir_t(double th, double ph) {
  return {std::cos(th) * std::cos(ph), std::cos(th) * std::sin(ph),
          -std::sin(th)};
}
inline Vec3 sphere_dir_p(double th, double ph) {
  return {-std::sin(th) * std::sin(ph), std::sin(th) * std::cos(ph), 0.0};
}
inline Vec3 sphere_dir_tp(double th, double ph) {
  return {-std::cos(th) * std::sin(ph), std::cos(th) * std::cos(ph), 0.0};
}
inline Vec3 sphere_dir_pp(double th, double ph) {
  return {-std::sin(th) * std::cos(ph), -std::sin(th) * std::sin(ph), 0.0};
}
// d^2 omega / d theta^2 = -omega.

class StarSurface {
 public:
  static StarSurface sphere(double radius) {
    if (!(radius > 0))
      throw std::invalid_argument("sphere radius must be positive");
    return from_harmonics({{0, 0, radius}});
  }

  static StarSurface from_harmonics(std::vector<HarmonicCoeff> coeffs) {
    StarSurface s;
    for (const auto& c : coeffs) {
      if (c.l < 0 || std::abs(c.m) > c.l)
        throw std::invalid_argument(
            "harmonic coefficient needs l >= 0 and |m| <= l");
    }
    s.coeffs_ = std::move(coeffs);
    s.validate_positive();
    return s;
  }

  double radius(double th, double ph) const {
    double r = 0;
    for (const auto& c : coeffs_) r += c.value * angular(c, th, ph);
    return r;
  }

  RadiusJet radius_jet(double th, double ph) const {
    RadiusJet jet;
    const double st = std::sin(th), ct = std::cos(th);
    for (const auto& c : coeffs_) {
      const int l = c.l, ma = std::abs(c.m);
      const double p = std::assoc_legendre(l, ma, ct);
      // (x^2-1) dP/dx = l x P_l^m - (l+m) P_{l-1}^m gives, with x = cos t,
      //   dP/dt = (l cos t P_l^m - (l+m) P_{l-1}^m) / sin t.
      double pt = 0;
      if (l > 0) {
        const double pm1 =
            (ma > l - 1) ? 0.0 : std::assoc_legendre(l - 1, ma, ct);
        pt = (l * ct * p - (l + ma) * pm1) / st;
      }
      // Associated Legendre ODE in theta:
      //   y'' = -cot t y' - (l(l+1) - m^2/sin^2 t) y.
      const double ptt =
          -ct / st * pt - (l * (l + 1) - ma * ma / (st * st)) * p;
      double az, azp, azpp;  // azimuthal factor and phi derivatives
      if (c.m > 0) {
        az = std::cos(ma * ph);
        azp = -ma * std::sin(ma * ph);
        azpp = -ma * ma * az;
      } else if (c.m < 0) {
        az = std::sin(ma * ph);
        azp = ma * std::cos(ma * ph);
        azpp = -ma * ma * az;
      } else {
        az = 1, azp = 0, azpp = 0;
      }
      jet.r += c.value * p * az;
      jet.rt += c.value * pt * az;
      jet.rp += c.value * p * azp;
      jet.rtt += c.value * ptt * az;
      jet.rtp += c.value * pt * azp;
      jet.rpp += c.value * p * azpp;
    }
    return jet;
  }

  Vec3 point(double th, double ph) const {
    return radius(th, ph) * sphere_dir(th, ph);
  }

  /// Parametric tangents of the embedding.
  void tangents(double th, double ph, Vec3& tt, Vec3& tp) const {
    const auto jet = radius_jet(th, ph);
    const Vec3 w = sphere_dir(th, ph);
    tt = jet.rt * w + jet.r * sphere_dir_t(th, ph);
    tp = jet.rp * w + jet.r * sphere_dir_p(th, ph);
  }

  /// Outward unit normal (star-shaped, so outward means positive radial
  /// component).
  Vec3 normal(double th, double ph) const {
    Vec3 tt, tp;
    tangents(th, ph, tt, tp);
    Vec3 n = cross(tt, tp);
    if (dot(n, sphere_dir(th, ph)) < 0) n = -1.0 * n;
    return normalized(n);
  }

  /// |d_theta x d_phi|, the parametric area element.
  double area_element(double th, double ph) const {
    Vec3 tt, tp;
    tangents(th, ph, tt, tp);
    return norm(cross(tt, tp));
  }

  /// Largest radius over a dense parameter sample (used to place decay
  /// cutoffs outside the surface).
  double max_radius() const {
    double m = 0;
    for (int i = 0; i < 96; ++i)
      for (int k = 0; k < 192; ++k)
        m = std::max(m, radius((i + 0.5) * kPi / 96, k * 2 * kPi / 192));
    return m;
  }

  double min_radius() const {
    double m = 1e300;
    for (int i = 0; i < 96; ++i)
      for (int k = 0; k < 192; ++k)
        m = std::min(m, radius((i + 0.5) * kPi / 96, k * 2 * kPi / 192));
    return m;
  }

  const std::vector<HarmonicCoeff>& coeffs() const { return coeffs_; }

 private:
  static constexpr double kPi = 3.14159265358979323846;

  static double angular(const HarmonicCoeff& c, double th, double ph) {
    const int ma = std::abs(c.m);
    const double p = std::assoc_legendre(c.l, ma, std::cos(th));
    if (c.m > 0) return std::cos(ma * ph) * p;
    if (c.m < 0) return std::sin(ma * ph) * p;
    return p;
  }

  void validate_positive() const {
    if (min_radius() <= 0)
      throw std::invalid_argument(
          "surface radius must be positive everywhere");
  }

  std::vector<HarmonicCoeff> coeffs_;
};

}  // namespace statvac
