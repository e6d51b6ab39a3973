// Distributed under the MIT License. See LICENSE for details.

/// @file chart.hpp
/// Compactified exterior chart over a star-shaped surface.
///
/// Coordinates (s, theta, phi) with x(s, theta, phi) = (r(theta,phi)/s) *
/// omega(theta,phi): the boundary surface sits at s = 1 and spatial infinity
/// is the (virtual) level s = 0. Stored levels are s_j = (j+1)/ns for
/// j = 0..ns-1; latitude nodes are offset from the poles at
/// theta_i = (i+1/2) * pi / ntheta; phi is uniform periodic.
///
/// Derivative stencils:
///  - s: second-order centered in the interior, one-sided third-order
///    closures at the boundary level. The innermost stored level closes its
///    centered stencils against a ghost level at s = 0 where every
///    *deviation-from-asymptotic-value* field vanishes identically; all
///    derivative passes therefore act on deviation fields (ghost entries
///    are simply omitted). This keeps decay built into the operators: a
///    one-sided closure at the infinity end would admit the spurious
///    non-decaying mode c(1 - s) (the harmonic function c - c/r) in kernel
///    computations.
///  - theta: seven-point sixth-order stencils crossing the poles via the
///    identification (s, -theta, phi) == (s, theta, phi + pi). Tensor
///    components are stored in the global Cartesian frame, so they extend
///    smoothly across the poles by plain value copy.
///  - phi: seven-point sixth-order periodic stencils (nphi must be even and
///    at least 8 so wrapped and shifted stencils are well formed).
///
/// Angular accuracy is deliberately higher than radial accuracy: the
/// smallest singular values of the linearized operators are dominated by
/// the angular truncation error of the six harmonic deformation fields,
/// and sixth-order tangential stencils are what separates that sextet
/// cleanly from the continuous spectrum at practical resolutions. Radial
/// profiles are near-polynomial in s after compactification, so low-order
/// stencils in s cost little.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "statvac/common.hpp"
#include "statvac/surface.hpp"

namespace statvac {

inline constexpr double kPi = 3.14159265358979323846;

/// One weighted neighbor of a finite-difference stencil.
struct StencilEntry {
  std::int32_t node;
  double weight;
};

/// Per-node stencil lists for one differential operator, stored flat.
struct StencilTable {
  std::vector<std::int32_t> offset;  // size nodes+1
  std::vector<StencilEntry> entries;

  /// Apply at a single node to a plain scalar field.
  double apply_at(const std::vector<double>& f, int node) const {
    double r = 0;
    for (int e = offset[node]; e < offset[node + 1]; ++e)
      r += entries[e].weight * f[entries[e].node];
    return r;
  }

  /// Apply to a whole field.
  void apply(const std::vector<double>& f, std::vector<double>& out) const {
    const int n = static_cast<int>(offset.size()) - 1;
    out.resize(n);
    for (int node = 0; node < n; ++node) out[node] = apply_at(f, node);
  }
};

/// Parameter-pair order for second derivatives: ss, st, sp, tt, tp, pp.
inline constexpr int pair_index[3][3] = {{0, 1, 2}, {1, 3, 4}, {2, 4, 5}};

class ExteriorChart {
 public:
  ExteriorChart(const StarSurface& surface, int ns, int ntheta, int nphi)
      : surface_(surface), ns_(ns), nt_(ntheta), np_(nphi) {
    if (ns < 4 || ntheta < 4 || nphi < 8 || nphi % 2 != 0)
      throw std::invalid_argument(
          "grid sizes must satisfy ns >= 4, ntheta >= 4 and nphi even >= 8 "
          "(seven-point angular stencils)");
    build_geometry();
    build_stencils();
    build_boundary();
  }

  // Sizes and index maps -----------------------------------------------

  int ns() const { return ns_; }
  int ntheta() const { return nt_; }
  int nphi() const { return np_; }
  int nodes() const { return ns_ * nt_ * np_; }
  int boundary_nodes() const { return nt_ * np_; }

  /// Node index; js = 0 is the innermost stored level (s = 1/ns), js =
  /// ns-1 the boundary level s = 1.
  int index(int js, int it, int kp) const {
    return (js * nt_ + it) * np_ + kp;
  }
  int node_js(int node) const { return node / (nt_ * np_); }
  int node_it(int node) const { return (node / np_) % nt_; }
  int node_kp(int node) const { return node % np_; }

  /// Boundary node index for the s = 1 node (js = ns-1, it, kp).
  int boundary_index(int it, int kp) const { return it * np_ + kp; }
  /// Volume-node index of a boundary node.
  int boundary_to_node(int b) const {
    return index(ns_ - 1, b / np_, b % np_);
  }

  double s_of(int js) const { return (js + 1) * (1.0 / ns_); }
  double theta_of(int it) const { return (it + 0.5) * kPi / nt_; }
  double phi_of(int kp) const { return kp * (2 * kPi / np_); }

  const StarSurface& surface() const { return surface_; }

  // Per-node geometry ---------------------------------------------------

  const std::vector<Vec3>& position() const { return x_; }
  /// |x| at each node.
  const std::vector<double>& radius() const { return absx_; }
  /// Inverse chart Jacobian rows: jinv()[node][a][i] = d xi_a / d x_i with
  /// xi = (s, theta, phi).
  const std::vector<Mat3>& jinv() const { return jinv_; }
  /// det of dx/d(s,theta,phi) (negative with this parameter order).
  const std::vector<double>& jdet() const { return jdet_; }
  /// Second derivatives of the inverse map: curv()[node][b*6 + c] =
  /// d^2 xi_b / dx_i dx_j with (i,j) packed by sym_index as slot c.
  const std::vector<std::array<double, 18>>& curv() const { return t2_; }
  /// Scalar-Laplacian coefficients: lap_b()[node][pair] multiplies the
  /// parameter second derivative of that pair, lap_t()[node][a] the first
  /// derivative in direction a; Delta f = sum lap_b * f_pair + lap_t * f_a.
  const std::vector<std::array<double, 6>>& lap_b() const { return lapb_; }
  const std::vector<std::array<double, 3>>& lap_t() const { return lapt_; }
  /// Volume quadrature weight per node (includes |det J|).
  const std::vector<double>& volume_weight() const { return wvol_; }
  /// Unit normal of the s-foliation at each node, pointing away from the
  /// enclosed region (i.e. along -grad s).
  const std::vector<Vec3>& foliation_normal() const { return nuf_; }

  // Boundary geometry (arrays of size ntheta*nphi) ----------------------

  /// Outward unit normal on Sigma.
  const std::vector<Vec3>& normal() const { return bnu_; }
  /// Parametric tangents d x/d theta, d x/d phi on Sigma.
  const std::vector<Vec3>& tangent_theta() const { return btth_; }
  const std::vector<Vec3>& tangent_phi() const { return btph_; }
  /// Normalized frame vectors along the tangents.
  const std::vector<Vec3>& frame_theta() const { return beth_; }
  const std::vector<Vec3>& frame_phi() const { return beph_; }
  /// Inverse induced metric in the parametric tangent basis:
  /// [tt, tp; tp, pp] entries packed (tt, tp, pp).
  const std::vector<std::array<double, 3>>& induced_inverse() const {
    return bsiginv_;
  }
  /// Area quadrature weight per boundary node.
  const std::vector<double>& area_weight() const { return barea_; }

  // Stencil tables ------------------------------------------------------

  /// First derivative in parameter direction a (0 = s, 1 = theta, 2 = phi).
  const StencilTable& d1(int a) const { return d1_[a]; }
  /// Pure second derivative in parameter direction a.
  const StencilTable& d2(int a) const { return d2_[a]; }

  // Quadrature ----------------------------------------------------------

  double integrate_volume(const std::vector<double>& f) const {
    if (static_cast<int>(f.size()) != nodes())
      throw std::invalid_argument("integrate_volume: field size mismatch");
    double r = 0;
    for (int n = 0; n < nodes(); ++n) {
      if (!std::isfinite(f[n]))
        throw std::invalid_argument("integrate_volume: non-finite value");
      r += wvol_[n] * f[n];
    }
    return r;
  }

  double integrate_boundary(const std::vector<double>& f) const {
    if (static_cast<int>(f.size()) != boundary_nodes())
      throw std::invalid_argument("integrate_boundary: field size mismatch");
    double r = 0;
    for (int b = 0; b < boundary_nodes(); ++b) {
      if (!std::isfinite(f[b]))
        throw std::invalid_argument("integrate_boundary: non-finite value");
      r += barea_[b] * f[b];
    }
    return r;
  }

  double max_surface_radius() const { return max_r_; }

 private:
  void build_geometry() {
    const int n = nodes();
    x_.resize(n);
    absx_.resize(n);
    jinv_.resize(n);
    jdet_.resize(n);
    t2_.resize(n);
    lapb_.resize(n);
    lapt_.resize(n);
    wvol_.resize(n);
    nuf_.resize(n);
    max_r_ = 0;

    const double dt = kPi / nt_, dp = 2 * kPi / np_;
    for (int it = 0; it < nt_; ++it) {
      for (int kp = 0; kp < np_; ++kp) {
        const double th = theta_of(it), ph = phi_of(kp);
        const RadiusJet rj = surface_.radius_jet(th, ph);
        max_r_ = std::max(max_r_, rj.r);
        const Vec3 w = sphere_dir(th, ph);
        const Vec3 wt = sphere_dir_t(th, ph);
        const Vec3 wp = sphere_dir_p(th, ph);
        const Vec3 wtt = -1.0 * w;
        const Vec3 wtp = sphere_dir_tp(th, ph);
        const Vec3 wpp = sphere_dir_pp(th, ph);
        // Angular-only combinations, multiplied by powers of 1/s below.
        const Vec3 rw = rj.r * w;
        const Vec3 ct = rj.rt * w + rj.r * wt;   // d(r w)/dtheta
        const Vec3 cp = rj.rp * w + rj.r * wp;   // d(r w)/dphi
        const Vec3 ctt = rj.rtt * w + 2 * (rj.rt * wt) + rj.r * wtt;
        const Vec3 ctp =
            rj.rtp * w + rj.rt * wp + rj.rp * wt + rj.r * wtp;
        const Vec3 cpp = rj.rpp * w + 2 * (rj.rp * wp) + rj.r * wpp;

        for (int js = 0; js < ns_; ++js) {
          const double s = s_of(js);
          const int node = index(js, it, kp);
          x_[node] = (1.0 / s) * rw;
          absx_[node] = rj.r / s;

          // First derivatives dx/d(s,theta,phi) as Jacobian columns.
          Mat3 J;
          const Vec3 xs = (-1.0 / (s * s)) * rw;
          const Vec3 xt = (1.0 / s) * ct;
          const Vec3 xp = (1.0 / s) * cp;
          for (int i = 0; i < 3; ++i) {
            J[i][0] = xs[i];
            J[i][1] = xt[i];
            J[i][2] = xp[i];
          }
          const double det = mat_det(J);
          if (det == 0.0 || !std::isfinite(det))
            throw std::runtime_error("chart Jacobian is degenerate");
          jdet_[node] = det;
          jinv_[node] = mat_inverse(J);

          // Second derivatives d^2 x / d xi_c d xi_d.
          std::array<Vec3, 6> xcd;  // packed (ss, st, sp, tt, tp, pp)
          xcd[0] = (2.0 / (s * s * s)) * rw;
          xcd[1] = (-1.0 / (s * s)) * ct;
          xcd[2] = (-1.0 / (s * s)) * cp;
          xcd[3] = (1.0 / s) * ctt;
          xcd[4] = (1.0 / s) * ctp;
          xcd[5] = (1.0 / s) * cpp;

          // T^b_(ij) = -jinv[b][p] x_p,cd jinv[c][i] jinv[d][j].
          auto& T = t2_[node];
          const Mat3& Ji = jinv_[node];
          for (int b = 0; b < 3; ++b) {
            for (int c6 = 0; c6 < 6; ++c6) {
              const int i = sym_row[c6], j = sym_col[c6];
              double acc = 0;
              for (int c = 0; c < 3; ++c)
                for (int d = 0; d < 3; ++d) {
                  const Vec3& xpcd = xcd[pair_index[c][d]];
                  double dotp = 0;
                  for (int p = 0; p < 3; ++p) dotp += Ji[b][p] * xpcd[p];
                  acc -= dotp * Ji[c][i] * Ji[d][j];
                }
              T[b * 6 + c6] = acc;
            }
          }

          // Laplacian coefficients: Delta = sum_ab (Jinv Jinv^T)_ab d_ab
          // + sum_b (sum_i T^b_ii) d_b. Mixed pairs absorb their
          // multiplicity so the stored values are operator-ready.
          auto& B = lapb_[node];
          for (int c6 = 0; c6 < 6; ++c6) {
            const int a = sym_row[c6], b = sym_col[c6];
            double acc = 0;
            for (int i = 0; i < 3; ++i) acc += Ji[a][i] * Ji[b][i];
            B[c6] = (a == b) ? acc : 2 * acc;
          }
          auto& Tc = lapt_[node];
          for (int b = 0; b < 3; ++b)
            Tc[b] = T[b * 6 + 0] + T[b * 6 + 3] + T[b * 6 + 5];

          // Foliation normal: -grad s, normalized.
          const Vec3 grads{Ji[0][0], Ji[0][1], Ji[0][2]};
          nuf_[node] = normalized(-1.0 * grads);

          // Volume weight: composite s-rule (trapezoid plus linearly
          // extrapolated strip [0, ds]) x midpoint(theta) x uniform(phi).
          const double ds = 1.0 / ns_;
          double ws;
          if (js == 0)
            ws = 2.0 * ds;
          else if (js == 1 || js == ns_ - 1)
            ws = 0.5 * ds;
          else
            ws = ds;
          wvol_[node] = ws * dt * dp * std::abs(det);
        }
      }
    }
  }

  // ---- stencils -------------------------------------------------------

  /// theta-offset neighbor with pole wrap; returns node index.
  int theta_neighbor(int js, int it, int kp, int off) const {
    int i2 = it + off, k2 = kp;
    if (i2 < 0) {
      i2 = -i2 - 1;
      k2 = (kp + np_ / 2) % np_;
    } else if (i2 >= nt_) {
      i2 = 2 * nt_ - 1 - i2;
      k2 = (kp + np_ / 2) % np_;
    }
    return index(js, i2, k2);
  }

  void push(StencilTable& tbl, int node, double w) {
    if (w != 0.0) tbl.entries.push_back({node, w});
  }

  void build_stencils() {
    const int n = nodes();
    const double ds = 1.0 / ns_, dt = kPi / nt_, dp = 2 * kPi / np_;
    // Seven-point sixth-order centered weights.
    static constexpr double c1[7] = {-1.0 / 60, 3.0 / 20,  -3.0 / 4, 0.0,
                                     3.0 / 4,   -3.0 / 20, 1.0 / 60};
    static constexpr double c2[7] = {1.0 / 90, -3.0 / 20, 3.0 / 2,  -49.0 / 18,
                                     3.0 / 2,  -3.0 / 20, 1.0 / 90};
    for (int a = 0; a < 3; ++a) {
      d1_[a].offset.assign(n + 1, 0);
      d1_[a].entries.reserve(static_cast<size_t>(n) * 7);
      d2_[a].offset.assign(n + 1, 0);
      d2_[a].entries.reserve(static_cast<size_t>(n) * 7);
    }
    for (int node = 0; node < n; ++node) {
      const int js = node_js(node), it = node_it(node), kp = node_kp(node);
      // s-direction.
      if (js == ns_ - 1) {
        // One-sided third-order closures at the boundary.
        static constexpr double b1[4] = {11.0 / 6, -3.0, 3.0 / 2, -1.0 / 3};
        for (int k = 0; k < 4; ++k)
          push(d1_[0], index(js - k, it, kp), b1[k] / ds);
        if (ns_ >= 6) {
          static constexpr double b2[5] = {35.0 / 12, -26.0 / 3, 19.0 / 2,
                                           -14.0 / 3, 11.0 / 12};
          for (int k = 0; k < 5; ++k)
            push(d2_[0], index(js - k, it, kp), b2[k] / (ds * ds));
        } else {
          static constexpr double b2[4] = {2.0, -5.0, 4.0, -1.0};
          for (int k = 0; k < 4; ++k)
            push(d2_[0], index(js - k, it, kp), b2[k] / (ds * ds));
        }
      } else {
        // Centered; at js = 0 the ghost level at s = 0 carries zero for
        // every deviation field, so its entries are dropped.
        if (js > 0) push(d1_[0], index(js - 1, it, kp), -0.5 / ds);
        push(d1_[0], index(js + 1, it, kp), 0.5 / ds);
        if (js > 0) push(d2_[0], index(js - 1, it, kp), 1.0 / (ds * ds));
        push(d2_[0], index(js, it, kp), -2.0 / (ds * ds));
        push(d2_[0], index(js + 1, it, kp), 1.0 / (ds * ds));
      }
      d1_[0].offset[node + 1] = static_cast<int>(d1_[0].entries.size());
      d2_[0].offset[node + 1] = static_cast<int>(d2_[0].entries.size());

      // theta-direction (pole-wrapped seven-point).
      for (int o = -3; o <= 3; ++o) {
        const int nb = theta_neighbor(js, it, kp, o);
        push(d1_[1], nb, c1[o + 3] / dt);
        push(d2_[1], nb, c2[o + 3] / (dt * dt));
      }
      d1_[1].offset[node + 1] = static_cast<int>(d1_[1].entries.size());
      d2_[1].offset[node + 1] = static_cast<int>(d2_[1].entries.size());

      // phi-direction (periodic seven-point).
      for (int o = -3; o <= 3; ++o) {
        const int k2 = ((kp + o) % np_ + np_) % np_;
        const int nb = index(js, it, k2);
        push(d1_[2], nb, c1[o + 3] / dp);
        push(d2_[2], nb, c2[o + 3] / (dp * dp));
      }
      d1_[2].offset[node + 1] = static_cast<int>(d1_[2].entries.size());
      d2_[2].offset[node + 1] = static_cast<int>(d2_[2].entries.size());
    }
    // Wrapped entries can hit the same node twice (e.g. nphi = 6); merge
    // duplicates so tables stay minimal.
    for (int a = 0; a < 3; ++a) {
      merge_duplicates(d1_[a]);
      merge_duplicates(d2_[a]);
    }
  }

  static void merge_duplicates(StencilTable& tbl) {
    const int n = static_cast<int>(tbl.offset.size()) - 1;
    std::vector<StencilEntry> out;
    std::vector<std::int32_t> offset(n + 1, 0);
    out.reserve(tbl.entries.size());
    for (int node = 0; node < n; ++node) {
      const int b = tbl.offset[node], e = tbl.offset[node + 1];
      for (int i = b; i < e; ++i) {
        bool merged = false;
        for (int j = offset[node]; j < static_cast<int>(out.size()); ++j) {
          if (out[j].node == tbl.entries[i].node) {
            out[j].weight += tbl.entries[i].weight;
            merged = true;
            break;
          }
        }
        if (!merged) out.push_back(tbl.entries[i]);
      }
      offset[node + 1] = static_cast<int>(out.size());
    }
    tbl.entries = std::move(out);
    tbl.offset = std::move(offset);
  }

  void build_boundary() {
    const int nb = boundary_nodes();
    bnu_.resize(nb);
    btth_.resize(nb);
    btph_.resize(nb);
    beth_.resize(nb);
    beph_.resize(nb);
    bsiginv_.resize(nb);
    barea_.resize(nb);
    const double dt = kPi / nt_, dp = 2 * kPi / np_;
    for (int it = 0; it < nt_; ++it) {
      for (int kp = 0; kp < np_; ++kp) {
        const int b = boundary_index(it, kp);
        const double th = theta_of(it), ph = phi_of(kp);
        Vec3 tt, tp;
        surface_.tangents(th, ph, tt, tp);
        btth_[b] = tt;
        btph_[b] = tp;
        beth_[b] = normalized(tt);
        beph_[b] = normalized(tp);
        bnu_[b] = surface_.normal(th, ph);
        const double stt = dot(tt, tt), stp = dot(tt, tp),
                     spp = dot(tp, tp);
        const double det = stt * spp - stp * stp;
        if (det <= 0)
          throw std::runtime_error("degenerate induced boundary metric");
        bsiginv_[b] = {spp / det, -stp / det, stt / det};
        barea_[b] = std::sqrt(det) * dt * dp;
      }
    }
  }

  StarSurface surface_;
  int ns_, nt_, np_;
  double max_r_ = 0;

  std::vector<Vec3> x_;
  std::vector<double> absx_;
  std::vector<Mat3> jinv_;
  std::vector<double> jdet_;
  std::vector<std::array<double, 18>> t2_;
  std::vector<std::array<double, 6>> lapb_;
  std::vector<std::array<double, 3>> lapt_;
  std::vector<double> wvol_;
  std::vector<Vec3> nuf_;

  std::vector<Vec3> bnu_, btth_, btph_, beth_, beph_;
  std::vector<std::array<double, 3>> bsiginv_;
  std::vector<double> barea_;

  StencilTable d1_[3], d2_[3];
};

/// Decay bookkeeping: the weight rho, the cutoff eta, and the nominal decay
/// rate q used in diagnostic norms.
struct DecayProfile {
  double q = 0.75;
  double r_eta = 2.0;

  static DecayProfile for_chart(const ExteriorChart& chart, double q = 0.75,
                                double r_eta = 0.0) {
    DecayProfile p;
    if (!(q > 0.5 && q < 1.0))
      throw std::invalid_argument("decay rate q must lie in (0.5, 1)");
    p.q = q;
    p.r_eta = (r_eta > 0) ? r_eta : 2.0 * chart.max_surface_radius();
    if (p.r_eta < chart.max_surface_radius())
      throw std::invalid_argument("R_eta must not be smaller than max r");
    return p;
  }

  /// rho(x) = (1 + |x|^2)^(-1).
  double rho(double absx) const { return 1.0 / (1.0 + absx * absx); }

  /// eta: 1 inside R_eta, R_eta/|x| outside 2 R_eta, C^1 cubic blend
  /// between (monotone, positive).
  double eta(double absx) const {
    if (absx <= r_eta) return 1.0;
    if (absx >= 2 * r_eta) return r_eta / absx;
    const double t = (absx - r_eta) / r_eta;
    return 1.0 + t * t * (0.75 * t - 1.25);
  }
};

}  // namespace statvac
