// Distributed under the MIT License. See LICENSE for details.

/// @file tensorcalc.hpp
/// Riemannian curvature and boundary geometry of a metric pair on the
/// exterior chart.
///
/// A state is a pair (g, u): a Riemannian metric approaching the flat
/// metric and a positive potential approaching 1 at infinity. Both are
/// stored as deviations (g - delta, u - 1) in the global Cartesian frame,
/// which is what the derivative passes differentiate.
///
/// The per-node curvature algebra lives in small kernels templated on the
/// scalar type. The same kernel code is evaluated with plain doubles for
/// residuals and with forward-mode dual numbers for Jacobian assembly, so
/// assembled linearizations agree with the nonlinear evaluators by
/// construction.

#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "statvac/chart.hpp"
#include "statvac/common.hpp"
#include "statvac/fd.hpp"

namespace statvac {

// ---------------------------------------------------------------------------
// State containers
// ---------------------------------------------------------------------------

/// Metric pair (g, u), stored as deviations from the flat pair.
struct MetricPair {
  std::array<std::vector<double>, 6> dg;  // g - delta, packed symmetric
  std::vector<double> du;                 // u - 1

  static MetricPair flat(const ExteriorChart& chart) {
    MetricPair p;
    for (auto& c : p.dg) c.assign(chart.nodes(), 0.0);
    p.du.assign(chart.nodes(), 0.0);
    return p;
  }

  Sym3 metric_at(int node) const {
    Sym3 m;
    for (int c = 0; c < 6; ++c) m[c] = dg[c][node];
    m[0] += 1.0;
    m[3] += 1.0;
    m[5] += 1.0;
    return m;
  }
  double u_at(int node) const { return 1.0 + du[node]; }

  void validate(const ExteriorChart& chart) const {
    for (const auto& c : dg)
      if (static_cast<int>(c.size()) != chart.nodes())
        throw std::invalid_argument("metric pair: field size mismatch");
    if (static_cast<int>(du.size()) != chart.nodes())
      throw std::invalid_argument("metric pair: potential size mismatch");
    for (int n = 0; n < chart.nodes(); ++n) {
      for (int c = 0; c < 6; ++c)
        if (!std::isfinite(dg[c][n]))
          throw std::invalid_argument("metric pair: non-finite metric");
      if (!std::isfinite(du[n]))
        throw std::invalid_argument("metric pair: non-finite potential");
    }
  }

  /// Pointwise admissibility: g positive definite, u positive.
  bool positive(const ExteriorChart& chart) const {
    for (int n = 0; n < chart.nodes(); ++n) {
      if (!(u_at(n) > 0.0)) return false;
      if (!sym_positive_definite(metric_at(n))) return false;
    }
    return true;
  }
};

/// Infinitesimal deformation (h, v) of a metric pair.
struct Deformation {
  std::array<std::vector<double>, 6> h;
  std::vector<double> v;

  static Deformation zero(const ExteriorChart& chart) {
    Deformation d;
    for (auto& c : d.h) c.assign(chart.nodes(), 0.0);
    d.v.assign(chart.nodes(), 0.0);
    return d;
  }

  Sym3 h_at(int node) const {
    Sym3 m;
    for (int c = 0; c < 6; ++c) m[c] = h[c][node];
    return m;
  }
};

/// All Cartesian derivatives of the seven deviation fields of a pair.
struct PairDerivs {
  std::array<FieldDerivs, 6> g;
  FieldDerivs u;
};

inline PairDerivs pair_derivs(const ExteriorChart& chart,
                              const MetricPair& p) {
  p.validate(chart);
  PairDerivs d;
  for (int c = 0; c < 6; ++c) d.g[c] = cartesian_derivs(chart, p.dg[c]);
  d.u = cartesian_derivs(chart, p.du);
  return d;
}

/// Same passes for a deformation.
struct DeformDerivs {
  std::array<FieldDerivs, 6> h;
  FieldDerivs v;
};

inline DeformDerivs deform_derivs(const ExteriorChart& chart,
                                  const Deformation& d) {
  DeformDerivs out;
  for (int c = 0; c < 6; ++c) out.h[c] = cartesian_derivs(chart, d.h[c]);
  out.v = cartesian_derivs(chart, d.v);
  return out;
}

// ---------------------------------------------------------------------------
// Per-node curvature kernels (templated on the scalar type)
// ---------------------------------------------------------------------------

/// det of a packed symmetric 3x3.
template <typename S>
S det3_sym(const S m[6]) {
  return m[0] * (m[3] * m[5] - m[4] * m[4]) -
         m[1] * (m[1] * m[5] - m[4] * m[2]) +
         m[2] * (m[1] * m[4] - m[3] * m[2]);
}

/// Inverse of a packed symmetric 3x3; also returns the determinant.
template <typename S>
void inv3_sym(const S m[6], S inv[6], S& det) {
  det = det3_sym(m);
  const S c0 = m[3] * m[5] - m[4] * m[4];
  const S c1 = m[2] * m[4] - m[1] * m[5];
  const S c2 = m[1] * m[4] - m[2] * m[3];
  const S c3 = m[0] * m[5] - m[2] * m[2];
  const S c4 = m[1] * m[2] - m[0] * m[4];
  const S c5 = m[0] * m[3] - m[1] * m[1];
  inv[0] = c0 / det;
  inv[1] = c1 / det;
  inv[2] = c2 / det;
  inv[3] = c3 / det;
  inv[4] = c4 / det;
  inv[5] = c5 / det;
}

/// Christoffel symbols Gamma^k_(ij) from the inverse metric and the first
/// derivatives dg[i][ab] = d_i g_ab.
template <typename S>
void christoffel_kernel(const S ginv[6], const S dg[3][6], S gamma[3][6]) {
  for (int k = 0; k < 3; ++k) {
    for (int c6 = 0; c6 < 6; ++c6) {
      const int i = sym_row[c6], j = sym_col[c6];
      S acc{};
      for (int l = 0; l < 3; ++l) {
        const S C = dg[i][sym_index[l][j]] + dg[j][sym_index[l][i]] -
                    dg[l][sym_index[i][j]];
        acc = acc + ginv[sym_index[k][l]] * C;
      }
      gamma[k][c6] = 0.5 * acc;
    }
  }
}

/// Ricci tensor from metric derivatives. The Christoffel derivative is
/// expanded symbolically through the stored second-derivative slots
/// ddg[(ij)][ab] = d_i d_j g_ab, so the expression is an exact algebraic
/// function of the slot values.
template <typename S>
void ricci_kernel(const S ginv[6], const S dg[3][6], const S ddg[6][6],
                  const S gamma[3][6], S ric[6]) {
  // d_c g^{kl} = -(ginv dg[c] ginv)^{kl}.
  S dginv[3][6];
  for (int c = 0; c < 3; ++c) {
    for (int c6 = 0; c6 < 6; ++c6) {
      const int k = sym_row[c6], l = sym_col[c6];
      S acc{};
      for (int m = 0; m < 3; ++m)
        for (int n = 0; n < 3; ++n)
          acc = acc + ginv[sym_index[k][m]] * dg[c][sym_index[m][n]] *
                          ginv[sym_index[n][l]];
      dginv[c][c6] = -acc;
    }
  }
  // Contracted symbol Gamma^k_(k c) = (1/2) g^{kl} d_c g_kl.
  S gtr[3];
  for (int c = 0; c < 3; ++c) {
    S acc{};
    for (int c6 = 0; c6 < 6; ++c6)
      acc = acc + sym_mult[c6] * ginv[c6] * dg[c][c6];
    gtr[c] = 0.5 * acc;
  }

  for (int c6 = 0; c6 < 6; ++c6) {
    const int a = sym_row[c6], b = sym_col[c6];
    // sum_k d_k Gamma^k_(ab).
    S t1{};
    for (int k = 0; k < 3; ++k) {
      for (int l = 0; l < 3; ++l) {
        const S C = dg[a][sym_index[l][b]] + dg[b][sym_index[l][a]] -
                    dg[l][sym_index[a][b]];
        const S dC = ddg[sym_index[k][a]][sym_index[l][b]] +
                     ddg[sym_index[k][b]][sym_index[l][a]] -
                     ddg[sym_index[k][l]][sym_index[a][b]];
        t1 = t1 + 0.5 * (dginv[k][sym_index[k][l]] * C +
                         ginv[sym_index[k][l]] * dC);
      }
    }
    // d_a Gamma^k_(kb) = (1/2)(d_a g^{kl} d_b g_kl + g^{kl} d_a d_b g_kl).
    S t2{};
    for (int c5 = 0; c5 < 6; ++c5)
      t2 = t2 + 0.5 * sym_mult[c5] *
                    (dginv[a][c5] * dg[b][c5] +
                     ginv[c5] * ddg[sym_index[a][b]][c5]);
    // Gamma^k_(kl) Gamma^l_(ab) - Gamma^k_(al) Gamma^l_(kb).
    S t3{};
    for (int l = 0; l < 3; ++l) t3 = t3 + gtr[l] * gamma[l][c6];
    S t4{};
    for (int k = 0; k < 3; ++k)
      for (int l = 0; l < 3; ++l)
        t4 = t4 + gamma[k][sym_index[a][l]] * gamma[l][sym_index[k][b]];
    ric[c6] = t1 - t2 + t3 - t4;
  }
}

/// Covariant Hessian of a scalar with first/second derivative slots df,
/// ddf.
template <typename S>
void hessian_kernel(const S gamma[3][6], const S df[3], const S ddf[6],
                    S hess[6]) {
  for (int c6 = 0; c6 < 6; ++c6) {
    S acc = ddf[c6];
    for (int k = 0; k < 3; ++k) acc = acc - gamma[k][c6] * df[k];
    hess[c6] = acc;
  }
}

// ---------------------------------------------------------------------------
// Node gather and field-level curvature
// ---------------------------------------------------------------------------

/// All derivative-slot values of a pair at one node (full metric, not the
/// deviation: the identity is added back to g).
struct NodeState {
  double g[6];
  double dg[3][6];
  double ddg[6][6];
  double u;
  double du[3];
  double ddu[6];
};

inline NodeState gather_node(const MetricPair& p, const PairDerivs& pd,
                             int node) {
  NodeState s;
  for (int c = 0; c < 6; ++c) {
    s.g[c] = p.dg[c][node];
    for (int i = 0; i < 3; ++i) s.dg[i][c] = pd.g[c].dx[i][node];
    for (int q = 0; q < 6; ++q) s.ddg[q][c] = pd.g[c].dxx[q][node];
  }
  s.g[0] += 1.0;
  s.g[3] += 1.0;
  s.g[5] += 1.0;
  s.u = 1.0 + p.du[node];
  for (int i = 0; i < 3; ++i) s.du[i] = pd.u.dx[i][node];
  for (int q = 0; q < 6; ++q) s.ddu[q] = pd.u.dxx[q][node];
  return s;
}

/// Ricci tensor field.
inline std::vector<Sym3> ricci(const ExteriorChart& chart,
                               const MetricPair& p, const PairDerivs& pd) {
  std::vector<Sym3> out(chart.nodes());
  for (int n = 0; n < chart.nodes(); ++n) {
    const NodeState s = gather_node(p, pd, n);
    double ginv[6], det, gamma[3][6], ric[6];
    inv3_sym(s.g, ginv, det);
    christoffel_kernel(ginv, s.dg, gamma);
    ricci_kernel(ginv, s.dg, s.ddg, gamma, ric);
    for (int c = 0; c < 6; ++c) out[n][c] = ric[c];
  }
  return out;
}

/// Scalar curvature field.
inline std::vector<double> scalar_curvature(const ExteriorChart& chart,
                                            const MetricPair& p,
                                            const PairDerivs& pd) {
  std::vector<double> out(chart.nodes());
  for (int n = 0; n < chart.nodes(); ++n) {
    const NodeState s = gather_node(p, pd, n);
    double ginv[6], det, gamma[3][6], ric[6];
    inv3_sym(s.g, ginv, det);
    christoffel_kernel(ginv, s.dg, gamma);
    ricci_kernel(ginv, s.dg, s.ddg, gamma, ric);
    double acc = 0;
    for (int c = 0; c < 6; ++c) acc += sym_mult[c] * ginv[c] * ric[c];
    out[n] = acc;
  }
  return out;
}

/// Covariant Hessian of a scalar field given its derivative passes.
inline std::vector<Sym3> hessian(const ExteriorChart& chart,
                                 const MetricPair& p, const PairDerivs& pd,
                                 const FieldDerivs& f) {
  std::vector<Sym3> out(chart.nodes());
  for (int n = 0; n < chart.nodes(); ++n) {
    const NodeState s = gather_node(p, pd, n);
    double ginv[6], det, gamma[3][6], hess[6];
    inv3_sym(s.g, ginv, det);
    christoffel_kernel(ginv, s.dg, gamma);
    double df[3], ddf[6];
    for (int i = 0; i < 3; ++i) df[i] = f.dx[i][n];
    for (int q = 0; q < 6; ++q) ddf[q] = f.dxx[q][n];
    hessian_kernel(gamma, df, ddf, hess);
    for (int c = 0; c < 6; ++c) out[n][c] = hess[c];
  }
  return out;
}

/// Laplace-Beltrami of a scalar field (trace of the covariant Hessian).
inline std::vector<double> laplace_beltrami(const ExteriorChart& chart,
                                            const MetricPair& p,
                                            const PairDerivs& pd,
                                            const FieldDerivs& f) {
  const std::vector<Sym3> h = hessian(chart, p, pd, f);
  std::vector<double> out(chart.nodes());
  for (int n = 0; n < chart.nodes(); ++n) {
    const Sym3 gi = sym_inverse(p.metric_at(n));
    out[n] = sym_contract(gi, h[n]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Boundary geometry of a pair
// ---------------------------------------------------------------------------

/// g-unit outward normal on the boundary as a Cartesian vector field over
/// boundary nodes. Built from the chart covector c = -grad s, which is
/// normal to the boundary level set: nu = g^{-1} c / |c|_g.
inline std::vector<Vec3> boundary_normal(const ExteriorChart& chart,
                                         const MetricPair& p) {
  std::vector<Vec3> out(chart.boundary_nodes());
  for (int b = 0; b < chart.boundary_nodes(); ++b) {
    const int node = chart.boundary_to_node(b);
    const Mat3& Ji = chart.jinv()[node];
    const Vec3 c{-Ji[0][0], -Ji[0][1], -Ji[0][2]};
    const Sym3 gi = sym_inverse(p.metric_at(node));
    const Vec3 w = sym_apply(gi, c);
    const double len = std::sqrt(dot(c, w));
    out[b] = (1.0 / len) * w;
  }
  return out;
}

/// Second fundamental form A(t_a, t_b) of the boundary in the parametric
/// tangent basis, packed (theta-theta, theta-phi, phi-phi).
inline std::vector<std::array<double, 3>> second_fundamental_form(
    const ExteriorChart& chart, const MetricPair& p, const PairDerivs& pd) {
  const int nb = chart.boundary_nodes();
  const std::vector<Vec3> nu = boundary_normal(chart, p);
  // Normal components as boundary fields for tangential differentiation.
  std::array<std::vector<double>, 3> nuf;
  for (int k = 0; k < 3; ++k) {
    nuf[k].resize(nb);
    for (int b = 0; b < nb; ++b) nuf[k][b] = nu[b][k];
  }
  std::vector<std::array<double, 3>> out(nb);
  for (int b = 0; b < nb; ++b) {
    const int node = chart.boundary_to_node(b);
    const int it = b / chart.nphi(), kp = b % chart.nphi();
    const NodeState s = gather_node(p, pd, node);
    double ginv[6], det, gamma[3][6];
    inv3_sym(s.g, ginv, det);
    christoffel_kernel(ginv, s.dg, gamma);
    const Vec3 t[2] = {chart.tangent_theta()[b], chart.tangent_phi()[b]};
    // Covariant derivative of nu along each tangent direction.
    Vec3 dnu[2];
    for (int a = 0; a < 2; ++a) {
      for (int k = 0; k < 3; ++k) {
        double acc = boundary_angular_d1(chart, nuf[k], a + 1, it, kp);
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j)
            acc += gamma[k][sym_index[i][j]] * t[a][i] * nu[b][j];
        dnu[a][k] = acc;
      }
    }
    const Sym3 g = p.metric_at(node);
    out[b] = {sym_quad(g, dnu[0], t[0]),
              sym_quad(g, dnu[0], t[1]),
              sym_quad(g, dnu[1], t[1])};
  }
  return out;
}

/// Mean curvature H = tr_sigma A with sigma the induced metric of g.
inline std::vector<double> mean_curvature(const ExteriorChart& chart,
                                          const MetricPair& p,
                                          const PairDerivs& pd) {
  const std::vector<std::array<double, 3>> A =
      second_fundamental_form(chart, p, pd);
  std::vector<double> out(chart.boundary_nodes());
  for (int b = 0; b < chart.boundary_nodes(); ++b) {
    const int node = chart.boundary_to_node(b);
    const Sym3 g = p.metric_at(node);
    const Vec3 tt = chart.tangent_theta()[b], tp = chart.tangent_phi()[b];
    const double s00 = sym_quad(g, tt, tt);
    const double s01 = sym_quad(g, tt, tp);
    const double s11 = sym_quad(g, tp, tp);
    const double det = s00 * s11 - s01 * s01;
    if (det <= 0)
      throw std::runtime_error("mean_curvature: degenerate induced metric");
    out[b] =
        (s11 * A[b][0] - 2 * s01 * A[b][1] + s00 * A[b][2]) / det;
  }
  return out;
}

/// Divergence-form mean curvature: H = (det g)^(-1/2) d_i z^i with
/// z^i = sqrt(det g) (g^{-1} c)^i / |c|_g, evaluated with the same stencil
/// tables the assembled boundary rows use. Agrees with mean_curvature up
/// to discretization error; this is the form the square system imposes.
inline std::vector<double> mean_curvature_div(const ExteriorChart& chart,
                                              const MetricPair& p) {
  const int n = chart.nodes();
  std::array<std::vector<double>, 3> z;
  for (auto& zc : z) zc.resize(n);
  for (int node = 0; node < n; ++node) {
    const Mat3& Ji = chart.jinv()[node];
    const Vec3 c{-Ji[0][0], -Ji[0][1], -Ji[0][2]};
    const Sym3 g = p.metric_at(node);
    const Sym3 gi = sym_inverse(g);
    const Vec3 w = sym_apply(gi, c);
    const double len = std::sqrt(dot(c, w));
    const double sq = std::sqrt(sym_det(g));
    for (int k = 0; k < 3; ++k) z[k][node] = sq * w[k] / len;
  }
  std::vector<double> out(chart.boundary_nodes());
  for (int b = 0; b < chart.boundary_nodes(); ++b) {
    const int node = chart.boundary_to_node(b);
    const Mat3& Ji = chart.jinv()[node];
    double acc = 0;
    for (int i = 0; i < 3; ++i) {
      // DX_i z^i using the per-node stencil tables (one-sided in s at the
      // boundary level, so the ghost convention is never involved).
      for (int a = 0; a < 3; ++a) {
        if (Ji[a][i] == 0.0) continue;
        acc += Ji[a][i] * chart.d1(a).apply_at(z[i], node);
      }
    }
    out[b] = acc / std::sqrt(sym_det(p.metric_at(node)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Boundary data and deformation decomposition
// ---------------------------------------------------------------------------

/// Prescribed boundary data: the induced metric in the parametric tangent
/// basis (packed theta-theta, theta-phi, phi-phi) and the mean curvature.
struct BartnikData {
  std::vector<std::array<double, 3>> tau;
  std::vector<double> phi;

  /// Data of the flat pair as this discretization sees it: tau is the
  /// exact flat induced metric, phi the divergence-form discrete mean
  /// curvature of the flat pair (so the flat state solves the discrete
  /// problem with zero residual).
  static BartnikData discrete_flat(const ExteriorChart& chart) {
    BartnikData d;
    const int nb = chart.boundary_nodes();
    d.tau.resize(nb);
    for (int b = 0; b < nb; ++b) {
      const Vec3 tt = chart.tangent_theta()[b], tp = chart.tangent_phi()[b];
      d.tau[b] = {dot(tt, tt), dot(tt, tp), dot(tp, tp)};
    }
    d.phi = mean_curvature_div(chart, MetricPair::flat(chart));
    return d;
  }

  void validate(const ExteriorChart& chart) const {
    if (static_cast<int>(tau.size()) != chart.boundary_nodes() ||
        static_cast<int>(phi.size()) != chart.boundary_nodes())
      throw std::invalid_argument("boundary data: size mismatch");
    for (int b = 0; b < chart.boundary_nodes(); ++b) {
      for (double v : tau[b])
        if (!std::isfinite(v))
          throw std::invalid_argument("boundary data: non-finite tau");
      if (!std::isfinite(phi[b]))
        throw std::invalid_argument("boundary data: non-finite phi");
      if (!(tau[b][0] > 0 &&
            tau[b][0] * tau[b][2] - tau[b][1] * tau[b][1] > 0))
        throw std::invalid_argument(
            "boundary data: tau is not positive definite");
    }
  }
};

/// Decomposition of a deformation at the boundary with respect to the flat
/// normal: tangential part (parametric components), the tangential part of
/// h(nu, .) as a Cartesian vector, and the normal-normal component.
struct BoundaryDecomposition {
  std::vector<std::array<double, 3>> tangential;
  std::vector<Vec3> omega;
  std::vector<double> normal_normal;
};

inline BoundaryDecomposition decompose_boundary(const ExteriorChart& chart,
                                                const Deformation& d) {
  BoundaryDecomposition out;
  const int nb = chart.boundary_nodes();
  out.tangential.resize(nb);
  out.omega.resize(nb);
  out.normal_normal.resize(nb);
  for (int b = 0; b < nb; ++b) {
    const int node = chart.boundary_to_node(b);
    const Sym3 h = d.h_at(node);
    const Vec3 nu = chart.normal()[b];
    const Vec3 tt = chart.tangent_theta()[b], tp = chart.tangent_phi()[b];
    out.tangential[b] = {sym_quad(h, tt, tt),
                         sym_quad(h, tt, tp),
                         sym_quad(h, tp, tp)};
    const Vec3 hnu = sym_apply(h, nu);
    const double hnn = dot(nu, hnu);
    out.omega[b] = hnu - hnn * nu;
    out.normal_normal[b] = hnn;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generic directional linearization (Richardson finite difference)
// ---------------------------------------------------------------------------

/// d/dt F(p + t d) at t = 0 for a map F returning a flat vector of
/// doubles, by fourth-order Richardson extrapolation of central
/// differences. Used by tests to pin exact linearizations.
template <typename F>
std::vector<double> directional_linearization(F&& f, const MetricPair& base,
                                              const Deformation& dir,
                                              double eps = 1e-4) {
  auto shifted = [&](double t) {
    MetricPair p = base;
    for (int c = 0; c < 6; ++c)
      for (size_t n = 0; n < p.dg[c].size(); ++n)
        p.dg[c][n] += t * dir.h[c][n];
    for (size_t n = 0; n < p.du.size(); ++n) p.du[n] += t * dir.v[n];
    return f(p);
  };
  const std::vector<double> fp = shifted(eps), fm = shifted(-eps),
                            fp2 = shifted(eps / 2), fm2 = shifted(-eps / 2);
  std::vector<double> out(fp.size());
  for (size_t i = 0; i < fp.size(); ++i) {
    const double d1 = (fp[i] - fm[i]) / (2 * eps);
    const double d2 = (fp2[i] - fm2[i]) / eps;
    out[i] = (4 * d2 - d1) / 3;
  }
  return out;
}

}  // namespace statvac
