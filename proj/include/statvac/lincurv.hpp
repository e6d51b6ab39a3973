// Distributed under the MIT License. See LICENSE for details.

#pragma once

/// @file lincurv.hpp
/// Exact discrete linearizations of curvature and boundary geometry at the
/// flat pair. Every function here is the derivative of the corresponding
/// nonlinear pipeline in tensorcalc.hpp, assembled from the same Cartesian
/// derivative arrays, so agreement with a directional finite difference of
/// the nonlinear map holds to roundoff rather than to discretization error.

#include <array>
#include <vector>

#include "statvac/chart.hpp"
#include "statvac/common.hpp"
#include "statvac/fd.hpp"
#include "statvac/tensorcalc.hpp"

namespace statvac {

// ---------------------------------------------------------------------------
// Interior linearizations
// ---------------------------------------------------------------------------

/// Linearized Ricci curvature at the flat metric,
///   DRic(h)_ab = -1/2 Lap h_ab - 1/2 d_a d_b tr h
///                + 1/2 (d_a Div h_b + d_b Div h_a),
/// with flat divergence Div h_b = d_k h_kb.
inline std::vector<Sym3> lin_ricci_flat(const ExteriorChart& chart,
                                        const DeformDerivs& dd) {
  std::vector<Sym3> out(chart.nodes());
  for (int n = 0; n < chart.nodes(); ++n) {
    // ddh[q][c]: derivative pair q of component c.
    double ddh[6][6];
    for (int q = 0; q < 6; ++q)
      for (int c = 0; c < 6; ++c) ddh[q][c] = dd.h[c].dxx[q][n];
    for (int c = 0; c < 6; ++c) {
      const int a = sym_row[c], b = sym_col[c];
      double lap = 0, ddtr = 0, div = 0;
      for (int k = 0; k < 3; ++k) {
        lap += ddh[sym_index[k][k]][c];
        ddtr += ddh[c][sym_index[k][k]];
        div += ddh[sym_index[a][k]][sym_index[k][b]] +
               ddh[sym_index[b][k]][sym_index[k][a]];
      }
      out[n][c] = -0.5 * lap - 0.5 * ddtr + 0.5 * div;
    }
  }
  return out;
}

/// The same operator grouped as -1/2 Lap h - D(beta h) with beta the flat
/// Bianchi operator and D the flat symmetrized gradient. Assembled from the
/// same second derivative arrays, so it agrees with lin_ricci_flat to
/// roundoff. Kept as an independent grouping to pin the gauge split.
inline std::vector<Sym3> lin_ricci_flat_gauge_form(const ExteriorChart& chart,
                                                   const DeformDerivs& dd) {
  std::vector<Sym3> out(chart.nodes());
  for (int n = 0; n < chart.nodes(); ++n) {
    double ddh[6][6];
    for (int q = 0; q < 6; ++q)
      for (int c = 0; c < 6; ++c) ddh[q][c] = dd.h[c].dxx[q][n];
    // d_a (beta h)_b = -d_a d_k h_kb + 1/2 d_a d_b tr h.
    double dbeta[3][3];
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        double acc = 0;
        for (int k = 0; k < 3; ++k) {
          acc -= ddh[sym_index[a][k]][sym_index[k][b]];
          acc += 0.5 * ddh[sym_index[a][b]][sym_index[k][k]];
        }
        dbeta[a][b] = acc;
      }
    for (int c = 0; c < 6; ++c) {
      const int a = sym_row[c], b = sym_col[c];
      double lap = 0;
      for (int k = 0; k < 3; ++k) lap += ddh[sym_index[k][k]][c];
      out[n][c] = -0.5 * lap - 0.5 * (dbeta[a][b] + dbeta[b][a]);
    }
  }
  return out;
}

/// Linearized scalar curvature at the flat metric,
///   DR(h) = Div Div h - Lap tr h.
inline std::vector<double> lin_scalar_flat(const ExteriorChart& chart,
                                           const DeformDerivs& dd) {
  std::vector<double> out(chart.nodes());
  for (int n = 0; n < chart.nodes(); ++n) {
    double acc = 0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        const int c = sym_index[a][b];
        acc += dd.h[c].dxx[c][n];
        if (a == b)
          for (int k = 0; k < 3; ++k)
            acc -= dd.h[sym_index[k][k]].dxx[c][n];
      }
    out[n] = acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Boundary linearizations
// ---------------------------------------------------------------------------

/// Linearized g-unit outward normal at the flat pair as a Cartesian field
/// over boundary nodes:
///   Dnu(h) = -P(h nu) - 1/2 h(nu, nu) nu,
/// with P the tangential projector. This is the derivative of
/// boundary_normal at fixed chart covector.
inline std::vector<Vec3> lin_normal_flat(const ExteriorChart& chart,
                                         const Deformation& d) {
  std::vector<Vec3> out(chart.boundary_nodes());
  for (int b = 0; b < chart.boundary_nodes(); ++b) {
    const int node = chart.boundary_to_node(b);
    const Sym3 h = d.h_at(node);
    const Vec3 nu = chart.normal()[b];
    const Vec3 hnu = sym_apply(h, nu);
    const double hnn = dot(nu, hnu);
    out[b] = (0.5 * hnn) * nu - hnu;
  }
  return out;
}

/// Linearized second fundamental form at the flat pair, in the parametric
/// tangent basis (packed theta-theta, theta-phi, phi-phi). Mirrors the
/// discrete A pipeline: parametric differentiation of the normal field plus
/// the Christoffel correction, linearized term by term.
inline std::vector<std::array<double, 3>> lin_second_ff_flat(
    const ExteriorChart& chart, const Deformation& d,
    const DeformDerivs& dd) {
  const int nb = chart.boundary_nodes();
  const std::vector<Vec3> dnu = lin_normal_flat(chart, d);
  // Flat normal and its linearization as boundary fields, per component.
  std::array<std::vector<double>, 3> nubar, dnuf;
  for (int k = 0; k < 3; ++k) {
    nubar[k].resize(nb);
    dnuf[k].resize(nb);
    for (int b = 0; b < nb; ++b) {
      nubar[k][b] = chart.normal()[b][k];
      dnuf[k][b] = dnu[b][k];
    }
  }
  std::vector<std::array<double, 3>> out(nb);
  for (int b = 0; b < nb; ++b) {
    const int node = chart.boundary_to_node(b);
    const int it = b / chart.nphi(), kp = b % chart.nphi();
    const Sym3 h = d.h_at(node);
    const Vec3 nu = chart.normal()[b];
    const Vec3 t[2] = {chart.tangent_theta()[b], chart.tangent_phi()[b]};
    // Linearized Christoffel symbols at flat:
    // DGamma^k_ij = 1/2 (d_i h_jk + d_j h_ik - d_k h_ij).
    double dh[3][6];
    for (int i = 0; i < 3; ++i)
      for (int c = 0; c < 6; ++c) dh[i][c] = dd.h[c].dx[i][node];
    Vec3 pdnu[2], pdN[2];
    for (int a = 0; a < 2; ++a)
      for (int k = 0; k < 3; ++k) {
        pdN[a][k] = boundary_angular_d1(chart, nubar[k], a + 1, it, kp);
        pdnu[a][k] = boundary_angular_d1(chart, dnuf[k], a + 1, it, kp);
      }
    std::array<double, 3> val;
    int slot = 0;
    for (int a = 0; a < 2; ++a)
      for (int bb = a; bb < 2; ++bb) {
        // h(d_a nubar, t_b) + <d_a Dnu, t_b> + DGamma(t_a, nu) . t_b.
        double acc = sym_quad(h, pdN[a], t[bb]) + dot(pdnu[a], t[bb]);
        for (int k = 0; k < 3; ++k) {
          double gik = 0;
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
              gik += 0.5 *
                     (dh[i][sym_index[j][k]] + dh[j][sym_index[i][k]] -
                      dh[k][sym_index[i][j]]) *
                     t[a][i] * nu[j];
          acc += gik * t[bb][k];
        }
        val[slot++] = acc;
      }
    out[b] = {val[0], val[1], val[2]};
  }
  return out;
}

/// Linearized mean curvature at the flat pair via the second fundamental
/// form pipeline:
///   DH(h) = tr_sigma DA(h) - <h^T, A>_sigma,
/// both traces taken with the flat induced metric.
inline std::vector<double> lin_mean_curvature_flat(const ExteriorChart& chart,
                                                   const Deformation& d,
                                                   const DeformDerivs& dd) {
  const int nb = chart.boundary_nodes();
  const std::vector<std::array<double, 3>> dA =
      lin_second_ff_flat(chart, d, dd);
  // Flat second fundamental form: A_ab = <d_a nubar, t_b>.
  std::array<std::vector<double>, 3> nubar;
  for (int k = 0; k < 3; ++k) {
    nubar[k].resize(nb);
    for (int b = 0; b < nb; ++b) nubar[k][b] = chart.normal()[b][k];
  }
  std::vector<double> out(nb);
  for (int b = 0; b < nb; ++b) {
    const int node = chart.boundary_to_node(b);
    const int it = b / chart.nphi(), kp = b % chart.nphi();
    const Sym3 h = d.h_at(node);
    const Vec3 t[2] = {chart.tangent_theta()[b], chart.tangent_phi()[b]};
    Vec3 pdN[2];
    for (int a = 0; a < 2; ++a)
      for (int k = 0; k < 3; ++k)
        pdN[a][k] = boundary_angular_d1(chart, nubar[k], a + 1, it, kp);
    const double A00 = dot(pdN[0], t[0]), A01 = dot(pdN[0], t[1]),
                 A11 = dot(pdN[1], t[1]);
    const double s00 = dot(t[0], t[0]), s01 = dot(t[0], t[1]),
                 s11 = dot(t[1], t[1]);
    const double det = s00 * s11 - s01 * s01;
    // Inverse induced metric entries.
    const double i00 = s11 / det, i01 = -s01 / det, i11 = s00 / det;
    // Variation of the inverse metric contracted with A:
    // d(sigma^ab) A_ab = -sigma^ac sigma^bd h_cd A_ab.
    const double h00 = sym_quad(h, t[0], t[0]), h01 = sym_quad(h, t[0], t[1]),
                 h11 = sym_quad(h, t[1], t[1]);
    const double trDA = i00 * dA[b][0] + 2 * i01 * dA[b][1] + i11 * dA[b][2];
    double hA = 0;
    // (sigma^-1 h sigma^-1)_ab contracted with A_ab.
    const double m00 = i00 * h00 * i00 + 2 * i00 * h01 * i01 + i01 * h11 * i01;
    const double m01 = i00 * h00 * i01 + i00 * h01 * i11 + i01 * h01 * i01 +
                       i01 * h11 * i11;
    const double m11 = i01 * h00 * i01 + 2 * i01 * h01 * i11 + i11 * h11 * i11;
    hA = m00 * A00 + 2 * m01 * A01 + m11 * A11;
    out[b] = trDA - hA;
  }
  return out;
}

/// Linearized divergence-form mean curvature at the flat pair. This is the
/// exact derivative of mean_curvature_div and is the linearization the
/// assembled boundary rows use. The flux field variation is
///   dz_j = 1/2 (tr h) nubar_j - (h nubar)_j + 1/2 (nubar h nubar) nubar_j
/// per node with nubar the foliation normal, and
///   DH = sum_i DX_i(dz_i) - 1/2 (tr h) Hbar
/// at the boundary, with Hbar the discrete flat mean curvature.
inline std::vector<double> lin_mean_curvature_div_flat(
    const ExteriorChart& chart, const Deformation& d) {
  const int n = chart.nodes();
  std::array<std::vector<double>, 3> dz;
  for (auto& zc : dz) zc.resize(n);
  for (int node = 0; node < n; ++node) {
    const Sym3 h = d.h_at(node);
    const Vec3 nu = chart.foliation_normal()[node];
    const Vec3 hnu = sym_apply(h, nu);
    const double tr = sym_trace(h), hnn = dot(nu, hnu);
    for (int j = 0; j < 3; ++j)
      dz[j][node] = 0.5 * tr * nu[j] - hnu[j] + 0.5 * hnn * nu[j];
  }
  const std::vector<double> hbar =
      mean_curvature_div(chart, MetricPair::flat(chart));
  std::vector<double> out(chart.boundary_nodes());
  for (int b = 0; b < chart.boundary_nodes(); ++b) {
    const int node = chart.boundary_to_node(b);
    const Mat3& Ji = chart.jinv()[node];
    const Sym3 h = d.h_at(node);
    double acc = 0;
    for (int i = 0; i < 3; ++i)
      for (int a = 0; a < 3; ++a) {
        if (Ji[a][i] == 0.0) continue;
        acc += Ji[a][i] * chart.d1(a).apply_at(dz[i], node);
      }
    out[b] = acc - 0.5 * sym_trace(h) * hbar[b];
  }
  return out;
}

}  // namespace statvac
