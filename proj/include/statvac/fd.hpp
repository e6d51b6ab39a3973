// Distributed under the MIT License. See LICENSE for details.

/// @file fd.hpp
/// Finite-difference passes and matrix-row builders on an exterior chart.
///
/// Scalar fields are stored per node and always represent deviations from
/// their asymptotic constant, so the ghost level at s = 0 carries exact
/// zeros and never appears explicitly.
///
/// Two faces of the same stencils:
///  - field passes (cartesian_derivs) evaluate all first and second
///    Cartesian derivatives of a field;
///  - row builders (gradient_row, laplacian_row, second_order_row) emit the
///    identical linear combinations as sparse matrix rows.
/// Mixed parameter second derivatives are compositions of the two
/// first-derivative stencils in both faces, in the same direction order, so
/// an assembled linearization reproduces the evaluator's derivatives
/// exactly (up to roundoff) and assembled operators are exact Jacobians of
/// the nonlinear residual pipelines.

#pragma once

#include <array>
#include <stdexcept>
#include <vector>

#include "statvac/chart.hpp"
#include "statvac/common.hpp"

namespace statvac {

/// First and second Cartesian derivatives of a scalar field, per node.
/// dxx is packed symmetric (sym_index order).
struct FieldDerivs {
  std::array<std::vector<double>, 3> dx;
  std::array<std::vector<double>, 6> dxx;
};

/// All Cartesian derivatives of a deviation field.
inline FieldDerivs cartesian_derivs(const ExteriorChart& chart,
                                    const std::vector<double>& f) {
  const int n = chart.nodes();
  if (static_cast<int>(f.size()) != n)
    throw std::invalid_argument("cartesian_derivs: field size mismatch");

  // Parameter derivatives. Mixed pairs compose first-derivative passes,
  // lower direction applied last: d_st = D_s(D_theta f) etc.
  std::array<std::vector<double>, 3> pd;
  std::array<std::vector<double>, 6> pdd;
  for (int a = 0; a < 3; ++a) {
    chart.d1(a).apply(f, pd[a]);
    chart.d2(a).apply(f, pdd[pair_index[a][a]]);
  }
  chart.d1(0).apply(pd[1], pdd[pair_index[0][1]]);
  chart.d1(0).apply(pd[2], pdd[pair_index[0][2]]);
  chart.d1(1).apply(pd[2], pdd[pair_index[1][2]]);

  FieldDerivs out;
  for (int i = 0; i < 3; ++i) out.dx[i].resize(n);
  for (int c = 0; c < 6; ++c) out.dxx[c].resize(n);
  for (int node = 0; node < n; ++node) {
    const Mat3& Ji = chart.jinv()[node];
    const auto& T = chart.curv()[node];
    for (int i = 0; i < 3; ++i) {
      double acc = 0;
      for (int a = 0; a < 3; ++a) acc += Ji[a][i] * pd[a][node];
      out.dx[i][node] = acc;
    }
    for (int c6 = 0; c6 < 6; ++c6) {
      const int i = sym_row[c6], j = sym_col[c6];
      double acc = 0;
      for (int b = 0; b < 3; ++b) acc += T[b * 6 + c6] * pd[b][node];
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
          acc += Ji[a][i] * Ji[b][j] * pdd[pair_index[a][b]][node];
      out.dxx[c6][node] = acc;
    }
  }
  return out;
}

/// A small sparse row under construction; duplicate columns are merged.
struct SmallRow {
  std::vector<StencilEntry> e;

  void clear() { e.clear(); }
  void add(int node, double w) {
    if (w == 0.0) return;
    for (auto& x : e) {
      if (x.node == node) {
        x.weight += w;
        return;
      }
    }
    e.push_back({node, w});
  }
  void add_scaled(const SmallRow& other, double c) {
    for (const auto& x : other.e) add(x.node, c * x.weight);
  }
  double apply(const std::vector<double>& f) const {
    double r = 0;
    for (const auto& x : e) r += x.weight * f[x.node];
    return r;
  }
};

/// Per-node parameter-derivative rows: three first-derivative rows and six
/// second-derivative rows (pure from the d2 tables, mixed as compositions).
struct NodeRows {
  SmallRow p1[3];
  SmallRow p2[6];
};

inline void build_node_rows(const ExteriorChart& chart, int node,
                            NodeRows& nr) {
  for (int a = 0; a < 3; ++a) {
    nr.p1[a].clear();
    const StencilTable& t = chart.d1(a);
    for (int i = t.offset[node]; i < t.offset[node + 1]; ++i)
      nr.p1[a].add(t.entries[i].node, t.entries[i].weight);
    nr.p2[pair_index[a][a]].clear();
    const StencilTable& t2 = chart.d2(a);
    for (int i = t2.offset[node]; i < t2.offset[node + 1]; ++i)
      nr.p2[pair_index[a][a]].add(t2.entries[i].node,
                                  t2.entries[i].weight);
  }
  // Mixed compositions, same order as the field passes.
  const int pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  for (const auto& pr : pairs) {
    const int a = pr[0], b = pr[1];
    SmallRow& out = nr.p2[pair_index[a][b]];
    out.clear();
    const StencilTable& ta = chart.d1(a);
    const StencilTable& tb = chart.d1(b);
    for (int i = ta.offset[node]; i < ta.offset[node + 1]; ++i) {
      const int p = ta.entries[i].node;
      const double wa = ta.entries[i].weight;
      for (int j = tb.offset[p]; j < tb.offset[p + 1]; ++j)
        out.add(tb.entries[j].node, wa * tb.entries[j].weight);
    }
  }
}

/// Coefficients of the Cartesian second derivative d^2/dx_i dx_j (packed
/// slot c6) as a second-order parameter operator: cb multiplies parameter
/// second derivatives (pair order), ct first derivatives.
inline void dxx_coeffs(const ExteriorChart& chart, int node, int c6,
                       std::array<double, 6>& cb,
                       std::array<double, 3>& ct) {
  const Mat3& Ji = chart.jinv()[node];
  const auto& T = chart.curv()[node];
  const int i = sym_row[c6], j = sym_col[c6];
  cb.fill(0.0);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      cb[pair_index[a][b]] += Ji[a][i] * Ji[b][j];
  for (int b = 0; b < 3; ++b) ct[b] = T[b * 6 + c6];
}

/// Emit the row of a general second-order operator
/// sum cb[pair] d_pair + sum ct[a] d_a (+ cd * identity) at one node.
inline void second_order_row(const NodeRows& nr,
                             const std::array<double, 6>& cb,
                             const std::array<double, 3>& ct, SmallRow& out,
                             int node = -1, double cd = 0.0) {
  out.clear();
  for (int p = 0; p < 6; ++p)
    if (cb[p] != 0.0) out.add_scaled(nr.p2[p], cb[p]);
  for (int a = 0; a < 3; ++a)
    if (ct[a] != 0.0) out.add_scaled(nr.p1[a], ct[a]);
  if (cd != 0.0) out.add(node, cd);
}

/// Row of the Cartesian first derivative d/dx_i at one node.
inline void gradient_row(const ExteriorChart& chart, int node,
                         const NodeRows& nr, int i, SmallRow& out) {
  out.clear();
  const Mat3& Ji = chart.jinv()[node];
  for (int a = 0; a < 3; ++a)
    if (Ji[a][i] != 0.0) out.add_scaled(nr.p1[a], Ji[a][i]);
}

/// Row of the flat scalar Laplacian at one node.
inline void laplacian_row(const ExteriorChart& chart, int node,
                          const NodeRows& nr, SmallRow& out) {
  const auto& cb = chart.lap_b()[node];
  const std::array<double, 3> ct = {chart.lap_t()[node][0],
                                    chart.lap_t()[node][1],
                                    chart.lap_t()[node][2]};
  std::array<double, 6> cbb;
  for (int p = 0; p < 6; ++p) cbb[p] = cb[p];
  second_order_row(nr, cbb, ct, out);
}

/// Sixth-order tangential derivative of a boundary field (size
/// ntheta*nphi) in parameter direction dir (1 = theta with pole wrap,
/// 2 = phi periodic) at boundary node (it, kp). Matches the order of the
/// chart's angular tables so boundary rows do not degrade the operator.
inline double boundary_angular_d1(const ExteriorChart& chart,
                                  const std::vector<double>& bf, int dir,
                                  int it, int kp) {
  static constexpr double c1[7] = {-1.0 / 60, 3.0 / 20,  -3.0 / 4, 0.0,
                                   3.0 / 4,   -3.0 / 20, 1.0 / 60};
  const int nt = chart.ntheta(), np = chart.nphi();
  const double h = (dir == 1) ? kPi / nt : 2 * kPi / np;
  double acc = 0;
  for (int o = -3; o <= 3; ++o) {
    int i2 = it, k2 = kp;
    if (dir == 1) {
      i2 = it + o;
      if (i2 < 0) {
        i2 = -i2 - 1;
        k2 = (kp + np / 2) % np;
      } else if (i2 >= nt) {
        i2 = 2 * nt - 1 - i2;
        k2 = (kp + np / 2) % np;
      }
    } else {
      k2 = ((kp + o) % np + np) % np;
    }
    acc += c1[o + 3] * bf[i2 * np + k2];
  }
  return acc / h;
}

}  // namespace statvac
