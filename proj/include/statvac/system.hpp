// Distributed under the MIT License. See LICENSE for details.

/// @file system.hpp
/// The gauged static vacuum system on an exterior chart: state vectors,
/// residual evaluators, and assembled linearizations.
///
/// Two closely related systems live here.
///
/// The boundary value system T acts on a metric pair (g, u) and imposes
///  - the gauged field equations  -u Ric_g + Hess_g u - D_g(beta g + du)
///    and  Lap_g u  in the interior, where beta is the flat-background
///    Bianchi operator, so beta g + du is the static-harmonic gauge field;
///  - on the boundary, the gauge condition beta g + du = 0, the induced
///    metric against its target, and the mean curvature against its target.
/// T is square in the seven unknown fields per node.
///
/// The modified square system takes a state (g, u, W, c), where the
/// auxiliary vector field W = What + sum_a c_a K_a splits into a decaying
/// grid part and six Cartesian Killing fields with coefficients c. With
/// S_W = 2 beta*_g W - u^{-1} W(u) g the rows are
///  - interior: the T rows plus eta S_W and eta(-Div_g W + u^{-1} W(u)),
///    and the divergence row Div_g S_W;
///  - boundary: beta g + du - S_W(nu, .), the induced-metric and
///    mean-curvature rows, and the Dirichlet rows W = 0;
///  - six orthogonality rows pairing g - gbar with the Lie derivatives of
///    the background along the harmonic-Killing basis.
/// At a solution W vanishes and the T rows together with both gauges hold.
///
/// Every row is the value of a per-node kernel in the stored jet of the
/// state (values, first and second Cartesian derivatives), except the
/// mean-curvature row, which applies the chart stencils to the node-local
/// density-weighted normal z. Jacobians are assembled by evaluating the
/// same kernels on forward-mode dual numbers seeded per jet slot and
/// composing the resulting partials with the stencil rows that produce the
/// slots. Assembled operators are therefore exact Jacobians of the
/// residual evaluators, up to roundoff, at every state. The Killing part
/// of W enters the jets analytically (its second derivatives vanish), so
/// the coefficient columns are exact as well.

#pragma once

#include <Eigen/SparseCore>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "statvac/chart.hpp"
#include "statvac/common.hpp"
#include "statvac/fd.hpp"
#include "statvac/gauge.hpp"
#include "statvac/tensorcalc.hpp"

namespace statvac {

// ---------------------------------------------------------------------------
// Forward-mode dual scalars
// ---------------------------------------------------------------------------

/// Scalar carrying a value and N partial derivatives. The curvature
/// kernels are templated on the scalar type; evaluating them on Dual
/// yields every partial of a residual row with respect to the seeded jet
/// slots in one pass.
template <int N>
struct Dual {
  double v;
  std::array<double, N> d;

  Dual() : v(0.0) { d.fill(0.0); }
  Dual(double x) : v(x) { d.fill(0.0); }
};

template <int N>
inline Dual<N> operator-(const Dual<N>& a) {
  Dual<N> r;
  r.v = -a.v;
  for (int i = 0; i < N; ++i) r.d[i] = -a.d[i];
  return r;
}

template <int N>
inline Dual<N> operator+(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r;
  r.v = a.v + b.v;
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] + b.d[i];
  return r;
}

template <int N>
inline Dual<N> operator-(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r;
  r.v = a.v - b.v;
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] - b.d[i];
  return r;
}

template <int N>
inline Dual<N> operator*(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r;
  r.v = a.v * b.v;
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return r;
}

template <int N>
inline Dual<N> operator/(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r;
  r.v = a.v / b.v;
  const double ib = 1.0 / b.v;
  for (int i = 0; i < N; ++i) r.d[i] = (a.d[i] - r.v * b.d[i]) * ib;
  return r;
}

template <int N>
inline Dual<N> operator+(double a, const Dual<N>& b) {
  Dual<N> r = b;
  r.v = a + b.v;
  return r;
}

template <int N>
inline Dual<N> operator+(const Dual<N>& a, double b) {
  Dual<N> r = a;
  r.v = a.v + b;
  return r;
}

template <int N>
inline Dual<N> operator-(double a, const Dual<N>& b) {
  Dual<N> r = -b;
  r.v = a - b.v;
  return r;
}

template <int N>
inline Dual<N> operator-(const Dual<N>& a, double b) {
  Dual<N> r = a;
  r.v = a.v - b;
  return r;
}

template <int N>
inline Dual<N> operator*(double a, const Dual<N>& b) {
  Dual<N> r;
  r.v = a * b.v;
  for (int i = 0; i < N; ++i) r.d[i] = a * b.d[i];
  return r;
}

template <int N>
inline Dual<N> operator*(const Dual<N>& a, double b) {
  return b * a;
}

template <int N>
inline Dual<N> operator/(const Dual<N>& a, double b) {
  return (1.0 / b) * a;
}

template <int N>
inline Dual<N> operator/(double a, const Dual<N>& b) {
  Dual<N> r;
  r.v = a / b.v;
  const double f = -r.v / b.v;
  for (int i = 0; i < N; ++i) r.d[i] = f * b.d[i];
  return r;
}

template <int N>
inline Dual<N> sqrt(const Dual<N>& a) {
  Dual<N> r;
  r.v = std::sqrt(a.v);
  const double f = 0.5 / r.v;
  for (int i = 0; i < N; ++i) r.d[i] = f * a.d[i];
  return r;
}

// ---------------------------------------------------------------------------
// Field and jet slot layout
// ---------------------------------------------------------------------------

/// Unknown fields per node of the boundary value system (metric deviation
/// and potential deviation) and of the modified square system (plus the
/// decaying part of W).
constexpr int kPairFields = 7;
constexpr int kFullFields = 10;

/// Jet slots per field: value, three gradients, six second derivatives.
constexpr int kJetSlots = 10;

/// Dual widths for the two systems.
constexpr int kPairSlots = kPairFields * kJetSlots;
constexpr int kFullSlots = kFullFields * kJetSlots;

constexpr int slot_index(int field, int jet) {
  return field * kJetSlots + jet;
}

// ---------------------------------------------------------------------------
// State and residual containers
// ---------------------------------------------------------------------------

/// Unknowns of the modified square system: a metric pair, the decaying
/// part of the auxiliary field W, and the six Killing coefficients. The
/// full field is W = What + sum_a c_a K_a; the boundary rows tie it to
/// zero on Sigma, and at s = 0 every grid field obeys the ghost-zero
/// decay convention of the chart.
struct StateVector {
  MetricPair pair;
  std::array<std::vector<double>, 3> dw;
  std::array<double, 6> c{};

  static StateVector flat(const ExteriorChart& chart) {
    StateVector s;
    s.pair = MetricPair::flat(chart);
    for (auto& w : s.dw) w.assign(chart.nodes(), 0.0);
    s.c.fill(0.0);
    return s;
  }

  void validate(const ExteriorChart& chart) const {
    pair.validate(chart);
    for (const auto& w : dw)
      if (static_cast<int>(w.size()) != chart.nodes())
        throw std::invalid_argument("state: auxiliary field size mismatch");
    for (const auto& w : dw)
      for (double x : w)
        if (!std::isfinite(x))
          throw std::invalid_argument("state: non-finite auxiliary field");
    for (double x : c)
      if (!std::isfinite(x))
        throw std::invalid_argument("state: non-finite coefficient");
  }

  /// Pack into the column layout of the square system: ten slots per node
  /// (six metric, potential, three auxiliary), coefficients at the end.
  Eigen::VectorXd to_vector(const ExteriorChart& chart) const {
    const int n = chart.nodes();
    Eigen::VectorXd x(n * kFullFields + 6);
    for (int node = 0; node < n; ++node) {
      for (int c6 = 0; c6 < 6; ++c6)
        x[node * kFullFields + c6] = pair.dg[c6][node];
      x[node * kFullFields + 6] = pair.du[node];
      for (int k = 0; k < 3; ++k)
        x[node * kFullFields + 7 + k] = dw[k][node];
    }
    for (int a = 0; a < 6; ++a) x[n * kFullFields + a] = c[a];
    return x;
  }

  static StateVector from_vector(const ExteriorChart& chart,
                                 const Eigen::VectorXd& x) {
    const int n = chart.nodes();
    if (x.size() != n * kFullFields + 6)
      throw std::invalid_argument("state: packed vector size mismatch");
    StateVector s = flat(chart);
    for (int node = 0; node < n; ++node) {
      for (int c6 = 0; c6 < 6; ++c6)
        s.pair.dg[c6][node] = x[node * kFullFields + c6];
      s.pair.du[node] = x[node * kFullFields + 6];
      for (int k = 0; k < 3; ++k)
        s.dw[k][node] = x[node * kFullFields + 7 + k];
    }
    for (int a = 0; a < 6; ++a) s.c[a] = x[n * kFullFields + a];
    return s;
  }
};

/// Residual of either system, stored flat in the row layout of the
/// assembled operator. Per node the row block holds, in the interior,
/// the six metric equations, the potential equation, and (full system)
/// the three divergence equations; on the boundary level it holds the
/// three gauge rows, the three induced-metric rows, the mean-curvature
/// row, and (full system) the three Dirichlet rows of W. The full system
/// appends six orthogonality rows.
struct ResidualVector {
  int fields = kFullFields;
  int extras = 0;
  Eigen::VectorXd r;

  double at(int node, int comp) const { return r[node * fields + comp]; }
  double extra(int a) const { return r[r.size() - extras + a]; }

  /// Largest magnitude of one row component over interior nodes.
  double interior_max(const ExteriorChart& chart, int comp) const {
    double m = 0;
    for (int node = 0; node < chart.nodes(); ++node)
      if (chart.node_js(node) != chart.ns() - 1)
        m = std::max(m, std::abs(at(node, comp)));
    return m;
  }

  /// Largest magnitude of one row component over boundary nodes.
  double boundary_max(const ExteriorChart& chart, int comp) const {
    double m = 0;
    for (int b = 0; b < chart.boundary_nodes(); ++b)
      m = std::max(m, std::abs(at(chart.boundary_to_node(b), comp)));
    return m;
  }

  double extras_max() const {
    double m = 0;
    for (int a = 0; a < extras; ++a) m = std::max(m, std::abs(extra(a)));
    return m;
  }

  double total_max() const {
    return r.size() ? r.cwiseAbs().maxCoeff() : 0.0;
  }
};

// ---------------------------------------------------------------------------
// System jets
// ---------------------------------------------------------------------------

/// Jet of the state at one node: values and Cartesian derivative slots of
/// the full metric, the potential, and the full auxiliary field W. The
/// index conventions are dg[i][c6] = d_i g_(c6), dw[i][k] = d_i W^k,
/// ddw[q][k] = the q-th packed second derivative of W^k.
template <typename S>
struct SystemJet {
  S g[6];
  S dg[3][6];
  S ddg[6][6];
  S u;
  S du[3];
  S ddu[6];
  S w[3];
  S dw[3][3];
  S ddw[6][3];
};

/// Derivative passes for every grid field of a state.
struct StateDerivs {
  PairDerivs pd;
  std::array<FieldDerivs, 3> wd;
};

inline StateDerivs state_derivs(const ExteriorChart& chart,
                                const StateVector& s) {
  StateDerivs d;
  d.pd = pair_derivs(chart, s.pair);
  for (int k = 0; k < 3; ++k) d.wd[k] = cartesian_derivs(chart, s.dw[k]);
  return d;
}

/// Jet of a metric pair alone; the auxiliary slots stay zero.
inline SystemJet<double> gather_pair_jet(const MetricPair& p,
                                         const PairDerivs& pd, int node) {
  SystemJet<double> J{};
  const NodeState s = gather_node(p, pd, node);
  for (int c6 = 0; c6 < 6; ++c6) {
    J.g[c6] = s.g[c6];
    for (int i = 0; i < 3; ++i) J.dg[i][c6] = s.dg[i][c6];
    for (int q = 0; q < 6; ++q) J.ddg[q][c6] = s.ddg[q][c6];
  }
  J.u = s.u;
  for (int i = 0; i < 3; ++i) J.du[i] = s.du[i];
  for (int q = 0; q < 6; ++q) J.ddu[q] = s.ddu[q];
  return J;
}

/// Full jet of a state. The grid part of W contributes through its
/// derivative passes; the Killing part contributes analytically (constant
/// gradient, vanishing second derivatives), so the divergence row of the
/// Killing directions carries no stencil truncation at all.
inline SystemJet<double> gather_full_jet(const ExteriorChart& chart,
                                         const StateVector& s,
                                         const StateDerivs& sd, int node) {
  SystemJet<double> J = gather_pair_jet(s.pair, sd.pd, node);
  const Vec3& x = chart.position()[node];
  for (int k = 0; k < 3; ++k) {
    J.w[k] = s.dw[k][node];
    for (int i = 0; i < 3; ++i) J.dw[i][k] = sd.wd[k].dx[i][node];
    for (int q = 0; q < 6; ++q) J.ddw[q][k] = sd.wd[k].dxx[q][node];
  }
  for (int a = 0; a < 6; ++a) {
    if (s.c[a] == 0.0) continue;
    const Vec3 k = killing_field(a, x);
    const Mat3 kg = killing_gradient(a);
    for (int comp = 0; comp < 3; ++comp) {
      J.w[comp] += s.c[a] * k[comp];
      for (int i = 0; i < 3; ++i) J.dw[i][comp] += s.c[a] * kg[i][comp];
    }
  }
  return J;
}

/// Copy a numeric jet into dual scalars and seed one unit derivative per
/// jet slot of the first nfields fields. Seeding the assembled W jet
/// differentiates with respect to the grid part What; the coefficient
/// columns reuse the same partials contracted with the analytic Killing
/// jets.
template <int K>
inline SystemJet<Dual<K>> seed_jet(const SystemJet<double>& J, int nfields) {
  SystemJet<Dual<K>> D;
  for (int c6 = 0; c6 < 6; ++c6) {
    D.g[c6] = J.g[c6];
    D.g[c6].d[slot_index(c6, 0)] = 1.0;
    for (int i = 0; i < 3; ++i) {
      D.dg[i][c6] = J.dg[i][c6];
      D.dg[i][c6].d[slot_index(c6, 1 + i)] = 1.0;
    }
    for (int q = 0; q < 6; ++q) {
      D.ddg[q][c6] = J.ddg[q][c6];
      D.ddg[q][c6].d[slot_index(c6, 4 + q)] = 1.0;
    }
  }
  D.u = J.u;
  D.u.d[slot_index(6, 0)] = 1.0;
  for (int i = 0; i < 3; ++i) {
    D.du[i] = J.du[i];
    D.du[i].d[slot_index(6, 1 + i)] = 1.0;
  }
  for (int q = 0; q < 6; ++q) {
    D.ddu[q] = J.ddu[q];
    D.ddu[q].d[slot_index(6, 4 + q)] = 1.0;
  }
  for (int k = 0; k < 3; ++k) {
    D.w[k] = J.w[k];
    for (int i = 0; i < 3; ++i) D.dw[i][k] = J.dw[i][k];
    for (int q = 0; q < 6; ++q) D.ddw[q][k] = J.ddw[q][k];
    if (nfields > 7 + k) {
      D.w[k].d[slot_index(7 + k, 0)] = 1.0;
      for (int i = 0; i < 3; ++i)
        D.dw[i][k].d[slot_index(7 + k, 1 + i)] = 1.0;
      for (int q = 0; q < 6; ++q)
        D.ddw[q][k].d[slot_index(7 + k, 4 + q)] = 1.0;
    }
  }
  return D;
}

// ---------------------------------------------------------------------------
// Per-node kernels
// ---------------------------------------------------------------------------

/// Inverse metric and Christoffel symbols of a jet.
template <typename S>
struct MetricCore {
  S ginv[6];
  S det;
  S gamma[3][6];
};

template <typename S>
inline void metric_core(const SystemJet<S>& J, MetricCore<S>& core) {
  inv3_sym(J.g, core.ginv, core.det);
  christoffel_kernel(core.ginv, J.dg, core.gamma);
}

/// Static-harmonic gauge field V = (flat Bianchi of g) + du. The flat
/// background operator contracts with delta, so V is pure slot algebra.
template <typename S>
inline void gauge_vector_kernel(const SystemJet<S>& J, S V[3]) {
  for (int b = 0; b < 3; ++b) {
    S acc = J.du[b];
    for (int k = 0; k < 3; ++k) {
      acc = acc - J.dg[k][sym_index[k][b]];
      acc = acc + 0.5 * J.dg[b][sym_index[k][k]];
    }
    V[b] = acc;
  }
}

/// Interior rows of the boundary value system: the gauged field equation
/// -u Ric_g + Hess_g u - D_g V and the potential equation Lap_g u. The
/// raw derivative of V expands through the stored second-derivative
/// slots, so Hess_g u - D_g(du) cancels exactly on the flat background
/// and the assembled linearization of the metric row is (1/2) Lap h.
template <typename S>
inline void vacuum_rows_kernel(const SystemJet<S>& J,
                               const MetricCore<S>& core, S r1[6], S& r2) {
  S ric[6], hessu[6];
  ricci_kernel(core.ginv, J.dg, J.ddg, core.gamma, ric);
  hessian_kernel(core.gamma, J.du, J.ddu, hessu);
  S V[3];
  gauge_vector_kernel(J, V);
  S dV[3][3];
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      S acc = J.ddu[sym_index[a][b]];
      for (int k = 0; k < 3; ++k) {
        acc = acc - J.ddg[sym_index[a][k]][sym_index[k][b]];
        acc = acc + 0.5 * J.ddg[sym_index[a][b]][sym_index[k][k]];
      }
      dV[a][b] = acc;
    }
  for (int c6 = 0; c6 < 6; ++c6) {
    const int a = sym_row[c6], b = sym_col[c6];
    S dv = 0.5 * (dV[a][b] + dV[b][a]);
    for (int k = 0; k < 3; ++k) dv = dv - core.gamma[k][c6] * V[k];
    r1[c6] = hessu[c6] - J.u * ric[c6] - dv;
  }
  S acc{};
  for (int c6 = 0; c6 < 6; ++c6)
    acc = acc + sym_mult[c6] * core.ginv[c6] * hessu[c6];
  r2 = acc;
}

/// The auxiliary tensor S_W = 2 beta*_g W - u^{-1} W(u) g and the scalar
/// -Div_g W + u^{-1} W(u), with the intermediate scalars kept for the
/// divergence kernel. 2 beta*_g W = L_W g - (Div_g W) g.
template <typename S>
struct ZetaRows {
  S s1[6];
  S z2;
  S divw;
  S wu;
  S trg[3];
};

template <typename S>
inline void zeta_rows_kernel(const SystemJet<S>& J, const MetricCore<S>& core,
                             ZetaRows<S>& out) {
  S lw[6];
  for (int c6 = 0; c6 < 6; ++c6) {
    const int a = sym_row[c6], b = sym_col[c6];
    S acc{};
    for (int k = 0; k < 3; ++k) {
      acc = acc + J.w[k] * J.dg[k][c6];
      acc = acc + J.g[sym_index[k][b]] * J.dw[a][k];
      acc = acc + J.g[sym_index[a][k]] * J.dw[b][k];
    }
    lw[c6] = acc;
  }
  for (int l = 0; l < 3; ++l) {
    S acc{};
    for (int k = 0; k < 3; ++k)
      acc = acc + core.gamma[k][sym_index[k][l]];
    out.trg[l] = acc;
  }
  S divw{};
  for (int k = 0; k < 3; ++k) divw = divw + J.dw[k][k];
  for (int l = 0; l < 3; ++l) divw = divw + out.trg[l] * J.w[l];
  out.divw = divw;
  S wu{};
  for (int k = 0; k < 3; ++k) wu = wu + J.w[k] * J.du[k];
  out.wu = wu;
  const S wuu = wu / J.u;
  const S coef = divw + wuu;
  for (int c6 = 0; c6 < 6; ++c6) out.s1[c6] = lw[c6] - coef * J.g[c6];
  out.z2 = wuu - divw;
}

/// Covariant divergence of S_W. Its Cartesian derivative expands through
/// the product rule in every stored slot; the contracted Christoffel
/// derivative uses d_a Gamma^k_{kl} = (1/2) d_a tr(g^{-1} d_l g). On the
/// flat background the grid part reduces to the componentwise Laplacian
/// of W (the identity 2 Div beta* = Lap for divergence-free limits is an
/// exact slot cancellation), and the Killing part drops out entirely.
template <typename S>
inline void zeta_divergence_kernel(const SystemJet<S>& J,
                                   const MetricCore<S>& core,
                                   const ZetaRows<S>& zeta, S out[3]) {
  S M[3][3][3];
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        S acc{};
        for (int m = 0; m < 3; ++m)
          acc = acc + core.ginv[sym_index[i][m]] * J.dg[c][sym_index[m][j]];
        M[c][i][j] = acc;
      }
  const S wuu = zeta.wu / J.u;
  const S coef = zeta.divw + wuu;
  S ds1[3][6];
  for (int a = 0; a < 3; ++a) {
    S ddivw{};
    for (int k = 0; k < 3; ++k)
      ddivw = ddivw + J.ddw[sym_index[a][k]][k];
    for (int l = 0; l < 3; ++l) {
      S tr1{};
      for (int c6 = 0; c6 < 6; ++c6)
        tr1 = tr1 +
              sym_mult[c6] * core.ginv[c6] * J.ddg[sym_index[a][l]][c6];
      S tr2{};
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) tr2 = tr2 + M[a][i][j] * M[l][j][i];
      const S dtrg = 0.5 * (tr1 - tr2);
      ddivw = ddivw + dtrg * J.w[l] + zeta.trg[l] * J.dw[a][l];
    }
    S dwu{};
    for (int k = 0; k < 3; ++k)
      dwu = dwu + J.dw[a][k] * J.du[k] + J.w[k] * J.ddu[sym_index[a][k]];
    const S dwuu = dwu / J.u - zeta.wu * J.du[a] / (J.u * J.u);
    const S dcoef = ddivw + dwuu;
    for (int c6 = 0; c6 < 6; ++c6) {
      const int bb = sym_row[c6], cc = sym_col[c6];
      S acc{};
      for (int k = 0; k < 3; ++k) {
        acc = acc + J.dw[a][k] * J.dg[k][c6];
        acc = acc + J.w[k] * J.ddg[sym_index[a][k]][c6];
        acc = acc + J.dg[a][sym_index[k][cc]] * J.dw[bb][k];
        acc = acc + J.g[sym_index[k][cc]] * J.ddw[sym_index[a][bb]][k];
        acc = acc + J.dg[a][sym_index[bb][k]] * J.dw[cc][k];
        acc = acc + J.g[sym_index[bb][k]] * J.ddw[sym_index[a][cc]][k];
      }
      ds1[a][c6] = acc - dcoef * J.g[c6] - coef * J.dg[a][c6];
    }
  }
  for (int b = 0; b < 3; ++b) {
    S acc{};
    for (int a = 0; a < 3; ++a)
      for (int i = 0; i < 3; ++i) {
        S inner = ds1[a][sym_index[i][b]];
        for (int k = 0; k < 3; ++k) {
          inner = inner -
                  core.gamma[k][sym_index[a][i]] * zeta.s1[sym_index[k][b]];
          inner = inner -
                  core.gamma[k][sym_index[a][b]] * zeta.s1[sym_index[i][k]];
        }
        acc = acc + core.ginv[sym_index[a][i]] * inner;
      }
    out[b] = acc;
  }
}

/// One-form S_W(nu, .) with nu the outward g-unit normal built from the
/// chart covector (the same construction as boundary_normal).
template <typename S>
inline void normal_contraction_kernel(const SystemJet<S>& J,
                                      const MetricCore<S>& core,
                                      const S s1[6], const Vec3& cv,
                                      S out[3]) {
  S q[3];
  for (int i = 0; i < 3; ++i) {
    S acc{};
    for (int j = 0; j < 3; ++j)
      acc = acc + core.ginv[sym_index[i][j]] * cv[j];
    q[i] = acc;
  }
  S len2{};
  for (int i = 0; i < 3; ++i) len2 = len2 + cv[i] * q[i];
  using std::sqrt;
  const S len = sqrt(len2);
  for (int b = 0; b < 3; ++b) {
    S acc{};
    for (int i = 0; i < 3; ++i)
      acc = acc + s1[sym_index[i][b]] * q[i];
    out[b] = acc / len;
  }
}

/// Density-weighted normal z^k = sqrt(det g) (g^{-1} c)^k / |c|_g whose
/// stencil divergence, divided by sqrt(det g) at the boundary node, is
/// the mean-curvature residual row (the same algebra as
/// mean_curvature_div, node by node).
template <typename S>
inline void zvec_kernel(const S g[6], const Vec3& cv, S z[3], S& sq) {
  S ginv[6], det;
  inv3_sym(g, ginv, det);
  S q[3];
  for (int i = 0; i < 3; ++i) {
    S acc{};
    for (int j = 0; j < 3; ++j) acc = acc + ginv[sym_index[i][j]] * cv[j];
    q[i] = acc;
  }
  S len2{};
  for (int i = 0; i < 3; ++i) len2 = len2 + cv[i] * q[i];
  using std::sqrt;
  const S len = sqrt(len2);
  sq = sqrt(det);
  for (int k = 0; k < 3; ++k) z[k] = sq * q[k] / len;
}

/// Chart covector -grad s at a node (normal to the s-foliation).
inline Vec3 chart_covector(const ExteriorChart& chart, int node) {
  const Mat3& Ji = chart.jinv()[node];
  return Vec3{-Ji[0][0], -Ji[0][1], -Ji[0][2]};
}

/// Fixed scaling of the induced-metric rows. The parametric tangents
/// shrink toward the poles, so each row is divided by the product of the
/// flat tangent lengths. The scaling is state independent and therefore
/// adds no Jacobian terms.
inline std::array<double, 3> tau_row_scale(const ExteriorChart& chart,
                                           int b) {
  const double lt = std::sqrt(dot(chart.tangent_theta()[b],
                                  chart.tangent_theta()[b]));
  const double lp = std::sqrt(dot(chart.tangent_phi()[b],
                                  chart.tangent_phi()[b]));
  return {lt * lt, lt * lp, lp * lp};
}

// ---------------------------------------------------------------------------
// Residual evaluators
// ---------------------------------------------------------------------------

namespace detail {

/// Map node -> boundary index (or -1).
inline std::vector<int> boundary_index_of(const ExteriorChart& chart) {
  std::vector<int> b_of(chart.nodes(), -1);
  for (int b = 0; b < chart.boundary_nodes(); ++b)
    b_of[chart.boundary_to_node(b)] = b;
  return b_of;
}

/// The z field of a pair at every node, plus sqrt(det g) per node.
struct ZField {
  std::array<std::vector<double>, 3> z;
  std::vector<double> sq;
};

inline ZField build_zfield(const ExteriorChart& chart, const MetricPair& p) {
  ZField f;
  for (auto& zc : f.z) zc.resize(chart.nodes());
  f.sq.resize(chart.nodes());
  for (int node = 0; node < chart.nodes(); ++node) {
    double g[6];
    const Sym3 gm = p.metric_at(node);
    for (int c6 = 0; c6 < 6; ++c6) g[c6] = gm[c6];
    double z[3], sq;
    zvec_kernel(g, chart_covector(chart, node), z, sq);
    for (int k = 0; k < 3; ++k) f.z[k][node] = z[k];
    f.sq[node] = sq;
  }
  return f;
}

/// Stencil divergence of the z field at a boundary node, divided by
/// sqrt(det g) there.
inline double zfield_divergence(const ExteriorChart& chart, const ZField& f,
                                int node) {
  const Mat3& Ji = chart.jinv()[node];
  double acc = 0;
  for (int i = 0; i < 3; ++i)
    for (int a = 0; a < 3; ++a) {
      if (Ji[a][i] == 0.0) continue;
      acc += Ji[a][i] * chart.d1(a).apply_at(f.z[i], node);
    }
  return acc / f.sq[node];
}

}  // namespace detail

/// Residual of the boundary value system at a metric pair against the
/// prescribed boundary data. Square in the seven fields per node.
inline ResidualVector residual_T(const ExteriorChart& chart,
                                 const MetricPair& p,
                                 const BartnikData& data) {
  p.validate(chart);
  data.validate(chart);
  const PairDerivs pd = pair_derivs(chart, p);
  const std::vector<int> b_of = detail::boundary_index_of(chart);
  const detail::ZField zf = detail::build_zfield(chart, p);

  ResidualVector rv;
  rv.fields = kPairFields;
  rv.extras = 0;
  rv.r = Eigen::VectorXd::Zero(chart.nodes() * kPairFields);
  for (int node = 0; node < chart.nodes(); ++node) {
    const SystemJet<double> J = gather_pair_jet(p, pd, node);
    MetricCore<double> core;
    metric_core(J, core);
    const int base = node * kPairFields;
    if (b_of[node] < 0) {
      double r1[6], r2;
      vacuum_rows_kernel(J, core, r1, r2);
      for (int c6 = 0; c6 < 6; ++c6) rv.r[base + c6] = r1[c6];
      rv.r[base + 6] = r2;
    } else {
      const int b = b_of[node];
      double V[3];
      gauge_vector_kernel(J, V);
      for (int k = 0; k < 3; ++k) rv.r[base + k] = V[k];
      const Sym3 gm = p.metric_at(node);
      const Vec3 tt = chart.tangent_theta()[b], tp = chart.tangent_phi()[b];
      const std::array<double, 3> sc = tau_row_scale(chart, b);
      rv.r[base + 3] = (sym_quad(gm, tt, tt) - data.tau[b][0]) / sc[0];
      rv.r[base + 4] = (sym_quad(gm, tt, tp) - data.tau[b][1]) / sc[1];
      rv.r[base + 5] = (sym_quad(gm, tp, tp) - data.tau[b][2]) / sc[2];
      rv.r[base + 6] =
          detail::zfield_divergence(chart, zf, node) - data.phi[b];
    }
  }
  return rv;
}

/// Residual of the modified square system at a state. The cutoff eta
/// weights the auxiliary terms of the interior metric and potential rows;
/// the boundary gauge row subtracts the full S_W(nu, .), and the
/// divergence row carries no weight.
inline ResidualVector residual_Tbar(const ExteriorChart& chart,
                                    const DecayProfile& prof,
                                    const GaugeFieldBasis& basis,
                                    const StateVector& s,
                                    const BartnikData& data) {
  s.validate(chart);
  data.validate(chart);
  const StateDerivs sd = state_derivs(chart, s);
  const std::vector<int> b_of = detail::boundary_index_of(chart);
  const detail::ZField zf = detail::build_zfield(chart, s.pair);

  ResidualVector rv;
  rv.fields = kFullFields;
  rv.extras = 6;
  rv.r = Eigen::VectorXd::Zero(chart.nodes() * kFullFields + 6);
  for (int node = 0; node < chart.nodes(); ++node) {
    const SystemJet<double> J = gather_full_jet(chart, s, sd, node);
    MetricCore<double> core;
    metric_core(J, core);
    ZetaRows<double> zeta;
    zeta_rows_kernel(J, core, zeta);
    const int base = node * kFullFields;
    if (b_of[node] < 0) {
      double r1[6], r2;
      vacuum_rows_kernel(J, core, r1, r2);
      const double eta = prof.eta(chart.radius()[node]);
      for (int c6 = 0; c6 < 6; ++c6)
        rv.r[base + c6] = r1[c6] + eta * zeta.s1[c6];
      rv.r[base + 6] = r2 + eta * zeta.z2;
      double div[3];
      zeta_divergence_kernel(J, core, zeta, div);
      for (int k = 0; k < 3; ++k) rv.r[base + 7 + k] = div[k];
    } else {
      const int b = b_of[node];
      double V[3], ns1[3];
      gauge_vector_kernel(J, V);
      normal_contraction_kernel(J, core, zeta.s1,
                                chart_covector(chart, node), ns1);
      for (int k = 0; k < 3; ++k) rv.r[base + k] = V[k] - ns1[k];
      const Sym3 gm = s.pair.metric_at(node);
      const Vec3 tt = chart.tangent_theta()[b], tp = chart.tangent_phi()[b];
      const std::array<double, 3> sc = tau_row_scale(chart, b);
      rv.r[base + 3] = (sym_quad(gm, tt, tt) - data.tau[b][0]) / sc[0];
      rv.r[base + 4] = (sym_quad(gm, tt, tp) - data.tau[b][1]) / sc[1];
      rv.r[base + 5] = (sym_quad(gm, tp, tp) - data.tau[b][2]) / sc[2];
      rv.r[base + 6] =
          detail::zfield_divergence(chart, zf, node) - data.phi[b];
      // Dirichlet rows of W: the assembled jet value is What + sum c K.
      for (int k = 0; k < 3; ++k) rv.r[base + 7 + k] = J.w[k];
    }
  }
  // Orthogonality rows, identical to the second gauge residual.
  Deformation dev = Deformation::zero(chart);
  dev.h = s.pair.dg;
  for (int a = 0; a < 6; ++a)
    rv.r[chart.nodes() * kFullFields + a] =
        rho_inner(chart, prof, dev, basis.lie[a]);
  return rv;
}

// ---------------------------------------------------------------------------
// Assembled operators
// ---------------------------------------------------------------------------

/// Sparse square operator with the same row and column layout as the
/// packed state and residual vectors: block index node * fields + comp,
/// followed by the coefficient block (full system only).
///
/// Sparsity-pattern symmetry holds at the node-block level in the bulk
/// for every structurally significant coupling: two interior nodes
/// coupled through centered stencils couple both ways. Two caveats.
/// First, the chart is nearly orthogonal in some parameter pairs, so a
/// cross-derivative coefficient can round to exactly zero at one node
/// (its mixed stencil is then skipped) while the partner node keeps a
/// roundoff-sized coefficient; this leaves one-sided entries many
/// orders below the operator scale, which the drop tolerance of
/// asymmetric_blocks filters out. Second, the one-sided closures at
/// the boundary level and the constraint structure (orthogonality
/// rows, coefficient columns, boundary row substitution) break the
/// pattern genuinely, and those pairs survive any roundoff-scale drop.
/// The diagonal node blocks are never empty, every nodal row keeping a
/// diagonal-block entry. The trailing coefficient-orthogonality corner
/// is structurally zero, the usual saddle-point shape of a constrained
/// linearization.
struct OperatorMatrix {
  int fields = kFullFields;
  int extras = 0;
  Eigen::SparseMatrix<double> mat;

  int size() const { return static_cast<int>(mat.rows()); }
  int nodes() const { return (size() - extras) / fields; }

  /// Decode a row or column index into (node, comp); node -1 denotes the
  /// coefficient block.
  std::pair<int, int> decode(int id) const {
    const int nodal = size() - extras;
    if (id >= nodal) return {-1, id - nodal};
    return {id / fields, id % fields};
  }

  /// Node-block pairs (row block, column block) whose transposed pair
  /// holds no entries above the drop tolerance; the coefficient block
  /// is reported as block index nodes(). With a roundoff-scale drop the
  /// result is confined to the boundary closures and constraints.
  std::vector<std::pair<int, int>> asymmetric_blocks(
      double drop = 0.0) const {
    const int n = nodes();
    auto block_of = [&](int id) {
      return id < n * fields ? id / fields : n;
    };
    std::unordered_set<std::int64_t> present;
    for (int k = 0; k < mat.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(mat, k); it; ++it) {
        if (std::abs(it.value()) <= drop) continue;
        present.insert(static_cast<std::int64_t>(block_of(it.row())) *
                           (n + 1) +
                       block_of(it.col()));
      }
    std::vector<std::pair<int, int>> out;
    for (std::int64_t key : present) {
      const int br = static_cast<int>(key / (n + 1));
      const int bc = static_cast<int>(key % (n + 1));
      if (!present.count(static_cast<std::int64_t>(bc) * (n + 1) + br))
        out.push_back({br, bc});
    }
    return out;
  }

  /// Fraction of coupled node-block pairs without a transposed partner,
  /// ignoring entries at or below the drop tolerance.
  double block_pattern_defect(double drop = 0.0) const {
    const int n = nodes();
    auto block_of = [&](int id) {
      return id < n * fields ? id / fields : n;
    };
    std::unordered_set<std::int64_t> present;
    for (int k = 0; k < mat.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(mat, k); it; ++it) {
        if (std::abs(it.value()) <= drop) continue;
        present.insert(static_cast<std::int64_t>(block_of(it.row())) *
                           (n + 1) +
                       block_of(it.col()));
      }
    if (present.empty()) return 0.0;
    std::int64_t bad = 0;
    for (std::int64_t key : present) {
      const int br = static_cast<int>(key / (n + 1));
      const int bc = static_cast<int>(key % (n + 1));
      if (!present.count(static_cast<std::int64_t>(bc) * (n + 1) + br))
        ++bad;
    }
    return static_cast<double>(bad) / static_cast<double>(present.size());
  }

  /// True when every nodal row has an entry inside its own diagonal node
  /// block (the coefficient rows are excluded; their diagonal corner is
  /// structurally zero).
  bool diagonal_blocks_nonzero() const {
    const int n = nodes();
    std::vector<char> hit(static_cast<size_t>(n) * fields, 0);
    for (int k = 0; k < mat.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(mat, k); it; ++it) {
        const int r = static_cast<int>(it.row());
        const int c = static_cast<int>(it.col());
        if (r >= n * fields || c >= n * fields) continue;
        if (r / fields == c / fields && it.value() != 0.0)
          hit[r] = 1;
      }
    for (char h : hit)
      if (!h) return false;
    return true;
  }

  /// Write every stored entry as one "row col value" line, column-major,
  /// with shortest round-trip decimals.
  void export_coordinates(std::ostream& os) const {
    char buf[40];
    for (int k = 0; k < mat.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(mat, k); it; ++it) {
        const auto res =
            std::to_chars(buf, buf + sizeof buf, it.value());
        os << it.row() << ' ' << it.col() << ' '
           << std::string_view(buf, static_cast<size_t>(res.ptr - buf))
           << '\n';
      }
  }
};

namespace detail {

/// Cartesian derivative rows at one node: the row builders whose
/// application produced the jet slots the kernels consumed.
struct CartesianRows {
  SmallRow grad[3];
  SmallRow second[6];
};

inline void build_cartesian_rows(const ExteriorChart& chart, int node,
                                 NodeRows& nr, CartesianRows& cr) {
  build_node_rows(chart, node, nr);
  for (int i = 0; i < 3; ++i)
    gradient_row(chart, node, nr, i, cr.grad[i]);
  std::array<double, 6> cb;
  std::array<double, 3> ct;
  for (int c6 = 0; c6 < 6; ++c6) {
    dxx_coeffs(chart, node, c6, cb, ct);
    second_order_row(nr, cb, ct, cr.second[c6]);
  }
}

/// Compose the slot partials of one kernel row with the stencil rows:
/// value slots hit the node's own column, derivative slots spread over
/// the stencil footprint. Zero partials are skipped, which keeps the
/// flat-state operators at their analytic sparsity.
template <int K>
inline void scatter_dual_row(const Dual<K>& out, int row, int node,
                             int nfields, const CartesianRows& cr,
                             std::vector<Eigen::Triplet<double>>& trip) {
  for (int f = 0; f < nfields; ++f) {
    const double pv = out.d[slot_index(f, 0)];
    if (pv != 0.0) trip.emplace_back(row, node * nfields + f, pv);
    for (int i = 0; i < 3; ++i) {
      const double p = out.d[slot_index(f, 1 + i)];
      if (p == 0.0) continue;
      for (const auto& e : cr.grad[i].e)
        trip.emplace_back(row, e.node * nfields + f, p * e.weight);
    }
    for (int q = 0; q < 6; ++q) {
      const double p = out.d[slot_index(f, 4 + q)];
      if (p == 0.0) continue;
      for (const auto& e : cr.second[q].e)
        trip.emplace_back(row, e.node * nfields + f, p * e.weight);
    }
  }
}

/// Coefficient-column entry of one kernel row: the W-slot partials
/// contracted with the analytic jet of one Killing field (value and
/// constant gradient; second derivatives vanish).
inline double killing_column_coef(const Dual<kFullSlots>& out, const Vec3& k,
                                  const Mat3& kg) {
  double acc = 0;
  for (int comp = 0; comp < 3; ++comp) {
    const double pv = out.d[slot_index(7 + comp, 0)];
    if (pv != 0.0) acc += pv * k[comp];
    for (int i = 0; i < 3; ++i) {
      const double p = out.d[slot_index(7 + comp, 1 + i)];
      if (p != 0.0) acc += p * kg[i][comp];
    }
  }
  return acc;
}

/// Induced-metric rows: linear in the metric values at the node itself.
inline void tau_rows(const ExteriorChart& chart, int b, int node, int base,
                     int nfields,
                     std::vector<Eigen::Triplet<double>>& trip) {
  const Vec3 tt = chart.tangent_theta()[b], tp = chart.tangent_phi()[b];
  const std::array<double, 3> sc = tau_row_scale(chart, b);
  const Vec3* pairs[3][2] = {{&tt, &tt}, {&tt, &tp}, {&tp, &tp}};
  for (int rrow = 0; rrow < 3; ++rrow) {
    const Vec3& ta = *pairs[rrow][0];
    const Vec3& tb = *pairs[rrow][1];
    for (int c6 = 0; c6 < 6; ++c6) {
      const int i = sym_row[c6], j = sym_col[c6];
      const double coef =
          (i == j) ? ta[i] * tb[i] : ta[i] * tb[j] + ta[j] * tb[i];
      if (coef != 0.0)
        trip.emplace_back(base + 3 + rrow, node * nfields + c6,
                          coef / sc[rrow]);
    }
  }
}

/// Mean-curvature row: the derivative of the stencil divergence of z
/// through the metric values at every node the stencils touch, plus the
/// prefactor derivative at the boundary node itself.
inline void mean_curvature_row(const ExteriorChart& chart,
                               const MetricPair& p, int node, int row,
                               int nfields,
                               std::vector<Eigen::Triplet<double>>& trip) {
  const Mat3& Ji = chart.jinv()[node];
  std::vector<std::pair<int, std::array<double, 3>>> touch;
  auto coef_at = [&touch](int n2) -> std::array<double, 3>& {
    for (auto& t : touch)
      if (t.first == n2) return t.second;
    touch.push_back({n2, {0.0, 0.0, 0.0}});
    return touch.back().second;
  };
  for (int a = 0; a < 3; ++a) {
    const StencilTable& t = chart.d1(a);
    for (int idx = t.offset[node]; idx < t.offset[node + 1]; ++idx) {
      auto& c = coef_at(t.entries[idx].node);
      for (int i = 0; i < 3; ++i)
        c[i] += Ji[a][i] * t.entries[idx].weight;
    }
  }
  // Dual z at the boundary node gives the prefactor and its derivative.
  Dual<6> gb[6];
  {
    const Sym3 gm = p.metric_at(node);
    for (int c6 = 0; c6 < 6; ++c6) {
      gb[c6] = gm[c6];
      gb[c6].d[c6] = 1.0;
    }
  }
  Dual<6> zb[3], sqb;
  zvec_kernel(gb, chart_covector(chart, node), zb, sqb);
  double F = 0;
  for (const auto& t : touch) {
    const int n2 = t.first;
    Dual<6> g2[6];
    const Sym3 gm = p.metric_at(n2);
    for (int c6 = 0; c6 < 6; ++c6) {
      g2[c6] = gm[c6];
      g2[c6].d[c6] = 1.0;
    }
    Dual<6> z2[3], sq2;
    zvec_kernel(g2, chart_covector(chart, n2), z2, sq2);
    for (int i = 0; i < 3; ++i) {
      if (t.second[i] == 0.0) continue;
      F += t.second[i] * z2[i].v;
      for (int c6 = 0; c6 < 6; ++c6) {
        const double dz = t.second[i] * z2[i].d[c6];
        if (dz != 0.0)
          trip.emplace_back(row, n2 * nfields + c6, dz / sqb.v);
      }
    }
  }
  for (int c6 = 0; c6 < 6; ++c6) {
    const double dp = -F * sqb.d[c6] / (sqb.v * sqb.v);
    if (dp != 0.0) trip.emplace_back(row, node * nfields + c6, dp);
  }
}

}  // namespace detail

/// Exact Jacobian of residual_T at a pair.
inline OperatorMatrix assemble_T_jacobian(const ExteriorChart& chart,
                                          const MetricPair& p) {
  p.validate(chart);
  const PairDerivs pd = pair_derivs(chart, p);
  const std::vector<int> b_of = detail::boundary_index_of(chart);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(chart.nodes()) * 200);
  NodeRows nr;
  detail::CartesianRows cr;
  for (int node = 0; node < chart.nodes(); ++node) {
    detail::build_cartesian_rows(chart, node, nr, cr);
    const SystemJet<double> Jn = gather_pair_jet(p, pd, node);
    const SystemJet<Dual<kPairSlots>> J =
        seed_jet<kPairSlots>(Jn, kPairFields);
    MetricCore<Dual<kPairSlots>> core;
    metric_core(J, core);
    const int base = node * kPairFields;
    if (b_of[node] < 0) {
      Dual<kPairSlots> r1[6], r2;
      vacuum_rows_kernel(J, core, r1, r2);
      for (int c6 = 0; c6 < 6; ++c6)
        detail::scatter_dual_row(r1[c6], base + c6, node, kPairFields, cr,
                                 trip);
      detail::scatter_dual_row(r2, base + 6, node, kPairFields, cr, trip);
    } else {
      const int b = b_of[node];
      Dual<kPairSlots> V[3];
      gauge_vector_kernel(J, V);
      for (int k = 0; k < 3; ++k)
        detail::scatter_dual_row(V[k], base + k, node, kPairFields, cr,
                                 trip);
      detail::tau_rows(chart, b, node, base, kPairFields, trip);
      detail::mean_curvature_row(chart, p, node, base + 6, kPairFields,
                                 trip);
    }
  }
  OperatorMatrix op;
  op.fields = kPairFields;
  op.extras = 0;
  op.mat.resize(chart.nodes() * kPairFields, chart.nodes() * kPairFields);
  op.mat.setFromTriplets(trip.begin(), trip.end());
  op.mat.makeCompressed();
  return op;
}

/// Linearization of the boundary value system at the flat pair.
inline OperatorMatrix assemble_L(const ExteriorChart& chart) {
  return assemble_T_jacobian(chart, MetricPair::flat(chart));
}

/// Exact Jacobian of residual_Tbar at a state. The coefficient columns
/// contract the W-slot partials with the analytic Killing jets; on the
/// flat background they vanish in every interior and gauge row, leaving
/// only the boundary Dirichlet entries.
inline OperatorMatrix assemble_Tbar_jacobian(const ExteriorChart& chart,
                                             const DecayProfile& prof,
                                             const GaugeFieldBasis& basis,
                                             const StateVector& s) {
  s.validate(chart);
  const StateDerivs sd = state_derivs(chart, s);
  const std::vector<int> b_of = detail::boundary_index_of(chart);
  const int n = chart.nodes();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(n) * 300);
  std::array<Vec3, 6> kval;
  std::array<Mat3, 6> kgrad;
  for (int a = 0; a < 6; ++a) kgrad[a] = killing_gradient(a);
  NodeRows nr;
  detail::CartesianRows cr;
  for (int node = 0; node < n; ++node) {
    detail::build_cartesian_rows(chart, node, nr, cr);
    const SystemJet<double> Jn = gather_full_jet(chart, s, sd, node);
    const SystemJet<Dual<kFullSlots>> J =
        seed_jet<kFullSlots>(Jn, kFullFields);
    MetricCore<Dual<kFullSlots>> core;
    metric_core(J, core);
    ZetaRows<Dual<kFullSlots>> zeta;
    zeta_rows_kernel(J, core, zeta);
    const Vec3& x = chart.position()[node];
    for (int a = 0; a < 6; ++a) kval[a] = killing_field(a, x);
    const int base = node * kFullFields;
    auto emit = [&](const Dual<kFullSlots>& out, int row) {
      detail::scatter_dual_row(out, row, node, kFullFields, cr, trip);
      for (int a = 0; a < 6; ++a) {
        const double coef =
            detail::killing_column_coef(out, kval[a], kgrad[a]);
        if (coef != 0.0)
          trip.emplace_back(row, n * kFullFields + a, coef);
      }
    };
    if (b_of[node] < 0) {
      Dual<kFullSlots> r1[6], r2;
      vacuum_rows_kernel(J, core, r1, r2);
      const double eta = prof.eta(chart.radius()[node]);
      for (int c6 = 0; c6 < 6; ++c6)
        emit(r1[c6] + eta * zeta.s1[c6], base + c6);
      emit(r2 + eta * zeta.z2, base + 6);
      Dual<kFullSlots> div[3];
      zeta_divergence_kernel(J, core, zeta, div);
      for (int k = 0; k < 3; ++k) emit(div[k], base + 7 + k);
    } else {
      const int b = b_of[node];
      Dual<kFullSlots> V[3], ns1[3];
      gauge_vector_kernel(J, V);
      normal_contraction_kernel(J, core, zeta.s1,
                                chart_covector(chart, node), ns1);
      for (int k = 0; k < 3; ++k) emit(V[k] - ns1[k], base + k);
      detail::tau_rows(chart, b, node, base, kFullFields, trip);
      detail::mean_curvature_row(chart, s.pair, node, base + 6, kFullFields,
                                 trip);
      // Dirichlet rows of W, linear at every state.
      for (int k = 0; k < 3; ++k) {
        trip.emplace_back(base + 7 + k, base + 7 + k, 1.0);
        for (int a = 0; a < 6; ++a)
          if (kval[a][k] != 0.0)
            trip.emplace_back(base + 7 + k, n * kFullFields + a,
                              kval[a][k]);
      }
    }
  }
  // Orthogonality rows: the quadrature weights of the rho-weighted
  // pairing against each basis Lie field.
  for (int a = 0; a < 6; ++a) {
    const int row = n * kFullFields + a;
    for (int node = 0; node < n; ++node) {
      const double wr = chart.volume_weight()[node] *
                        prof.rho(chart.radius()[node]);
      for (int c6 = 0; c6 < 6; ++c6) {
        const double val = wr * sym_mult[c6] * basis.lie[a][node][c6];
        if (val != 0.0)
          trip.emplace_back(row, node * kFullFields + c6, val);
      }
    }
  }
  OperatorMatrix op;
  op.fields = kFullFields;
  op.extras = 6;
  op.mat.resize(n * kFullFields + 6, n * kFullFields + 6);
  op.mat.setFromTriplets(trip.begin(), trip.end());
  op.mat.makeCompressed();
  return op;
}

/// Linearization of the modified square system at the flat state. This is
/// the frozen operator the quasi-Newton iteration factors once.
inline OperatorMatrix assemble_Lbar(const ExteriorChart& chart,
                                    const DecayProfile& prof,
                                    const GaugeFieldBasis& basis) {
  return assemble_Tbar_jacobian(chart, prof, basis,
                                StateVector::flat(chart));
}

}  // namespace statvac
