// Distributed under the MIT License. See LICENSE for details.

#pragma once

/// @file gauge.hpp
/// Bianchi and Killing calculus on the flat background, the harmonic-Killing
/// basis generating the gauge directions, gauge residuals, and the
/// weighted orthogonal projection. Two gauges appear: the static-harmonic
/// gauge asks the one-form (flat Bianchi of g) + du to vanish, and the
/// orthogonal gauge asks g - gbar to be L2_rho-orthogonal to the Lie
/// derivatives of the background along the harmonic-Killing fields.

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <array>
#include <stdexcept>
#include <vector>

#include "statvac/chart.hpp"
#include "statvac/common.hpp"
#include "statvac/fd.hpp"
#include "statvac/tensorcalc.hpp"

namespace statvac {

/// Components of a vector field on the chart.
using VecField = std::array<std::vector<double>, 3>;

/// Derivative passes for every component of a vector field.
inline std::array<FieldDerivs, 3> vec_field_derivs(const ExteriorChart& chart,
                                                   const VecField& f) {
  return {cartesian_derivs(chart, f[0]), cartesian_derivs(chart, f[1]),
          cartesian_derivs(chart, f[2])};
}

// ---------------------------------------------------------------------------
// Cartesian Killing fields of the flat background
// ---------------------------------------------------------------------------

/// The six Killing fields: three translations e_a, three rotations e_a x x.
inline Vec3 killing_field(int a, const Vec3& x) {
  if (a < 0 || a >= 6) throw std::invalid_argument("killing_field: index");
  if (a < 3) {
    Vec3 k{};
    k[a] = 1.0;
    return k;
  }
  Vec3 e{};
  e[a - 3] = 1.0;
  return cross(e, x);
}

/// Cartesian gradient (d_i K_j) of the Killing field; constant in x and
/// antisymmetric for rotations, zero for translations.
inline Mat3 killing_gradient(int a) {
  Mat3 g{};
  if (a >= 3) {
    // K_j = eps_{a-3, p, j} x_p, so d_i K_j = eps_{a-3, i, j}.
    const int m = a - 3;
    const int p = (m + 1) % 3, q = (m + 2) % 3;
    g[p][q] = 1.0;
    g[q][p] = -1.0;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Flat Bianchi and Killing operators
// ---------------------------------------------------------------------------

/// Flat Bianchi operator beta h = -Div h + 1/2 d tr h as a one-form field.
inline std::vector<Vec3> bianchi(const ExteriorChart& chart,
                                 const std::array<FieldDerivs, 6>& hd) {
  std::vector<Vec3> out(chart.nodes());
  for (int n = 0; n < chart.nodes(); ++n)
    for (int b = 0; b < 3; ++b) {
      double acc = 0;
      for (int k = 0; k < 3; ++k) {
        acc -= hd[sym_index[k][b]].dx[k][n];
        acc += 0.5 * hd[sym_index[k][k]].dx[b][n];
      }
      out[n][b] = acc;
    }
  return out;
}

/// Flat Killing operator D V = 1/2 L_V gbar = sym grad V.
inline std::vector<Sym3> killing_op(const ExteriorChart& chart,
                                    const std::array<FieldDerivs, 3>& vd) {
  std::vector<Sym3> out(chart.nodes());
  for (int n = 0; n < chart.nodes(); ++n)
    for (int c = 0; c < 6; ++c) {
      const int a = sym_row[c], b = sym_col[c];
      out[n][c] = 0.5 * (vd[b].dx[a][n] + vd[a].dx[b][n]);
    }
  return out;
}

/// Flat adjoint Bianchi operator beta* V = D V - 1/2 (Div V) gbar.
inline std::vector<Sym3> bianchi_adjoint(const ExteriorChart& chart,
                                         const std::array<FieldDerivs, 3>& vd) {
  std::vector<Sym3> out = killing_op(chart, vd);
  for (int n = 0; n < chart.nodes(); ++n) {
    double div = 0;
    for (int k = 0; k < 3; ++k) div += vd[k].dx[k][n];
    for (int c : {0, 3, 5}) out[n][c] -= 0.5 * div;
  }
  return out;
}

/// Flat divergence of a vector field.
inline std::vector<double> divergence(const ExteriorChart& chart,
                                      const std::array<FieldDerivs, 3>& vd) {
  std::vector<double> out(chart.nodes());
  for (int n = 0; n < chart.nodes(); ++n)
    out[n] = vd[0].dx[0][n] + vd[1].dx[1][n] + vd[2].dx[2][n];
  return out;
}

// ---------------------------------------------------------------------------
// Scalar Laplace solves on the chart
// ---------------------------------------------------------------------------

/// Factored flat Laplacian with Dirichlet data on the boundary level and
/// decay (ghost zero) at s = 0. Assembled once per chart and reused for
/// every harmonic extension and gauge fix.
class ScalarLaplaceSolver {
 public:
  explicit ScalarLaplaceSolver(const ExteriorChart& chart) : chart_(chart) {
    const int n = chart.nodes();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(n) * 20);
    SmallRow row;
    NodeRows nr;
    for (int node = 0; node < n; ++node) {
      if (chart.node_js(node) == chart.ns() - 1) {
        trip.emplace_back(node, node, 1.0);
        continue;
      }
      build_node_rows(chart, node, nr);
      laplacian_row(chart, node, nr, row);
      for (const auto& entry : row.e)
        trip.emplace_back(node, entry.node, entry.weight);
    }
    Eigen::SparseMatrix<double> A(n, n);
    A.setFromTriplets(trip.begin(), trip.end());
    A.makeCompressed();
    lu_.compute(A);
    if (lu_.info() != Eigen::Success)
      throw std::runtime_error("scalar Laplace factorization failed");
  }

  /// Solve Lap f = rhs in the interior with f = bc on the boundary level.
  std::vector<double> solve(const std::vector<double>& rhs,
                            const std::vector<double>& bc) const {
    const int n = chart_.nodes();
    if (static_cast<int>(rhs.size()) != n ||
        static_cast<int>(bc.size()) != chart_.boundary_nodes())
      throw std::invalid_argument("scalar Laplace solve: size mismatch");
    Eigen::VectorXd b(n);
    for (int node = 0; node < n; ++node) b[node] = rhs[node];
    for (int i = 0; i < chart_.boundary_nodes(); ++i)
      b[chart_.boundary_to_node(i)] = bc[i];
    const Eigen::VectorXd x = lu_.solve(b);
    if (lu_.info() != Eigen::Success)
      throw std::runtime_error("scalar Laplace solve failed");
    return std::vector<double>(x.data(), x.data() + n);
  }

 private:
  const ExteriorChart& chart_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
};

// ---------------------------------------------------------------------------
// Harmonic-Killing basis
// ---------------------------------------------------------------------------

/// The six fields X = K + Y with K a Cartesian Killing field and Y the
/// decaying harmonic correction making X vanish on the boundary. Only Y is
/// stored on the grid (rotations grow linearly, Y stays bounded on the
/// compactified chart). L_X gbar = 2 sym grad Y since L_K gbar = 0, so the
/// stored Lie fields are built from Y alone.
struct GaugeFieldBasis {
  std::array<VecField, 6> decaying;
  std::array<std::vector<Sym3>, 6> lie;
  std::array<std::array<double, 6>, 6> gram;

  /// Full field X = K + Y at a node.
  Vec3 field_at(const ExteriorChart& chart, int a, int node) const {
    Vec3 x = killing_field(a, chart.position()[node]);
    for (int k = 0; k < 3; ++k) x[k] += decaying[a][k][node];
    return x;
  }
};

/// Weighted inner product of two symmetric tensor fields,
/// <a, b>_rho = int (a . b) rho dvol, with the full index contraction.
inline double rho_inner(const ExteriorChart& chart, const DecayProfile& prof,
                        const std::vector<Sym3>& a,
                        const std::vector<Sym3>& b) {
  std::vector<double> f(chart.nodes());
  for (int n = 0; n < chart.nodes(); ++n)
    f[n] = prof.rho(chart.radius()[n]) * sym_contract(a[n], b[n]);
  return chart.integrate_volume(f);
}

/// Weighted inner product of a deformation's metric part with a symmetric
/// tensor field.
inline double rho_inner(const ExteriorChart& chart, const DecayProfile& prof,
                        const Deformation& d, const std::vector<Sym3>& b) {
  std::vector<double> f(chart.nodes());
  for (int n = 0; n < chart.nodes(); ++n)
    f[n] = prof.rho(chart.radius()[n]) * sym_contract(d.h_at(n), b[n]);
  return chart.integrate_volume(f);
}

/// Solve the six harmonic extension problems Lap Y = 0, Y = -K on the
/// boundary, Y -> 0 at s = 0, and assemble the basis with its Gram matrix.
inline GaugeFieldBasis harmonic_killing_basis(const ExteriorChart& chart,
                                              const DecayProfile& prof,
                                              const ScalarLaplaceSolver& lap) {
  GaugeFieldBasis basis;
  const int n = chart.nodes(), nb = chart.boundary_nodes();
  const std::vector<double> zero_rhs(n, 0.0);
  for (int a = 0; a < 6; ++a) {
    for (int comp = 0; comp < 3; ++comp) {
      std::vector<double> bc(nb);
      bool all_zero = true;
      for (int i = 0; i < nb; ++i) {
        const Vec3 k =
            killing_field(a, chart.position()[chart.boundary_to_node(i)]);
        bc[i] = -k[comp];
        if (bc[i] != 0.0) all_zero = false;
      }
      basis.decaying[a][comp] =
          all_zero ? zero_rhs : lap.solve(zero_rhs, bc);
    }
    const std::array<FieldDerivs, 3> yd =
        vec_field_derivs(chart, basis.decaying[a]);
    const std::vector<Sym3> dy = killing_op(chart, yd);
    basis.lie[a].resize(n);
    for (int node = 0; node < n; ++node) basis.lie[a][node] = 2.0 * dy[node];
  }
  for (int i = 0; i < 6; ++i)
    for (int j = i; j < 6; ++j) {
      const double g = rho_inner(chart, prof, basis.lie[i], basis.lie[j]);
      basis.gram[i][j] = g;
      basis.gram[j][i] = g;
    }
  return basis;
}

/// Remove the L2_rho-projection of the metric part onto span{L_{X_i} gbar}.
/// The scalar part is untouched. Rejects a numerically singular Gram matrix.
inline Deformation orthogonal_project(const ExteriorChart& chart,
                                      const DecayProfile& prof,
                                      const GaugeFieldBasis& basis,
                                      const Deformation& d) {
  Eigen::Matrix<double, 6, 6> G;
  Eigen::Matrix<double, 6, 1> rhs;
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) G(i, j) = basis.gram[i][j];
    rhs(i) = rho_inner(chart, prof, d, basis.lie[i]);
  }
  const Eigen::FullPivLU<Eigen::Matrix<double, 6, 6>> lu(G);
  if (!lu.isInvertible())
    throw std::runtime_error("orthogonal_project: singular Gram matrix");
  const Eigen::Matrix<double, 6, 1> coef = lu.solve(rhs);
  Deformation out = d;
  for (int i = 0; i < 6; ++i)
    for (int c = 0; c < 6; ++c)
      for (int node = 0; node < chart.nodes(); ++node)
        out.h[c][node] -= coef(i) * basis.lie[i][node][c];
  return out;
}

// ---------------------------------------------------------------------------
// Gauge residuals
// ---------------------------------------------------------------------------

/// The static-harmonic one-form (flat Bianchi of g) + du and the six
/// orthogonality pairings of g - gbar with the basis Lie fields.
struct GaugeResiduals {
  std::vector<Vec3> static_harmonic;
  std::array<double, 6> orthogonality{};

  double max_norm() const {
    double m = 0;
    for (const Vec3& v : static_harmonic)
      for (int k = 0; k < 3; ++k) m = std::max(m, std::abs(v[k]));
    return m;
  }

  /// Plain L2 norm of the one-form over the chart volume.
  double l2_norm(const ExteriorChart& chart) const {
    std::vector<double> f(chart.nodes());
    for (int n = 0; n < chart.nodes(); ++n)
      f[n] = dot(static_harmonic[n], static_harmonic[n]);
    return std::sqrt(chart.integrate_volume(f));
  }

  double max_orthogonality() const {
    double m = 0;
    for (double v : orthogonality) m = std::max(m, std::abs(v));
    return m;
  }
};

inline GaugeResiduals static_harmonic_residual(const ExteriorChart& chart,
                                               const MetricPair& p,
                                               const PairDerivs& pd,
                                               const DecayProfile& prof,
                                               const GaugeFieldBasis& basis) {
  GaugeResiduals out;
  // The flat Bianchi operator is linear and kills the background, so it
  // acts on the deviation derivative arrays directly; du adds the
  // gradient of the potential deviation.
  out.static_harmonic = bianchi(chart, pd.g);
  for (int n = 0; n < chart.nodes(); ++n)
    for (int b = 0; b < 3; ++b) out.static_harmonic[n][b] += pd.u.dx[b][n];
  Deformation dev = Deformation::zero(chart);
  dev.h = p.dg;
  for (int i = 0; i < 6; ++i)
    out.orthogonality[i] = rho_inner(chart, prof, dev, basis.lie[i]);
  return out;
}

/// Pull a deformation into the (linearized) static-harmonic gauge: solve
/// Lap V = beta h with V = 0 on the boundary and decay at infinity, then
/// return k = h + L_V gbar. Since beta(L_V gbar) = -Lap V on the flat
/// background, beta k vanishes to discretization order, while the Cauchy
/// boundary data (k^T, DA(k)) agree with those of h to the same order.
inline Deformation harmonic_gauge_fix(const ExteriorChart& chart,
                                      const Deformation& d,
                                      const DeformDerivs& dd,
                                      const ScalarLaplaceSolver& lap) {
  const std::vector<Vec3> bh = bianchi(chart, dd.h);
  const int n = chart.nodes();
  VecField v;
  const std::vector<double> zero_bc(chart.boundary_nodes(), 0.0);
  for (int comp = 0; comp < 3; ++comp) {
    std::vector<double> rhs(n);
    for (int node = 0; node < n; ++node) rhs[node] = bh[node][comp];
    v[comp] = lap.solve(rhs, zero_bc);
  }
  const std::array<FieldDerivs, 3> vd = vec_field_derivs(chart, v);
  const std::vector<Sym3> lie = killing_op(chart, vd);
  Deformation out = d;
  for (int c = 0; c < 6; ++c)
    for (int node = 0; node < n; ++node)
      out.h[c][node] += 2.0 * lie[node][c];
  return out;
}

}  // namespace statvac
