// Distributed under the MIT License. See LICENSE for details.

/// @file test_gauge.cpp
/// Bianchi/Killing calculus, the harmonic-Killing basis, gauge residuals,
/// the weighted projection, and the kappa-orthogonality identity.

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <vector>

#include "statvac/chart.hpp"
#include "statvac/common.hpp"
#include "statvac/gauge.hpp"
#include "statvac/lincurv.hpp"
#include "statvac/tensorcalc.hpp"

using namespace statvac;

namespace {

StarSurface wiggly() {
  return StarSurface::from_harmonics({{0, 0, 1.0},
                                      {2, 0, 0.1},
                                      {2, 2, 0.05},
                                      {3, 1, 0.04},
                                      {3, -2, 0.03}});
}

// Smooth decaying vector field with all components exercised.
VecField smooth_vec(const ExteriorChart& chart) {
  VecField v;
  for (auto& c : v) c.resize(chart.nodes());
  for (int n = 0; n < chart.nodes(); ++n) {
    const Vec3& x = chart.position()[n];
    const double r = norm(x);
    v[0][n] = 1.0 / r + 0.4 * x[1] / (r * r * r);
    v[1][n] = x[0] * x[2] / std::pow(r, 4);
    v[2][n] = 0.7 / (r * r);
  }
  return v;
}

// Smooth decaying deformation for identity tests.
Deformation smooth_deformation(const ExteriorChart& chart) {
  Deformation d = Deformation::zero(chart);
  for (int n = 0; n < chart.nodes(); ++n) {
    const Vec3& x = chart.position()[n];
    const double r = norm(x);
    d.h[0][n] = 1.0 / r;
    d.h[1][n] = 0.5 * x[2] / (r * r * r);
    d.h[2][n] = -0.3 / (r * r);
    d.h[3][n] = 0.8 * x[0] / (r * r * r);
    d.h[4][n] = 0.2 * x[0] * x[1] / std::pow(r, 4);
    d.h[5][n] = -0.6 / r;
    d.v[n] = 0.9 / r + 0.3 * x[2] / (r * r * r);
  }
  return d;
}

}  // namespace

TEST_CASE("flat Bianchi operator: conformal identity and closed form") {
  const ExteriorChart chart(wiggly(), 10, 8, 16);
  // h = f gbar with f = 1/r: beta h = (1/2) df as discrete arrays.
  Deformation d = Deformation::zero(chart);
  std::vector<double> f(chart.nodes());
  for (int n = 0; n < chart.nodes(); ++n) {
    f[n] = 1.0 / chart.radius()[n];
    for (int c : {0, 3, 5}) d.h[c][n] = f[n];
  }
  const DeformDerivs dd = deform_derivs(chart, d);
  const FieldDerivs fd = cartesian_derivs(chart, f);
  const std::vector<Vec3> bh = bianchi(chart, dd.h);
  double worst = 0, closed = 0;
  for (int n = 0; n < chart.nodes(); ++n) {
    const Vec3& x = chart.position()[n];
    const double r = norm(x);
    for (int b = 0; b < 3; ++b) {
      // Discrete identity: same first-derivative arrays, so roundoff only.
      worst = std::max(worst, std::abs(bh[n][b] - 0.5 * fd.dx[b][n]));
      // Continuum value -x_b / (2 r^3), discretization error allowed.
      closed = std::max(closed,
                        std::abs(bh[n][b] + 0.5 * x[b] / (r * r * r)));
    }
  }
  REQUIRE(worst < 1e-14);
  REQUIRE(closed < 5e-2);
}

TEST_CASE("beta(L_V gbar) + Lap V vanishes to discretization order") {
  auto worst = [](int ns, int nt, int np) {
    const ExteriorChart chart(wiggly(), ns, nt, np);
    const VecField v = smooth_vec(chart);
    const std::array<FieldDerivs, 3> vd = vec_field_derivs(chart, v);
    const std::vector<Sym3> dv = killing_op(chart, vd);
    // Differentiate the Lie field and apply the Bianchi operator.
    std::array<FieldDerivs, 6> ld;
    for (int c = 0; c < 6; ++c) {
      std::vector<double> comp(chart.nodes());
      for (int n = 0; n < chart.nodes(); ++n) comp[n] = 2.0 * dv[n][c];
      ld[c] = cartesian_derivs(chart, comp);
    }
    const std::vector<Vec3> bl = bianchi(chart, ld);
    double w = 0;
    for (int n = 0; n < chart.nodes(); ++n)
      for (int b = 0; b < 3; ++b) {
        double lap = 0;
        for (int k = 0; k < 3; ++k) lap += vd[b].dxx[sym_index[k][k]][n];
        w = std::max(w, std::abs(bl[n][b] + lap));
      }
    return w;
  };
  const double ec = worst(12, 10, 20), ef = worst(24, 20, 40);
  REQUIRE(ec < 5.0);
  REQUIRE(std::log2(ec / ef) > 1.8);
}

TEST_CASE("harmonic-Killing basis matches unit-sphere closed forms") {
  auto worst = [](int ns, int nt, int np, double* bd_err, double* harm_err) {
    const ExteriorChart chart(StarSurface::sphere(1.0), ns, nt, np);
    const DecayProfile prof = DecayProfile::for_chart(chart);
    const ScalarLaplaceSolver lap(chart);
    const GaugeFieldBasis basis = harmonic_killing_basis(chart, prof, lap);
    double w = 0;
    for (int n = 0; n < chart.nodes(); ++n) {
      const Vec3& x = chart.position()[n];
      const double r = norm(x);
      // Translation: X = (1 - 1/r) e_1.
      {
        const Vec3 got = basis.field_at(chart, 0, n);
        const Vec3 want{1.0 - 1.0 / r, 0.0, 0.0};
        w = std::max(w, norm(got - want));
      }
      // Rotation about e_3: X = (1 - 1/r^3) e_3 x x.
      {
        const Vec3 got = basis.field_at(chart, 5, n);
        const double s = 1.0 - 1.0 / (r * r * r);
        const Vec3 want{-s * x[1], s * x[0], 0.0};
        w = std::max(w, norm(got - want));
      }
    }
    // Boundary vanishing and interior harmonicity of the full basis.
    *bd_err = 0;
    *harm_err = 0;
    SmallRow row;
    NodeRows nr;
    for (int a = 0; a < 6; ++a) {
      for (int b = 0; b < chart.boundary_nodes(); ++b)
        *bd_err = std::max(
            *bd_err,
            norm(basis.field_at(chart, a, chart.boundary_to_node(b))));
      for (int node = 0; node < chart.nodes(); ++node) {
        if (chart.node_js(node) == chart.ns() - 1) continue;
        build_node_rows(chart, node, nr);
        laplacian_row(chart, node, nr, row);
        for (int comp = 0; comp < 3; ++comp)
          *harm_err = std::max(
              *harm_err, std::abs(row.apply(basis.decaying[a][comp])));
      }
    }
    return w;
  };
  double bd_c, harm_c, bd_f, harm_f;
  const double ec = worst(12, 8, 16, &bd_c, &harm_c);
  const double ef = worst(24, 16, 32, &bd_f, &harm_f);
  REQUIRE(ec < 2e-1);
  REQUIRE(std::log2(ec / ef) > 1.8);
  REQUIRE(bd_c < 1e-10);
  REQUIRE(bd_f < 1e-10);
  REQUIRE(harm_c < 1e-9);
  REQUIRE(harm_f < 1e-9);
}

TEST_CASE("basis Gram matrix is positive definite") {
  const ExteriorChart chart(wiggly(), 10, 8, 16);
  const DecayProfile prof = DecayProfile::for_chart(chart);
  const ScalarLaplaceSolver lap(chart);
  const GaugeFieldBasis basis = harmonic_killing_basis(chart, prof, lap);
  Eigen::Matrix<double, 6, 6> G;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) G(i, j) = basis.gram[i][j];
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(G);
  REQUIRE(es.eigenvalues().minCoeff() > 0);
}

TEST_CASE("orthogonal projection removes gauge directions and is idempotent") {
  const ExteriorChart chart(wiggly(), 10, 8, 16);
  const DecayProfile prof = DecayProfile::for_chart(chart);
  const ScalarLaplaceSolver lap(chart);
  const GaugeFieldBasis basis = harmonic_killing_basis(chart, prof, lap);

  // Pre-project a random smooth field to get an orthogonal k.
  Deformation raw = smooth_deformation(chart);
  Lcg rng(31);
  for (int c = 0; c < 6; ++c)
    for (auto& x : raw.h[c]) x *= 0.5 + rng.uniform();
  const Deformation k = orthogonal_project(chart, prof, basis, raw);
  double knorm = 0;
  for (int c = 0; c < 6; ++c)
    for (double x : k.h[c]) knorm = std::max(knorm, std::abs(x));

  // All six constraints hold after projection.
  for (int i = 0; i < 6; ++i) {
    const double lnorm =
        std::sqrt(rho_inner(chart, prof, basis.lie[i], basis.lie[i]));
    REQUIRE(std::abs(rho_inner(chart, prof, k, basis.lie[i])) <
            1e-10 * knorm * lnorm * chart.nodes());
  }

  // Projection of an already-orthogonal field changes nothing.
  const Deformation k2 = orthogonal_project(chart, prof, basis, k);
  for (int c = 0; c < 6; ++c)
    for (int n = 0; n < chart.nodes(); ++n)
      REQUIRE(std::abs(k2.h[c][n] - k.h[c][n]) < 1e-12 * (1 + knorm));

  // A pure basis element projects to (numerically) zero.
  Deformation pure = Deformation::zero(chart);
  for (int c = 0; c < 6; ++c)
    for (int n = 0; n < chart.nodes(); ++n)
      pure.h[c][n] = basis.lie[0][n][c];
  const Deformation res = orthogonal_project(chart, prof, basis, pure);
  double pn = 0, rn = 0;
  for (int c = 0; c < 6; ++c)
    for (int n = 0; n < chart.nodes(); ++n) {
      pn = std::max(pn, std::abs(pure.h[c][n]));
      rn = std::max(rn, std::abs(res.h[c][n]));
    }
  REQUIRE(rn < 1e-10 * pn);

  // Basis element plus orthogonal field recovers the orthogonal field.
  Deformation mix = k;
  for (int c = 0; c < 6; ++c)
    for (int n = 0; n < chart.nodes(); ++n) mix.h[c][n] += pure.h[c][n];
  const Deformation back = orthogonal_project(chart, prof, basis, mix);
  for (int c = 0; c < 6; ++c)
    for (int n = 0; n < chart.nodes(); ++n)
      REQUIRE(std::abs(back.h[c][n] - k.h[c][n]) < 1e-9 * (1 + pn));
}

TEST_CASE("static-harmonic residual: trivial, potential, and Schwarzschild") {
  const ExteriorChart chart(StarSurface::sphere(1.0), 16, 12, 24);
  const DecayProfile prof = DecayProfile::for_chart(chart);
  const ScalarLaplaceSolver lap(chart);
  const GaugeFieldBasis basis = harmonic_killing_basis(chart, prof, lap);

  // Flat pair: exactly zero.
  {
    const MetricPair p = MetricPair::flat(chart);
    const GaugeResiduals r =
        static_harmonic_residual(chart, p, pair_derivs(chart, p), prof, basis);
    REQUIRE(r.max_norm() < 1e-14);
    REQUIRE(r.max_orthogonality() < 1e-14);
  }
  // Pure potential deviation u = 1 + c/r: residual is d(c/r), with max
  // norm c/r^2 = c attained on the unit sphere boundary.
  {
    const double c = 0.7;
    MetricPair p = MetricPair::flat(chart);
    for (int n = 0; n < chart.nodes(); ++n)
      p.du[n] = c / chart.radius()[n];
    const GaugeResiduals r =
        static_harmonic_residual(chart, p, pair_derivs(chart, p), prof, basis);
    REQUIRE(std::abs(r.max_norm() - c) < 0.02 * c);
    REQUIRE(r.max_orthogonality() < 1e-13);
  }
  // Schwarzschild m = 0.1: the residual is radial with profile
  // (-m phi^3 + m / phi^2) / r^2, phi = 1 + m/2r. Nonzero: the isotropic
  // gauge is not the static-harmonic gauge.
  {
    const double m = 0.1;
    MetricPair p = MetricPair::flat(chart);
    for (int n = 0; n < chart.nodes(); ++n) {
      const double r = chart.radius()[n];
      const double phi = 1.0 + m / (2 * r);
      const double cc = std::pow(phi, 4) - 1.0;
      p.dg[0][n] = cc;
      p.dg[3][n] = cc;
      p.dg[5][n] = cc;
      p.du[n] = (1.0 - m / (2 * r)) / phi - 1.0;
    }
    const GaugeResiduals r =
        static_harmonic_residual(chart, p, pair_derivs(chart, p), prof, basis);
    double worst = 0;
    for (int n = 0; n < chart.nodes(); ++n) {
      const Vec3& x = chart.position()[n];
      const double rr = norm(x);
      const double phi = 1.0 + m / (2 * rr);
      const double prof_r =
          (-m * phi * phi * phi + m / (phi * phi)) / (rr * rr);
      const Vec3 want = (prof_r / rr) * x;
      worst = std::max(worst, norm(r.static_harmonic[n] - want));
    }
    REQUIRE(worst < 1e-4);
    REQUIRE(r.max_norm() > 1e-2);  // genuinely not in gauge
  }
}

TEST_CASE("harmonic gauge fix kills the Bianchi residual") {
  auto run = [](int ns, int nt, int np, double* before, double* tangential,
                double* da_err) {
    const ExteriorChart chart(wiggly(), ns, nt, np);
    const ScalarLaplaceSolver lap(chart);
    // h = f gbar, f = 1/r.
    Deformation d = Deformation::zero(chart);
    for (int n = 0; n < chart.nodes(); ++n)
      for (int c : {0, 3, 5}) d.h[c][n] = 1.0 / chart.radius()[n];
    const DeformDerivs dd = deform_derivs(chart, d);
    const Deformation k = harmonic_gauge_fix(chart, d, dd, lap);
    const DeformDerivs kd = deform_derivs(chart, k);
    const std::vector<Vec3> bh = bianchi(chart, dd.h);
    const std::vector<Vec3> bk = bianchi(chart, kd.h);
    // The fix equation is enforced at interior nodes; on the boundary
    // level the residual decays with the solution error instead, at a
    // lower rate. Track the interior maximum for the order check.
    double wb = 0, wa = 0;
    for (int n = 0; n < chart.nodes(); ++n) {
      wb = std::max(wb, norm(bh[n]));
      if (chart.node_js(n) < chart.ns() - 1) wa = std::max(wa, norm(bk[n]));
    }
    *before = wb;
    // Tangential boundary data preserved to roundoff: the correction is
    // L_V gbar with V = 0 on the boundary, and tangential differentiation
    // of a field vanishing on the boundary level is exact.
    Deformation diff = Deformation::zero(chart);
    for (int c = 0; c < 6; ++c)
      for (int n = 0; n < chart.nodes(); ++n)
        diff.h[c][n] = k.h[c][n] - d.h[c][n];
    const BoundaryDecomposition bd = decompose_boundary(chart, diff);
    *tangential = 0;
    for (int b = 0; b < chart.boundary_nodes(); ++b)
      for (double v : bd.tangential[b])
        *tangential = std::max(*tangential, std::abs(v));
    // Linearized second fundamental form of the correction tends to zero.
    const DeformDerivs dderiv = deform_derivs(chart, diff);
    const auto da = lin_second_ff_flat(chart, diff, dderiv);
    *da_err = 0;
    for (const auto& row : da)
      for (double v : row) *da_err = std::max(*da_err, std::abs(v));
    return wa;
  };
  double before_c, tan_c, da_c, before_f, tan_f, da_f;
  const double after_c = run(12, 10, 20, &before_c, &tan_c, &da_c);
  const double after_f = run(24, 20, 40, &before_f, &tan_f, &da_f);
  REQUIRE(after_c < 0.3 * before_c);
  REQUIRE(after_f < 0.35 * after_c);  // roughly second order
  REQUIRE(tan_c < 1e-11);
  REQUIRE(tan_f < 1e-11);
  REQUIRE(da_f < 0.35 * da_c);
}

TEST_CASE("kappa-orthogonality of the linearized operator range") {
  auto run = [](int ns, int nt, int np, int a, double* normalizer) {
    const ExteriorChart chart(wiggly(), ns, nt, np);
    const DecayProfile prof = DecayProfile::for_chart(chart);
    const ScalarLaplaceSolver lap(chart);
    const GaugeFieldBasis basis = harmonic_killing_basis(chart, prof, lap);
    const Deformation d = smooth_deformation(chart);
    const DeformDerivs dd = deform_derivs(chart, d);
    const std::vector<Sym3> dric = lin_ricci_flat(chart, dd);
    const std::array<FieldDerivs, 3> yd =
        vec_field_derivs(chart, basis.decaying[a]);
    const std::vector<Sym3> bstar = bianchi_adjoint(chart, yd);
    const std::vector<double> divx = divergence(chart, yd);
    std::vector<double> f(chart.nodes()), af(chart.nodes());
    for (int n = 0; n < chart.nodes(); ++n) {
      Sym3 q1;
      double q2 = 0;
      for (int c = 0; c < 6; ++c) {
        q1[c] = -dric[n][c] + dd.v.dxx[c][n];
        if (c == 0 || c == 3 || c == 5) q2 += dd.v.dxx[c][n];
      }
      Sym3 two_bstar = 2.0 * bstar[n];
      f[n] = sym_contract(q1, two_bstar) + q2 * (-divx[n]);
      af[n] = std::abs(f[n]);
    }
    *normalizer = chart.integrate_volume(af);
    return chart.integrate_volume(f);
  };
  for (int a : {0, 4}) {
    double nc, nf;
    const double ic = run(12, 10, 20, a, &nc);
    const double iff = run(24, 20, 40, a, &nf);
    REQUIRE(std::abs(ic) < 0.2 * nc);
    REQUIRE(std::abs(iff) < 0.4 * std::abs(ic) + 1e-12 * nf);
  }
}
