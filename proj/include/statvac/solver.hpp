// Distributed under the MIT License. See LICENSE for details.

/// @file solver.hpp
/// Sparse direct linear solves, smallest-singular-value diagnostics, the
/// frozen-Jacobian Newton iteration that produces static vacuum
/// extensions, and the asymptotic mass flux.
///
/// The iteration solves the modified square system: its Jacobian at the
/// flat state is assembled and factorized once, and every step applies
/// that frozen inverse to the current residual. This matches the
/// contraction structure of the local-invertibility argument behind the
/// method: near the flat state the frozen-Jacobian map is a contraction,
/// so the iteration converges linearly with a small ratio rather than
/// quadratically, and no Jacobian reassembly is needed.
///
/// Kernel counting goes through singular values rather than eigenvalues:
/// the assembled operators are non-normal, and the number of singular
/// values below a detected spectral gap is the robust discrete analogue
/// of a kernel dimension. Values are computed on the column-scaled
/// operator so the count does not depend on the relative scaling of
/// metric, potential, and auxiliary columns.

#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#if defined(STATVAC_HAVE_UMFPACK)
#include <Eigen/UmfPackSupport>
#endif

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "statvac/chart.hpp"
#include "statvac/common.hpp"
#include "statvac/fd.hpp"
#include "statvac/gauge.hpp"
#include "statvac/system.hpp"
#include "statvac/tensorcalc.hpp"

namespace statvac {

// ---------------------------------------------------------------------------
// Sparse direct factorization
// ---------------------------------------------------------------------------

/// Direct factorization of an assembled operator. The multifrontal
/// UMFPACK path is used when the build found it (it stays much leaner
/// than the bundled left-looking factorization at refined grids); the
/// bundled sparse LU is the fallback. One instance owns its
/// factorization exclusively; concurrent solves need separate instances.
class LinearSolver {
 public:
  explicit LinearSolver(const OperatorMatrix& op) : mat_(&op.mat) {
    if (op.mat.rows() != op.mat.cols())
      throw std::invalid_argument("linear solve: operator not square");
    if (!op.mat.isCompressed()) {
      compressed_ = op.mat;
      compressed_.makeCompressed();
      mat_ = &compressed_;
    }
    lu_.compute(*mat_);
    if (lu_.info() != Eigen::Success)
      throw std::runtime_error(
          "linear solve: factorization failed, operator singular to "
          "working precision");
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    return lu_.solve(rhs);
  }

  /// Relative residual of a computed solution, the quantity the solve
  /// contract bounds by 1e-10.
  double relative_residual(const Eigen::VectorXd& x,
                           const Eigen::VectorXd& rhs) const {
    const double scale = rhs.norm();
    const double res = (*mat_ * x - rhs).norm();
    return scale > 0 ? res / scale : res;
  }

  /// Rough condition estimate: the exact infinity norm of the operator
  /// times a power-iteration estimate of the inverse's norm. Used only
  /// to annotate failure reports, not as a guarantee.
  double condition_estimate(int iterations = 8) const {
    const int n = static_cast<int>(mat_->rows());
    Eigen::VectorXd row_sums = Eigen::VectorXd::Zero(n);
    for (int k = 0; k < mat_->outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(*mat_, k); it; ++it)
        row_sums[it.row()] += std::abs(it.value());
    const double norm_a = row_sums.maxCoeff();
    Lcg rng(7);
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x[i] = rng.uniform(-1.0, 1.0);
    x /= x.norm();
    double growth = 0;
    for (int it = 0; it < iterations; ++it) {
      const Eigen::VectorXd y = lu_.solve(x);
      growth = y.norm();
      if (!(growth > 0) || !std::isfinite(growth)) break;
      x = y / growth;
    }
    return norm_a * growth;
  }

 private:
  const Eigen::SparseMatrix<double>* mat_;
  Eigen::SparseMatrix<double> compressed_;
#if defined(STATVAC_HAVE_UMFPACK)
  Eigen::UmfPackLU<Eigen::SparseMatrix<double>> lu_;
#else
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
#endif
};

/// Solve op x = rhs by direct factorization and unpack the solution in
/// the layout of the matching system (seven fields for the boundary
/// value system, ten plus coefficients for the modified square system).
/// Throws when the verified relative residual exceeds 1e-10, reporting
/// the condition estimate.
inline StateVector linear_solve(const ExteriorChart& chart,
                                const OperatorMatrix& op,
                                const ResidualVector& rhs) {
  if (rhs.r.size() != op.mat.rows())
    throw std::invalid_argument("linear solve: rhs size mismatch");
  const LinearSolver fac(op);
  const Eigen::VectorXd x = fac.solve(rhs.r);
  const double rel = fac.relative_residual(x, rhs.r);
  if (!(rel <= 1e-10))
    throw std::runtime_error(
        "linear solve: relative residual " + std::to_string(rel) +
        " exceeds 1e-10, condition estimate " +
        std::to_string(fac.condition_estimate()));
  StateVector s = StateVector::flat(chart);
  if (op.fields == kFullFields && op.extras == 6) {
    s = StateVector::from_vector(chart, x);
  } else if (op.fields == kPairFields && op.extras == 0) {
    for (int node = 0; node < chart.nodes(); ++node) {
      for (int c6 = 0; c6 < 6; ++c6)
        s.pair.dg[c6][node] = x[node * kPairFields + c6];
      s.pair.du[node] = x[node * kPairFields + 6];
    }
  } else {
    throw std::invalid_argument("linear solve: unrecognized operator shape");
  }
  return s;
}

// ---------------------------------------------------------------------------
// Smallest singular values
// ---------------------------------------------------------------------------

/// An assembled operator expressed in the units where kernel counting
/// works. Two ingredients:
///
///  - Nodal columns carry the domain weight r^(-q), so vector entries
///    are field values measured against the admissible decay rate. In
///    unweighted coordinates the exterior Laplacian's essential
///    spectrum reaches zero through slowly-varying far-field modes and
///    swamps the geometric kernel; between the decay classes the flat
///    operator is Fredholm and the bottom of the non-kernel spectrum
///    stays separated.
///
///  - Every row is then scaled to unit norm. Interior rows carry
///    second-difference entries of order 1/h^2 while boundary and
///    constraint rows are order one, and with such lopsided rows the
///    cheapest directions are parasitic boundary-layer and pole modes
///    that violate only the weak rows. Equilibration prices every
///    residual equally, which raises those directions well above the
///    geometric kernel and leaves a tight, resolution-coherent cluster
///    at the bottom of the non-kernel spectrum.
struct WeightedOperator {
  OperatorMatrix op;
  Eigen::VectorXd row_weight;
  Eigen::VectorXd col_weight;
};

/// A state-layout vector in the weighted units of the domain class
/// (divide by the column weight), the coordinates in which the
/// weighted operator's singular directions live.
inline Eigen::VectorXd to_weighted_units(const WeightedOperator& w,
                                         const Eigen::VectorXd& x) {
  return x.cwiseQuotient(w.col_weight);
}

inline WeightedOperator decay_weighted(const ExteriorChart& chart,
                                       const DecayProfile& prof,
                                       const OperatorMatrix& op) {
  WeightedOperator out;
  out.op.fields = op.fields;
  out.op.extras = op.extras;
  const int n = op.size();
  out.row_weight = Eigen::VectorXd::Ones(n);
  out.col_weight = Eigen::VectorXd::Ones(n);
  const int nodal = chart.nodes() * op.fields;
  for (int id = 0; id < nodal; ++id) {
    const int node = id / op.fields;
    out.col_weight[id] = std::pow(chart.radius()[node], -prof.q);
  }
  out.op.mat = op.mat;
  for (int k = 0; k < out.op.mat.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(out.op.mat, k); it;
         ++it)
      it.valueRef() *= out.col_weight[it.col()];
  for (int k = 0; k < out.op.mat.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(out.op.mat, k); it;
         ++it)
      out.row_weight[it.row()] += it.value() * it.value();
  // The accumulator starts at one, so a structurally empty row keeps
  // weight one instead of dividing by zero; subtract the seed first.
  for (int r = 0; r < n; ++r) {
    const double ss = out.row_weight[r] - 1.0;
    out.row_weight[r] = ss > 0.0 ? 1.0 / std::sqrt(ss) : 1.0;
  }
  for (int k = 0; k < out.op.mat.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(out.op.mat, k); it;
         ++it)
      it.valueRef() *= out.row_weight[it.row()];
  return out;
}

/// Smallest singular values of a column-scaled operator, with the
/// detected spectral gap. values are ascending; basis holds the matching
/// right-singular directions, orthonormal in the scaled coordinates
/// x_scaled = column_scale .* x. gap_index is the number of values below
/// the largest consecutive ratio, the numerical nullity; when no ratio
/// reaches 10 the spectrum carries no decisive gap, ambiguous is set,
/// and gap_index is zero.
struct SingularSpectrum {
  std::vector<double> values;
  int gap_index = 0;
  bool ambiguous = false;
  Eigen::MatrixXd basis;
  Eigen::VectorXd column_scale;
};

/// Fraction of the energy of a packed state-layout vector captured by
/// the first dim right-singular directions (default: the below-gap
/// block), measured in the scaled coordinates where the basis is
/// orthonormal.
inline double subspace_energy(const SingularSpectrum& spec,
                              const Eigen::VectorXd& x, int dim = -1) {
  if (dim < 0) dim = spec.gap_index;
  dim = std::min<int>(dim, static_cast<int>(spec.basis.cols()));
  Eigen::VectorXd y = spec.column_scale.cwiseProduct(x);
  const double n = y.norm();
  if (n == 0) return 0.0;
  y /= n;
  return (spec.basis.leftCols(dim).transpose() * y).squaredNorm();
}

/// The k smallest singular values of the column-scaled operator, by
/// subspace iteration with the inverse Gram map: the factorization of
/// the scaled operator A applies M = A^{-1} A^{-T}, whose dominant
/// eigenvalues are 1/sigma^2 for the smallest sigma of A. A buffer of
/// eight extra directions separates the target block, and Rayleigh-Ritz
/// values are monitored until the k targets stabilize. The bundled
/// sparse LU is used here regardless of the UMFPACK path because the
/// Gram map needs transposed solves.
inline SingularSpectrum singular_spectrum(const OperatorMatrix& op, int k,
                                          int max_sweeps = 400,
                                          double tol = 1e-9) {
  const int n = op.size();
  if (op.mat.rows() != op.mat.cols())
    throw std::invalid_argument("spectrum: operator not square");
  if (k < 1 || k > 20 || k > n)
    throw std::invalid_argument("spectrum: k out of range (1..20, <= size)");

  SingularSpectrum out;
  out.column_scale = Eigen::VectorXd::Zero(n);
  for (int c = 0; c < op.mat.outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(op.mat, c); it; ++it)
      out.column_scale[it.col()] += it.value() * it.value();
  for (int c = 0; c < n; ++c)
    out.column_scale[c] =
        out.column_scale[c] > 0 ? std::sqrt(out.column_scale[c]) : 1.0;

  Eigen::SparseMatrix<double> scaled = op.mat;
  for (int c = 0; c < scaled.outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(scaled, c); it; ++it)
      it.valueRef() /= out.column_scale[it.col()];
  scaled.makeCompressed();

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(scaled);
  if (lu.info() != Eigen::Success)
    throw std::runtime_error(
        "spectrum: factorization of the scaled operator failed");

  const int p = std::min(n, k + 8);
  Lcg rng(42);
  Eigen::MatrixXd q(n, p);
  for (int j = 0; j < p; ++j)
    for (int i = 0; i < n; ++i) q(i, j) = rng.uniform(-1.0, 1.0);
  {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(q);
    q = qr.householderQ() * Eigen::MatrixXd::Identity(n, p);
  }

  auto apply_gram = [&](const Eigen::MatrixXd& block) {
    Eigen::MatrixXd z(n, p);
    for (int j = 0; j < p; ++j) {
      const Eigen::VectorXd t = lu.transpose().solve(block.col(j).eval());
      z.col(j) = lu.solve(t);
    }
    return z;
  };

  Eigen::VectorXd prev = Eigen::VectorXd::Zero(k);
  Eigen::MatrixXd z, vecs;
  Eigen::VectorXd ritz;
  bool settled = false;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    z = apply_gram(q);
    // Rayleigh-Ritz on the current subspace: the Gram map is symmetric
    // positive, so the projected matrix is symmetrized before solving.
    Eigen::MatrixXd s = q.transpose() * z;
    s = 0.5 * (s + s.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
    if (eig.info() != Eigen::Success)
      throw std::runtime_error("spectrum: dense Ritz solve failed");
    // Eigenvalues ascend; the top k are the targets 1/sigma^2.
    ritz = eig.eigenvalues().tail(k);
    vecs = q * eig.eigenvectors();
    double change = 0;
    for (int j = 0; j < k; ++j) {
      const double denom = std::max(std::abs(ritz[j]), 1e-300);
      change = std::max(change, std::abs(ritz[j] - prev[j]) / denom);
    }
    prev = ritz;
    if (sweep > 0 && change < tol) {
      settled = true;
      break;
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(z);
    q = qr.householderQ() * Eigen::MatrixXd::Identity(n, p);
  }
  if (!settled)
    throw std::runtime_error(
        "spectrum: subspace iteration did not stabilize within " +
        std::to_string(max_sweeps) + " sweeps");

  // Ritz pairs descend in 1/sigma^2 from the tail; reverse into
  // ascending singular values with their directions.
  out.values.resize(k);
  out.basis.resize(n, k);
  for (int j = 0; j < k; ++j) {
    const double mu = std::max(ritz[k - 1 - j], 1e-300);
    out.values[j] = 1.0 / std::sqrt(mu);
    out.basis.col(j) = vecs.col(vecs.cols() - 1 - j);
  }
  double best = 0;
  for (int j = 0; j + 1 < k; ++j) {
    const double ratio =
        out.values[j + 1] / std::max(out.values[j], 1e-300);
    if (ratio > best) {
      best = ratio;
      out.gap_index = j + 1;
    }
  }
  out.ambiguous = best < 10.0;
  if (out.ambiguous) out.gap_index = 0;
  return out;
}

// ---------------------------------------------------------------------------
// Asymptotic mass flux
// ---------------------------------------------------------------------------

/// Mass flux extrapolation: single-surface values at two extraction
/// levels and the 1/r extrapolant. suspect flags radius-inconsistency
/// beyond fifty percent, the signature of non-decaying input.
struct MassFlux {
  double value = 0;
  double inner_value = 0;
  double outer_value = 0;
  double inner_radius = 0;
  double outer_radius = 0;
  bool suspect = false;
};

/// Asymptotic mass of a metric pair: the flux integral
/// sum_ij (d_i g_ij - d_j g_ii) n_j / (16 pi) over two scaled copies of
/// the boundary surface (the chart levels nearest s = 0.4 and s = 0.2),
/// extrapolated linearly in the reciprocal mean radius. Scaled copies
/// work in place of round spheres because the flux differences over
/// exhausting families decay with the deviation.
inline MassFlux adm_mass(const ExteriorChart& chart, const MetricPair& p) {
  p.validate(chart);
  const int nt = chart.ntheta(), np = chart.nphi();
  const PairDerivs pd = pair_derivs(chart, p);
  const double wang = (kPi / nt) * (2 * kPi / np);

  auto level_flux = [&](int js, double& mean_radius) {
    const double s = chart.s_of(js);
    double flux = 0, area = 0, rsum = 0;
    for (int b = 0; b < chart.boundary_nodes(); ++b) {
      // All chart levels share the angular footprint of the boundary
      // surface: positions scale by 1/s, so the level's vector area
      // element is the boundary tangent cross product over s^2.
      const Vec3& tt = chart.tangent_theta()[b];
      const Vec3& tp = chart.tangent_phi()[b];
      const Vec3 cr = cross(tt, tp);
      const int node = js * nt * np + b;
      double f[3];
      for (int j = 0; j < 3; ++j) {
        f[j] = 0;
        for (int i = 0; i < 3; ++i)
          f[j] += pd.g[pair_index[i][j]].dx[i][node] -
                  pd.g[pair_index[i][i]].dx[j][node];
      }
      const double w = wang / (s * s);
      flux += w * (f[0] * cr[0] + f[1] * cr[1] + f[2] * cr[2]);
      const double da = w * norm(cr);
      area += da;
      rsum += da * norm(chart.position()[node]);
    }
    mean_radius = rsum / area;
    return flux / (16 * kPi);
  };

  MassFlux out;
  int js_in = static_cast<int>(std::lround(0.4 * chart.ns() - 1));
  int js_out = static_cast<int>(std::lround(0.2 * chart.ns() - 1));
  js_in = std::clamp(js_in, 0, chart.ns() - 2);
  js_out = std::clamp(js_out, 0, chart.ns() - 2);
  if (js_out == js_in) js_out = std::max(0, js_in - 1);
  if (js_out == js_in) js_in = js_out + 1;

  out.inner_value = level_flux(js_in, out.inner_radius);
  out.outer_value = level_flux(js_out, out.outer_radius);
  // Two-point elimination of the 1/r correction: m(r) = m + C/r.
  out.value = (out.outer_value * out.outer_radius -
               out.inner_value * out.inner_radius) /
              (out.outer_radius - out.inner_radius);
  // Radius inconsistency is judged against the single-surface values,
  // not the extrapolant: for non-decaying input the extrapolation
  // amplifies the disagreement and would mask it.
  out.suspect = std::abs(out.outer_value - out.inner_value) >
                0.5 * std::max({std::abs(out.inner_value),
                                std::abs(out.outer_value), 1e-8});
  return out;
}

// ---------------------------------------------------------------------------
// Newton iteration
// ---------------------------------------------------------------------------

struct NewtonOptions {
  double tol = 1e-10;
  int max_iter = 30;
  double damping = 1.0;
};

/// One Newton step's record: residual norms after the step and the
/// max-norm of the applied update.
struct IterationRecord {
  double residual_max = 0;
  double residual_l2 = 0;
  double step_norm = 0;
};

/// Full account of a solve. Every field is always populated; failed
/// runs keep their partial iteration history and final-state
/// diagnostics. status is one of "converged", "diverged", "max_iter",
/// "positivity". The spectrum vectors stay empty unless a spectrum was
/// requested alongside the solve (the driver fills them).
struct SolveReport {
  std::vector<IterationRecord> iterations;
  GaugeResiduals gauge;
  double adm_mass = 0;
  bool mass_suspect = false;
  double w_norm = 0;
  std::vector<double> spectrum_pair;
  std::vector<double> spectrum_full;
  bool converged = false;
  std::string status;
};

struct NewtonResult {
  StateVector state;
  SolveReport report;
};

/// Positivity of the running iterate: the metric must stay positive
/// definite at every node (leading minors) and the potential positive.
inline bool state_positive(const ExteriorChart& chart, const StateVector& s) {
  for (int node = 0; node < chart.nodes(); ++node) {
    const Sym3 g = s.pair.metric_at(node);
    const double det2 = g[0] * g[3] - g[1] * g[1];
    if (!(g[0] > 0) || !(det2 > 0) || !(sym_det(g) > 0)) return false;
    if (!(s.pair.u_at(node) > 0)) return false;
  }
  return true;
}

/// Sup norm of the auxiliary field: the decaying grid part in the
/// max norm plus the coefficient magnitudes, which weight the
/// non-decaying Killing tail. At a genuine solution both parts vanish
/// to discretization order.
inline double w_norm_of(const StateVector& s) {
  double m = 0;
  for (const auto& comp : s.dw) m = std::max(m, max_abs(comp));
  double csum = 0;
  for (double ca : s.c) csum += std::abs(ca);
  return m + csum;
}

/// Solve the boundary value problem for the given data by the
/// frozen-Jacobian iteration on the modified square system: the
/// linearization at the flat state is factorized once and each step
/// applies state <- state - damping * (frozen inverse) residual.
/// Damping halves on residual increase, at most four times per step;
/// three consecutive non-improving steps report divergence, and loss of
/// metric or potential positivity aborts distinctly. The report always
/// carries the full iteration history, the final gauge residuals, the
/// mass, and the auxiliary-field norm.
inline NewtonResult newton_solve(const ExteriorChart& chart,
                                 const DecayProfile& prof,
                                 const GaugeFieldBasis& basis,
                                 const BartnikData& data,
                                 const NewtonOptions& opts = {}) {
  data.validate(chart);
  if (!(opts.tol > 0) || opts.max_iter < 1 ||
      !(opts.damping > 0 && opts.damping <= 1.0))
    throw std::invalid_argument("newton: invalid options");

  NewtonResult out;
  out.state = StateVector::flat(chart);
  const OperatorMatrix frozen = assemble_Lbar(chart, prof, basis);
  const LinearSolver fac(frozen);

  ResidualVector rv = residual_Tbar(chart, prof, basis, out.state, data);
  double rmax = rv.total_max();
  out.report.iterations.push_back({rmax, rv.r.norm(), 0.0});

  int bad_streak = 0;
  for (int iter = 0; iter < opts.max_iter && !(rmax <= opts.tol); ++iter) {
    const Eigen::VectorXd step = fac.solve(rv.r);
    const Eigen::VectorXd base = out.state.to_vector(chart);
    double alpha = opts.damping;
    StateVector cand;
    ResidualVector rc;
    double cmax = 0;
    bool admissible = false;
    for (int half = 0; half <= 4; ++half) {
      cand = StateVector::from_vector(chart, base - alpha * step);
      if (!state_positive(chart, cand)) {
        if (half == 4) break;
        alpha *= 0.5;
        continue;
      }
      rc = residual_Tbar(chart, prof, basis, cand, data);
      cmax = rc.total_max();
      admissible = true;
      if (cmax < rmax || half == 4) break;
      alpha *= 0.5;
    }
    if (!admissible) {
      out.report.status = "positivity";
      out.report.converged = false;
      break;
    }
    out.state = cand;
    rv = rc;
    out.report.iterations.push_back(
        {cmax, rc.r.norm(), alpha * step.cwiseAbs().maxCoeff()});
    bad_streak = cmax >= rmax ? bad_streak + 1 : 0;
    rmax = cmax;
    if (bad_streak >= 3) {
      out.report.status = "diverged";
      out.report.converged = false;
      break;
    }
  }
  if (out.report.status.empty()) {
    out.report.converged = rmax <= opts.tol;
    out.report.status = out.report.converged ? "converged" : "max_iter";
  }

  const PairDerivs pd = pair_derivs(chart, out.state.pair);
  out.report.gauge =
      static_harmonic_residual(chart, out.state.pair, pd, prof, basis);
  const MassFlux mf = adm_mass(chart, out.state.pair);
  out.report.adm_mass = mf.value;
  out.report.mass_suspect = mf.suspect;
  out.report.w_norm = w_norm_of(out.state);
  return out;
}

}  // namespace statvac
