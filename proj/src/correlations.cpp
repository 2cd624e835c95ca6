#include "kerr/correlations.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <unsupported/Eigen/MatrixFunctions>

namespace kerr {

namespace {

double inf_norm(const SparseC& a) {
  VectorR row_sums = VectorR::Zero(a.rows());
  for (int col = 0; col < a.outerSize(); ++col)
    for (SparseC::InnerIterator it(a, col); it; ++it)
      row_sums(it.row()) += std::abs(it.value());
  return row_sums.size() ? row_sums.maxCoeff() : 0.0;
}

/*
 * Krylov propagation of w <- exp(A tau) w, substepping adaptively until the
 * requested horizon t is covered (Expokit-style).  Per substep an order-m
 * Arnoldi basis V, H is built and the small exponential is evaluated on the
 * augmented (m+2) matrix
 *
 *     M = [ H      0 0 ]
 *         [ b e_m' 0 0 ]      b = last subdiagonal element,
 *         [ 0      1 0 ]
 *
 * whose first column yields both the corrected update
 *     w = beta (V F(0:m-1,0) + F(m,0) v_m)
 * and the two local error indicators F(m,0), F(m+1,0).  The error budget is
 * distributed proportionally to tau so the accumulated error stays below
 * rtol * ||w_in||.  A breakdown of the basis means the Krylov space is
 * invariant and the exponential is exact: the substep jumps to the horizon.
 */
VectorC krylov_expmv(const SparseC& a, const VectorC& v_in, double t, double rtol) {
  if (t < 0.0) throw std::invalid_argument("propagate: negative time");
  const double beta0 = v_in.norm();
  if (t == 0.0 || beta0 == 0.0) return v_in;

  const int n = static_cast<int>(a.rows());
  const int m = std::max(1, std::min(30, n - 1));
  const double anorm = inf_norm(a);
  const double tol_rate = rtol * beta0 / t;  // allowed error per unit time

  VectorC w = v_in;
  double t_done = 0.0;
  double tau = anorm > 0.0 ? std::min(t, static_cast<double>(m) / anorm) : t;
  int budget = 200000;

  while (t_done < t) {
    if (--budget < 0) throw std::runtime_error("propagate: substep budget exhausted");
    tau = std::min(tau, t - t_done);
    const double beta = w.norm();
    if (beta == 0.0) break;

    MatrixC basis(n, m + 1);
    MatrixC hess = MatrixC::Zero(m + 2, m + 2);
    basis.col(0) = w / beta;
    int s = m;
    bool invariant = false;
    for (int j = 0; j < m; ++j) {
      VectorC p = a * basis.col(j);
      const double raw = p.norm();
      VectorC h1 = basis.leftCols(j + 1).adjoint() * p;
      p.noalias() -= basis.leftCols(j + 1) * h1;
      VectorC h2 = basis.leftCols(j + 1).adjoint() * p;
      p.noalias() -= basis.leftCols(j + 1) * h2;
      hess.block(0, j, j + 1, 1) = h1 + h2;
      const double b = p.norm();
      if (b <= 1e-12 * std::max(raw, 1e-300)) {
        s = j + 1;
        invariant = true;
        break;
      }
      hess(j + 1, j) = b;
      basis.col(j + 1) = p / b;
    }

    if (invariant) {
      tau = t - t_done;  // subspace invariant: exponential is exact
      MatrixC f = (tau * hess.topLeftCorner(s, s)).exp();
      w = beta * (basis.leftCols(s) * f.col(0));
      break;
    }

    const double avnorm = (a * basis.col(s)).norm();
    MatrixC aug = hess.topLeftCorner(s + 2, s + 2);
    aug(s + 1, s) = 1.0;

    for (int reject = 0;; ++reject) {
      if (reject > 60 || tau < 1e-14 * t)
        throw std::runtime_error("propagate: step size underflow");
      MatrixC f = (tau * aug).exp();
      const double err1 = beta * std::abs(f(s, 0));
      const double err2 = beta * std::abs(f(s + 1, 0)) * avnorm;
      double err_loc;
      double xm;
      if (err1 > 10.0 * err2) {
        err_loc = err2;
        xm = 1.0 / s;
      } else if (err1 > err2) {
        err_loc = err1 * err2 / (err1 - err2);
        xm = 1.0 / s;
      } else {
        err_loc = err1;
        xm = 1.0 / (s - 1);
      }
      err_loc = std::max(err_loc, 1e-300);
      const double allowed = 1.2 * tau * tol_rate;
      const double tau_suggest = 0.9 * tau * std::pow(tau * tol_rate / err_loc, xm);
      if (err_loc <= allowed) {
        w = beta * (basis.leftCols(s) * f.block(0, 0, s, 1) + f(s, 0) * basis.col(s));
        t_done += tau;
        tau = std::clamp(tau_suggest, 0.1 * tau, 10.0 * tau);
        break;
      }
      tau = std::clamp(tau_suggest, 0.05 * tau, 0.9 * tau);
    }
  }
  return w;
}

void check_delays(const VectorR& delays) {
  if (delays.size() < 1) throw std::invalid_argument("correlation curve: empty delay grid");
  if (delays(0) != 0.0)
    throw std::invalid_argument("correlation curve: regression delays must start at 0");
  for (int i = 1; i < delays.size(); ++i)
    if (!(delays(i) > delays(i - 1)))
      throw std::invalid_argument("correlation curve: delays must increase strictly");
}

// tr(a^+a M) for a vectorized matrix, without materializing M
double number_trace(const VectorC& v, int d) {
  double acc = 0.0;
  for (int k = 0; k < d; ++k) acc += k * v(k * (d + 1)).real();
  return acc;
}

// tr(a M) = sum_k sqrt(k+1) M(k+1, k)
cxd lowering_trace(const VectorC& v, int d) {
  cxd acc = 0.0;
  for (int k = 0; k + 1 < d; ++k) acc += std::sqrt(k + 1.0) * v((k + 1) + d * k);
  return acc;
}

}  // namespace

double g2_zero(const QuantumState& state) {
  const double nbar = mean_photon_number(state);
  if (nbar <= 0.0)
    throw std::runtime_error("g2_zero: undefined, mean photon number is zero");
  double aa = 0.0;  // <a+ a+ a a>
  for (int k = 0; k < state.dim(); ++k)
    aa += static_cast<double>(k) * (k - 1.0) * state.rho()(k, k).real();
  return aa / (nbar * nbar);
}

VectorR default_delay_grid(double adr, double gamma, int points) {
  if (!(adr > 0.0) || !(gamma > 0.0) || points < 2)
    throw std::invalid_argument("default_delay_grid: bad arguments");
  const double lo = std::log(1e-2 / gamma);
  const double hi = std::log(50.0 / adr);
  if (hi <= lo) throw std::invalid_argument("default_delay_grid: degenerate span");
  VectorR grid(points + 1);
  grid(0) = 0.0;
  for (int i = 0; i < points; ++i)
    grid(i + 1) = std::exp(lo + (hi - lo) * i / (points - 1));
  return grid;
}

VectorC propagate(const Superoperator& liouv, const VectorC& v, double t, double rtol) {
  if (v.size() != liouv.dim()) throw std::invalid_argument("propagate: size mismatch");
  return krylov_expmv(liouv.mat, v, t, rtol);
}

CorrelationCurve g2_curve(const Superoperator& liouv, const QuantumState& rho_ss,
                          const VectorR& delays) {
  check_delays(delays);
  const int d = liouv.space.dim();
  const double nbar = mean_photon_number(rho_ss);
  if (nbar <= 0.0) throw std::runtime_error("g2_curve: mean photon number is zero");

  const MatrixC a = annihilation(liouv.space);
  const MatrixC conditioned = a * rho_ss.rho() * a.adjoint();
  VectorC v = vectorize(conditioned);

  CorrelationCurve curve;
  curve.kind = CurveKind::G2;
  curve.delays = delays;
  curve.values.resize(delays.size());
  curve.values(0) = number_trace(v, d) / (nbar * nbar);
  for (int i = 1; i < delays.size(); ++i) {
    v = propagate(liouv, v, delays(i) - delays(i - 1));
    curve.values(i) = number_trace(v, d) / (nbar * nbar);
  }
  return curve;
}

CorrelationCurve g2_curve(const SystemParams& params, const FockSpace& space,
                          const VectorR& delays) {
  const Superoperator liouv = build_liouvillian(params, space);
  return g2_curve(liouv, steady_state(liouv), delays);
}

CorrelationCurve g1_curve(const Superoperator& liouv, const QuantumState& rho_ss,
                          const VectorR& delays, G1Part part) {
  check_delays(delays);
  const int d = liouv.space.dim();
  const double nbar = mean_photon_number(rho_ss);
  if (nbar <= 0.0) throw std::runtime_error("g1_curve: mean photon number is zero");

  const MatrixC a = annihilation(liouv.space);
  const MatrixC conditioned = rho_ss.rho() * a.adjoint();
  VectorC v = vectorize(conditioned);

  auto reduce = [&](const VectorC& vec) {
    const cxd tr = lowering_trace(vec, d);
    return (part == G1Part::Modulus ? std::abs(tr) : tr.real()) / nbar;
  };

  CorrelationCurve curve;
  curve.kind = CurveKind::G1;
  curve.delays = delays;
  curve.values.resize(delays.size());
  curve.values(0) = reduce(v);
  for (int i = 1; i < delays.size(); ++i) {
    v = propagate(liouv, v, delays(i) - delays(i - 1));
    curve.values(i) = reduce(v);
  }
  return curve;
}

CorrelationCurve g1_curve(const SystemParams& params, const FockSpace& space,
                          const VectorR& delays, G1Part part) {
  const Superoperator liouv = build_liouvillian(params, space);
  return g1_curve(liouv, steady_state(liouv), delays, part);
}

}  // namespace kerr
