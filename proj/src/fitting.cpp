#include "kerr/fitting.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>

namespace kerr {

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
}

double FitResult::param(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return parameters(static_cast<int>(i));
  throw std::invalid_argument("FitResult: unknown parameter " + name);
}

double FitResult::sigma(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return uncertainties(static_cast<int>(i));
  throw std::invalid_argument("FitResult: unknown parameter " + name);
}

double erfcx(double x) {
  if (std::isnan(x)) return x;
  if (x < 0.0) return 2.0 * std::exp(x * x) - erfcx(-x);  // overflows below ~ -26.6
  if (x < 4.0) return std::exp(x * x) * std::erfc(x);
  /*
   * Mills-ratio continued fraction, z = sqrt(2) x:
   *   erfcx(x) = sqrt(2/pi) / (z + 1/(z + 2/(z + 3/(z + ...))))
   * Monotone convergence for z >= 5.6; depth 60 reaches double precision and
   * never forms x^2, so there is no overflow for any large x.
   */
  const double z = std::sqrt(2.0) * x;
  double f = 0.0;
  for (int k = 60; k >= 1; --k) f = k / (z + f);
  return std::sqrt(2.0 / M_PI) / (z + f);
}

double bunching_model(double t, double a, double tau, double irf_fwhm) {
  if (!(tau > 0.0)) throw std::invalid_argument("bunching_model: tau must be > 0");
  t = std::abs(t);
  if (irf_fwhm <= 0.0) return 1.0 + a * std::exp(-t / tau);

  /*
   * exp(-|t|/tau) convolved with a unit-area Gaussian of std sigma:
   *   (f*G)(t) = (1/2) e^{-t^2/2s^2} [erfcx(u1) + erfcx(u2)],
   *   u_{1,2} = s/(sqrt2 tau) -/+ ... u1 = s/(sqrt2 tau) - t/(sqrt2 s),
   *             u2 = s/(sqrt2 tau) + t/(sqrt2 s).
   * For t >> s, u1 is large negative and erfcx(u1) would overflow; folding
   * the 2 e^{u1^2} part of its reflection into the prefactor leaves the bare
   * exponential tail plus a vanishing correction.
   */
  const double s = irf_fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  const double c = s / (std::sqrt(2.0) * tau);
  const double w = t / (std::sqrt(2.0) * s);
  const double u1 = c - w;
  const double u2 = c + w;
  double conv;
  if (u1 < -4.0) {
    conv = std::exp(s * s / (2.0 * tau * tau) - t / tau) +
           0.5 * std::exp(-w * w) * (erfcx(u2) - erfcx(-u1));
  } else {
    conv = 0.5 * std::exp(-w * w) * (erfcx(u1) + erfcx(u2));
  }
  return 1.0 + a * conv;
}

namespace {

struct LmOutcome {
  VectorR x;
  Eigen::MatrixXd cov;
  double cost = 0.0;  // sum of squared residuals at the solution
  bool converged = false;
  bool degenerate = false;
};

/*
 * Levenberg-Marquardt with forward-difference Jacobians and multiplicative
 * damping on the diagonal of J^T J (Marquardt scaling, so wildly different
 * parameter magnitudes are handled without explicit rescaling).
 */
template <class Residual>
LmOutcome lm_minimize(const Residual& residual, const VectorR& x0) {
  constexpr int max_iter = 500;
  constexpr double step_tol = 1e-10;

  LmOutcome out;
  out.x = x0;
  VectorR r = residual(out.x);
  out.cost = r.squaredNorm();
  const int n = static_cast<int>(r.size());
  const int p = static_cast<int>(x0.size());
  Eigen::MatrixXd jac(n, p);
  double lam = 1e-3;

  auto fill_jacobian = [&](const VectorR& at, const VectorR& r0) {
    for (int j = 0; j < p; ++j) {
      const double h = 1.49e-8 * std::max(std::abs(at(j)), 1.49e-8);
      VectorR shifted = at;
      shifted(j) += h;
      jac.col(j) = (residual(shifted) - r0) / h;
    }
  };

  for (int iter = 0; iter < max_iter && !out.converged; ++iter) {
    fill_jacobian(out.x, r);
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const VectorR jtr = jac.transpose() * r;
    bool stepped = false;
    while (lam <= 1e12) {
      Eigen::MatrixXd damped = jtj;
      for (int j = 0; j < p; ++j) damped(j, j) += lam * std::max(jtj(j, j), 1e-300);
      const VectorR delta = damped.ldlt().solve(-jtr);
      const double rel = delta.norm() / (out.x.norm() + step_tol);
      const VectorR xn = out.x + delta;
      const VectorR rn = residual(xn);
      if (rn.squaredNorm() < out.cost) {
        out.x = xn;
        r = rn;
        out.cost = rn.squaredNorm();
        lam = std::max(0.1 * lam, 1e-12);
        stepped = true;
        if (rel < step_tol) out.converged = true;
        break;
      }
      if (rel < step_tol) {  // cannot move by more than the resolution: done
        out.converged = true;
        break;
      }
      lam *= 10.0;
    }
    if (!stepped) break;
  }

  fill_jacobian(out.x, r);
  const Eigen::MatrixXd jtj = jac.transpose() * jac;
  // equilibrate before inverting: raw J^T J is singular to working precision
  // whenever parameter magnitudes differ by ~1e8 (e.g. amplitudes vs times in
  // seconds), even though the correlation structure is perfectly benign
  VectorR d(p);
  for (int j = 0; j < p; ++j)
    d(j) = jtj(j, j) > 0.0 ? 1.0 / std::sqrt(jtj(j, j)) : 1.0;
  const Eigen::MatrixXd scaled = d.asDiagonal() * jtj * d.asDiagonal();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(scaled);
  if (lu.isInvertible()) {
    out.cov = d.asDiagonal() * lu.inverse() * d.asDiagonal();
  } else {
    out.degenerate = true;
    out.cov = Eigen::MatrixXd::Constant(p, p, kNan);
  }
  return out;
}

// Package an LM outcome; unweighted covariances are scaled by chi^2/dof.
FitResult finalize_fit(std::vector<std::string> names, const LmOutcome& lm,
                       bool weighted, int n_points) {
  FitResult fit;
  fit.names = std::move(names);
  fit.parameters = lm.x;
  fit.residual_norm = std::sqrt(lm.cost);
  fit.dof = n_points - static_cast<int>(lm.x.size());
  fit.converged = lm.converged;
  fit.degenerate = lm.degenerate;
  const int p = static_cast<int>(lm.x.size());
  fit.uncertainties = VectorR::Constant(p, kNan);
  if (!lm.degenerate && fit.dof >= 0) {
    const double scale = weighted ? 1.0 : (fit.dof > 0 ? lm.cost / fit.dof : kNan);
    for (int j = 0; j < p; ++j)
      fit.uncertainties(j) = std::sqrt(lm.cov(j, j) * scale);
  }
  return fit;
}

}  // namespace

FitResult fit_lorentzian(const VectorR& x, const VectorR& y) {
  const int n = static_cast<int>(x.size());
  if (n != y.size()) throw std::invalid_argument("fit_lorentzian: size mismatch");
  if (n < 5) throw std::invalid_argument("fit_lorentzian: need >= 5 points");

  int imax = 0;
  y.maxCoeff(&imax);
  const double ymin = y.minCoeff(), ymax = y.maxCoeff();
  const double span = x.maxCoeff() - x.minCoeff();
  const std::vector<std::string> names{"center", "fwhm", "amplitude", "offset"};

  if (ymax - ymin <= 1e-14 * std::max(1.0, std::abs(ymax))) {
    FitResult flat;  // featureless input: nothing to locate
    flat.names = names;
    flat.parameters = VectorR(4);
    flat.parameters << x.mean(), span / 2.0, 0.0, ymin;
    flat.uncertainties = VectorR::Constant(4, kNan);
    flat.dof = n - 4;
    flat.degenerate = true;
    return flat;
  }

  // half-maximum span seeds the width
  double lo = x(imax), hi = x(imax);
  for (int i = 0; i < n; ++i) {
    if (y(i) > ymin + 0.5 * (ymax - ymin)) {
      lo = std::min(lo, x(i));
      hi = std::max(hi, x(i));
    }
  }
  VectorR seed(4);
  seed << x(imax), std::max(hi - lo, span / 20.0), ymax - ymin, ymin;

  auto residual = [&](const VectorR& q) {
    const double hw2 = 0.25 * q(1) * q(1);  // (fwhm/2)^2, sign-invariant
    VectorR r(n);
    for (int i = 0; i < n; ++i) {
      const double dx = x(i) - q(0);
      r(i) = q(3) + q(2) * hw2 / (dx * dx + hw2) - y(i);
    }
    return r;
  };

  LmOutcome lm = lm_minimize(residual, seed);
  lm.x(1) = std::abs(lm.x(1));
  return finalize_fit(names, lm, /*weighted=*/false, n);
}

FitResult fit_bunching(const CorrelationCurve& curve, double irf_fwhm) {
  const int n = static_cast<int>(curve.delays.size());
  if (n < 10) throw std::invalid_argument("fit_bunching: need >= 10 points");
  if (curve.values.size() != n)
    throw std::invalid_argument("fit_bunching: size mismatch");
  const bool weighted =
      curve.errors.size() == n && (curve.errors.array() > 0.0).all();

  auto residual = [&](const VectorR& q) {
    const double a = q(0), tau = std::abs(q(1));
    VectorR r(n);
    for (int i = 0; i < n; ++i) {
      r(i) = bunching_model(curve.delays(i), a, std::max(tau, 1e-300), irf_fwhm) -
             curve.values(i);
      if (weighted) r(i) /= curve.errors(i);
    }
    return r;
  };

  const double span = curve.delays(n - 1) - curve.delays(0);
  const double a0 = std::max(curve.values.maxCoeff() - 1.0, 1e-3);
  LmOutcome best;
  bool have = false;
  for (double frac : {0.25, 1.0 / 16.0, 1.0 / 64.0}) {
    VectorR seed(2);
    seed << a0, frac * span;
    LmOutcome lm = lm_minimize(residual, seed);
    if (!have || lm.cost < best.cost) {
      best = lm;
      have = true;
    }
  }
  best.x(1) = std::abs(best.x(1));

  FitResult fit = finalize_fit({"a", "tau"}, best, weighted, n);
  double resolution = 0.0;  // smallest positive delay
  for (int i = 0; i < n; ++i)
    if (curve.delays(i) > 0.0) {
      resolution = curve.delays(i);
      break;
    }
  if (resolution > 0.0 && fit.parameters(1) < 0.5 * resolution)
    fit.degenerate = true;  // decay faster than the sampling can resolve
  return fit;
}

FitResult fit_gap_scaling(const std::vector<std::pair<double, double>>& f_tau,
                          double f_c, double window_lo, double window_hi,
                          GapModel model, const VectorR& sigma_tau) {
  if (!(f_c > 0.0)) throw std::invalid_argument("fit_gap_scaling: f_c must be > 0");
  if (!(window_lo < window_hi))
    throw std::invalid_argument("fit_gap_scaling: window_lo must be < window_hi");
  if (window_lo <= 0.0 && window_hi >= 0.0)
    throw std::invalid_argument(
        "fit_gap_scaling: window must not straddle x = 0 (scaling is one-sided)");
  if (sigma_tau.size() != 0 &&
      sigma_tau.size() != static_cast<Eigen::Index>(f_tau.size()))
    throw std::invalid_argument("fit_gap_scaling: sigma_tau size mismatch");

  // transformed ordinates: Y = log tau against X = log|x| or |x|
  std::vector<double> xs, ys, ws;
  for (std::size_t i = 0; i < f_tau.size(); ++i) {
    const double x = f_tau[i].first / f_c - 1.0;
    const double tau = f_tau[i].second;
    if (x < window_lo || x > window_hi || !(tau > 0.0)) continue;
    xs.push_back(model == GapModel::PowerLaw ? std::log(std::abs(x)) : std::abs(x));
    ys.push_back(std::log(tau));
    if (sigma_tau.size() != 0) {
      const double st = sigma_tau(static_cast<Eigen::Index>(i));
      if (!(st > 0.0)) throw std::invalid_argument("fit_gap_scaling: sigma_tau <= 0");
      ws.push_back(tau * tau / (st * st));  // var(log tau) = (sigma/tau)^2
    } else {
      ws.push_back(1.0);
    }
  }
  const int n = static_cast<int>(xs.size());
  if (n < 4)
    throw std::runtime_error("fit_gap_scaling: window keeps " + std::to_string(n) +
                             " points, need >= 4");

  double sw = 0, swx = 0, swxx = 0, swy = 0, swxy = 0;
  for (int i = 0; i < n; ++i) {
    sw += ws[i];
    swx += ws[i] * xs[i];
    swxx += ws[i] * xs[i] * xs[i];
    swy += ws[i] * ys[i];
    swxy += ws[i] * xs[i] * ys[i];
  }
  const double det = sw * swxx - swx * swx;

  FitResult fit;
  fit.names = {"log_c", model == GapModel::PowerLaw ? "alpha" : "rate"};
  fit.parameters = VectorR::Zero(2);
  fit.uncertainties = VectorR::Constant(2, kNan);
  fit.dof = n - 2;
  if (!(det > 1e-300 * std::max(1.0, sw * swxx))) {
    fit.degenerate = true;  // all abscissae coincide
    return fit;
  }
  const double slope = (sw * swxy - swx * swy) / det;
  const double intercept = (swxx * swy - swx * swxy) / det;
  fit.parameters << intercept, slope;

  double chi2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = ys[i] - intercept - slope * xs[i];
    chi2 += ws[i] * r * r;
  }
  fit.residual_norm = std::sqrt(chi2);
  fit.converged = true;
  const double scale = sigma_tau.size() != 0 ? 1.0 : chi2 / fit.dof;
  fit.uncertainties << std::sqrt(swxx / det * scale), std::sqrt(sw / det * scale);
  return fit;
}

FitResult fit_quadratic(const VectorR& x, const VectorR& y, const VectorR& sigma) {
  const int n = static_cast<int>(x.size());
  if (n != y.size()) throw std::invalid_argument("fit_quadratic: size mismatch");
  if (sigma.size() != 0 && sigma.size() != n)
    throw std::invalid_argument("fit_quadratic: sigma size mismatch");
  if (n < 3) throw std::invalid_argument("fit_quadratic: need >= 3 points");
  const bool weighted = sigma.size() != 0;

  Eigen::MatrixXd design(n, 3);
  VectorR rhs(n);
  for (int i = 0; i < n; ++i) {
    const double w = weighted ? 1.0 / sigma(i) : 1.0;
    if (!(w > 0.0) || !std::isfinite(w))
      throw std::invalid_argument("fit_quadratic: sigma must be positive");
    design(i, 0) = w;
    design(i, 1) = w * x(i);
    design(i, 2) = w * x(i) * x(i);
    rhs(i) = w * y(i);
  }
  const Eigen::MatrixXd gram = design.transpose() * design;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);

  FitResult fit;
  fit.names = {"c0", "c1", "c2"};
  fit.dof = n - 3;
  fit.uncertainties = VectorR::Constant(3, kNan);
  if (!lu.isInvertible()) {
    fit.parameters = VectorR::Zero(3);
    fit.degenerate = true;
    return fit;
  }
  fit.parameters = lu.solve(design.transpose() * rhs);
  const double chi2 = (design * fit.parameters - rhs).squaredNorm();
  fit.residual_norm = std::sqrt(chi2);
  fit.converged = true;
  const Eigen::MatrixXd cov = lu.inverse();
  const double scale = weighted ? 1.0 : (fit.dof > 0 ? chi2 / fit.dof : kNan);
  for (int j = 0; j < 3; ++j) fit.uncertainties(j) = std::sqrt(cov(j, j) * scale);
  return fit;
}

CriticalDrive critical_drive(const std::vector<std::pair<double, double>>& f_tau) {
  if (f_tau.size() < 3)
    throw std::invalid_argument("critical_drive: need >= 3 scan points");
  std::size_t imax = 0;
  for (std::size_t i = 1; i < f_tau.size(); ++i)
    if (f_tau[i].second > f_tau[imax].second) imax = i;
  if (imax == 0 || imax + 1 == f_tau.size())
    return {f_tau[imax].first, true};  // maximum on the scan boundary

  // vertex of the parabola through the three largest-tau points
  std::vector<std::size_t> order(f_tau.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + 3, order.end(),
                    [&](std::size_t a, std::size_t b) { return f_tau[a].second > f_tau[b].second; });
  std::array<std::pair<double, double>, 3> top{f_tau[order[0]], f_tau[order[1]], f_tau[order[2]]};
  std::sort(top.begin(), top.end());
  const auto& [f0, t0] = top[0];
  const auto& [f1, t1] = top[1];
  const auto& [f2, t2] = top[2];
  const double d1 = (t1 - t0) / (f1 - f0);
  const double d2 = (t2 - t1) / (f2 - f1);
  const double curv = (d2 - d1) / (f2 - f0);
  if (!(curv < 0.0)) return {f_tau[imax].first, false};  // flat or non-concave triple
  const double vertex = 0.5 * (f0 + f1) - d1 / (2.0 * curv);
  // keep the estimate inside the bracket around the discrete maximum
  return {std::clamp(vertex, f_tau[imax - 1].first, f_tau[imax + 1].first), false};
}

}  // namespace kerr
