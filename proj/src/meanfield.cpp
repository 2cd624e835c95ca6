#include "kerr/meanfield.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "kerr/ode.hpp"

namespace kerr {

namespace {

// alpha for a given density: alpha = F (D - i gamma/2) / (D^2 + gamma^2/4),
// D = delta - u n.  Satisfies |alpha|^2 = n when n solves the cubic.
cxd amplitude_from_density(const SystemParams& p, double n) {
  const double dd = p.delta - p.u * n;
  const double denom = dd * dd + 0.25 * p.gamma * p.gamma;
  return p.f * cxd(dd, -0.5 * p.gamma) / denom;
}

MeanFieldRoot classify(const SystemParams& p, double n) {
  MeanFieldRoot root;
  root.n = n;
  root.alpha = amplitude_from_density(p, n);
  const double x = root.alpha.real();
  const double y = root.alpha.imag();
  const double dd = p.delta - p.u * n;
  Eigen::Matrix2d jac;
  jac << -0.5 * p.gamma + 2.0 * p.u * x * y, -dd + 2.0 * p.u * y * y,
      dd - 2.0 * p.u * x * x, -0.5 * p.gamma - 2.0 * p.u * x * y;
  const Eigen::Vector2cd eigs = jac.eigenvalues();
  const double re0 = eigs(0).real();
  const double re1 = eigs(1).real();
  root.marginal = std::min(std::abs(re0), std::abs(re1)) < 1e-10;
  const bool stable = std::max(re0, re1) < 0.0 && !root.marginal;
  root.stability = stable ? RootStability::Stable : RootStability::Unstable;
  return root;
}

double cubic_residual(const SystemParams& p, double n) {
  const double dd = p.delta - p.u * n;
  return n * (dd * dd + 0.25 * p.gamma * p.gamma) - p.f * p.f;
}

double cubic_residual_prime(const SystemParams& p, double n) {
  const double dd = p.delta - p.u * n;
  return dd * dd + 0.25 * p.gamma * p.gamma - 2.0 * p.u * n * dd;
}

}  // namespace

MeanFieldBranch steady_amplitudes(const SystemParams& params) {
  params.validate();
  MeanFieldBranch branch;
  const double g2 = 0.25 * params.gamma * params.gamma;

  if (params.u == 0.0) {
    const double n = params.f * params.f / (params.delta * params.delta + g2);
    branch.roots.push_back(classify(params, n));
    return branch;
  }
  if (params.f == 0.0) {
    branch.roots.push_back(classify(params, 0.0));
    return branch;
  }

  // monic cubic n^3 + c2 n^2 + c1 n + c0, solved via companion eigenvalues
  const double u2 = params.u * params.u;
  const double c2 = -2.0 * params.delta / params.u;
  const double c1 = (params.delta * params.delta + g2) / u2;
  const double c0 = -params.f * params.f / u2;
  Eigen::Matrix3d companion = Eigen::Matrix3d::Zero();
  companion(1, 0) = 1.0;
  companion(2, 1) = 1.0;
  companion(0, 2) = -c0;
  companion(1, 2) = -c1;
  companion(2, 2) = -c2;
  const Eigen::Vector3cd roots = companion.eigenvalues();

  std::vector<double> real_roots;
  for (int i = 0; i < 3; ++i) {
    const double scale = std::max(1.0, std::abs(roots(i).real()));
    if (std::abs(roots(i).imag()) > 1e-8 * scale) continue;
    double n = roots(i).real();
    // Newton polish on the physical (unscaled) cubic
    for (int it = 0; it < 3; ++it) {
      const double fp = cubic_residual_prime(params, n);
      if (fp == 0.0) break;
      n -= cubic_residual(params, n) / fp;
    }
    if (n < 0.0) {
      if (n > -1e-12) n = 0.0;
      else continue;  // no negative densities exist for this cubic; rounding artifact
    }
    real_roots.push_back(n);
  }
  std::sort(real_roots.begin(), real_roots.end());
  for (double n : real_roots) branch.roots.push_back(classify(params, n));
  return branch;
}

std::optional<std::pair<double, double>> bistable_window(double delta, double u,
                                                         double gamma) {
  if (!(u > 0.0)) throw std::invalid_argument("bistable_window: u must be > 0");
  if (!(gamma > 0.0)) throw std::invalid_argument("bistable_window: gamma must be > 0");
  const double disc = delta * delta - 0.75 * gamma * gamma;
  if (disc <= 0.0) return std::nullopt;  // folds merge at delta = sqrt(3)/2 gamma

  auto f2_at = [&](double n) {
    const double dd = delta - u * n;
    return n * (dd * dd + 0.25 * gamma * gamma);
  };
  const double n_minus = (4.0 * delta - 2.0 * std::sqrt(disc)) / (6.0 * u);
  const double n_plus = (4.0 * delta + 2.0 * std::sqrt(disc)) / (6.0 * u);
  const double f_high = std::sqrt(f2_at(n_minus));  // local max of F^2(n)
  const double f_low = std::sqrt(f2_at(n_plus));    // local min of F^2(n)
  if (!(f_low < f_high)) return std::nullopt;
  return std::make_pair(f_low, f_high);
}

std::vector<RampPoint> hysteresis_ramp(const SystemParams& params,
                                       const TriangularRamp& ramp,
                                       double sample_dt, double rtol,
                                       std::optional<cxd> alpha0) {
  params.validate();
  if (!(ramp.period > 0.0) || !(sample_dt > 0.0) || sample_dt > ramp.period)
    throw std::invalid_argument("hysteresis_ramp: bad ramp/sampling parameters");

  auto drive_at = [&](double t) {
    const double half = 0.5 * ramp.period;
    const double frac = t <= half ? t / half : (ramp.period - t) / half;
    return ramp.f_start + (ramp.f_peak - ramp.f_start) * frac;
  };
  auto rhs = [&](double t, const cxd& alpha) {
    const double n = std::norm(alpha);
    return cxd(0.0, 1.0) * (params.delta - params.u * n) * alpha -
           0.5 * params.gamma * alpha - cxd(0.0, 1.0) * drive_at(t);
  };

  // start on the (unique or lowest) steady branch at the ramp foot
  cxd alpha;
  if (alpha0) {
    alpha = *alpha0;
  } else {
    SystemParams start = params;
    start.f = drive_at(0.0);
    alpha = steady_amplitudes(start).roots.front().alpha;
  }

  std::vector<RampPoint> trace;
  const int samples = static_cast<int>(std::floor(ramp.period / sample_dt)) + 1;
  trace.reserve(samples);
  trace.push_back({0.0, std::norm(alpha)});
  double step = 0.0;
  for (int i = 1; i < samples; ++i) {
    const double t0 = (i - 1) * sample_dt;
    const double t1 = i * sample_dt;
    alpha = integrate_rk45(rhs, alpha, t0, t1, rtol, 1e-14, &step);
    trace.push_back({t1, std::norm(alpha)});
  }
  return trace;
}

}  // namespace kerr
