#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>

namespace kerr {

namespace detail {
inline double ode_norm(double x) { return std::abs(x); }
inline double ode_norm(const std::complex<double>& x) { return std::abs(x); }
template <class V>
double ode_norm(const V& v) { return v.norm(); }
}  // namespace detail

// Adaptive Dormand-Prince RK5(4) integrator for non-stiff flows.  State must
// support scalar multiplication and addition (double, complex, Eigen vectors).
// Integrates rhs(t, y) from t0 to t1; *step_io carries the trial step across
// calls when provided.  Throws on step-size underflow.
template <class State, class Rhs>
State integrate_rk45(Rhs&& rhs, State y, double t0, double t1, double rtol,
                     double atol = 1e-12, double* step_io = nullptr) {
  if (t1 <= t0) return y;

  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                          a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                          a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  // difference between the 5th- and embedded 4th-order weights
  static constexpr double e1 = b1 - 5179.0 / 57600, e3 = b3 - 7571.0 / 16695,
                          e4 = b4 - 393.0 / 640, e5 = b5 + 92097.0 / 339200,
                          e6 = b6 - 187.0 / 2100, e7 = -1.0 / 40;

  double h = step_io && *step_io > 0 ? *step_io : (t1 - t0) / 100.0;
  double t = t0;
  const double h_min = 1e-14 * (t1 - t0);

  while (t < t1) {
    h = std::min(h, t1 - t);
    if (h < h_min) throw std::runtime_error("integrate_rk45: step size underflow");

    State k1 = rhs(t, y);
    State k2 = rhs(t + h * a21, State(y + h * a21 * k1));
    State k3 = rhs(t + h * 0.3, State(y + h * (a31 * k1 + a32 * k2)));
    State k4 = rhs(t + h * 0.8, State(y + h * (a41 * k1 + a42 * k2 + a43 * k3)));
    State k5 = rhs(t + h * (8.0 / 9),
                   State(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4)));
    State k6 = rhs(t + h, State(y + h * (a61 * k1 + a62 * k2 + a63 * k3 +
                                         a64 * k4 + a65 * k5)));
    State y5 = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    State k7 = rhs(t + h, y5);
    State err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    const double scale =
        atol + rtol * std::max(detail::ode_norm(y), detail::ode_norm(y5));
    const double ratio = detail::ode_norm(err) / scale;
    if (ratio <= 1.0) {
      t += h;
      y = y5;
      h *= std::clamp(0.9 * std::pow(std::max(ratio, 1e-10), -0.2), 1.0, 5.0);
    } else {
      h *= std::clamp(0.9 * std::pow(ratio, -0.2), 0.2, 0.9);
    }
  }
  if (step_io) *step_io = h;
  return y;
}

}  // namespace kerr
