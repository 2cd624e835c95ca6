#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "kerr/fock.hpp"

namespace kerr {

// Classical steady states of dalpha/dt = i(delta - u|alpha|^2)alpha
//                                        - (gamma/2)alpha - i f.
// Photon densities n = |alpha|^2 solve the cubic
//   u^2 n^3 - 2 delta u n^2 + (delta^2 + gamma^2/4) n - f^2 = 0.
enum class RootStability { Stable, Unstable };

struct MeanFieldRoot {
  double n = 0.0;
  cxd alpha{0.0, 0.0};
  RootStability stability = RootStability::Stable;
  bool marginal = false;  // |Re eig| of the Jacobian below 1e-10
};

struct MeanFieldBranch {
  std::vector<MeanFieldRoot> roots;  // ascending in n; size 1 or 3
};

MeanFieldBranch steady_amplitudes(const SystemParams& params);

// Drive interval (F_low, F_high) with three mean-field roots; empty exactly
// when delta/gamma <= sqrt(3)/2 (fold points merge at the threshold).
std::optional<std::pair<double, double>> bistable_window(double delta, double u,
                                                         double gamma = 1.0);

// Triangular drive ramp F(t): f_start -> f_peak -> f_start over one period.
struct TriangularRamp {
  double f_start = 0.0;
  double f_peak = 1.0;
  double period = 100.0;
};

struct RampPoint {
  double t = 0.0;
  double n = 0.0;
};

// Integrate the mean-field flow through the ramp with an adaptive RK45
// stepper (rtol 1e-9) and sample n(t) every sample_dt.  The trajectory
// starts from the lowest steady-state amplitude at F = f_start unless an
// explicit initial amplitude is supplied.
std::vector<RampPoint> hysteresis_ramp(const SystemParams& params,
                                       const TriangularRamp& ramp,
                                       double sample_dt, double rtol = 1e-9,
                                       std::optional<cxd> alpha0 = std::nullopt);

}  // namespace kerr
