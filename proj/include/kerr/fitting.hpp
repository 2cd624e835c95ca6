#pragma once

#include <string>
#include <utility>
#include <vector>

#include "kerr/correlations.hpp"
#include "kerr/fock.hpp"

namespace kerr {

struct FitResult {
  std::vector<std::string> names;
  VectorR parameters;
  VectorR uncertainties;     // one standard deviation each
  double residual_norm = 0.0;  // sqrt(chi^2) when weighted, RMS-free 2-norm otherwise
  int dof = 0;
  bool converged = false;
  bool degenerate = false;   // flat/singular data, parameters non-publishable

  double param(const std::string& name) const;
  double sigma(const std::string& name) const;
};

// Scaled complementary error function exp(x^2) erfc(x), accurate over the
// full real line (no overflow for large positive x).
double erfcx(double x);

// Two-sided exponential bunching 1 + A exp(-|t|/tau), convolved with a
// Gaussian IRF of the given FWHM in closed form (two exponentially-modified
// Gaussian terms).  irf_fwhm = 0 returns the bare model.
double bunching_model(double t, double a, double tau, double irf_fwhm);

// Lorentzian lineshape fit: offset + amplitude (G/2)^2 / ((x-c)^2 + (G/2)^2).
// Parameters: center, fwhm, amplitude, offset.
FitResult fit_lorentzian(const VectorR& x, const VectorR& y);

// IRF-convolved bunching fit of a correlation curve; parameters A, tau
// (tau in the curve's delay units, irf_fwhm in the same units).  Weighted by
// curve errors when present.  Multi-start over 3 heuristic seeds.
FitResult fit_bunching(const CorrelationCurve& curve, double irf_fwhm);

// Gap scaling near the critical drive on reduced abscissa x = F/F_C - 1.
// PowerLaw:     log tau = exponent * log|x| + const   (weighted linear LS)
// Exponential:  log tau = rate * |x| + const
// Points are filtered to window_lo <= x <= window_hi; the window must not
// straddle x = 0 and must keep >= 4 points.
enum class GapModel { PowerLaw, Exponential };

FitResult fit_gap_scaling(const std::vector<std::pair<double, double>>& f_tau,
                          double f_c, double window_lo, double window_hi,
                          GapModel model, const VectorR& sigma_tau = {});

// Weighted quadratic least squares y = c0 + c1 x + c2 x^2, closed form.
// sigma may be empty (equal weights).
FitResult fit_quadratic(const VectorR& x, const VectorR& y,
                        const VectorR& sigma = {});

// Critical drive: vertex of the parabola through the three largest-tau
// points (sub-grid refinement of the argmax).  at_edge flags a maximum on
// the boundary of the scanned grid.
struct CriticalDrive {
  double f_c = 0.0;
  bool at_edge = false;
};

CriticalDrive critical_drive(const std::vector<std::pair<double, double>>& f_tau);

}  // namespace kerr
