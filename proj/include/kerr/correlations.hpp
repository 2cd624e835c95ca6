#pragma once

#include <vector>

#include "kerr/fock.hpp"
#include "kerr/liouvillian.hpp"

namespace kerr {

enum class CurveKind { G2, G1, G2Classical };

// Sampled correlation function.  Regression-theorem curves carry delays in
// 1/gamma units with time_unit_s = 0 ("not bound to a clock"); estimator
// curves from photon streams carry delays in seconds with time_unit_s = 1.
struct CorrelationCurve {
  VectorR delays;
  VectorR values;
  VectorR errors;  // empty unless estimator-derived
  CurveKind kind = CurveKind::G2;
  double time_unit_s = 0.0;  // seconds per delay unit; 0 = dimensionless
};

// <a+ a+ a a> / <a+ a>^2 on a single state.  Throws when nbar == 0.
double g2_zero(const QuantumState& state);

// Log-spaced default delay grid from 1e-2/gamma to 50/adr (t=0 prepended).
VectorR default_delay_grid(double adr, double gamma, int points = 200);

// Quantum regression theorem:
//   g2(t) = tr(a^+a e^{Lt}[a rho_ss a^+]) / nbar^2.
// The conditioned matrix is propagated unnormalized; the 1/nbar^2 is applied
// once at the end.  Only t >= 0 is computed (g2 is even in t).
CorrelationCurve g2_curve(const SystemParams& params, const FockSpace& space,
                          const VectorR& delays);
CorrelationCurve g2_curve(const Superoperator& liouv, const QuantumState& rho_ss,
                          const VectorR& delays);

// First-order coherence |<a^+(t'+t) a(t')>| / nbar via regression on
// rho_ss a^+.  Defaults to the modulus; G1Part::Real exposes Re g1 instead.
enum class G1Part { Modulus, Real };

CorrelationCurve g1_curve(const SystemParams& params, const FockSpace& space,
                          const VectorR& delays, G1Part part = G1Part::Modulus);
CorrelationCurve g1_curve(const Superoperator& liouv, const QuantumState& rho_ss,
                          const VectorR& delays, G1Part part = G1Part::Modulus);

// Action of exp(L t) on a vectorized matrix via Krylov subspace projection
// with adaptive substepping; relative tolerance per call.
VectorC propagate(const Superoperator& liouv, const VectorC& v, double t,
                  double rtol = 1e-8);

}  // namespace kerr
