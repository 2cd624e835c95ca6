#pragma once

// Exact steady-state observables of the driven-dissipative Kerr resonator
// from the generalized-P-function solution (Drummond & Walls 1980).  With
// c = -(2 delta + i gamma)/u and x = 2 f/u, the normally ordered moments are
//
//   <a^dag^k a^k> = x^(2k) / |c|_k^2 * Re[ 0F2(c+k, c*+k; 2x^2)
//                                          / 0F2(c, c*; 2x^2) ]  (k-shifted),
//
// where |c|_k^2 = |c (c+1) ... (c+k-1)|^2.  Only nbar (k=1) and g2(0) (k=2)
// are needed here.  Entirely independent of the Liouvillian code path: plain
// complex arithmetic and a hypergeometric series.

#include <cmath>
#include <complex>
#include <stdexcept>

namespace oracle {

using cxd = std::complex<double>;

// 0F2(p, q; z) regularized as a plain Taylor series: term_j multiplies
// z / (j (p+j-1) (q+j-1)).  Converges for any z (entire function).
inline cxd hyper0f2(cxd p, cxd q, double z) {
  cxd acc = 1.0;
  cxd term = 1.0;
  for (int j = 1; j <= 4000; ++j) {
    term *= z / (static_cast<double>(j) * (p + static_cast<double>(j - 1)) *
                 (q + static_cast<double>(j - 1)));
    acc += term;
    if (j > 8 && std::abs(term) < 1e-20 * std::abs(acc)) return acc;
  }
  throw std::runtime_error("hyper0f2: series did not converge in 4000 terms");
}

struct KerrMoments {
  double nbar = 0.0;
  double g2_zero = 0.0;
};

// delta, f in units of gamma; u > 0 required.
inline KerrMoments kerr_exact(double delta, double u, double f) {
  if (!(u > 0.0)) throw std::invalid_argument("kerr_exact: u must be > 0");
  const cxd c = -(2.0 * delta + cxd(0.0, 1.0)) / u;
  const double x = 2.0 * f / u;
  const double z = 2.0 * x * x;

  const cxd s0 = hyper0f2(c, std::conj(c), z);
  const cxd s1 = hyper0f2(c + 1.0, std::conj(c) + 1.0, z);
  const cxd s2 = hyper0f2(c + 2.0, std::conj(c) + 2.0, z);

  KerrMoments m;
  m.nbar = x * x / std::norm(c) * std::real(s1 / s0);
  m.g2_zero = std::norm(c) / std::norm(c + 1.0) * std::real(s2 * s0 / (s1 * s1));
  return m;
}

}  // namespace oracle
