#include <cmath>
#include <complex>

#include "doctest.h"
#include "kerr/correlations.hpp"
#include "kerr/liouvillian.hpp"

using namespace kerr;

TEST_CASE("g2_zero on reference states") {
  const FockSpace space(15);
  SUBCASE("Fock |1> is perfectly antibunched") {
    CHECK(g2_zero(QuantumState::fock_state(space, 1)) == doctest::Approx(0.0));
  }
  SUBCASE("coherent state gives 1") {
    const double alpha = 0.8;
    VectorC psi = VectorC::Zero(space.dim());
    double fact = 1.0;
    for (int n = 0; n < space.dim(); ++n) {
      if (n > 0) fact *= n;
      psi(n) = std::pow(alpha, n) / std::sqrt(fact);
    }
    CHECK(g2_zero(QuantumState::from_pure(psi)) == doctest::Approx(1.0).epsilon(1e-10));
  }
  SUBCASE("vacuum has no photons to correlate") {
    CHECK_THROWS(g2_zero(QuantumState::fock_state(space, 0)));
  }
}

TEST_CASE("default delay grid shape") {
  const VectorR grid = default_delay_grid(0.5, 1.0, 100);
  REQUIRE(grid.size() == 101);
  CHECK(grid(0) == 0.0);
  CHECK(grid(1) == doctest::Approx(1e-2));
  CHECK(grid(grid.size() - 1) == doctest::Approx(50.0 / 0.5));
  for (int i = 1; i < grid.size(); ++i) CHECK(grid(i) > grid(i - 1));
}

TEST_CASE("linear resonator: g2(t) identically one") {
  const FockSpace space(25);
  const SystemParams p{0.9, 0.0, 0.45, 1.0};
  VectorR delays(6);
  delays << 0.0, 0.05, 0.3, 1.0, 4.0, 12.0;
  const CorrelationCurve curve = g2_curve(p, space, delays);
  REQUIRE(curve.values.size() == 6);
  CHECK(curve.kind == CurveKind::G2);
  CHECK(curve.time_unit_s == 0.0);
  for (int i = 0; i < curve.values.size(); ++i)
    CHECK(std::abs(curve.values(i) - 1.0) < 1e-8);
}

TEST_CASE("g2 curve endpoints and tail") {
  const SystemParams p{1.0, 0.2, 0.55, 1.0};
  const FockSpace space(40);
  const Superoperator liouv = build_liouvillian(p, space);
  const QuantumState ss = steady_state(liouv);
  const LiouvillianSpectrum spec = liouvillian_spectrum(liouv, 4);

  const VectorR delays = default_delay_grid(spec.adr, p.gamma, 120);
  const CorrelationCurve curve = g2_curve(liouv, ss, delays);

  SUBCASE("t = 0 equals the static moment") {
    CHECK(std::abs(curve.values(0) - g2_zero(ss)) < 1e-10);
  }
  SUBCASE("decorrelation: late tail settles at 1") {
    // delays beyond 20/adr
    for (int i = 0; i < delays.size(); ++i)
      if (delays(i) > 20.0 / spec.adr) CHECK(std::abs(curve.values(i) - 1.0) < 1e-3);
  }
}

TEST_CASE("g2 tail decays at the spectral gap rate near the critical drive") {
  // the slowest mode is real here (metastable switching), so |g2 - 1| is a
  // clean exponential; at weaker drives the leading pair is complex and the
  // modulus oscillates through zeros
  const SystemParams p{1.0, 0.2, 1.11, 1.0};
  const FockSpace space(30);
  const Superoperator liouv = build_liouvillian(p, space);
  const QuantumState ss = steady_state(liouv);
  const LiouvillianSpectrum spec = liouvillian_spectrum(liouv, 3);
  REQUIRE(std::abs(spec.eigenvalues[1].imag()) < 1e-8);

  VectorR delays(121);
  delays(0) = 0.0;
  const double lo = 1e-2, hi = 12.0 / spec.adr;
  for (int i = 0; i < 120; ++i)
    delays(i + 1) = lo * std::pow(hi / lo, i / 119.0);
  const CorrelationCurve curve = g2_curve(liouv, ss, delays);

  std::vector<double> ts, ys;
  for (int i = 0; i < delays.size(); ++i) {
    const double dev = std::abs(curve.values(i) - 1.0);
    if (delays(i) > 2.0 / spec.adr && delays(i) < 10.0 / spec.adr && dev > 1e-9)
      ts.push_back(delays(i)), ys.push_back(std::log(dev));
  }
  REQUIRE(ts.size() >= 8);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    sx += ts[i];
    sy += ys[i];
    sxx += ts[i] * ts[i];
    sxy += ts[i] * ys[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  CHECK(std::abs(-slope - spec.adr) / spec.adr < 0.02);
}

TEST_CASE("g1 curve limits") {
  SUBCASE("linear resonator: |g1| stays 1 (coherent drive)") {
    const FockSpace space(25);
    VectorR delays(5);
    delays << 0.0, 0.2, 1.0, 3.0, 8.0;
    const CorrelationCurve curve = g1_curve({0.8, 0.0, 0.5, 1.0}, space, delays);
    CHECK(curve.kind == CurveKind::G1);
    for (int i = 0; i < curve.values.size(); ++i)
      CHECK(std::abs(curve.values(i) - 1.0) < 1e-8);
  }
  SUBCASE("weak drive stays coherent: |g1| pinned at 1") {
    // the field is phase-locked to the drive; nothing decays in g1
    const FockSpace space(6);
    VectorR delays(5);
    delays << 0.0, 0.5, 1.0, 2.0, 5.0;
    const CorrelationCurve curve = g1_curve({0.3, 0.2, 0.01, 1.0}, space, delays);
    for (int i = 0; i < delays.size(); ++i)
      CHECK(std::abs(curve.values(i) - 1.0) < 1e-3);
  }
  SUBCASE("free decay of a displaced field: exact rotating exponential") {
    // conditioning a coherent state under the undriven Liouvillian gives
    // g1(t) = exp((i delta - 1/2) t) in closed form, so the modulus decays
    // at gamma/2 while the real part oscillates and goes negative
    const double delta = 0.7;
    const FockSpace space(20);
    const Superoperator liouv = build_liouvillian({delta, 0.0, 0.0, 1.0}, space);
    VectorC psi(space.dim());
    double lognorm = 0.0;
    for (int n = 0; n < space.dim(); ++n) {
      psi(n) = std::exp(-0.5 + 0.5 * lognorm);  // alpha = 1: 1/sqrt(n!)
      lognorm -= std::log(n + 1.0);
    }
    const QuantumState displaced = QuantumState::from_pure(psi);

    VectorR delays(6);
    delays << 0.0, 0.5, 1.0, 2.0, 4.0, 6.0;
    const CorrelationCurve mod = g1_curve(liouv, displaced, delays);
    const CorrelationCurve re = g1_curve(liouv, displaced, delays, G1Part::Real);
    for (int i = 0; i < delays.size(); ++i) {
      const double decay = std::exp(-0.5 * delays(i));
      CHECK(std::abs(mod.values(i) - decay) < 1e-6);
      CHECK(std::abs(re.values(i) - decay * std::cos(delta * delays(i))) < 1e-6);
    }
    CHECK(re.values(4) < -0.1);  // cos(2.8) < 0: the real part went negative
  }
}

TEST_CASE("propagate: Krylov exponential action") {
  const SystemParams p{0.7, 0.2, 0.5, 1.0};
  const FockSpace space(12);
  const Superoperator liouv = build_liouvillian(p, space);
  const QuantumState ss = steady_state(liouv);

  SUBCASE("t = 0 is the identity") {
    const VectorC v = ss.vectorized();
    CHECK((propagate(liouv, v, 0.0) - v).norm() == 0.0);
  }
  SUBCASE("steady state is a fixed point") {
    const VectorC v = ss.vectorized();
    CHECK((propagate(liouv, v, 5.0, 1e-10) - v).norm() < 1e-8);
  }
  SUBCASE("trace is conserved along the flow") {
    MatrixC rho = MatrixC::Zero(space.dim(), space.dim());
    rho(2, 2) = 0.6;
    rho(3, 3) = 0.4;
    rho(2, 3) = rho(3, 2) = 0.2;
    const VectorC out = propagate(liouv, vectorize(rho), 1.7, 1e-10);
    cxd trace = 0.0;
    for (int i = 0; i < space.dim(); ++i) trace += out(i + space.dim() * i);
    CHECK(std::abs(trace - cxd(1.0, 0.0)) < 1e-10);
  }
  SUBCASE("traceless inputs stay traceless") {
    MatrixC rho = MatrixC::Zero(space.dim(), space.dim());
    rho(0, 0) = 1.0;
    rho(4, 4) = -1.0;
    const VectorC out = propagate(liouv, vectorize(rho), 2.3, 1e-10);
    cxd trace = 0.0;
    for (int i = 0; i < space.dim(); ++i) trace += out(i + space.dim() * i);
    CHECK(std::abs(trace) < 1e-12);
  }
  SUBCASE("agrees with a dense matrix exponential") {
    const MatrixC dense = MatrixC(liouv.mat);
    MatrixC rho = MatrixC::Zero(space.dim(), space.dim());
    rho(1, 1) = 1.0;
    const VectorC v = vectorize(rho);
    const double t = 0.9;
    // scaled Taylor reference: exp(A)v via 64 substeps of order-12 series
    VectorC ref = v;
    const int steps = 64;
    for (int s = 0; s < steps; ++s) {
      VectorC term = ref;
      for (int k = 1; k <= 12; ++k) {
        term = (dense * term) * (t / steps / k);
        ref += term;
      }
    }
    CHECK((propagate(liouv, v, t, 1e-10) - ref).norm() < 1e-7 * ref.norm());
  }
}

TEST_CASE("delay grids are validated") {
  const FockSpace space(10);
  const SystemParams p{0.5, 0.2, 0.3, 1.0};
  VectorR bad(3);
  bad << 0.0, 2.0, 1.0;  // not increasing
  CHECK_THROWS(g2_curve(p, space, bad));
  VectorR neg(2);
  neg << -1.0, 1.0;
  CHECK_THROWS(g2_curve(p, space, neg));
}
