#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "doctest.h"
#include "kerr/liouvillian.hpp"
#include "oracles/drummond_walls.hpp"

using namespace kerr;

namespace {

MatrixC random_hermitian_unit_trace(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  MatrixC g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = cxd(gauss(rng), gauss(rng));
  MatrixC h = 0.5 * (g + g.adjoint());
  h -= (h.trace() / static_cast<double>(d) - 1.0 / static_cast<double>(d)) *
       MatrixC::Identity(d, d);
  return h;
}

}  // namespace

TEST_CASE("Lindblad action on basis states") {
  const FockSpace space(4);
  SUBCASE("pure decay maps |1><1| to gamma(|0><0| - |1><1|)") {
    const Superoperator liouv = build_liouvillian({0.0, 0.0, 0.0, 1.0}, space);
    MatrixC rho = MatrixC::Zero(space.dim(), space.dim());
    rho(1, 1) = 1.0;
    const MatrixC out = kerr::apply(liouv, rho);
    MatrixC want = MatrixC::Zero(space.dim(), space.dim());
    want(0, 0) = 1.0;
    want(1, 1) = -1.0;
    CHECK((out - want).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("undriven vacuum is annihilated") {
    const Superoperator liouv = build_liouvillian({0.9, 0.3, 0.0, 1.0}, space);
    MatrixC rho = MatrixC::Zero(space.dim(), space.dim());
    rho(0, 0) = 1.0;
    CHECK(kerr::apply(liouv, rho).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("matches the direct commutator + dissipator evaluation") {
    const SystemParams p{0.7, 0.25, 0.45, 1.3};
    const Superoperator liouv = build_liouvillian(p, space);
    const MatrixC h = hamiltonian(p, space);
    const MatrixC a = annihilation(space);
    const MatrixC n = a.adjoint() * a;
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 5; ++rep) {
      const MatrixC rho = random_hermitian_unit_trace(space.dim(), rng);
      const MatrixC want = cxd(0.0, -1.0) * (h * rho - rho * h) +
                           0.5 * p.gamma * (2.0 * a * rho * a.adjoint() - n * rho - rho * n);
      CHECK((kerr::apply(liouv, rho) - want).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("trace preservation on random Hermitian matrices") {
  const FockSpace space(6);
  const Superoperator liouv = build_liouvillian({1.1, 0.2, 0.6, 1.0}, space);
  std::mt19937_64 rng(42);
  for (int rep = 0; rep < 20; ++rep) {
    const MatrixC rho = random_hermitian_unit_trace(space.dim(), rng);
    const MatrixC out = kerr::apply(liouv, rho);
    CHECK(std::abs(out.trace()) < 1e-12 * rho.cwiseAbs().maxCoeff() * space.dim());
  }
}

TEST_CASE("steady state closed forms") {
  SUBCASE("linear resonator: nbar = f^2/(delta^2 + gamma^2/4)") {
    const FockSpace space(30);
    const QuantumState ss = steady_state(build_liouvillian({1.5, 0.0, 0.5, 1.0}, space));
    CHECK(std::abs(mean_photon_number(ss) - 0.1) < 1e-8);
    // coherent state: purity 1 and g2(0) = 1
    CHECK(std::abs((ss.rho() * ss.rho()).trace().real() - 1.0) < 1e-8);
  }
  SUBCASE("undriven: vacuum") {
    const FockSpace space(8);
    const QuantumState ss = steady_state(build_liouvillian({0.4, 0.3, 0.0, 1.0}, space));
    CHECK(std::abs(ss.rho()(0, 0) - cxd(1.0, 0.0)) < 1e-10);
    CHECK(mean_photon_number(ss) < 1e-10);
  }
  SUBCASE("gamma rescaling leaves dimensionless observables fixed") {
    const FockSpace space(25);
    const QuantumState a = steady_state(build_liouvillian({0.8, 0.2, 0.6, 1.0}, space));
    const QuantumState b = steady_state(build_liouvillian({0.8, 0.2, 0.6, 3.7}, space));
    CHECK(std::abs(mean_photon_number(a) - mean_photon_number(b)) < 1e-9);
  }
  SUBCASE("residual of the steady state is tiny") {
    const FockSpace space(40);
    const Superoperator liouv = build_liouvillian({1.0, 0.2, 0.8, 1.0}, space);
    const QuantumState ss = steady_state(liouv);
    CHECK(kerr::apply(liouv, ss.rho()).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("steady state matches the exact Kerr solution") {
  // moments from the generalized-P closed form, far from any code under test
  const FockSpace space(45);
  for (double f : {0.3, 0.6, 0.9}) {
    const SystemParams p{1.0, 0.2, f, 1.0};
    const QuantumState ss = steady_state(build_liouvillian(p, space));
    const oracle::KerrMoments m = oracle::kerr_exact(p.delta, p.u, p.f);
    const double nbar = mean_photon_number(ss);
    const MatrixC a = annihilation(space);
    const MatrixC aa = a * a;
    const double g2 =
        std::real(expectation(aa.adjoint() * aa, ss)) / (nbar * nbar);
    CHECK(std::abs(nbar - m.nbar) < 1e-8);
    CHECK(std::abs(g2 - m.g2_zero) < 1e-8);
  }
}

TEST_CASE("spectrum structure") {
  const FockSpace space(12);
  const Superoperator liouv = build_liouvillian({0.8, 0.2, 0.4, 1.0}, space);
  const LiouvillianSpectrum spec = liouvillian_spectrum(liouv, 8);
  REQUIRE(spec.eigenvalues.size() >= 8);

  SUBCASE("zero mode present and leading") {
    CHECK(std::abs(spec.eigenvalues[0]) < 1e-8);
  }
  SUBCASE("no eigenvalue in the right half plane") {
    for (const cxd& ev : spec.eigenvalues) CHECK(ev.real() <= 1e-9);
  }
  SUBCASE("sorted by descending real part") {
    for (std::size_t i = 1; i < spec.eigenvalues.size(); ++i)
      CHECK(spec.eigenvalues[i - 1].real() >= spec.eigenvalues[i].real() - 1e-12);
  }
  SUBCASE("closed under conjugation") {
    // the top-k cut can land between a conjugate pair: eigenvalues tied with
    // the last returned real part are exempt, their partner may sit past it
    const double re_last = spec.eigenvalues.back().real();
    for (const cxd& ev : spec.eigenvalues) {
      if (std::abs(ev.imag()) < 1e-9) continue;
      if (ev.real() <= re_last + 1e-9) continue;
      double best = 1e300;
      for (const cxd& other : spec.eigenvalues)
        best = std::min(best, std::abs(other - std::conj(ev)));
      CHECK(best < 1e-7);
    }
  }
  SUBCASE("adr equals minus the leading nonzero real part") {
    CHECK(spec.adr == doctest::Approx(-spec.eigenvalues[1].real()).epsilon(1e-12));
  }
  SUBCASE("uniqueness: spectral gap strictly positive") {
    CHECK(spec.adr > 1e-6);
  }
}

TEST_CASE("undriven spectrum is exactly lambda_{m,n}") {
  const SystemParams p{0.5, 0.2, 0.0, 1.0};
  const FockSpace space(8);
  const Superoperator liouv = build_liouvillian(p, space);
  const LiouvillianSpectrum spec =
      liouvillian_spectrum(liouv, 15, {EigMethod::Dense, 0, 1e-10, 8, false});

  // all analytic eigenvalues with m + n <= 3 must appear
  std::vector<cxd> want;
  for (int m = 0; m <= 3; ++m)
    for (int n = 0; n + m <= 3; ++n)
      want.push_back(cxd(-0.5 * (m + n),
                         p.delta * (m - n) - 0.5 * p.u * (m * (m - 1) - n * (n - 1))));
  for (const cxd& w : want) {
    double best = 1e300;
    for (const cxd& ev : spec.eigenvalues) best = std::min(best, std::abs(ev - w));
    CHECK(best < 1e-8);
  }
}

TEST_CASE("linear resonator has drive-independent gap gamma/2") {
  const FockSpace space(25);
  for (double f : {0.0, 0.3, 0.8}) {
    const Superoperator liouv = build_liouvillian({0.7, 0.0, f, 1.0}, space);
    const LiouvillianSpectrum spec = liouvillian_spectrum(liouv, 4);
    CHECK(std::abs(spec.adr - 0.5) < 1e-8);
  }
}

TEST_CASE("dense and shift-invert spectra agree") {
  const FockSpace space(14);  // dim^2 = 225, exercised by both paths
  const Superoperator liouv = build_liouvillian({1.0, 0.2, 0.5, 1.0}, space);
  const LiouvillianSpectrum dense =
      liouvillian_spectrum(liouv, 6, {EigMethod::Dense, 0, 1e-10, 8, false});
  const LiouvillianSpectrum arnoldi =
      liouvillian_spectrum(liouv, 6, {EigMethod::ShiftInvert, 0, 1e-10, 8, false});
  REQUIRE(dense.eigenvalues.size() >= 6);
  REQUIRE(arnoldi.eigenvalues.size() >= 6);
  // compare as sets over the first five: equal real parts leave the ordering
  // of +/- Im partners unspecified, and the k-th entry is truncation-touched
  for (int i = 0; i < 5; ++i) {
    double to_arnoldi = 1e300, to_dense = 1e300;
    for (const cxd& ev : arnoldi.eigenvalues)
      to_arnoldi = std::min(to_arnoldi, std::abs(dense.eigenvalues[i] - ev));
    for (const cxd& ev : dense.eigenvalues)
      to_dense = std::min(to_dense, std::abs(arnoldi.eigenvalues[i] - ev));
    CHECK(to_arnoldi < 1e-8);
    CHECK(to_dense < 1e-8);
  }
  CHECK(std::abs(dense.adr - arnoldi.adr) < 1e-8);
}

TEST_CASE("eigenmodes satisfy the eigenvalue equation") {
  const FockSpace space(6);
  const Superoperator liouv = build_liouvillian({0.6, 0.2, 0.3, 1.0}, space);
  const LiouvillianSpectrum spec =
      liouvillian_spectrum(liouv, 5, {EigMethod::Auto, 0, 1e-10, 8, true});
  REQUIRE(spec.eigenmodes.has_value());
  const MatrixC& modes = *spec.eigenmodes;
  REQUIRE(modes.cols() >= 5);
  const double scale = MatrixC(liouv.mat).cwiseAbs().maxCoeff();
  for (int j = 0; j < 5; ++j) {
    const VectorC v = modes.col(j);
    CHECK((liouv.mat * v - spec.eigenvalues[j] * v).norm() < 1e-8 * scale * v.norm());
  }
}

TEST_CASE("cutoff convergence ladder") {
  SUBCASE("undriven problem needs no excitation room") {
    CHECK(converge_cutoff({1.0, 0.2, 0.0, 1.0}, 1e-6) == 1);
  }
  SUBCASE("weak drive converges at the ladder foot") {
    const int n = converge_cutoff({1.0, 0.2, 0.1, 1.0}, 1e-6);
    CHECK(n == 10);
  }
  SUBCASE("self-verification: observables stable under +10") {
    const SystemParams p{1.0, 0.2, 0.6, 1.0};
    const double tol = 1e-6;
    const int n = converge_cutoff(p, tol);
    auto observables = [&](int cutoff) {
      const FockSpace space(cutoff);
      const Superoperator liouv = build_liouvillian(p, space);
      const QuantumState ss = steady_state(liouv);
      const double nbar = mean_photon_number(ss);
      const MatrixC a = annihilation(space);
      const MatrixC aa = a * a;
      const double g2 = std::real(expectation(aa.adjoint() * aa, ss)) / (nbar * nbar);
      return std::pair<double, double>(nbar, g2);
    };
    const auto [n1, g1] = observables(n);
    const auto [n2, g2] = observables(n + 10);
    CHECK(std::abs(n1 - n2) / std::abs(n2) < tol);
    CHECK(std::abs(g1 - g2) / std::abs(g2) < tol);
  }
}
