#include "kerr/fock.hpp"

#include <cmath>

namespace kerr {

MatrixC annihilation(const FockSpace& space) {
  const int d = space.dim();
  MatrixC a = MatrixC::Zero(d, d);
  for (int n = 1; n < d; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  return a;
}

MatrixC number_operator(const FockSpace& space) {
  const int d = space.dim();
  MatrixC nop = MatrixC::Zero(d, d);
  for (int n = 0; n < d; ++n) nop(n, n) = static_cast<double>(n);
  return nop;
}

MatrixC hamiltonian(const SystemParams& params, const FockSpace& space) {
  params.validate();
  const int d = space.dim();
  MatrixC h = MatrixC::Zero(d, d);
  // Diagonal part: -delta n + (u/2) n(n-1).
  for (int n = 0; n < d; ++n) {
    const double nn = static_cast<double>(n);
    h(n, n) = -params.delta * nn + 0.5 * params.u * nn * (nn - 1.0);
  }
  // Drive: f (a^+ + a).
  for (int n = 1; n < d; ++n) {
    const double s = params.f * std::sqrt(static_cast<double>(n));
    h(n - 1, n) += s;
    h(n, n - 1) += s;
  }
  return params.gamma * h;
}

VectorC vectorize(const MatrixC& rho) {
  return Eigen::Map<const VectorC>(rho.data(), rho.size());
}

MatrixC unvectorize(const VectorC& v, int dim) {
  if (v.size() != static_cast<Eigen::Index>(dim) * dim)
    throw std::invalid_argument("unvectorize: size mismatch");
  return Eigen::Map<const MatrixC>(v.data(), dim, dim);
}

QuantumState QuantumState::from_density_matrix(const MatrixC& rho) {
  if (rho.rows() != rho.cols()) throw std::invalid_argument("QuantumState: matrix not square");
  const double scale = std::max(1.0, rho.norm());
  if ((rho - rho.adjoint()).norm() > 1e-10 * scale)
    throw std::invalid_argument("QuantumState: matrix not Hermitian");
  if (std::abs(rho.trace() - 1.0) > 1e-10)
    throw std::invalid_argument("QuantumState: trace differs from one");

  // Positivity: tolerate eigenvalues down to -1e-9 (clamped to zero), reject worse.
  Eigen::SelfAdjointEigenSolver<MatrixC> es(0.5 * (rho + rho.adjoint()));
  const VectorR evals = es.eigenvalues();
  if (evals.minCoeff() < -1e-9)
    throw std::invalid_argument("QuantumState: negative eigenvalue " +
                                std::to_string(evals.minCoeff()));
  if (evals.minCoeff() < 0.0) {
    VectorR clamped = evals.cwiseMax(0.0);
    clamped /= clamped.sum();
    MatrixC fixed = es.eigenvectors() * clamped.asDiagonal() *
                    es.eigenvectors().adjoint();
    return QuantumState(std::move(fixed));
  }
  return QuantumState(rho);
}

QuantumState QuantumState::from_pure(const VectorC& psi) {
  const double nrm = psi.norm();
  if (!(nrm > 0.0)) throw std::invalid_argument("QuantumState: zero state vector");
  VectorC unit = psi / nrm;
  return QuantumState(unit * unit.adjoint());
}

QuantumState QuantumState::fock_state(const FockSpace& space, int n) {
  if (n < 0 || n > space.cutoff) throw std::invalid_argument("fock_state: level out of range");
  VectorC psi = VectorC::Zero(space.dim());
  psi(n) = 1.0;
  return from_pure(psi);
}

cxd expectation(const MatrixC& op, const QuantumState& state) {
  return (op * state.rho()).trace();
}

double mean_photon_number(const QuantumState& state) {
  double n = 0.0;
  for (int k = 0; k < state.dim(); ++k) n += k * state.rho()(k, k).real();
  return n;
}

}  // namespace kerr
