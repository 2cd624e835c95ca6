#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace kerr {

using cxd = std::complex<double>;
using MatrixC = Eigen::MatrixXcd;
using VectorC = Eigen::VectorXcd;
using VectorR = Eigen::VectorXd;
using SparseC = Eigen::SparseMatrix<cxd>;

// Truncated single-mode Fock space spanning |0>..|cutoff>.
struct FockSpace {
  int cutoff;

  explicit FockSpace(int n) : cutoff(n) {
    if (n < 1) throw std::invalid_argument("FockSpace: cutoff must be >= 1");
  }
  int dim() const { return cutoff + 1; }
};

// Model parameters of the driven-dissipative Kerr resonator,
//   H = -delta a^+a + (u/2) a^+a^+aa + f (a^+ + a),
// with delta, u, f expressed in units of the decay rate gamma.
// gamma itself sets the time unit of every rate-valued output.
struct SystemParams {
  double delta = 0.0;  // drive-resonator detuning
  double u = 0.0;      // Kerr interaction strength
  double f = 0.0;      // coherent drive amplitude (real, >= 0)
  double gamma = 1.0;  // decay rate

  void validate() const {
    if (!(gamma > 0.0)) throw std::invalid_argument("SystemParams: gamma must be > 0");
    if (f < 0.0) throw std::invalid_argument("SystemParams: f must be >= 0");
    if (u < 0.0) throw std::invalid_argument("SystemParams: u must be >= 0");
  }
};

// Annihilation operator a, <n-1|a|n> = sqrt(n).
MatrixC annihilation(const FockSpace& space);

// Number operator a^+a (diagonal).
MatrixC number_operator(const FockSpace& space);

// System Hamiltonian in units of hbar, i.e. entries carry units of gamma:
//   H = gamma * [ -delta a^+a + (u/2) a^+a^+aa + f (a^+ + a) ].
MatrixC hamiltonian(const SystemParams& params, const FockSpace& space);

// Column-stacking vectorization: vec(rho)(i + dim*j) = rho(i, j).
VectorC vectorize(const MatrixC& rho);
MatrixC unvectorize(const VectorC& v, int dim);

// Density matrix with validated invariants.  Construction enforces
// Hermiticity (1e-10), unit trace (1e-10), and positivity: eigenvalues in
// [-1e-9, 0) are clamped to zero (renormalizing the trace), anything more
// negative is rejected.
class QuantumState {
 public:
  static QuantumState from_density_matrix(const MatrixC& rho);
  // Pure state |psi><psi| (psi is normalized internally).
  static QuantumState from_pure(const VectorC& psi);
  // Fock state |n><n|.
  static QuantumState fock_state(const FockSpace& space, int n);

  const MatrixC& rho() const { return rho_; }
  VectorC vectorized() const { return vectorize(rho_); }
  int dim() const { return static_cast<int>(rho_.rows()); }

 private:
  explicit QuantumState(MatrixC rho) : rho_(std::move(rho)) {}
  MatrixC rho_;
};

// tr(op * rho)
cxd expectation(const MatrixC& op, const QuantumState& state);

// <a^+a>, guaranteed real by Hermiticity of the number operator.
double mean_photon_number(const QuantumState& state);

}  // namespace kerr
