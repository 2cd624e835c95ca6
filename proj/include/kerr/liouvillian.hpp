#pragma once

#include <optional>
#include <vector>

#include "kerr/fock.hpp"

namespace kerr {

// Lindblad superoperator acting on column-stacked density matrices,
//   L = -i (I x H - H^T x I) + (gamma/2) (2 conj(a) x a - I x a^+a - (a^+a)^T x I),
// where x denotes the Kronecker product.  Dimension is (N+1)^2.
struct Superoperator {
  SparseC mat;
  SystemParams params;
  FockSpace space;

  int dim() const { return space.dim() * space.dim(); }
};

Superoperator build_liouvillian(const SystemParams& params, const FockSpace& space);

// L[rho] evaluated through the sparse matrix, returned as a matrix again.
MatrixC apply(const Superoperator& liouv, const MatrixC& rho);

// Steady state of L via a bordered linear solve: one row of L is replaced by
// the trace row and the system solved with a sparse LU.  Solved twice with
// different replaced rows; disagreement beyond 1e-8 signals a degenerate
// null space and raises an error instead of silently picking a state.
QuantumState steady_state(const Superoperator& liouv);

// Low-lying Liouvillian spectrum.  Eigenvalues sorted by descending real
// part; the first entry is the zero eigenvalue of the steady state, and
// adr = -Re lambda_1 is the asymptotic decay rate toward it.
struct LiouvillianSpectrum {
  std::vector<cxd> eigenvalues;
  std::optional<MatrixC> eigenmodes;  // columns are vectorized matrices
  double adr = 0.0;
};

enum class EigMethod {
  Auto,         // dense for small problems, shift-invert Arnoldi otherwise
  Dense,        // full decomposition (any k)
  ShiftInvert,  // Arnoldi on L^{-1} restricted to the traceless subspace
};

struct SpectrumOptions {
  EigMethod method = EigMethod::Auto;
  int krylov_dim = 0;        // 0 = choose from k and problem size
  double tol = 1e-10;        // residual tolerance, relative to gamma
  int max_restarts = 8;
  bool compute_modes = false;
};

// The shift-invert path factors the same bordered system used by
// steady_state and deflates the exact zero mode, so the Krylov iteration
// only ever sees the traceless invariant subspace.  It targets the
// eigenvalues closest to zero; requested counts are over-extracted
// internally so the returned top-k by real part is reliable for the
// slowly-decaying modes of interest.  Modes with very large imaginary
// parts at moderate real part can be missed by shift-invert ranking; use
// EigMethod::Dense when completeness matters more than size.
LiouvillianSpectrum liouvillian_spectrum(const Superoperator& liouv, int k,
                                         const SpectrumOptions& opts = {});

// Cutoff search: smallest N (on a step-5 ladder) such that nbar, g2(0) and
// the ADR each move by less than tol (relative) when N -> N+10.
struct CutoffSearch {
  int start = 10;
  int step = 5;
  int max_cutoff = 150;
};

int converge_cutoff(const SystemParams& params, double tol,
                    const CutoffSearch& search = {});

}  // namespace kerr
