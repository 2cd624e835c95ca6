#include "kerr/liouvillian.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>
#include <unsupported/Eigen/KroneckerProduct>

namespace kerr {

namespace {

constexpr cxd kImag{0.0, 1.0};

SparseC sparse_identity(int n) {
  SparseC id(n, n);
  id.setIdentity();
  return id;
}

// L with one row replaced by the trace row (ones on the diagonal vec
// indices j*(d+1)), factored once.  Solving with rhs = e_row yields the
// trace-one steady state; solving with a traceless rhs (its row entry
// zeroed) yields the exact traceless solution of L w = rhs, because the
// dropped row of L is implied by trace preservation.
struct BorderedSolver {
  Eigen::SparseLU<SparseC> lu;
  int row = 0;

  BorderedSolver(const SparseC& lmat, int d, int replaced_row) : row(replaced_row) {
    std::vector<Eigen::Triplet<cxd>> trips;
    trips.reserve(static_cast<std::size_t>(lmat.nonZeros()) + d);
    for (int col = 0; col < lmat.outerSize(); ++col)
      for (SparseC::InnerIterator it(lmat, col); it; ++it)
        if (it.row() != replaced_row)
          trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int j = 0; j < d; ++j) trips.emplace_back(replaced_row, j * (d + 1), cxd(1.0, 0.0));
    SparseC bordered(lmat.rows(), lmat.cols());
    bordered.setFromTriplets(trips.begin(), trips.end());
    bordered.makeCompressed();
    lu.analyzePattern(bordered);
    lu.factorize(bordered);
    if (lu.info() != Eigen::Success)
      throw std::runtime_error("liouvillian: bordered LU factorization failed");
  }

  VectorC solve(const VectorC& rhs) const {
    VectorC x = lu.solve(rhs);
    if (lu.info() != Eigen::Success)
      throw std::runtime_error("liouvillian: bordered LU solve failed");
    return x;
  }
};

VectorC steady_vector(const Superoperator& liouv, int replaced_row) {
  BorderedSolver solver(liouv.mat, liouv.space.dim(), replaced_row);
  VectorC rhs = VectorC::Zero(liouv.dim());
  rhs(replaced_row) = 1.0;
  return solver.solve(rhs);
}

bool spectral_order(const cxd& a, const cxd& b) {
  if (a.real() != b.real()) return a.real() > b.real();
  return a.imag() > b.imag();
}

// Eigenvalues of L come in conjugate pairs (L commutes with the adjoint
// map).  Verify closure on the computed list and append any partner a
// truncated extraction missed; the partner mode is the adjoint matrix.
void enforce_conjugate_closure(std::vector<cxd>& vals, std::vector<VectorC>* vecs,
                               int d, double tol) {
  const std::size_t initial = vals.size();
  for (std::size_t i = 0; i < initial; ++i) {
    if (std::abs(vals[i].imag()) <= tol) continue;
    bool found = false;
    for (std::size_t j = 0; j < vals.size() && !found; ++j)
      found = j != i && std::abs(vals[j] - std::conj(vals[i])) <= tol;
    if (found) continue;
    vals.push_back(std::conj(vals[i]));
    if (vecs) {
      MatrixC mode = unvectorize((*vecs)[i], d);
      vecs->push_back(vectorize(mode.adjoint().eval()));
    }
  }
}

struct EigPairs {
  std::vector<cxd> values;
  std::vector<VectorC> vectors;  // empty unless requested
};

EigPairs dense_eigs(const Superoperator& liouv, bool want_modes) {
  MatrixC lmat(liouv.mat);
  Eigen::ComplexEigenSolver<MatrixC> es(lmat, want_modes);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("spectrum: dense eigensolver failed to converge");
  EigPairs out;
  const int n = static_cast<int>(lmat.rows());
  out.values.reserve(n);
  for (int i = 0; i < n; ++i) out.values.push_back(es.eigenvalues()(i));
  if (want_modes) {
    out.vectors.reserve(n);
    for (int i = 0; i < n; ++i) out.vectors.push_back(es.eigenvectors().col(i));
  }
  return out;
}

// Shift-invert Arnoldi with shift 0 on the traceless invariant subspace.
// The zero mode is deflated exactly through the bordered solver, so the
// iteration never sees it; remaining eigenvalues are extracted nearest zero
// first, which is where the slow relaxation physics lives.
EigPairs shift_invert_eigs(const Superoperator& liouv, int k_want, bool want_modes,
                           const SpectrumOptions& opts) {
  const int d = liouv.space.dim();
  const int dim = liouv.dim();
  const double gamma = liouv.params.gamma;
  BorderedSolver solver(liouv.mat, d, (d / 2) * (d + 1));

  auto project_traceless = [&](VectorC& v) {
    cxd s = 0.0;
    for (int j = 0; j < d; ++j) s += v(j * (d + 1));
    s /= static_cast<double>(d);
    for (int j = 0; j < d; ++j) v(j * (d + 1)) -= s;
  };
  auto apply_inverse = [&](const VectorC& v) {
    VectorC rhs = v;
    rhs(solver.row) = 0.0;
    VectorC w = solver.solve(rhs);
    project_traceless(w);
    return w;
  };

  const int k_internal = std::min(dim - 2, std::max(2 * k_want, k_want + 8));
  int m = opts.krylov_dim > 0 ? opts.krylov_dim
                              : std::clamp(4 * k_internal, 48, 160);
  m = std::min(m, dim - 1);
  m = std::max(m, std::min(dim - 1, k_internal + 2));
  const double tol_abs = opts.tol * gamma;

  std::mt19937_64 rng(0x6b657272u);  // fixed: spectra must be deterministic
  std::normal_distribution<double> gauss(0.0, 1.0);
  VectorC v0(dim);
  for (int i = 0; i < dim; ++i) v0(i) = cxd(gauss(rng), gauss(rng));
  project_traceless(v0);
  v0.normalize();

  std::ostringstream budget;
  for (int restart = 0; restart <= opts.max_restarts; ++restart) {
    MatrixC basis = MatrixC::Zero(dim, m + 1);
    MatrixC hess = MatrixC::Zero(m + 1, m);
    basis.col(0) = v0;
    int steps = m;
    for (int j = 0; j < m; ++j) {
      VectorC w = apply_inverse(basis.col(j));
      const double raw_norm = w.norm();
      // classical Gram-Schmidt, twice
      VectorC h1 = basis.leftCols(j + 1).adjoint() * w;
      w.noalias() -= basis.leftCols(j + 1) * h1;
      VectorC h2 = basis.leftCols(j + 1).adjoint() * w;
      w.noalias() -= basis.leftCols(j + 1) * h2;
      hess.block(0, j, j + 1, 1) = h1 + h2;
      const double beta = w.norm();
      hess(j + 1, j) = beta;
      if (beta <= 1e-12 * std::max(raw_norm, 1.0)) {
        steps = j + 1;  // invariant subspace found
        break;
      }
      basis.col(j + 1) = w / beta;
    }

    Eigen::ComplexEigenSolver<MatrixC> ritz(hess.topLeftCorner(steps, steps), true);
    if (ritz.info() != Eigen::Success)
      throw std::runtime_error("spectrum: Ritz eigensolver failed");

    std::vector<int> order(steps);
    for (int i = 0; i < steps; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return std::abs(ritz.eigenvalues()(a)) > std::abs(ritz.eigenvalues()(b));
    });

    // Accept a consecutive run of converged Ritz pairs in dominance order:
    // shift-invert converges nearest-zero eigenvalues first, so a gap means
    // everything beyond it is untrustworthy.
    const double tol_eff = std::max(tol_abs, 5e-13 * liouv.mat.norm());
    EigPairs out;
    std::vector<VectorC> converged_vecs;
    const int take = std::min(k_internal, steps);
    for (int idx = 0; idx < take; ++idx) {
      const int i = order[idx];
      const cxd theta = ritz.eigenvalues()(i);
      if (std::abs(theta) < 1e-300) break;
      VectorC x = basis.leftCols(steps) * ritz.eigenvectors().col(i);
      x.normalize();
      const cxd lambda = 1.0 / theta;
      const double res = (liouv.mat * x - lambda * x).norm();
      if (res > tol_eff * std::max(1.0, std::abs(lambda) / gamma)) break;
      out.values.push_back(lambda);
      converged_vecs.push_back(std::move(x));
    }
    const int converged = static_cast<int>(out.values.size());
    if (converged >= std::min(take, k_want + 4)) {
      if (want_modes) out.vectors = std::move(converged_vecs);
      return out;
    }
    budget << "restart " << restart << ": m=" << m << ", converged " << converged
           << "/" << take << "; ";

    // restart from the span of the wanted Ritz directions
    VectorC fresh = VectorC::Zero(dim);
    for (std::size_t i = 0; i < converged_vecs.size(); ++i) fresh += converged_vecs[i];
    for (int i = 0; i < dim; ++i)
      fresh(i) += 1e-3 * cxd(gauss(rng), gauss(rng));
    project_traceless(fresh);
    if (fresh.norm() < 1e-12) {
      for (int i = 0; i < dim; ++i) fresh(i) = cxd(gauss(rng), gauss(rng));
      project_traceless(fresh);
    }
    v0 = fresh.normalized();
    m = std::min(dim - 1, m + m / 2);
  }
  throw std::runtime_error("spectrum: Arnoldi did not converge (" + budget.str() +
                           "requested k=" + std::to_string(k_want) + ")");
}

double relative_change(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace

Superoperator build_liouvillian(const SystemParams& params, const FockSpace& space) {
  params.validate();
  const int d = space.dim();
  if (d < 2) throw std::invalid_argument("build_liouvillian: dimension < 2");

  const SparseC a = annihilation(space).sparseView();
  const SparseC nop = number_operator(space).sparseView();
  const SparseC h = hamiltonian(params, space).sparseView();
  const SparseC id = sparse_identity(d);
  const SparseC ht = SparseC(h.transpose());
  const SparseC ac = SparseC(a.conjugate());

  const SparseC comm_left = Eigen::kroneckerProduct(id, h);
  const SparseC comm_right = Eigen::kroneckerProduct(ht, id);
  const SparseC jump = Eigen::kroneckerProduct(ac, a);
  const SparseC loss_left = Eigen::kroneckerProduct(id, nop);
  const SparseC loss_right = Eigen::kroneckerProduct(SparseC(nop.transpose()), id);

  Superoperator liouv{SparseC(), params, space};
  liouv.mat = (-kImag) * (comm_left - comm_right) +
              (0.5 * params.gamma) * (2.0 * jump - loss_left - loss_right);
  liouv.mat.makeCompressed();
  return liouv;
}

MatrixC apply(const Superoperator& liouv, const MatrixC& rho) {
  if (rho.rows() != liouv.space.dim() || rho.cols() != liouv.space.dim())
    throw std::invalid_argument("apply: dimension mismatch");
  return unvectorize(liouv.mat * vectorize(rho), liouv.space.dim());
}

QuantumState steady_state(const Superoperator& liouv) {
  const int d = liouv.space.dim();
  const VectorC v1 = steady_vector(liouv, 0);
  const VectorC v2 = steady_vector(liouv, (d / 2) * (d + 1));
  if ((v1 - v2).norm() > 1e-8 * std::max(1.0, v1.norm()))
    throw std::runtime_error(
        "steady_state: degenerate null space — solutions from independent "
        "solver initializations disagree");

  MatrixC rho = unvectorize(v1, d);
  rho = 0.5 * (rho + rho.adjoint()).eval();
  rho /= rho.trace().real();

  const double residual = (liouv.mat * vectorize(rho)).norm();
  if (residual > 1e-10 * std::max(1.0, liouv.mat.norm()))
    throw std::runtime_error("steady_state: residual " + std::to_string(residual) +
                             " exceeds tolerance");
  try {
    return QuantumState::from_density_matrix(rho);
  } catch (const std::invalid_argument& err) {
    throw std::runtime_error(std::string("steady_state: invalid density matrix "
                                         "(cutoff likely insufficient): ") +
                             err.what());
  }
}

LiouvillianSpectrum liouvillian_spectrum(const Superoperator& liouv, int k,
                                         const SpectrumOptions& opts) {
  const int dim = liouv.dim();
  const int d = liouv.space.dim();
  const double gamma = liouv.params.gamma;
  if (k < 1 || k > dim) throw std::invalid_argument("spectrum: k out of range");

  bool dense = false;
  switch (opts.method) {
    case EigMethod::Dense: dense = true; break;
    case EigMethod::ShiftInvert: dense = false; break;
    case EigMethod::Auto: dense = dim <= 400 || 3 * k >= dim; break;
  }

  EigPairs pairs;
  if (dense) {
    pairs = dense_eigs(liouv, opts.compute_modes);
  } else {
    pairs = shift_invert_eigs(liouv, std::max(k, 2), opts.compute_modes, opts);
    // reinstate the deflated zero mode
    pairs.values.push_back(cxd(0.0, 0.0));
    if (opts.compute_modes) {
      VectorC v = steady_vector(liouv, 0);
      MatrixC rho = 0.5 * (unvectorize(v, d) + unvectorize(v, d).adjoint());
      pairs.vectors.push_back(vectorize(rho).normalized());
    }
  }

  std::vector<VectorC>* vec_ptr = opts.compute_modes ? &pairs.vectors : nullptr;
  enforce_conjugate_closure(pairs.values, vec_ptr, d, 1e-8 * gamma);

  std::vector<int> order(pairs.values.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return spectral_order(pairs.values[a], pairs.values[b]);
  });

  if (pairs.values[order[0]].real() > 1e-9 * gamma)
    throw std::runtime_error("spectrum: eigenvalue with positive real part found");
  if (std::abs(pairs.values[order[0]]) > 1e-8 * gamma)
    throw std::runtime_error("spectrum: zero eigenvalue missing from extraction");
  if (order.size() < 2)
    throw std::runtime_error("spectrum: fewer than two eigenvalues available");

  LiouvillianSpectrum spec;
  spec.adr = -pairs.values[order[1]].real();
  const int keep = std::min<int>(k, static_cast<int>(order.size()));
  spec.eigenvalues.reserve(keep);
  for (int i = 0; i < keep; ++i) spec.eigenvalues.push_back(pairs.values[order[i]]);
  if (opts.compute_modes) {
    MatrixC modes(dim, keep);
    for (int i = 0; i < keep; ++i) modes.col(i) = pairs.vectors[order[i]];
    spec.eigenmodes = std::move(modes);
  }
  return spec;
}

int converge_cutoff(const SystemParams& params, double tol, const CutoffSearch& search) {
  params.validate();
  if (!(tol > 0.0)) throw std::invalid_argument("converge_cutoff: tolerance must be > 0");
  if (params.f == 0.0) return 1;  // vacuum steady state at any cutoff

  struct Obs {
    double nbar, g2, adr;
  };
  std::map<int, Obs> memo;
  auto observe = [&](int n) -> const Obs& {
    auto hit = memo.find(n);
    if (hit != memo.end()) return hit->second;
    FockSpace space(n);
    const Superoperator liouv = build_liouvillian(params, space);
    const QuantumState rho = steady_state(liouv);
    const double nbar = mean_photon_number(rho);
    double aa = 0.0;  // <a+ a+ a a> from the populations
    for (int j = 0; j < rho.dim(); ++j)
      aa += static_cast<double>(j) * (j - 1.0) * rho.rho()(j, j).real();
    const double g2 = aa / (nbar * nbar);
    const LiouvillianSpectrum spec = liouvillian_spectrum(liouv, 2);
    return memo.emplace(n, Obs{nbar, g2, spec.adr}).first->second;
  };

  double last_change = 0.0;
  int last_n = 0;
  for (int n = search.start; n + 10 <= search.max_cutoff; n += search.step) {
    const Obs& coarse = observe(n);
    const Obs& fine = observe(n + 10);
    last_change = std::max({relative_change(coarse.nbar, fine.nbar),
                            relative_change(coarse.g2, fine.g2),
                            relative_change(coarse.adr, fine.adr)});
    last_n = n;
    if (last_change < tol) return n;
  }
  throw std::runtime_error("converge_cutoff: not converged up to N=" +
                           std::to_string(last_n + 10) + " (last relative change " +
                           std::to_string(last_change) + ")");
}

}  // namespace kerr
