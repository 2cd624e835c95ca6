#include "kerr/trajectories.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "kerr/correlations.hpp"
#include "kerr/liouvillian.hpp"

namespace kerr {

namespace {

// SplitMix64 finalizer: decorrelates per-trajectory seeds split from a base.
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Uniform double in [0,1) with exactly 53 random bits (engine-independent).
double uniform53(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/*
 * Inter-jump evolution under H_eff = H - i(gamma/2) a^+a, evaluated exactly
 * in the eigenbasis of H_eff: |phi(t)> = P exp(-i Lambda t) P^{-1} |psi>.
 * One eigendecomposition per simulation replaces millions of stiff
 * integrator steps; the survival probability ||phi(t)||^2 is then O(dim^2)
 * per evaluation, which the jump-time bisection leans on heavily.
 */
struct EffectivePropagator {
  MatrixC p;
  MatrixC p_inv;
  VectorC lambda;
  int dim = 0;

  EffectivePropagator(const SystemParams& params, const FockSpace& space) {
    const MatrixC h_eff = hamiltonian(params, space) -
                          cxd(0.0, 0.5 * params.gamma) * number_operator(space);
    Eigen::ComplexEigenSolver<MatrixC> es(h_eff, true);
    if (es.info() != Eigen::Success)
      throw std::runtime_error("trajectories: H_eff eigendecomposition failed");
    p = es.eigenvectors();
    lambda = es.eigenvalues();
    p_inv = p.partialPivLu().solve(MatrixC::Identity(p.rows(), p.cols()));
    dim = static_cast<int>(p.rows());
    const double scale = std::max(1.0, h_eff.norm());
    if ((p * lambda.asDiagonal() * p_inv - h_eff).norm() > 1e-10 * scale)
      throw std::runtime_error(
          "trajectories: H_eff eigenbasis is ill-conditioned; propagation "
          "would be unreliable at these parameters");
  }

  // coefficients of psi in the eigenbasis
  VectorC coefficients(const VectorC& psi) const { return p_inv * psi; }

  // unnormalized |phi(t)> from eigenbasis coefficients
  VectorC state_at(const VectorC& coeff, double t) const {
    VectorC evolved(dim);
    for (int k = 0; k < dim; ++k)
      evolved(k) = std::exp(cxd(0.0, -1.0) * lambda(k) * t) * coeff(k);
    return p * evolved;
  }

  double survival(const VectorC& coeff, double t) const {
    return state_at(coeff, t).squaredNorm();
  }
};

}  // namespace

TrajectoryRecord simulate(const SystemParams& params, const FockSpace& space,
                          double duration, std::uint64_t seed,
                          const TrajectoryOptions& opts) {
  params.validate();
  if (!(duration > 0.0)) throw std::invalid_argument("simulate: duration must be > 0");
  if (opts.initial_fock < 0 || opts.initial_fock > space.cutoff)
    throw std::invalid_argument("simulate: initial Fock level out of range");

  const EffectivePropagator prop(params, space);
  const int d = space.dim();
  const double ppig = opts.seconds_per_inverse_gamma * 1e12;  // ps per 1/gamma

  TrajectoryRecord record;
  record.stream.params = params;
  record.stream.seed = seed;
  record.stream.ps_per_inverse_gamma = ppig;
  record.stream.duration_ps =
      static_cast<std::int64_t>(std::llround(duration * params.gamma * ppig));

  std::mt19937_64 rng(seed);
  VectorC psi = VectorC::Zero(d);
  psi(opts.initial_fock) = 1.0;

  auto check_leak = [&](const VectorC& phi) {
    const double top = std::norm(phi(d - 1)) / phi.squaredNorm();
    if (top > opts.norm_leak_tol)
      throw std::runtime_error("simulate: cutoff insufficiency, top Fock level "
                               "population " + std::to_string(top));
  };
  auto mean_n = [&](const VectorC& phi) {
    double acc = 0.0;
    for (int k = 0; k < d; ++k) acc += k * std::norm(phi(k));
    return acc / phi.squaredNorm();
  };

  double t = 0.0;             // absolute time, units of 1/gamma x gamma
  double next_sample = 0.0;
  double guess = 1.0 / params.gamma;  // trial bracket width for the next jump
  const double bisect_tol = 1e-12 * duration;
  std::int64_t last_ps = -1;

  if (opts.sample_dt > 0.0) {
    record.state_samples.emplace_back(0.0, mean_n(psi));
    next_sample = opts.sample_dt;
  }

  while (t < duration) {
    const VectorC coeff = prop.coefficients(psi);
    const double xi = std::max(uniform53(rng), 1e-300);  // jump threshold in (0,1)
    const double horizon = duration - t;

    // bracket the jump time: survival is monotone decreasing
    double lo = 0.0, hi = std::min(guess, horizon);
    bool jumps = false;
    for (;;) {
      if (prop.survival(coeff, hi) < xi) {
        jumps = true;
        break;
      }
      lo = hi;
      if (hi >= horizon) break;
      hi = std::min(2.0 * hi, horizon);
    }

    // emit state samples that fall inside this no-jump stretch
    double segment_end;
    if (jumps) {
      while (hi - lo > bisect_tol) {
        const double mid = 0.5 * (lo + hi);
        (prop.survival(coeff, mid) >= xi ? lo : hi) = mid;
      }
      segment_end = 0.5 * (lo + hi);
    } else {
      segment_end = horizon;
    }
    if (opts.sample_dt > 0.0) {
      while (next_sample <= t + segment_end && next_sample <= duration) {
        record.state_samples.emplace_back(next_sample,
                                          mean_n(prop.state_at(coeff, next_sample - t)));
        next_sample += opts.sample_dt;
      }
    }

    if (!jumps) break;  // no further click before the horizon

    VectorC phi = prop.state_at(coeff, segment_end);
    check_leak(phi);
    // collapse: psi <- a phi / ||a phi||, one click recorded
    VectorC lowered(d);
    for (int k = 0; k + 1 < d; ++k) lowered(k) = std::sqrt(k + 1.0) * phi(k + 1);
    lowered(d - 1) = 0.0;
    const double jump_norm = lowered.norm();
    if (jump_norm <= 0.0)
      throw std::runtime_error("simulate: jump from a vacuum state");
    psi = lowered / jump_norm;

    t += segment_end;
    guess = std::max(segment_end, 1e-3 / params.gamma);
    std::int64_t ps = static_cast<std::int64_t>(std::llround(t * params.gamma * ppig));
    if (ps <= last_ps) ps = last_ps + 1;  // integer clock must stay strictly increasing
    if (ps < record.stream.duration_ps) {
      record.stream.clicks_ps.push_back(ps);
      last_ps = ps;
    }
  }

  record.stream.validate();
  return record;
}

CorrelationCurve ensemble_g2(const SystemParams& params, const FockSpace& space,
                             double duration, int n_traj, std::uint64_t base_seed,
                             double bin_time, double max_delay,
                             const TrajectoryOptions& opts) {
  if (n_traj < 1) throw std::invalid_argument("ensemble_g2: n_traj must be >= 1");
  const double ppig = opts.seconds_per_inverse_gamma * 1e12;
  const auto bin_ps = static_cast<std::int64_t>(std::llround(bin_time * params.gamma * ppig));
  const auto max_ps = static_cast<std::int64_t>(std::llround(max_delay * params.gamma * ppig));

  std::vector<CorrelationCurve> curves;
  curves.reserve(n_traj);
  for (int i = 0; i < n_traj; ++i) {
    const std::uint64_t seed = splitmix64(base_seed + static_cast<std::uint64_t>(i));
    const TrajectoryRecord record = simulate(params, space, duration, seed, opts);
    curves.push_back(g2_direct(record.stream, bin_ps, max_ps));
  }
  if (n_traj == 1) return curves.front();

  CorrelationCurve out;
  out.kind = CurveKind::G2;
  out.time_unit_s = 1.0;
  out.delays = curves.front().delays;
  const int nbins = static_cast<int>(out.delays.size());
  out.values = VectorR::Zero(nbins);
  out.errors = VectorR::Zero(nbins);
  for (const auto& c : curves) out.values += c.values;
  out.values /= static_cast<double>(n_traj);
  for (const auto& c : curves) {
    const VectorR dev = c.values - out.values;
    out.errors += dev.cwiseProduct(dev);
  }
  out.errors = (out.errors / (static_cast<double>(n_traj) * (n_traj - 1.0))).cwiseSqrt();
  return out;
}

std::vector<MePoint> me_evolve(const SystemParams& params, const FockSpace& space,
                               const QuantumState& rho0,
                               const std::vector<double>& grid, double rtol) {
  if (grid.empty()) throw std::invalid_argument("me_evolve: empty time grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 0.0 || (i > 0 && grid[i] <= grid[i - 1]))
      throw std::invalid_argument("me_evolve: grid must be non-negative and increasing");
  }
  const Superoperator liouv = build_liouvillian(params, space);
  const int d = space.dim();
  VectorC v = rho0.vectorized();

  auto observables = [&](const VectorC& vec) {
    double nbar = 0.0, aa = 0.0;
    for (int k = 0; k < d; ++k) {
      const double pop = vec(k * (d + 1)).real();
      nbar += k * pop;
      aa += k * (k - 1.0) * pop;
    }
    return std::make_pair(nbar, nbar > 1e-300 ? aa / (nbar * nbar) : 0.0);
  };

  std::vector<MePoint> out;
  out.reserve(grid.size());
  double t_prev = 0.0;
  for (double t : grid) {
    v = propagate(liouv, v, t - t_prev, rtol);
    t_prev = t;
    const auto [nbar, g2] = observables(v);
    out.push_back({t, nbar, g2});
  }
  return out;
}

}  // namespace kerr
