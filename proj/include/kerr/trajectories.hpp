#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "kerr/fock.hpp"
#include "kerr/photonstream.hpp"

namespace kerr {

struct TrajectoryOptions {
  double sample_dt = 0.0;                  // 0 = no state samples
  double seconds_per_inverse_gamma = 1e-9; // click timestamp clock
  int initial_fock = 0;
  double norm_leak_tol = 1e-6;  // max tolerated population at the top level
};

struct TrajectoryRecord {
  PhotonStream stream;
  std::vector<std::pair<double, double>> state_samples;  // (t, <n>), time units of 1/gamma
};

// Monte Carlo wave-function (quantum jump) unraveling with effective
// Hamiltonian H - i(gamma/2) a^+a and jump operator sqrt(gamma) a.  Every
// jump emits one click.  Deterministic for fixed (params, space, duration,
// seed); trajectory streams are split from the seed by index elsewhere.
TrajectoryRecord simulate(const SystemParams& params, const FockSpace& space,
                          double duration, std::uint64_t seed,
                          const TrajectoryOptions& opts = {});

// Runs n_traj independent trajectories (seeds split from base_seed), pushes
// each stream through g2_direct, and averages the curves.  Error bars are
// the across-trajectory standard error per delay bin.
CorrelationCurve ensemble_g2(const SystemParams& params, const FockSpace& space,
                             double duration, int n_traj, std::uint64_t base_seed,
                             double bin_time, double max_delay,
                             const TrajectoryOptions& opts = {});

// Direct master-equation integration on a time grid (cross-check for the
// stochastic unraveling).  Times in units of 1/gamma.
struct MePoint {
  double t = 0.0;
  double nbar = 0.0;
  double g2zero = 0.0;
};

std::vector<MePoint> me_evolve(const SystemParams& params, const FockSpace& space,
                               const QuantumState& rho0,
                               const std::vector<double>& grid, double rtol = 1e-8);

}  // namespace kerr
