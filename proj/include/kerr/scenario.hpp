#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace kerr {

// Thrown for malformed configuration; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when a computation fails numerically; maps to exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// A fully-resolved run description.  Serializable to the flat key = value
// config format; identical scenarios (and seeds) reproduce identical bytes.
struct Scenario {
  enum class Command { Spectrum, Steady, G2, G1, Sweep, Meanfield, Trajectory, Analyze, Fit };

  Command command = Command::Steady;
  std::string out_dir = "out";
  int threads = 1;

  // parameter grid (outer product of the three lists)
  std::vector<double> deltas{0.0};
  std::vector<double> us{0.0};
  std::vector<double> fs{0.0};
  double gamma = 1.0;

  // numerics
  int cutoff = 0;  // 0 = auto via converge_cutoff
  double cutoff_tol = 1e-6;
  int max_cutoff = 150;
  int spectrum_k = 6;

  // delay grid for g2/g1 (units of 1/gamma); delay_max = 0 -> 50/ADR
  double delay_min = 1e-2;
  double delay_max = 0.0;
  int delay_points = 200;

  // trajectories
  double duration = 1e4;  // units of 1/gamma
  int n_traj = 1;
  std::uint64_t seed = 1;
  double seconds_per_inverse_gamma = 1e-9;
  double sample_dt = 0.0;

  // analyze pipeline (times in seconds)
  std::string input;
  double bin_s = 400e-12;
  double max_delay_s = 0.0;  // 0 -> duration/50
  int downsample_factor = 0;
  double classical_bin_s = 10e-6;
  double irf_fwhm_s = 64e-12;

  // fit command
  std::string fit_model = "bunching";  // lorentzian|bunching|power_law|exponential|quadratic
  double f_c = 0.0;
  double window_lo = -0.3;
  double window_hi = -0.05;

  // mean-field ramp (enabled when ramp_period > 0)
  double ramp_peak = 0.0;
  double ramp_period = 0.0;
  double ramp_sample_dt = 0.0;
};

Scenario::Command parse_command(const std::string& name);
std::string command_name(Scenario::Command cmd);

// Flat config file: [section] headers, key = value lines, '#' comments.
// Lists are comma-separated; "start:stop:step" expands to an inclusive
// range.  Unknown keys are errors with line diagnostics.
Scenario parse_scenario_file(const std::string& path);
Scenario parse_scenario_text(const std::string& text, const std::string& origin);

// Canonical serialization of a scenario (itself valid config input).
std::string scenario_to_config(const Scenario& scenario);

// Artifact manifest: every file written by a run, with size and checksum.
struct ArtifactEntry {
  std::string path;  // relative to out_dir
  std::uint64_t bytes = 0;
  std::uint64_t fnv1a64 = 0;
};

struct Manifest {
  std::string command;
  std::string code_version;
  std::uint64_t scenario_fnv1a64 = 0;
  std::vector<ArtifactEntry> artifacts;
};

// Executes the scenario, writes artifacts plus manifest.json under out_dir,
// and returns the manifest.  Sweep-style runs checkpoint per grid point
// (atomic write-then-rename) and resume by skipping completed points.
Manifest run_scenario(const Scenario& scenario);

// helpers shared by writers and tests
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64_file(const std::string& path);
std::string format_g17(double value);  // 17-significant-digit round-trip text

}  // namespace kerr
