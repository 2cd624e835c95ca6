#include "kerr/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <utility>

#include "json.hpp"

#include "kerr/correlations.hpp"
#include "kerr/fitting.hpp"
#include "kerr/fock.hpp"
#include "kerr/liouvillian.hpp"
#include "kerr/meanfield.hpp"
#include "kerr/photonstream.hpp"
#include "kerr/trajectories.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace kerr {

namespace {

constexpr const char* kCodeVersion = "0.3.0";

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::string hex16(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct LineRef {
  const std::string& origin;
  int line;
};

[[noreturn]] void fail(const LineRef& at, const std::string& msg) {
  throw ConfigError(at.origin + ":" + std::to_string(at.line) + ": " + msg);
}

double to_double(const LineRef& at, const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("");
    return x;
  } catch (const std::exception&) {
    fail(at, key + ": expected a number, got '" + v + "'");
  }
}

long long to_int(const LineRef& at, const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument("");
    return x;
  } catch (const std::exception&) {
    fail(at, key + ": expected an integer, got '" + v + "'");
  }
}

std::uint64_t to_u64(const LineRef& at, const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument("");
    return x;
  } catch (const std::exception&) {
    fail(at, key + ": expected an unsigned integer, got '" + v + "'");
  }
}

// comma-separated scalars; "start:stop:step" expands to an inclusive range
std::vector<double> to_list(const LineRef& at, const std::string& key,
                            const std::string& value) {
  std::vector<double> out;
  std::stringstream items(value);
  std::string item;
  while (std::getline(items, item, ',')) {
    item = trim(item);
    if (item.empty()) fail(at, key + ": empty list element");
    const auto c1 = item.find(':');
    if (c1 == std::string::npos) {
      out.push_back(to_double(at, key, item));
      continue;
    }
    const auto c2 = item.find(':', c1 + 1);
    if (c2 == std::string::npos || item.find(':', c2 + 1) != std::string::npos)
      fail(at, key + ": ranges use start:stop:step");
    const double start = to_double(at, key, trim(item.substr(0, c1)));
    const double stop = to_double(at, key, trim(item.substr(c1 + 1, c2 - c1 - 1)));
    const double step = to_double(at, key, trim(item.substr(c2 + 1)));
    if (!(step > 0.0)) fail(at, key + ": range step must be > 0");
    if (stop < start) fail(at, key + ": range stop must be >= start");
    for (int i = 0;; ++i) {
      const double v = start + i * step;
      if (v > stop + 1e-9 * step) break;
      out.push_back(v);
      if (out.size() > 1000000) fail(at, key + ": range expands beyond 1e6 points");
    }
  }
  if (out.empty()) fail(at, key + ": empty list");
  return out;
}

const std::vector<std::pair<std::string, Scenario::Command>>& command_table() {
  static const std::vector<std::pair<std::string, Scenario::Command>> table{
      {"spectrum", Scenario::Command::Spectrum},
      {"steady", Scenario::Command::Steady},
      {"g2", Scenario::Command::G2},
      {"g1", Scenario::Command::G1},
      {"sweep", Scenario::Command::Sweep},
      {"meanfield", Scenario::Command::Meanfield},
      {"trajectory", Scenario::Command::Trajectory},
      {"analyze", Scenario::Command::Analyze},
      {"fit", Scenario::Command::Fit},
  };
  return table;
}

void validate_scenario(const Scenario& s) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(s.gamma > 0.0, "gamma must be > 0");
  require(s.threads >= 1, "threads must be >= 1");
  require(!s.deltas.empty() && !s.us.empty() && !s.fs.empty(),
          "delta, u and f lists must be non-empty");
  for (double u : s.us) require(u >= 0.0, "u must be >= 0");
  for (double f : s.fs) require(f >= 0.0, "f must be >= 0");
  require(s.cutoff >= 0, "cutoff must be >= 0 (0 = auto)");
  require(s.cutoff > 0 || s.max_cutoff >= 20, "max_cutoff must be >= 20");
  require(s.cutoff_tol > 0.0, "cutoff_tol must be > 0");
  require(s.spectrum_k >= 1, "spectrum_k must be >= 1");
  require(s.delay_min > 0.0, "delay_min must be > 0");
  require(s.delay_max == 0.0 || s.delay_max > s.delay_min,
          "delay_max must be 0 (auto) or > delay_min");
  require(s.delay_points >= 2, "delay_points must be >= 2");
  require(s.duration > 0.0, "duration must be > 0");
  require(s.n_traj >= 1, "n_traj must be >= 1");
  require(s.seconds_per_inverse_gamma > 0.0, "seconds_per_inverse_gamma must be > 0");
  require(s.sample_dt >= 0.0, "sample_dt must be >= 0");
  require(s.bin_s >= 1e-12, "bin_s must be >= 1 ps");
  require(s.max_delay_s >= 0.0, "max_delay_s must be >= 0");
  require(s.downsample_factor >= 0, "downsample_factor must be >= 0");
  require(s.classical_bin_s >= 1e-12, "classical_bin_s must be >= 1 ps");
  require(s.irf_fwhm_s >= 0.0, "irf_fwhm_s must be >= 0");
  static const std::vector<std::string> models{"bunching", "lorentzian", "power_law",
                                               "exponential", "quadratic"};
  require(std::find(models.begin(), models.end(), s.fit_model) != models.end(),
          "fit_model must be one of bunching|lorentzian|power_law|exponential|quadratic");
  if (s.command == Scenario::Command::Analyze || s.command == Scenario::Command::Fit)
    require(!s.input.empty(), "input file is required for analyze/fit");
  if (s.command == Scenario::Command::Fit &&
      (s.fit_model == "power_law" || s.fit_model == "exponential")) {
    require(s.f_c > 0.0, "f_c must be > 0 for gap-scaling fits");
    require(s.window_lo < s.window_hi, "window_lo must be < window_hi");
  }
  require(s.ramp_period >= 0.0, "ramp_period must be >= 0");
  if (s.ramp_period > 0.0) {
    require(s.ramp_peak > 0.0, "ramp_peak must be > 0 when ramping");
    require(s.ramp_sample_dt > 0.0, "ramp_sample_dt must be > 0 when ramping");
  }
}

// ---------------------------------------------------------------- artifacts

void atomic_write_file(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed to write " + tmp.string());
  }
  fs::rename(tmp, path);
}

struct ArtifactWriter {
  fs::path root;
  std::vector<ArtifactEntry> entries;

  void write(const std::string& rel, const std::string& bytes) {
    const fs::path path = root / rel;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    atomic_write_file(path, bytes);
    entries.push_back({rel, bytes.size(), fnv1a64(bytes.data(), bytes.size())});
  }

  // record a file some library routine already wrote under root
  void adopt(const std::string& rel) {
    const fs::path path = root / rel;
    entries.push_back({rel, static_cast<std::uint64_t>(fs::file_size(path)),
                       fnv1a64_file(path.string())});
  }
};

struct Row {
  std::string text;

  Row& add(double v) {
    sep();
    text += format_g17(v);
    return *this;
  }
  Row& add(int v) { return add(static_cast<long long>(v)); }
  Row& add(long long v) {
    sep();
    text += std::to_string(v);
    return *this;
  }
  Row& add(const std::string& v) {
    sep();
    text += v;
    return *this;
  }

 private:
  void sep() {
    if (!text.empty()) text += ',';
  }
};

std::string build_csv(const std::vector<std::string>& comments,
                      const std::string& header,
                      const std::vector<std::string>& rows) {
  std::string out;
  for (const auto& c : comments) out += "# " + c + "\n";
  out += header + "\n";
  for (const auto& r : rows) out += r + "\n";
  return out;
}

// ------------------------------------------------------------------- shared

struct GridPoint {
  int index;
  double delta, u, f;
};

std::vector<GridPoint> make_grid(const Scenario& s) {
  std::vector<GridPoint> grid;
  int idx = 0;
  for (double d : s.deltas)
    for (double u : s.us)
      for (double f : s.fs) grid.push_back({idx++, d, u, f});
  return grid;
}

template <class Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex guard;
  std::exception_ptr error;
  auto work = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(guard);
        if (!error) error = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int count = std::min(threads, n);
  pool.reserve(count);
  for (int t = 0; t < count; ++t) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// Auto cutoff: converge once per (delta, u) at the largest drive of the
// sweep and reuse for every drive below it (occupation grows with drive).
int resolve_cutoff(const Scenario& s, double delta, double u, double f_conv) {
  if (s.cutoff > 0) return s.cutoff;
  SystemParams p;
  p.delta = delta;
  p.u = u;
  p.f = f_conv;
  p.gamma = s.gamma;
  CutoffSearch search;
  search.max_cutoff = s.max_cutoff;
  return std::max(converge_cutoff(p, s.cutoff_tol, search), 5);
}

SystemParams point_params(const Scenario& s, const GridPoint& pt) {
  SystemParams p;
  p.delta = pt.delta;
  p.u = pt.u;
  p.f = pt.f;
  p.gamma = s.gamma;
  return p;
}

// delays are configured in 1/gamma units; library time is user units
VectorR delay_grid_inverse_gamma(const Scenario& s, double delay_max) {
  VectorR grid(s.delay_points + 1);
  grid(0) = 0.0;
  const double lo = std::log(s.delay_min), hi = std::log(delay_max);
  for (int i = 0; i < s.delay_points; ++i)
    grid(i + 1) = std::exp(lo + (hi - lo) * i / (s.delay_points - 1.0));
  return grid;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// ------------------------------------------------------------------ steady

void cmd_steady(const Scenario& s, ArtifactWriter& w) {
  const auto grid = make_grid(s);
  const double f_conv = *std::max_element(s.fs.begin(), s.fs.end());
  std::map<std::pair<double, double>, int> cutoffs;
  for (const auto& pt : grid)
    if (!cutoffs.count({pt.delta, pt.u}))
      cutoffs[{pt.delta, pt.u}] = resolve_cutoff(s, pt.delta, pt.u, f_conv);

  std::vector<std::string> rows(grid.size());
  parallel_for(static_cast<int>(grid.size()), s.threads, [&](int i) {
    const auto& pt = grid[i];
    const int n = cutoffs.at({pt.delta, pt.u});
    const FockSpace space(n);
    const Superoperator liouv = build_liouvillian(point_params(s, pt), space);
    const QuantumState state = steady_state(liouv);
    const double nbar = mean_photon_number(state);
    const double g2 = nbar > 0.0 ? g2_zero(state) : std::nan("");
    rows[i] = Row{}.add(pt.delta).add(pt.u).add(pt.f).add(n).add(nbar).add(g2).text;
  });

  w.write("steady.csv",
          build_csv({"kerrsim steady", "detuning/interaction/drive in gamma units"},
                    "delta_over_gamma,u_over_gamma,f_over_gamma,cutoff,nbar,g2_0",
                    rows));
}

// ---------------------------------------------------------------- spectrum

void cmd_spectrum(const Scenario& s, ArtifactWriter& w) {
  const auto grid = make_grid(s);
  const double f_conv = *std::max_element(s.fs.begin(), s.fs.end());
  std::map<std::pair<double, double>, int> cutoffs;
  for (const auto& pt : grid)
    if (!cutoffs.count({pt.delta, pt.u}))
      cutoffs[{pt.delta, pt.u}] = resolve_cutoff(s, pt.delta, pt.u, f_conv);

  std::vector<std::string> blocks(grid.size());
  parallel_for(static_cast<int>(grid.size()), s.threads, [&](int i) {
    const auto& pt = grid[i];
    const int n = cutoffs.at({pt.delta, pt.u});
    const FockSpace space(n);
    const Superoperator liouv = build_liouvillian(point_params(s, pt), space);
    const int k = std::min(s.spectrum_k, liouv.dim() - 2);
    const LiouvillianSpectrum spec = liouvillian_spectrum(liouv, k);
    std::string block;
    for (std::size_t j = 0; j < spec.eigenvalues.size(); ++j) {
      const cxd lam = spec.eigenvalues[j] / s.gamma;
      block += Row{}
                   .add(pt.delta)
                   .add(pt.u)
                   .add(pt.f)
                   .add(n)
                   .add(static_cast<int>(j))
                   .add(lam.real())
                   .add(lam.imag())
                   .text +
               "\n";
    }
    blocks[i] = block;
  });

  std::string body;
  for (const auto& b : blocks) body += b;
  std::string csv = build_csv(
      {"kerrsim spectrum", "eigenvalues in gamma units, sorted by descending real part"},
      "delta_over_gamma,u_over_gamma,f_over_gamma,cutoff,index,re_lambda_over_gamma,"
      "im_lambda_over_gamma",
      {});
  csv += body;
  w.write("spectrum.csv", csv);
}

// ------------------------------------------------------------------- sweep

void cmd_sweep(const Scenario& s, ArtifactWriter& w, std::uint64_t scenario_hash) {
  const auto grid = make_grid(s);
  const double f_conv = *std::max_element(s.fs.begin(), s.fs.end());
  std::map<std::pair<double, double>, int> cutoffs;
  for (const auto& pt : grid)
    if (!cutoffs.count({pt.delta, pt.u}))
      cutoffs[{pt.delta, pt.u}] = resolve_cutoff(s, pt.delta, pt.u, f_conv);

  const fs::path ck_dir = w.root / "checkpoints" / hex16(scenario_hash);
  fs::create_directories(ck_dir);
  auto ck_path = [&](int i) {
    char name[32];
    std::snprintf(name, sizeof name, "point_%06d.txt", i);
    return ck_dir / name;
  };

  std::vector<std::string> rows(grid.size());
  parallel_for(static_cast<int>(grid.size()), s.threads, [&](int i) {
    const fs::path ck = ck_path(i);
    if (fs::exists(ck)) {  // resume: reuse the finished grid point
      std::ifstream in(ck, std::ios::binary);
      std::string line;
      if (std::getline(in, line) && !line.empty()) {
        rows[i] = line;
        return;
      }
    }
    const auto& pt = grid[i];
    const int n = cutoffs.at({pt.delta, pt.u});
    const FockSpace space(n);
    const Superoperator liouv = build_liouvillian(point_params(s, pt), space);
    const QuantumState state = steady_state(liouv);
    const double nbar = mean_photon_number(state);
    const double g2 = nbar > 0.0 ? g2_zero(state) : std::nan("");
    const int k = std::min(std::max(3, s.spectrum_k), liouv.dim() - 2);
    const LiouvillianSpectrum spec = liouvillian_spectrum(liouv, k);
    const cxd l1 = spec.eigenvalues[1] / s.gamma;
    const cxd l2 = spec.eigenvalues.size() > 2 ? spec.eigenvalues[2] / s.gamma : cxd(0, 0);
    rows[i] = Row{}
                  .add(pt.delta)
                  .add(pt.u)
                  .add(pt.f)
                  .add(n)
                  .add(nbar)
                  .add(g2)
                  .add(spec.adr / s.gamma)
                  .add(l1.imag())
                  .add(l2.real())
                  .add(l2.imag())
                  .text;
    atomic_write_file(ck, rows[i] + "\n");
  });

  w.write("sweep.csv",
          build_csv({"kerrsim sweep",
                     "rates (adr, lambda) in gamma units; adr = -Re lambda_1"},
                    "delta_over_gamma,u_over_gamma,f_over_gamma,cutoff,nbar,g2_0,"
                    "adr_over_gamma,im_lambda1_over_gamma,re_lambda2_over_gamma,"
                    "im_lambda2_over_gamma",
                    rows));
  std::error_code ec;
  fs::remove_all(ck_dir, ec);  // completed: checkpoints no longer needed
  fs::remove(w.root / "checkpoints", ec);
}

// ---------------------------------------------------------------- g2 / g1

void cmd_correlation_map(const Scenario& s, ArtifactWriter& w, bool second_order) {
  const double f_conv = *std::max_element(s.fs.begin(), s.fs.end());
  const int nf = static_cast<int>(s.fs.size());
  int pair_index = 0;
  for (double delta : s.deltas) {
    for (double u : s.us) {
      const int n = resolve_cutoff(s, delta, u, f_conv);
      const FockSpace space(n);

      // common delay grid: auto range covers the slowest column
      double delay_max = s.delay_max;
      std::vector<double> adrs(nf, 0.0);
      if (delay_max == 0.0) {
        parallel_for(nf, s.threads, [&](int i) {
          SystemParams p;
          p.delta = delta;
          p.u = u;
          p.f = s.fs[i];
          p.gamma = s.gamma;
          const Superoperator liouv = build_liouvillian(p, space);
          adrs[i] = liouvillian_spectrum(liouv, 2).adr / s.gamma;
        });
        delay_max = 50.0 / *std::min_element(adrs.begin(), adrs.end());
        delay_max = std::max(delay_max, 2.0 * s.delay_min);
      }
      const VectorR grid_ig = delay_grid_inverse_gamma(s, delay_max);
      const VectorR grid_user = grid_ig / s.gamma;

      std::vector<VectorR> columns(nf);
      parallel_for(nf, s.threads, [&](int i) {
        SystemParams p;
        p.delta = delta;
        p.u = u;
        p.f = s.fs[i];
        p.gamma = s.gamma;
        const Superoperator liouv = build_liouvillian(p, space);
        const QuantumState state = steady_state(liouv);
        const CorrelationCurve curve = second_order
                                           ? g2_curve(liouv, state, grid_user)
                                           : g1_curve(liouv, state, grid_user);
        columns[i] = curve.values;
      });

      const char* tag = second_order ? "g2" : "g1";
      std::string header = "delay_s";
      for (double f : s.fs) header += "," + std::string(tag) + "_f" + format_g17(f);
      std::vector<std::string> rows(grid_ig.size());
      for (int r = 0; r < grid_ig.size(); ++r) {
        Row row;
        row.add(grid_ig(r) * s.seconds_per_inverse_gamma);
        for (int i = 0; i < nf; ++i) row.add(columns[i](r));
        rows[r] = row.text;
      }
      char name[48];
      std::snprintf(name, sizeof name, "%s_map_%03d.csv", tag, pair_index++);
      w.write(name,
              build_csv({std::string("kerrsim ") + tag,
                         "delta_over_gamma = " + format_g17(delta),
                         "u_over_gamma = " + format_g17(u),
                         "cutoff = " + std::to_string(n),
                         "seconds_per_inverse_gamma = " +
                             format_g17(s.seconds_per_inverse_gamma),
                         "columns are drive amplitudes f in gamma units"},
                        header, rows));
    }
  }
}

// --------------------------------------------------------------- meanfield

void cmd_meanfield(const Scenario& s, ArtifactWriter& w) {
  const auto grid = make_grid(s);
  std::vector<std::string> root_rows;
  for (const auto& pt : grid) {
    const MeanFieldBranch branch = steady_amplitudes(point_params(s, pt));
    for (std::size_t j = 0; j < branch.roots.size(); ++j) {
      const auto& r = branch.roots[j];
      root_rows.push_back(Row{}
                              .add(pt.delta)
                              .add(pt.u)
                              .add(pt.f)
                              .add(static_cast<int>(j))
                              .add(r.n)
                              .add(r.alpha.real())
                              .add(r.alpha.imag())
                              .add(r.stability == RootStability::Stable ? 1 : 0)
                              .add(r.marginal ? 1 : 0)
                              .text);
    }
  }
  w.write("meanfield.csv",
          build_csv({"kerrsim meanfield", "one row per classical root, n ascending"},
                    "delta_over_gamma,u_over_gamma,f_over_gamma,root,n,re_alpha,"
                    "im_alpha,stable,marginal",
                    root_rows));

  std::vector<std::string> window_rows;
  for (double delta : s.deltas)
    for (double u : s.us)
      if (const auto win = bistable_window(delta, u, s.gamma))
        window_rows.push_back(
            Row{}.add(delta).add(u).add(win->first).add(win->second).text);
  w.write("bistable_window.csv",
          build_csv({"kerrsim meanfield bistable window",
                     "rows appear only where the window is non-empty"},
                    "delta_over_gamma,u_over_gamma,f_low_over_gamma,f_high_over_gamma",
                    window_rows));

  if (s.ramp_period > 0.0) {
    const auto& pt = grid.front();  // ramp runs on the first grid point
    TriangularRamp ramp;
    ramp.f_start = pt.f;
    ramp.f_peak = s.ramp_peak;
    ramp.period = s.ramp_period / s.gamma;
    const auto points =
        hysteresis_ramp(point_params(s, pt), ramp, s.ramp_sample_dt / s.gamma);
    std::vector<std::string> rows;
    rows.reserve(points.size());
    for (const auto& p : points)
      rows.push_back(
          Row{}.add(p.t * s.gamma * s.seconds_per_inverse_gamma).add(p.n).text);
    w.write("ramp.csv",
            build_csv({"kerrsim meanfield ramp",
                       "delta_over_gamma = " + format_g17(pt.delta),
                       "u_over_gamma = " + format_g17(pt.u),
                       "f_start_over_gamma = " + format_g17(pt.f),
                       "f_peak_over_gamma = " + format_g17(s.ramp_peak)},
                      "t_s,n", rows));
  }
}

// -------------------------------------------------------------- trajectory

void cmd_trajectory(const Scenario& s, ArtifactWriter& w) {
  const auto grid = make_grid(s);
  std::vector<std::string> index_rows;
  for (const auto& pt : grid) {
    // quantum jumps ride above the steady state: leave extra headroom
    const int n = resolve_cutoff(s, pt.delta, pt.u, pt.f) + 10;
    const FockSpace space(std::min(n, s.max_cutoff + 10));
    TrajectoryOptions opts;
    opts.sample_dt = s.sample_dt / s.gamma;
    opts.seconds_per_inverse_gamma = s.seconds_per_inverse_gamma;
    for (int i = 0; i < s.n_traj; ++i) {
      const std::uint64_t seed = splitmix64(
          s.seed + static_cast<std::uint64_t>(pt.index) * 0x10001ull +
          static_cast<std::uint64_t>(i));
      const TrajectoryRecord rec =
          simulate(point_params(s, pt), space, s.duration / s.gamma, seed, opts);
      char name[48];
      std::snprintf(name, sizeof name, "traj_p%03d_%04d.ptag", pt.index, i);
      write_ptag(rec.stream, (w.root / name).string());
      w.adopt(name);
      if (!rec.state_samples.empty()) {
        std::vector<std::string> rows;
        rows.reserve(rec.state_samples.size());
        for (const auto& [t, nbar] : rec.state_samples)
          rows.push_back(
              Row{}.add(t * s.gamma * s.seconds_per_inverse_gamma).add(nbar).text);
        char sname[48];
        std::snprintf(sname, sizeof sname, "samples_p%03d_%04d.csv", pt.index, i);
        w.write(sname, build_csv({"kerrsim trajectory samples"}, "t_s,nbar", rows));
      }
      const double inv_gamma_units =
          static_cast<double>(rec.stream.duration_ps) / rec.stream.ps_per_inverse_gamma;
      index_rows.push_back(
          Row{}
              .add(pt.delta)
              .add(pt.u)
              .add(pt.f)
              .add(i)
              .add(std::string(name))
              .add(static_cast<long long>(rec.stream.clicks_ps.size()))
              .add(rec.stream.duration_s())
              .add(static_cast<double>(rec.stream.clicks_ps.size()) / inv_gamma_units)
              .text);
    }
  }
  w.write("streams.csv",
          build_csv({"kerrsim trajectory index",
                     "rate_over_gamma = clicks per 1/gamma of simulated time"},
                    "delta_over_gamma,u_over_gamma,f_over_gamma,trajectory,file,"
                    "clicks,duration_s,rate_over_gamma",
                    index_rows));
}

// ----------------------------------------------------------------- analyze

ordered_json fit_to_json(const FitResult& fit, const std::string& model) {
  ordered_json j;
  j["model"] = model;
  ordered_json params = ordered_json::object();
  ordered_json sigmas = ordered_json::object();
  for (std::size_t i = 0; i < fit.names.size(); ++i) {
    params[fit.names[i]] = fit.parameters(static_cast<int>(i));
    sigmas[fit.names[i]] = fit.uncertainties(static_cast<int>(i));
  }
  j["parameters"] = params;
  j["uncertainties"] = sigmas;
  j["residual_norm"] = fit.residual_norm;
  j["dof"] = fit.dof;
  j["converged"] = fit.converged;
  j["degenerate"] = fit.degenerate;
  return j;
}

void cmd_analyze(const Scenario& s, ArtifactWriter& w) {
  const PhotonStream stream = read_ptag(s.input);
  ordered_json report;
  report["input"] = s.input;
  report["clicks"] = stream.clicks_ps.size();
  report["duration_s"] = stream.duration_s();
  report["ps_per_inverse_gamma"] = stream.ps_per_inverse_gamma;

  if (stream.clicks_ps.empty()) {
    report["note"] = "empty stream; no analysis performed";
    w.write("report.json", report.dump(2) + "\n");
    return;
  }
  const double inv_gamma_units =
      static_cast<double>(stream.duration_ps) / stream.ps_per_inverse_gamma;
  report["rate_hz"] = stream.clicks_ps.size() / stream.duration_s();
  report["rate_over_gamma"] = stream.clicks_ps.size() / inv_gamma_units;

  const auto bin_ps = static_cast<std::int64_t>(std::llround(s.bin_s * 1e12));
  if (bin_ps >= stream.duration_ps)
    throw ConfigError("analyze: bin_s exceeds the stream duration");
  const IntensityTrace trace = bin_intensity(stream, bin_ps);
  const IntensityHistogram hist = histogram(trace);
  {
    std::vector<std::string> rows;
    for (int i = 0; i < hist.p.size(); ++i)
      rows.push_back(Row{}.add(i).add(hist.p(i)).text);
    w.write("histogram.csv",
            build_csv({"kerrsim analyze histogram",
                       "bin_s = " + format_g17(s.bin_s),
                       "modality = " + std::to_string(hist.modality)},
                      "counts_per_bin,probability", rows));
  }
  report["histogram"] = {{"bin_s", s.bin_s},
                         {"bins", trace.counts.size()},
                         {"modality", hist.modality}};

  if (stream.clicks_ps.size() < 100) {
    report["note"] = "fewer than 100 clicks; correlation analysis skipped";
    w.write("report.json", report.dump(2) + "\n");
    return;
  }

  double max_delay_s = s.max_delay_s > 0.0 ? s.max_delay_s : stream.duration_s() / 50.0;
  auto max_delay_ps = static_cast<std::int64_t>(std::llround(max_delay_s * 1e12));
  max_delay_ps = std::max(max_delay_ps, 2 * bin_ps);
  const CorrelationCurve g2 = g2_direct(stream, bin_ps, max_delay_ps);
  write_curve_csv(g2, (w.root / "g2.csv").string());
  w.adopt("g2.csv");

  CorrelationCurve fit_input = g2;
  if (s.downsample_factor > 1) {
    fit_input = downsample(g2, s.downsample_factor);
    write_curve_csv(fit_input, (w.root / "g2_downsampled.csv").string());
    w.adopt("g2_downsampled.csv");
  }

  const auto cl_bin_ps = static_cast<std::int64_t>(std::llround(s.classical_bin_s * 1e12));
  if (cl_bin_ps < stream.duration_ps) {
    const IntensityTrace coarse = bin_intensity(stream, cl_bin_ps);
    const auto span_ps = static_cast<std::int64_t>(coarse.counts.size()) * cl_bin_ps;
    const auto cl_max = std::min<std::int64_t>(100 * cl_bin_ps, span_ps / 2);
    if (cl_max >= cl_bin_ps && coarse.counts.size() >= 4) {
      const CorrelationCurve cl = g2_classical(coarse, cl_max);
      write_curve_csv(cl, (w.root / "g2_classical.csv").string());
      w.adopt("g2_classical.csv");
    }
    const IntensityHistogram coarse_hist = histogram(coarse);
    report["classical"] = {{"bin_s", s.classical_bin_s},
                           {"modality", coarse_hist.modality}};
    if (coarse_hist.modality >= 2) {
      const auto [lo, hi] = suggest_thresholds(coarse_hist);
      const DwellStats dwell = dwell_times(coarse, lo, hi);
      report["dwell"] = {{"low_threshold", lo},
                         {"high_threshold", hi},
                         {"switches", dwell.switches},
                         {"mean_dwell_low_s", dwell.mean_dwell_low_ps * 1e-12},
                         {"mean_dwell_high_s", dwell.mean_dwell_high_ps * 1e-12},
                         {"complete_low", dwell.complete_low},
                         {"complete_high", dwell.complete_high}};
    }
  }

  if (fit_input.delays.size() >= 10) {
    const FitResult fit = fit_bunching(fit_input, s.irf_fwhm_s);
    ordered_json jf = fit_to_json(fit, "bunching");
    jf["irf_fwhm_s"] = s.irf_fwhm_s;
    w.write("fit_bunching.json", jf.dump(2) + "\n");
    report["fit"] = {{"a", fit.param("a")}, {"tau_s", fit.param("tau")}};
  }
  w.write("report.json", report.dump(2) + "\n");
}

// --------------------------------------------------------------------- fit

// numeric CSV: '#' comments, optional non-numeric header line, NaN for
// empty fields (write_curve_csv leaves the error column blank on
// regression curves)
std::vector<std::vector<double>> parse_numeric_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("fit: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  bool header_allowed = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    std::vector<double> fields;
    std::stringstream ss(body);
    std::string item;
    bool ok = true;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) {
        fields.push_back(std::nan(""));
        continue;
      }
      try {
        std::size_t used = 0;
        fields.push_back(std::stod(item, &used));
        if (used != item.size()) ok = false;
      } catch (const std::exception&) {
        ok = false;
      }
      if (!ok) break;
    }
    if (body.back() == ',') fields.push_back(std::nan(""));
    if (!ok) {
      if (header_allowed) {
        header_allowed = false;
        continue;
      }
      throw ConfigError(path + ":" + std::to_string(lineno) + ": non-numeric field");
    }
    header_allowed = false;
    if (!rows.empty() && fields.size() != rows.front().size())
      throw ConfigError(path + ":" + std::to_string(lineno) + ": ragged row");
    rows.push_back(std::move(fields));
  }
  if (rows.empty()) throw ConfigError("fit: no data rows in " + path);
  return rows;
}

void cmd_fit(const Scenario& s, ArtifactWriter& w) {
  const auto rows = parse_numeric_csv(s.input);
  const std::size_t ncol = rows.front().size();
  if (ncol < 2) throw ConfigError("fit: need at least two columns");
  const int n = static_cast<int>(rows.size());
  VectorR x(n), y(n), sigma(n);
  bool have_sigma = ncol >= 3;
  for (int i = 0; i < n; ++i) {
    x(i) = rows[i][0];
    y(i) = rows[i][1];
    if (have_sigma) {
      sigma(i) = rows[i][2];
      if (!std::isfinite(sigma(i)) || sigma(i) <= 0.0) have_sigma = false;
    }
  }

  FitResult fit;
  if (s.fit_model == "bunching") {
    CorrelationCurve curve;
    curve.delays = x;
    curve.values = y;
    if (have_sigma) curve.errors = sigma;
    curve.time_unit_s = 1.0;
    fit = fit_bunching(curve, s.irf_fwhm_s);
  } else if (s.fit_model == "lorentzian") {
    fit = fit_lorentzian(x, y);
  } else if (s.fit_model == "power_law" || s.fit_model == "exponential") {
    std::vector<std::pair<double, double>> f_tau(n);
    for (int i = 0; i < n; ++i) f_tau[i] = {x(i), y(i)};
    fit = fit_gap_scaling(f_tau, s.f_c, s.window_lo, s.window_hi,
                          s.fit_model == "power_law" ? GapModel::PowerLaw
                                                     : GapModel::Exponential,
                          have_sigma ? sigma : VectorR());
  } else {  // quadratic
    fit = fit_quadratic(x, y, have_sigma ? sigma : VectorR());
  }

  ordered_json j = fit_to_json(fit, s.fit_model);
  j["input"] = s.input;
  if (s.fit_model == "bunching") j["irf_fwhm_s"] = s.irf_fwhm_s;
  if (s.fit_model == "power_law" || s.fit_model == "exponential") {
    j["f_c"] = s.f_c;
    j["window"] = {s.window_lo, s.window_hi};
  }
  w.write("fit.json", j.dump(2) + "\n");
}

}  // namespace

// ----------------------------------------------------------------- parsing

Scenario::Command parse_command(const std::string& name) {
  for (const auto& [key, cmd] : command_table())
    if (key == name) return cmd;
  throw ConfigError("unknown command '" + name +
                    "' (expected spectrum|steady|g2|g1|sweep|meanfield|"
                    "trajectory|analyze|fit)");
}

std::string command_name(Scenario::Command cmd) {
  for (const auto& [key, value] : command_table())
    if (value == cmd) return key;
  throw std::logic_error("command_name: unmapped command");
}

Scenario parse_scenario_text(const std::string& text, const std::string& origin) {
  Scenario s;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const LineRef at{origin, lineno};
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) fail(at, "malformed section header");
      continue;  // sections organize the file; keys are global
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(at, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(at, "empty key");
    if (value.empty()) fail(at, "empty value for key '" + key + "'");

    if (key == "command") {
      try {
        s.command = parse_command(value);
      } catch (const ConfigError& e) {
        fail(at, e.what());
      }
    } else if (key == "out_dir") {
      s.out_dir = value;
    } else if (key == "threads") {
      s.threads = static_cast<int>(to_int(at, key, value));
    } else if (key == "delta") {
      s.deltas = to_list(at, key, value);
    } else if (key == "u") {
      s.us = to_list(at, key, value);
    } else if (key == "f") {
      s.fs = to_list(at, key, value);
    } else if (key == "gamma") {
      s.gamma = to_double(at, key, value);
    } else if (key == "cutoff") {
      s.cutoff = static_cast<int>(to_int(at, key, value));
    } else if (key == "cutoff_tol") {
      s.cutoff_tol = to_double(at, key, value);
    } else if (key == "max_cutoff") {
      s.max_cutoff = static_cast<int>(to_int(at, key, value));
    } else if (key == "spectrum_k") {
      s.spectrum_k = static_cast<int>(to_int(at, key, value));
    } else if (key == "delay_min") {
      s.delay_min = to_double(at, key, value);
    } else if (key == "delay_max") {
      s.delay_max = to_double(at, key, value);
    } else if (key == "delay_points") {
      s.delay_points = static_cast<int>(to_int(at, key, value));
    } else if (key == "duration") {
      s.duration = to_double(at, key, value);
    } else if (key == "n_traj") {
      s.n_traj = static_cast<int>(to_int(at, key, value));
    } else if (key == "seed") {
      s.seed = to_u64(at, key, value);
    } else if (key == "seconds_per_inverse_gamma") {
      s.seconds_per_inverse_gamma = to_double(at, key, value);
    } else if (key == "sample_dt") {
      s.sample_dt = to_double(at, key, value);
    } else if (key == "input") {
      s.input = value;
    } else if (key == "bin_s") {
      s.bin_s = to_double(at, key, value);
    } else if (key == "max_delay_s") {
      s.max_delay_s = to_double(at, key, value);
    } else if (key == "downsample_factor") {
      s.downsample_factor = static_cast<int>(to_int(at, key, value));
    } else if (key == "classical_bin_s") {
      s.classical_bin_s = to_double(at, key, value);
    } else if (key == "irf_fwhm_s") {
      s.irf_fwhm_s = to_double(at, key, value);
    } else if (key == "fit_model") {
      s.fit_model = value;
    } else if (key == "f_c") {
      s.f_c = to_double(at, key, value);
    } else if (key == "window_lo") {
      s.window_lo = to_double(at, key, value);
    } else if (key == "window_hi") {
      s.window_hi = to_double(at, key, value);
    } else if (key == "ramp_peak") {
      s.ramp_peak = to_double(at, key, value);
    } else if (key == "ramp_period") {
      s.ramp_period = to_double(at, key, value);
    } else if (key == "ramp_sample_dt") {
      s.ramp_sample_dt = to_double(at, key, value);
    } else {
      fail(at, "unknown key '" + key + "'");
    }
  }
  return s;
}

Scenario parse_scenario_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open scenario file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario_text(buffer.str(), path);
}

std::string scenario_to_config(const Scenario& s) {
  auto list = [](const std::vector<double>& values) {
    std::string out;
    for (double v : values) {
      if (!out.empty()) out += ',';
      out += format_g17(v);
    }
    return out;
  };
  std::string out;
  out += "[run]\n";
  out += "command = " + command_name(s.command) + "\n";
  out += "out_dir = " + s.out_dir + "\n";
  out += "threads = " + std::to_string(s.threads) + "\n";
  out += "\n[grid]\n";
  out += "delta = " + list(s.deltas) + "\n";
  out += "u = " + list(s.us) + "\n";
  out += "f = " + list(s.fs) + "\n";
  out += "gamma = " + format_g17(s.gamma) + "\n";
  out += "\n[numerics]\n";
  out += "cutoff = " + std::to_string(s.cutoff) + "\n";
  out += "cutoff_tol = " + format_g17(s.cutoff_tol) + "\n";
  out += "max_cutoff = " + std::to_string(s.max_cutoff) + "\n";
  out += "spectrum_k = " + std::to_string(s.spectrum_k) + "\n";
  out += "\n[delays]\n";
  out += "delay_min = " + format_g17(s.delay_min) + "\n";
  out += "delay_max = " + format_g17(s.delay_max) + "\n";
  out += "delay_points = " + std::to_string(s.delay_points) + "\n";
  out += "\n[trajectory]\n";
  out += "duration = " + format_g17(s.duration) + "\n";
  out += "n_traj = " + std::to_string(s.n_traj) + "\n";
  out += "seed = " + std::to_string(s.seed) + "\n";
  out += "seconds_per_inverse_gamma = " + format_g17(s.seconds_per_inverse_gamma) + "\n";
  out += "sample_dt = " + format_g17(s.sample_dt) + "\n";
  out += "\n[analyze]\n";
  if (!s.input.empty()) out += "input = " + s.input + "\n";
  out += "bin_s = " + format_g17(s.bin_s) + "\n";
  out += "max_delay_s = " + format_g17(s.max_delay_s) + "\n";
  out += "downsample_factor = " + std::to_string(s.downsample_factor) + "\n";
  out += "classical_bin_s = " + format_g17(s.classical_bin_s) + "\n";
  out += "irf_fwhm_s = " + format_g17(s.irf_fwhm_s) + "\n";
  out += "\n[fit]\n";
  out += "fit_model = " + s.fit_model + "\n";
  out += "f_c = " + format_g17(s.f_c) + "\n";
  out += "window_lo = " + format_g17(s.window_lo) + "\n";
  out += "window_hi = " + format_g17(s.window_hi) + "\n";
  out += "\n[ramp]\n";
  out += "ramp_peak = " + format_g17(s.ramp_peak) + "\n";
  out += "ramp_period = " + format_g17(s.ramp_period) + "\n";
  out += "ramp_sample_dt = " + format_g17(s.ramp_sample_dt) + "\n";
  return out;
}

// ------------------------------------------------------------------ hashes

std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < len; ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001b3ull;
  }
  return hash;
}

std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("fnv1a64_file: cannot open " + path);
  std::uint64_t hash = 0xcbf29ce484222325ull;
  char buf[65536];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    const auto got = static_cast<std::size_t>(in.gcount());
    for (std::size_t i = 0; i < got; ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 0x100000001b3ull;
    }
  }
  return hash;
}

std::string format_g17(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

// --------------------------------------------------------------------- run

Manifest run_scenario(const Scenario& s) {
  validate_scenario(s);
  fs::create_directories(s.out_dir);

  ArtifactWriter writer{fs::path(s.out_dir), {}};
  const std::string config = scenario_to_config(s);

  Manifest manifest;
  manifest.command = command_name(s.command);
  manifest.code_version = kCodeVersion;
  manifest.scenario_fnv1a64 = fnv1a64(config.data(), config.size());
  writer.write("scenario.cfg", config);

  switch (s.command) {
    case Scenario::Command::Steady:
      cmd_steady(s, writer);
      break;
    case Scenario::Command::Spectrum:
      cmd_spectrum(s, writer);
      break;
    case Scenario::Command::Sweep:
      cmd_sweep(s, writer, manifest.scenario_fnv1a64);
      break;
    case Scenario::Command::G2:
      cmd_correlation_map(s, writer, true);
      break;
    case Scenario::Command::G1:
      cmd_correlation_map(s, writer, false);
      break;
    case Scenario::Command::Meanfield:
      cmd_meanfield(s, writer);
      break;
    case Scenario::Command::Trajectory:
      cmd_trajectory(s, writer);
      break;
    case Scenario::Command::Analyze:
      cmd_analyze(s, writer);
      break;
    case Scenario::Command::Fit:
      cmd_fit(s, writer);
      break;
  }
  manifest.artifacts = writer.entries;

  ordered_json j;
  j["code_version"] = manifest.code_version;
  j["command"] = manifest.command;
  j["scenario_fnv1a64"] = hex16(manifest.scenario_fnv1a64);
  j["artifacts"] = ordered_json::array();
  for (const auto& a : manifest.artifacts)
    j["artifacts"].push_back({{"path", a.path},
                              {"bytes", a.bytes},
                              {"fnv1a64", hex16(a.fnv1a64)}});
  atomic_write_file(writer.root / "manifest.json", j.dump(2) + "\n");
  return manifest;
}

}  // namespace kerr
