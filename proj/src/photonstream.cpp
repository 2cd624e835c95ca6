#include "kerr/photonstream.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace kerr {

namespace {

constexpr char kMagic[4] = {'P', 'T', 'A', 'G'};
constexpr std::uint16_t kVersion = 1;

template <class T>
void put(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::ifstream& in) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("photon-tag file truncated");
  return value;
}

// Gaussian-smoothed copy of p with bandwidth (in count cells)
// max(1, sqrt(mean count)); used for deterministic peak counting.
VectorR smoothed_distribution(const VectorR& p) {
  const int n = static_cast<int>(p.size());
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += i * p(i);
  const double bw = std::max(1.0, std::sqrt(mean));
  const int reach = static_cast<int>(std::ceil(4.0 * bw));
  VectorR s = VectorR::Zero(n);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0, norm = 0.0;
    for (int j = std::max(0, i - reach); j < std::min(n, i + reach + 1); ++j) {
      const double w = std::exp(-0.5 * (i - j) * (i - j) / (bw * bw));
      acc += w * p(j);
      norm += w;
    }
    s(i) = acc / norm;
  }
  return s;
}

std::vector<int> local_maxima(const VectorR& s) {
  std::vector<int> peaks;
  const int n = static_cast<int>(s.size());
  if (n == 1) return {0};
  for (int i = 0; i < n; ++i) {
    const double left = i > 0 ? s(i - 1) : -1.0;
    const double right = i + 1 < n ? s(i + 1) : -1.0;
    if (s(i) > left && s(i) > right) peaks.push_back(i);
  }
  return peaks;
}

}  // namespace

void PhotonStream::validate() const {
  for (std::size_t i = 0; i < clicks_ps.size(); ++i) {
    if (clicks_ps[i] < 0) throw std::runtime_error("photon stream: negative timestamp");
    if (i > 0 && clicks_ps[i] <= clicks_ps[i - 1])
      throw std::runtime_error("photon stream: timestamps not strictly increasing");
    if (clicks_ps[i] >= duration_ps)
      throw std::runtime_error("photon stream: timestamp beyond duration");
  }
}

double seconds_per_inverse_gamma_from_ueV(double gamma_ueV) {
  if (!(gamma_ueV > 0.0))
    throw std::invalid_argument("seconds_per_inverse_gamma_from_ueV: gamma must be > 0");
  constexpr double hbar_js = 1.054571817e-34;
  constexpr double ev_j = 1.602176634e-19;
  return hbar_js / (gamma_ueV * 1e-6 * ev_j);
}

void write_ptag(const PhotonStream& stream, const std::string& path) {
  stream.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_ptag: cannot open " + path);
  out.write(kMagic, 4);
  put(out, kVersion);
  put(out, stream.ps_per_inverse_gamma);
  put(out, static_cast<std::uint64_t>(stream.clicks_ps.size()));
  for (std::int64_t t : stream.clicks_ps) put(out, static_cast<std::uint64_t>(t));
  if (!out) throw std::runtime_error("write_ptag: write failed for " + path);
}

PhotonStream read_ptag(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_ptag: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("read_ptag: bad magic in " + path);
  const auto version = get<std::uint16_t>(in);
  if (version != kVersion)
    throw std::runtime_error("read_ptag: unsupported version " + std::to_string(version));
  PhotonStream stream;
  stream.ps_per_inverse_gamma = get<double>(in);
  const auto count = get<std::uint64_t>(in);
  stream.clicks_ps.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i)
    stream.clicks_ps.push_back(static_cast<std::int64_t>(get<std::uint64_t>(in)));
  // duration is not part of the format; the covered window ends after the
  // final click
  stream.duration_ps = stream.clicks_ps.empty() ? 0 : stream.clicks_ps.back() + 1;
  stream.validate();
  return stream;
}

IntensityTrace bin_intensity(const PhotonStream& stream, std::int64_t bin_width_ps) {
  if (bin_width_ps <= 0) throw std::invalid_argument("bin_intensity: bin width must be > 0");
  if (bin_width_ps >= stream.duration_ps)
    throw std::invalid_argument("bin_intensity: bin width must be smaller than the duration");
  IntensityTrace trace;
  trace.bin_width_ps = bin_width_ps;
  trace.origin_ps = 0;
  const std::int64_t nbins = stream.duration_ps / bin_width_ps;  // partial bin dropped
  trace.counts.assign(static_cast<std::size_t>(nbins), 0);
  for (std::int64_t t : stream.clicks_ps) {
    const std::int64_t k = t / bin_width_ps;
    if (k < nbins) ++trace.counts[static_cast<std::size_t>(k)];
  }
  return trace;
}

IntensityHistogram histogram(const IntensityTrace& trace) {
  if (trace.counts.empty()) throw std::invalid_argument("histogram: empty trace");
  const std::int64_t top = *std::max_element(trace.counts.begin(), trace.counts.end());
  IntensityHistogram hist;
  hist.bin_width_ps = trace.bin_width_ps;
  hist.p = VectorR::Zero(top + 1);
  for (std::int64_t c : trace.counts) hist.p(c) += 1.0;
  hist.p /= static_cast<double>(trace.counts.size());
  hist.modality = static_cast<int>(local_maxima(smoothed_distribution(hist.p)).size());
  return hist;
}

CorrelationCurve g2_direct(const PhotonStream& stream, std::int64_t bin_ps,
                           std::int64_t max_delay_ps) {
  if (bin_ps <= 0 || max_delay_ps <= bin_ps)
    throw std::invalid_argument("g2_direct: need bin > 0 and max_delay > bin");
  const std::size_t m = stream.clicks_ps.size();
  if (m < 100)
    throw std::runtime_error("g2_direct: only " + std::to_string(m) +
                             " clicks; at least 100 required");

  const std::int64_t nbins = max_delay_ps / bin_ps;
  std::vector<std::int64_t> pairs(static_cast<std::size_t>(nbins), 0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const std::int64_t dt = stream.clicks_ps[j] - stream.clicks_ps[i];
      if (dt >= nbins * bin_ps) break;
      ++pairs[static_cast<std::size_t>(dt / bin_ps)];
    }
  }

  const double t_total = static_cast<double>(stream.duration_ps);
  const double rate = static_cast<double>(m) / t_total;  // clicks per ps

  CorrelationCurve curve;
  curve.kind = CurveKind::G2;
  curve.time_unit_s = 1.0;  // delays below are already seconds
  curve.delays.resize(nbins);
  curve.values.resize(nbins);
  curve.errors.resize(nbins);
  for (std::int64_t k = 0; k < nbins; ++k) {
    const double tau_ps = (k + 0.5) * static_cast<double>(bin_ps);
    const double expected = rate * rate * (t_total - tau_ps) * static_cast<double>(bin_ps);
    const double count = static_cast<double>(pairs[static_cast<std::size_t>(k)]);
    curve.delays(k) = tau_ps * 1e-12;
    curve.values(k) = count / expected;
    curve.errors(k) = count > 0.0 ? curve.values(k) / std::sqrt(count) : 1.0 / expected;
  }
  return curve;
}

CorrelationCurve downsample(const CorrelationCurve& curve, int factor) {
  if (factor < 1) throw std::invalid_argument("downsample: factor must be >= 1");
  if (factor == 1) return curve;
  const int blocks = static_cast<int>(curve.delays.size()) / factor;
  if (blocks < 1) throw std::invalid_argument("downsample: curve shorter than one block");
  CorrelationCurve out;
  out.kind = curve.kind;
  out.time_unit_s = curve.time_unit_s;
  out.delays.resize(blocks);
  out.values.resize(blocks);
  const bool has_err = curve.errors.size() == curve.values.size();
  if (has_err) out.errors.resize(blocks);
  for (int b = 0; b < blocks; ++b) {
    double dsum = 0.0, vsum = 0.0, esum = 0.0;
    for (int i = 0; i < factor; ++i) {
      dsum += curve.delays(b * factor + i);
      vsum += curve.values(b * factor + i);
      if (has_err) esum += curve.errors(b * factor + i) * curve.errors(b * factor + i);
    }
    out.delays(b) = dsum / factor;
    out.values(b) = vsum / factor;
    if (has_err) out.errors(b) = std::sqrt(esum) / factor;
  }
  return out;
}

CorrelationCurve g2_classical(const IntensityTrace& trace, std::int64_t max_delay_ps) {
  const std::int64_t span = static_cast<std::int64_t>(trace.counts.size()) * trace.bin_width_ps;
  if (max_delay_ps > span)
    throw std::invalid_argument("g2_classical: max delay exceeds trace span");
  const std::size_t m = trace.counts.size();
  double mean = 0.0;
  for (std::int64_t c : trace.counts) mean += static_cast<double>(c);
  mean /= static_cast<double>(m);

  const std::int64_t kmax = max_delay_ps / trace.bin_width_ps;
  CorrelationCurve curve;
  curve.kind = CurveKind::G2Classical;
  curve.time_unit_s = 1.0;
  curve.delays.resize(kmax);
  curve.values.resize(kmax);
  for (std::int64_t k = 0; k < kmax; ++k) {
    double acc = 0.0;
    const std::size_t terms = m - static_cast<std::size_t>(k);
    for (std::size_t i = 0; i < terms; ++i)
      acc += static_cast<double>(trace.counts[i]) *
             static_cast<double>(trace.counts[i + static_cast<std::size_t>(k)]);
    curve.delays(k) = static_cast<double>(k * trace.bin_width_ps) * 1e-12;
    curve.values(k) = acc / static_cast<double>(terms) / (mean * mean);
  }
  return curve;
}

DwellStats dwell_times(const IntensityTrace& trace, double low_threshold,
                       double high_threshold) {
  if (!(low_threshold < high_threshold))
    throw std::invalid_argument("dwell_times: thresholds must satisfy low < high");
  DwellStats stats;
  int state = 0;  // 0 unknown, 1 low, 2 high
  std::size_t entry = 0;
  double low_sum = 0.0, high_sum = 0.0;
  for (std::size_t i = 0; i < trace.counts.size(); ++i) {
    const double c = static_cast<double>(trace.counts[i]);
    const int next = c > high_threshold ? 2 : (c < low_threshold ? 1 : state);
    if (next != state && state != 0) {
      const double dwell = static_cast<double>(i - entry) * trace.bin_width_ps;
      if (state == 1) {
        low_sum += dwell;
        ++stats.complete_low;
      } else {
        high_sum += dwell;
        ++stats.complete_high;
      }
      ++stats.switches;
      entry = i;
    } else if (state == 0 && next != 0) {
      entry = i;
    }
    state = next == 0 ? state : next;
  }
  stats.mean_dwell_low_ps = stats.complete_low ? low_sum / stats.complete_low : 0.0;
  stats.mean_dwell_high_ps = stats.complete_high ? high_sum / stats.complete_high : 0.0;
  return stats;
}

std::pair<double, double> suggest_thresholds(const IntensityHistogram& hist) {
  const VectorR s = smoothed_distribution(hist.p);
  std::vector<int> peaks = local_maxima(s);
  if (peaks.size() < 2)
    throw std::runtime_error("suggest_thresholds: histogram is not bimodal");
  // two most probable peaks, by smoothed mass
  std::sort(peaks.begin(), peaks.end(), [&](int a, int b) { return s(a) > s(b); });
  int p1 = peaks[0], p2 = peaks[1];
  if (p1 > p2) std::swap(p1, p2);
  int valley = p1;
  for (int i = p1; i <= p2; ++i)
    if (s(i) < s(valley)) valley = i;
  const double sep = static_cast<double>(p2 - p1);
  return {valley - 0.25 * sep, valley + 0.25 * sep};
}

void write_curve_csv(const CorrelationCurve& curve, const std::string& path) {
  if (!(curve.time_unit_s > 0.0))
    throw std::invalid_argument("write_curve_csv: curve carries no time scale");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_curve_csv: cannot open " + path);
  out << "delay_s,value,error\n";
  const bool has_err = curve.errors.size() == curve.values.size();
  char buf[64];
  auto fmt = [&buf](double x) {
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return std::string(buf);
  };
  for (int i = 0; i < curve.delays.size(); ++i) {
    out << fmt(curve.delays(i) * curve.time_unit_s) << ',' << fmt(curve.values(i)) << ',';
    if (has_err) out << fmt(curve.errors(i));
    out << '\n';
  }
  if (!out) throw std::runtime_error("write_curve_csv: write failed for " + path);
}

}  // namespace kerr
