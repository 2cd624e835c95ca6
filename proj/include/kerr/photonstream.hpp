#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kerr/correlations.hpp"
#include "kerr/fock.hpp"

namespace kerr {

// Detected photon click stream in TTTR style: absolute timestamps in integer
// picoseconds.  ps_per_inverse_gamma fixes the physical clock (default:
// 1/gamma = 1 ns); params and seed are provenance and are not serialized.
struct PhotonStream {
  std::vector<std::int64_t> clicks_ps;
  std::int64_t duration_ps = 0;
  double ps_per_inverse_gamma = 1000.0;
  SystemParams params{};
  std::uint64_t seed = 0;

  void validate() const;  // strictly increasing, all clicks < duration
  double duration_s() const { return static_cast<double>(duration_ps) * 1e-12; }
};

// Physical clock from a linewidth: seconds per 1/gamma for gamma in ueV.
double seconds_per_inverse_gamma_from_ueV(double gamma_ueV);

// Photon-tag binary format: little-endian, magic "PTAG", version u16,
// gamma-to-ps scale f64, count u64, count x u64 timestamps in ps.
// Round-trips bit-exactly.
void write_ptag(const PhotonStream& stream, const std::string& path);
PhotonStream read_ptag(const std::string& path);

// Clicks binned into contiguous windows; the final partial bin is dropped.
struct IntensityTrace {
  std::int64_t bin_width_ps = 0;
  std::int64_t origin_ps = 0;
  std::vector<std::int64_t> counts;
};

IntensityTrace bin_intensity(const PhotonStream& stream, std::int64_t bin_width_ps);

// Normalized count distribution p(I) with a deterministic modality count:
// p is smoothed with a Gaussian kernel of bandwidth max(1, sqrt(mean count))
// bins before local maxima are counted.
struct IntensityHistogram {
  VectorR p;  // p(i) = probability of observing count i per bin
  std::int64_t bin_width_ps = 0;
  int modality = 0;
};

IntensityHistogram histogram(const IntensityTrace& trace);

// Direct single-photon correlation: ordered-pair coincidences per delay bin,
// normalized by the Poisson expectation r^2 (T - tau) bin with the rate
// estimated from the stream itself (edge-corrected).  Errors are Poisson.
// Delays are bin centers, in seconds.  Refuses streams with < 100 clicks.
CorrelationCurve g2_direct(const PhotonStream& stream, std::int64_t bin_ps,
                           std::int64_t max_delay_ps);

// Exact block average of a finer curve (delays, values and errors averaged
// per block; trailing partial block dropped).
CorrelationCurve downsample(const CorrelationCurve& curve, int factor);

// Classical intensity autocorrelation of a binned trace,
//   g2_class(k b) = <I_i I_{i+k}> / <I>^2  (biased normalization).
CorrelationCurve g2_classical(const IntensityTrace& trace, std::int64_t max_delay_ps);

// Two-threshold (Schmitt trigger) dwell-time segmentation.
struct DwellStats {
  double mean_dwell_low_ps = 0.0;
  double mean_dwell_high_ps = 0.0;
  int switches = 0;           // state changes registered by the trigger
  int complete_low = 0;       // dwell intervals entering the averages
  int complete_high = 0;
};

DwellStats dwell_times(const IntensityTrace& trace, double low_threshold,
                       double high_threshold);

// Default Schmitt thresholds from a bimodal histogram: the inter-peak valley
// +/- 25% of the peak separation.  Throws unless modality >= 2.
std::pair<double, double> suggest_thresholds(const IntensityHistogram& hist);

// CSV export with columns delay_s,value,error.  The curve must carry a time
// scale (time_unit_s > 0) so delays can be emitted in seconds.
void write_curve_csv(const CorrelationCurve& curve, const std::string& path);

}  // namespace kerr
