#pragma once

#include <complex>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "szeeg/ingest.hpp"
#include "szeeg/matrix.hpp"

namespace szeeg::dsp {

struct BandDef {
  std::string name;
  double lo_hz = 0.0;
  double hi_hz = 0.0;
};

// theta 4-8, alpha 8-15, beta 15-32, gamma 32-45, all 4-45.
const std::vector<BandDef>& canonical_bands();
BandDef band_by_name(const std::string& name);

// One second-order section, a0 normalized to 1.
struct Biquad {
  double b0, b1, b2, a1, a2;
};

struct FilterSpec {
  int order = 0;  // total band-pass order (even)
  double lo_hz = 0.0, hi_hz = 0.0, fs_hz = 0.0;
  std::vector<Biquad> sections;
};

// Analog Butterworth prototype -> band-pass transform -> bilinear transform
// with frequency pre-warping -> second-order sections. Single-pass magnitude
// is -3 dB at lo and hi.
FilterSpec design_butterworth_bandpass(int order, double lo_hz, double hi_hz,
                                       double fs_hz);

// Cascade transfer function evaluated on the unit circle at freq_hz.
std::complex<double> filter_response(const FilterSpec& spec, double freq_hz);

// Forward-backward (zero-phase) filtering with odd-reflection edge padding
// and steady-state initial conditions. Effective cutoff attenuation -6 dB.
std::vector<double> filtfilt(const FilterSpec& spec, std::span<const double> x);

// Band-pass filters every channel for every requested band; shapes unchanged.
std::map<std::string, ingest::Segment> band_decompose(
    const ingest::Segment& seg, const std::vector<BandDef>& bands,
    int filter_order = 4);

// Per-channel z-score with population (1/N) standard deviation. Throws
// ParamError naming the channel when a channel is constant.
ingest::Segment zscore(const ingest::Segment& seg);

struct PsdFeature {
  std::vector<double> freqs_hz;  // fs/nfft spacing, bins 0..nfft/2
  Matrix log_power;              // channels x bins, ln of uV^2/Hz (0 where undefined)
  std::vector<bool> band_mask;   // in 4-45 Hz and power > 0 on every channel
};

enum class WindowKind { hann, rect };

struct WelchOptions {
  std::size_t nfft = 256;  // power of two, also the block length
  double overlap = 0.5;
  WindowKind window = WindowKind::hann;
  double mask_lo_hz = 4.0;
  double mask_hi_hz = 45.0;
};

// Welch PSD per channel: overlapped windowed blocks, averaged magnitude-
// squared DFTs scaled by 1/(fs * sum(w^2)), one-sided with interior bins
// doubled, then natural log wherever power is positive.
PsdFeature welch_psd(const ingest::Segment& seg, double fs_hz,
                     const WelchOptions& opt = {});
PsdFeature welch_psd(const ingest::Segment& seg, const WelchOptions& opt = {});

// Feature dump: one row per segment, columns are channel-major log-PSD bins
// restricted to [mask_lo_hz, mask_hi_hz], header "<channel>@<freq>Hz".
void write_psd_csv(std::ostream& out, const std::vector<PsdFeature>& features,
                   const std::vector<std::string>& channel_names);

}  // namespace szeeg::dsp
