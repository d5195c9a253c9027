#include "szeeg/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numbers>
#include <ostream>

#include "szeeg/error.hpp"

namespace szeeg::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, in place. n must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

// Steady-state (unit step) state for one transposed direct-form II biquad,
// same construction as scipy's lfilter_zi.
void biquad_zi(const Biquad& s, double& z1, double& z2) {
  z1 = (s.b1 + s.b2 - (s.a1 + s.a2) * s.b0) / (1.0 + s.a1 + s.a2);
  z2 = s.b2 - s.a2 * (s.b0 + z1);
}

void run_cascade(const FilterSpec& spec, std::vector<double>& x) {
  for (const Biquad& s : spec.sections) {
    double z1 = 0.0, z2 = 0.0;
    biquad_zi(s, z1, z2);
    z1 *= x.front();
    z2 *= x.front();
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
}

std::size_t filtfilt_padlen(const FilterSpec& spec) {
  return 9 * spec.sections.size();
}

}  // namespace

const std::vector<BandDef>& canonical_bands() {
  static const std::vector<BandDef> bands = {
      {"theta", 4.0, 8.0},  {"alpha", 8.0, 15.0}, {"beta", 15.0, 32.0},
      {"gamma", 32.0, 45.0}, {"all", 4.0, 45.0},
  };
  return bands;
}

BandDef band_by_name(const std::string& name) {
  for (const BandDef& b : canonical_bands()) {
    if (b.name == name) return b;
  }
  throw ParamError("band_by_name: unknown band '" + name + "'");
}

FilterSpec design_butterworth_bandpass(int order, double lo_hz, double hi_hz,
                                       double fs_hz) {
  if (fs_hz <= 0.0) throw ParamError("butterworth: fs_hz must be > 0");
  if (order <= 0 || order % 2 != 0)
    throw ParamError("butterworth: order must be a positive even integer, got " +
                     std::to_string(order));
  if (lo_hz <= 0.0 || lo_hz >= hi_hz)
    throw ParamError(fmt::format(
        "butterworth: need 0 < lo < hi, got lo={} hi={}", lo_hz, hi_hz));
  if (hi_hz >= fs_hz / 2.0)
    throw ParamError(fmt::format(
        "butterworth: hi={} violates Nyquist limit fs/2={}", hi_hz, fs_hz / 2.0));

  const int n = order / 2;  // analog low-pass prototype order
  const double c = 2.0 * fs_hz;
  const double w_lo = c * std::tan(kPi * lo_hz / fs_hz);
  const double w_hi = c * std::tan(kPi * hi_hz / fs_hz);
  const double w0 = std::sqrt(w_lo * w_hi);
  const double bw = w_hi - w_lo;

  // Prototype poles on the unit circle, left half plane.
  std::vector<std::complex<double>> analog_poles;
  analog_poles.reserve(static_cast<std::size_t>(order));
  for (int k = 0; k < n; ++k) {
    const double phi = kPi * (2 * k + n + 1) / (2 * n);
    const std::complex<double> p(std::cos(phi), std::sin(phi));
    // Band-pass transform: each prototype pole yields two s-plane poles.
    const std::complex<double> pb = p * bw;
    const std::complex<double> disc = std::sqrt(pb * pb - 4.0 * w0 * w0);
    analog_poles.push_back((pb + disc) / 2.0);
    analog_poles.push_back((pb - disc) / 2.0);
  }

  // Bilinear transform. n zeros land on z=+1 (from s=0) and n on z=-1
  // (from the poles at infinity), one of each per section.
  std::vector<std::complex<double>> digital_poles;
  digital_poles.reserve(analog_poles.size());
  for (const auto& s : analog_poles) digital_poles.push_back((c + s) / (c - s));

  // Pair poles into biquads: conjugate pairs directly, leftover real poles
  // (wide bands can split a real prototype pole into two real poles) two
  // per section.
  constexpr double kImagEps = 1e-10;
  std::vector<std::complex<double>> upper;
  std::vector<double> real_poles;
  for (const auto& p : digital_poles) {
    if (p.imag() > kImagEps)
      upper.push_back(p);
    else if (p.imag() >= -kImagEps)
      real_poles.push_back(p.real());
  }
  std::ranges::sort(upper, [](const auto& a, const auto& b) {
    return std::abs(a) < std::abs(b);
  });
  std::ranges::sort(real_poles);

  FilterSpec spec;
  spec.order = order;
  spec.lo_hz = lo_hz;
  spec.hi_hz = hi_hz;
  spec.fs_hz = fs_hz;
  for (const auto& p : upper)
    spec.sections.push_back({1.0, 0.0, -1.0, -2.0 * p.real(), std::norm(p)});
  for (std::size_t i = 0; i + 1 < real_poles.size(); i += 2)
    spec.sections.push_back({1.0, 0.0, -1.0, -(real_poles[i] + real_poles[i + 1]),
                             real_poles[i] * real_poles[i + 1]});
  if (spec.sections.size() != static_cast<std::size_t>(order / 2))
    throw Error("butterworth: pole pairing failed");
  for (const Biquad& s : spec.sections) {
    if (std::abs(s.a2) >= 1.0 || std::abs(s.a1) >= 1.0 + s.a2)
      throw Error("butterworth: unstable section produced");
  }

  // Normalize so the gain is exactly 1 at the digital image of the analog
  // center frequency (the true Butterworth peak).
  const double f_center = fs_hz / kPi * std::atan(w0 / c);
  const double mag = std::abs(filter_response(spec, f_center));
  const double g =
      std::pow(1.0 / mag, 1.0 / static_cast<double>(spec.sections.size()));
  for (Biquad& s : spec.sections) {
    s.b0 *= g;
    s.b1 *= g;
    s.b2 *= g;
  }
  return spec;
}

std::complex<double> filter_response(const FilterSpec& spec, double freq_hz) {
  const double w = 2.0 * kPi * freq_hz / spec.fs_hz;
  const std::complex<double> zinv = std::exp(std::complex<double>(0.0, -w));
  std::complex<double> h(1.0, 0.0);
  for (const Biquad& s : spec.sections) {
    h *= (s.b0 + s.b1 * zinv + s.b2 * zinv * zinv) /
         (1.0 + s.a1 * zinv + s.a2 * zinv * zinv);
  }
  return h;
}

std::vector<double> filtfilt(const FilterSpec& spec, std::span<const double> x) {
  const std::size_t padlen = filtfilt_padlen(spec);
  if (x.size() <= padlen)
    throw ParamError(fmt::format(
        "filtfilt: input length {} too short, need > {} samples", x.size(), padlen));

  const std::size_t n = x.size();
  std::vector<double> ext;
  ext.reserve(n + 2 * padlen);
  // Odd reflection around the end points.
  for (std::size_t i = 0; i < padlen; ++i)
    ext.push_back(2.0 * x[0] - x[padlen - i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 0; i < padlen; ++i)
    ext.push_back(2.0 * x[n - 1] - x[n - 2 - i]);

  run_cascade(spec, ext);
  std::ranges::reverse(ext);
  run_cascade(spec, ext);
  std::ranges::reverse(ext);

  return {ext.begin() + static_cast<std::ptrdiff_t>(padlen),
          ext.begin() + static_cast<std::ptrdiff_t>(padlen + n)};
}

std::map<std::string, ingest::Segment> band_decompose(
    const ingest::Segment& seg, const std::vector<BandDef>& bands,
    int filter_order) {
  std::map<std::string, ingest::Segment> out;
  for (const BandDef& band : bands) {
    const FilterSpec spec = design_butterworth_bandpass(
        filter_order, band.lo_hz, band.hi_hz, seg.sample_rate_hz);
    ingest::Segment filtered = seg;
    for (std::size_t ch = 0; ch < seg.data.rows(); ++ch) {
      const std::vector<double> y = filtfilt(spec, seg.data.row(ch));
      std::ranges::copy(y, filtered.data.row(ch).begin());
    }
    out.emplace(band.name, std::move(filtered));
  }
  return out;
}

ingest::Segment zscore(const ingest::Segment& seg) {
  ingest::Segment out = seg;
  const std::size_t n = seg.data.cols();
  if (n == 0) throw ParamError("zscore: empty segment");
  for (std::size_t ch = 0; ch < seg.data.rows(); ++ch) {
    auto row = seg.data.row(ch);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);  // population variance
    if (var <= 0.0)
      throw ParamError(fmt::format("zscore: channel {} is constant", ch));
    const double inv_sd = 1.0 / std::sqrt(var);
    auto dst = out.data.row(ch);
    for (std::size_t i = 0; i < n; ++i) dst[i] = (row[i] - mean) * inv_sd;
  }
  return out;
}

PsdFeature welch_psd(const ingest::Segment& seg, double fs_hz,
                     const WelchOptions& opt) {
  const std::size_t nfft = opt.nfft;
  if (!is_power_of_two(nfft)) throw ParamError("welch_psd: nfft must be a power of two");
  if (fs_hz <= 0.0) throw ParamError("welch_psd: fs_hz must be > 0");
  if (opt.overlap < 0.0 || opt.overlap >= 1.0)
    throw ParamError("welch_psd: overlap must be in [0, 1)");
  const std::size_t t = seg.data.cols();
  if (t < nfft)
    throw ParamError(fmt::format(
        "welch_psd: segment length {} shorter than nfft {}", t, nfft));

  std::vector<double> window(nfft, 1.0);
  if (opt.window == WindowKind::hann) {
    for (std::size_t i = 0; i < nfft; ++i)
      window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                       static_cast<double>(nfft));
  }
  double wsq = 0.0;
  for (double w : window) wsq += w * w;
  const double scale = 1.0 / (fs_hz * wsq);

  const std::size_t hop = std::max<std::size_t>(
      1, nfft - static_cast<std::size_t>(std::floor(
               static_cast<double>(nfft) * opt.overlap)));
  const std::size_t nbins = nfft / 2 + 1;

  PsdFeature feat;
  feat.freqs_hz.resize(nbins);
  for (std::size_t k = 0; k < nbins; ++k)
    feat.freqs_hz[k] = static_cast<double>(k) * fs_hz / static_cast<double>(nfft);

  Matrix power(seg.data.rows(), nbins, 0.0);
  std::vector<std::complex<double>> buf(nfft);
  for (std::size_t ch = 0; ch < seg.data.rows(); ++ch) {
    auto row = seg.data.row(ch);
    std::size_t nblocks = 0;
    for (std::size_t start = 0; start + nfft <= t; start += hop) {
      for (std::size_t i = 0; i < nfft; ++i)
        buf[i] = std::complex<double>(row[start + i] * window[i], 0.0);
      fft_inplace(buf);
      for (std::size_t k = 0; k < nbins; ++k) {
        double p = std::norm(buf[k]) * scale;
        if (k != 0 && k != nfft / 2) p *= 2.0;  // one-sided
        power.at(ch, k) += p;
      }
      ++nblocks;
    }
    for (std::size_t k = 0; k < nbins; ++k)
      power.at(ch, k) /= static_cast<double>(nblocks);
  }

  feat.log_power = Matrix(seg.data.rows(), nbins, 0.0);
  feat.band_mask.assign(nbins, false);
  for (std::size_t k = 0; k < nbins; ++k) {
    bool positive = true;
    for (std::size_t ch = 0; ch < power.rows(); ++ch) {
      if (power.at(ch, k) > 0.0) {
        feat.log_power.at(ch, k) = std::log(power.at(ch, k));
      } else {
        positive = false;
      }
    }
    feat.band_mask[k] = positive && feat.freqs_hz[k] >= opt.mask_lo_hz &&
                        feat.freqs_hz[k] <= opt.mask_hi_hz;
  }
  return feat;
}

PsdFeature welch_psd(const ingest::Segment& seg, const WelchOptions& opt) {
  return welch_psd(seg, seg.sample_rate_hz, opt);
}

void write_psd_csv(std::ostream& out, const std::vector<PsdFeature>& features,
                   const std::vector<std::string>& channel_names) {
  if (features.empty()) {
    out << "segment\n";
    return;
  }
  const PsdFeature& first = features.front();
  std::vector<std::size_t> bins;
  for (std::size_t k = 0; k < first.freqs_hz.size(); ++k) {
    // Column set is the frequency restriction only, so every row has the
    // same schema regardless of per-segment power.
    if (first.freqs_hz[k] >= 4.0 && first.freqs_hz[k] <= 45.0) bins.push_back(k);
  }
  out << "segment";
  for (std::size_t ch = 0; ch < first.log_power.rows(); ++ch) {
    const std::string name =
        ch < channel_names.size() ? channel_names[ch] : "ch" + std::to_string(ch);
    for (std::size_t k : bins)
      out << ',' << name << '@' << fmt::format("{:.4f}", first.freqs_hz[k]) << "Hz";
  }
  out << '\n';
  for (std::size_t i = 0; i < features.size(); ++i) {
    out << i;
    const PsdFeature& f = features[i];
    for (std::size_t ch = 0; ch < f.log_power.rows(); ++ch)
      for (std::size_t k : bins) out << ',' << fmt::format("{}", f.log_power.at(ch, k));
    out << '\n';
  }
}

}  // namespace szeeg::dsp
