#include "szeeg/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fmt/format.h>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "szeeg/error.hpp"
#include "szeeg/rng.hpp"

namespace szeeg::ingest {

namespace {

using nlohmann::json;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double_strict(std::string_view raw, const std::string& what) {
  const std::string t = trim(raw);
  if (t.empty()) throw FormatError("edf: empty numeric field for " + what);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || !std::isfinite(v))
    throw FormatError("edf: non-numeric " + what + " field '" + t + "'");
  return v;
}

long parse_long_strict(std::string_view raw, const std::string& what) {
  const double v = parse_double_strict(raw, what);
  const long l = static_cast<long>(v);
  if (static_cast<double>(l) != v)
    throw FormatError("edf: non-integer " + what + " field");
  return l;
}

struct EdfCursor {
  std::string_view bytes;
  std::size_t pos = 0;

  std::string_view take(std::size_t n, const std::string& what) {
    if (pos + n > bytes.size())
      throw FormatError(fmt::format(
          "edf: truncated while reading {} at byte offset {} (need {} bytes, "
          "have {})",
          what, pos, n, bytes.size() - pos));
    std::string_view out = bytes.substr(pos, n);
    pos += n;
    return out;
  }
};

}  // namespace

Recording parse_edf(std::string_view bytes) {
  EdfCursor cur{bytes};

  cur.take(8, "version");
  const std::string patient = trim(cur.take(80, "patient id"));
  cur.take(80, "recording id");
  cur.take(8, "start date");
  cur.take(8, "start time");
  cur.take(8, "header byte count");
  cur.take(44, "reserved");
  const long n_records_hdr = parse_long_strict(cur.take(8, "record count"), "record count");
  const double record_dur_s =
      parse_double_strict(cur.take(8, "record duration"), "record duration");
  const long n_signals = parse_long_strict(cur.take(4, "signal count"), "signal count");
  if (n_signals <= 0) throw FormatError("edf: signal count must be positive");
  if (record_dur_s <= 0.0) throw FormatError("edf: record duration must be positive");

  const std::size_t ns = static_cast<std::size_t>(n_signals);
  std::vector<std::string> labels(ns);
  for (auto& l : labels) l = trim(cur.take(16, "signal label"));
  for (std::size_t s = 0; s < ns; ++s) cur.take(80, "transducer");
  for (std::size_t s = 0; s < ns; ++s) cur.take(8, "physical dimension");
  std::vector<double> phys_min(ns), phys_max(ns), dig_min(ns), dig_max(ns);
  for (auto& v : phys_min) v = parse_double_strict(cur.take(8, "physical min"), "physical min");
  for (auto& v : phys_max) v = parse_double_strict(cur.take(8, "physical max"), "physical max");
  for (auto& v : dig_min) v = parse_double_strict(cur.take(8, "digital min"), "digital min");
  for (auto& v : dig_max) v = parse_double_strict(cur.take(8, "digital max"), "digital max");
  for (std::size_t s = 0; s < ns; ++s) cur.take(80, "prefiltering");
  std::vector<long> samples_per_record(ns);
  for (auto& v : samples_per_record)
    v = parse_long_strict(cur.take(8, "samples per record"), "samples per record");
  for (std::size_t s = 0; s < ns; ++s) cur.take(32, "signal reserved");

  for (std::size_t s = 0; s < ns; ++s) {
    if (dig_min[s] == dig_max[s])
      throw FormatError(fmt::format(
          "edf: degenerate calibration on signal {} ('{}'): digital min == max",
          s, labels[s]));
    if (samples_per_record[s] <= 0)
      throw FormatError(fmt::format("edf: signal {} has no samples per record", s));
    if (samples_per_record[s] != samples_per_record[0])
      throw FormatError(
          "edf: signals with differing sampling rates are not supported");
  }

  const std::size_t spr = static_cast<std::size_t>(samples_per_record[0]);
  const std::size_t record_bytes = ns * spr * 2;
  std::size_t n_records;
  if (n_records_hdr >= 0) {
    n_records = static_cast<std::size_t>(n_records_hdr);
  } else {
    // Record count -1 means "unknown"; infer it from the payload size.
    const std::size_t remaining = bytes.size() - cur.pos;
    if (record_bytes == 0 || remaining % record_bytes != 0)
      throw FormatError(fmt::format(
          "edf: payload of {} bytes is not a whole number of {}-byte records",
          remaining, record_bytes));
    n_records = remaining / record_bytes;
  }

  Recording rec;
  rec.subject_id = patient.empty() ? "unknown" : patient;
  rec.sample_rate_hz = static_cast<double>(spr) / record_dur_s;
  rec.channel_names = labels;
  rec.data = Matrix(ns, n_records * spr);

  for (std::size_t r = 0; r < n_records; ++r) {
    for (std::size_t s = 0; s < ns; ++s) {
      const std::string_view raw =
          cur.take(spr * 2, fmt::format("data record {} signal {}", r, s));
      const double gain = (phys_max[s] - phys_min[s]) / (dig_max[s] - dig_min[s]);
      auto row = rec.data.row(s);
      for (std::size_t i = 0; i < spr; ++i) {
        const std::uint16_t lo = static_cast<std::uint8_t>(raw[2 * i]);
        const std::uint16_t hi = static_cast<std::uint8_t>(raw[2 * i + 1]);
        const std::int16_t digital =
            static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
        row[r * spr + i] =
            (static_cast<double>(digital) - dig_min[s]) * gain + phys_min[s];
      }
    }
  }

  for (double v : rec.data.values())
    if (!std::isfinite(v)) throw FormatError("edf: non-finite sample after calibration");
  return rec;
}

Recording parse_edf(std::istream& in) {
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_edf(std::string_view(buf.view()));
}

Recording load_edf(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParamError("edf: cannot open '" + path.string() + "'");
  return parse_edf(in);
}

Recording parse_matrix_text(std::istream& in, std::size_t channels,
                            std::size_t samples_per_channel) {
  const std::size_t expected = channels * samples_per_channel;
  std::vector<double> values;
  values.reserve(expected);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size())
      throw FormatError(fmt::format(
          "matrix text: unparsable value '{}' at line {}", t, line_no));
    values.push_back(v);
  }
  if (values.size() != expected)
    throw FormatError(fmt::format(
        "matrix text: expected {} values ({} channels x {} samples), found {}",
        expected, channels, samples_per_channel, values.size()));

  Recording rec;
  rec.sample_rate_hz = 128.0;
  rec.data = Matrix(channels, samples_per_channel);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    rec.channel_names.push_back("ch" + std::to_string(ch + 1));
    auto row = rec.data.row(ch);
    for (std::size_t i = 0; i < samples_per_channel; ++i)
      row[i] = values[ch * samples_per_channel + i];
  }
  return rec;
}

void write_matrix_text(std::ostream& out, const Recording& rec) {
  for (std::size_t ch = 0; ch < rec.data.rows(); ++ch)
    for (double v : rec.data.row(ch)) out << fmt::format("{}", v) << '\n';
}

std::vector<Segment> segment_recording(const Recording& rec, double window_s,
                                       double overlap, bool* window_too_long) {
  if (window_too_long) *window_too_long = false;
  if (rec.sample_rate_hz <= 0.0)
    throw ParamError("segment_recording: recording has no sample rate");
  const double exact = window_s * rec.sample_rate_hz;
  const double rounded = std::round(exact);
  if (rounded < 1.0 || std::abs(exact - rounded) > 1e-6)
    throw ParamError(fmt::format(
        "segment_recording: window {} s at {} Hz is not a whole number of samples",
        window_s, rec.sample_rate_hz));
  if (overlap < 0.0 || overlap >= 1.0)
    throw ParamError("segment_recording: overlap must be in [0, 1)");

  const std::size_t win = static_cast<std::size_t>(rounded);
  const std::size_t hop = std::max<std::size_t>(
      1, win - static_cast<std::size_t>(std::floor(static_cast<double>(win) * overlap)));

  std::vector<Segment> out;
  if (rec.data.cols() < win) {
    if (window_too_long) *window_too_long = true;
    return out;
  }
  std::size_t index = 0;
  for (std::size_t start = 0; start + win <= rec.data.cols(); start += hop) {
    Segment seg;
    seg.data = Matrix(rec.data.rows(), win);
    for (std::size_t ch = 0; ch < rec.data.rows(); ++ch) {
      auto src = rec.data.row(ch);
      std::copy(src.begin() + static_cast<std::ptrdiff_t>(start),
                src.begin() + static_cast<std::ptrdiff_t>(start + win),
                seg.data.row(ch).begin());
    }
    seg.label = rec.label;
    seg.source_subject = rec.subject_id;
    seg.segment_index = index++;
    seg.sample_rate_hz = rec.sample_rate_hz;
    out.push_back(std::move(seg));
  }
  return out;
}

std::vector<Recording> synth_generate(int n_subjects_per_class, int channels,
                                      int samples, double fs, std::uint64_t seed) {
  if (n_subjects_per_class <= 0 || channels <= 0 || samples <= 0 || fs <= 0.0)
    throw ParamError("synth_generate: all parameters must be positive");

  constexpr double kToneAmp = 3.0;
  constexpr double kPinkScale = 0.5;
  const double tone_hz[2] = {10.0, 6.0};  // class 0 alpha, class 1 theta

  Rng root(seed);
  std::vector<Recording> out;
  for (int cls = 0; cls < 2; ++cls) {
    for (int subj = 0; subj < n_subjects_per_class; ++subj) {
      Recording rec;
      rec.subject_id = fmt::format("synth-c{}-s{:02}", cls, subj);
      rec.label = cls;
      rec.sample_rate_hz = fs;
      rec.data = Matrix(static_cast<std::size_t>(channels),
                        static_cast<std::size_t>(samples));
      for (int ch = 0; ch < channels; ++ch) {
        rec.channel_names.push_back(fmt::format("ch{:02}", ch + 1));
        Rng rng = root.fork(static_cast<std::uint64_t>(
            (cls * n_subjects_per_class + subj) * channels + ch));
        const double phase = 2.0 * std::numbers::pi * rng.uniform();
        auto row = rec.data.row(static_cast<std::size_t>(ch));
        // Kellet's economy pink-noise filter over white Gaussian input.
        double b0 = 0.0, b1 = 0.0, b2 = 0.0;
        for (int i = 0; i < samples; ++i) {
          const double w = rng.normal();
          b0 = 0.99765 * b0 + w * 0.0990460;
          b1 = 0.96300 * b1 + w * 0.2965164;
          b2 = 0.57000 * b2 + w * 1.0526913;
          const double pink = (b0 + b1 + b2 + w * 0.1848) * kPinkScale;
          const double tone = kToneAmp * std::sin(2.0 * std::numbers::pi *
                                                      tone_hz[cls] * i / fs +
                                                  phase);
          row[static_cast<std::size_t>(i)] = pink + tone;
        }
      }
      out.push_back(std::move(rec));
    }
  }
  return out;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& dir) {
  if (manifest.segments.empty())
    throw ParamError("save_manifest: no segments to save");
  const Matrix& first = manifest.segments.front().data;
  for (const Segment& seg : manifest.segments)
    if (!seg.data.same_shape(first))
      throw ParamError("save_manifest: segments do not share one shape");

  std::filesystem::create_directories(dir);

  json j;
  j["format"] = "szeeg-manifest-v1";
  j["dataset_id"] = manifest.dataset_id;
  j["band"] = manifest.band;
  j["channels"] = first.rows();
  j["samples_per_segment"] = first.cols();
  j["sample_rate_hz"] = manifest.segments.front().sample_rate_hz;
  j["channel_names"] = manifest.channel_names;
  if (manifest.electrode_subset)
    j["electrode_subset"] = *manifest.electrode_subset;
  else
    j["electrode_subset"] = nullptr;
  j["data_file"] = "segments.f64";
  json segs = json::array();
  for (const Segment& seg : manifest.segments) {
    segs.push_back({{"subject", seg.source_subject},
                    {"label", seg.label},
                    {"index", seg.segment_index}});
  }
  j["segments"] = segs;

  std::ofstream meta(dir / "manifest.json");
  if (!meta) throw ParamError("save_manifest: cannot write to '" + dir.string() + "'");
  meta << j.dump(2) << '\n';

  std::ofstream blob(dir / "segments.f64", std::ios::binary);
  for (const Segment& seg : manifest.segments) {
    blob.write(reinterpret_cast<const char*>(seg.data.values().data()),
               static_cast<std::streamsize>(seg.data.size() * sizeof(double)));
  }
  if (!blob) throw ParamError("save_manifest: failed writing segment blob");
}

DatasetManifest load_manifest(const std::filesystem::path& dir) {
  std::ifstream meta(dir / "manifest.json");
  if (!meta)
    throw ParamError("load_manifest: cannot open '" + (dir / "manifest.json").string() + "'");
  json j;
  try {
    meta >> j;
  } catch (const json::exception& e) {
    throw FormatError(std::string("load_manifest: bad manifest.json: ") + e.what());
  }
  if (j.value("format", "") != "szeeg-manifest-v1")
    throw FormatError("load_manifest: unrecognized manifest format");

  DatasetManifest manifest;
  manifest.dataset_id = j.at("dataset_id").get<int>();
  manifest.band = j.at("band").get<std::string>();
  manifest.channel_names = j.at("channel_names").get<std::vector<std::string>>();
  if (!j.at("electrode_subset").is_null())
    manifest.electrode_subset = j.at("electrode_subset").get<std::vector<std::string>>();
  const std::size_t channels = j.at("channels").get<std::size_t>();
  const std::size_t T = j.at("samples_per_segment").get<std::size_t>();
  const double fs = j.at("sample_rate_hz").get<double>();

  std::ifstream blob(dir / j.at("data_file").get<std::string>(), std::ios::binary);
  if (!blob) throw FormatError("load_manifest: missing segment blob");

  for (const json& s : j.at("segments")) {
    Segment seg;
    seg.data = Matrix(channels, T);
    blob.read(reinterpret_cast<char*>(seg.data.values().data()),
              static_cast<std::streamsize>(channels * T * sizeof(double)));
    if (blob.gcount() != static_cast<std::streamsize>(channels * T * sizeof(double)))
      throw FormatError("load_manifest: segment blob truncated");
    seg.label = s.at("label").get<int>();
    seg.source_subject = s.at("subject").get<std::string>();
    seg.segment_index = s.at("index").get<std::size_t>();
    seg.sample_rate_hz = fs;
    for (double v : seg.data.values())
      if (!std::isfinite(v)) throw FormatError("load_manifest: non-finite sample");
    manifest.segments.push_back(std::move(seg));
  }
  return manifest;
}

DatasetManifest ingest_dataset_dir(const std::filesystem::path& dir, double window_s,
                                   double overlap) {
  const auto index_path = dir / "index.json";
  std::ifstream in(index_path);
  if (!in) throw ParamError("ingest: cannot open '" + index_path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(std::string("ingest: bad index.json: ") + e.what());
  }

  DatasetManifest manifest;
  manifest.dataset_id = j.value("dataset_id", 1);

  for (const json& f : j.at("files")) {
    const std::string name = f.at("file").get<std::string>();
    const auto path = dir / name;
    Recording rec;
    if (path.extension() == ".edf" || path.extension() == ".EDF") {
      rec = load_edf(path);
    } else {
      std::ifstream txt(path);
      if (!txt) throw ParamError("ingest: cannot open '" + path.string() + "'");
      rec = parse_matrix_text(txt);
    }
    rec.subject_id = f.at("subject_id").get<std::string>();
    rec.label = f.at("label").get<int>();
    if (rec.label != kLabelControl && rec.label != kLabelSchizophrenia)
      throw FormatError(fmt::format("ingest: label for '{}' must be 0 or 1", name));

    if (manifest.channel_names.empty()) {
      manifest.channel_names = rec.channel_names;
    } else if (manifest.channel_names != rec.channel_names) {
      throw FormatError(fmt::format(
          "ingest: '{}' has a different channel layout than earlier files", name));
    }
    for (Segment& seg : segment_recording(rec, window_s, overlap))
      manifest.segments.push_back(std::move(seg));
  }

  if (manifest.segments.empty())
    throw ParamError("ingest: dataset produced no segments");
  bool has[2] = {false, false};
  for (const Segment& seg : manifest.segments) has[seg.label] = true;
  if (!has[0] || !has[1])
    throw ParamError("ingest: dataset must contain both classes");
  return manifest;
}

DatasetManifest select_channels(const DatasetManifest& manifest,
                                const std::vector<std::string>& channels) {
  std::vector<std::size_t> idx;
  for (const std::string& name : channels) {
    const auto it = std::ranges::find(manifest.channel_names, name);
    if (it == manifest.channel_names.end())
      throw ParamError("select_channels: unknown channel '" + name + "'");
    idx.push_back(static_cast<std::size_t>(it - manifest.channel_names.begin()));
  }
  DatasetManifest out;
  out.dataset_id = manifest.dataset_id;
  out.band = manifest.band;
  out.channel_names = channels;
  out.electrode_subset = channels;
  for (const Segment& seg : manifest.segments) {
    Segment sub = seg;
    sub.data = Matrix(idx.size(), seg.data.cols());
    for (std::size_t r = 0; r < idx.size(); ++r)
      std::ranges::copy(seg.data.row(idx[r]), sub.data.row(r).begin());
    out.segments.push_back(std::move(sub));
  }
  return out;
}

}  // namespace szeeg::ingest
