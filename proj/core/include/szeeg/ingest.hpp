#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "szeeg/matrix.hpp"

namespace szeeg::ingest {

inline constexpr int kLabelControl = 0;
inline constexpr int kLabelSchizophrenia = 1;

// One subject's multi-channel EEG in microvolts.
struct Recording {
  std::string subject_id;
  int label = kLabelControl;
  double sample_rate_hz = 0.0;
  std::vector<std::string> channel_names;
  Matrix data;  // channels x samples
};

// Fixed-size training window cut from a Recording.
struct Segment {
  Matrix data;  // channels x T
  int label = kLabelControl;
  std::string source_subject;
  std::size_t segment_index = 0;
  double sample_rate_hz = 0.0;
};

// A labeled segment collection plus the shared channel layout.
struct DatasetManifest {
  int dataset_id = 0;  // 1 or 2 for the public datasets, 0 for synthetic
  std::vector<Segment> segments;
  std::string band = "none";  // "none" means raw (unfiltered) segments
  std::vector<std::string> channel_names;
  std::optional<std::vector<std::string>> electrode_subset;
};

// Parses a standard EDF byte stream: 256-byte fixed header, 256 bytes per
// signal, 16-bit little-endian samples mapped to physical units through the
// per-signal (digital min/max) -> (physical min/max) calibration. Throws
// FormatError naming the byte offset on truncation.
Recording parse_edf(std::string_view bytes);
Recording parse_edf(std::istream& in);
Recording load_edf(const std::filesystem::path& path);

// Dataset-2 text layout: one ASCII decimal per line, channel-major
// (all samples of channel 1, then channel 2, ...). Sample rate 128 Hz.
Recording parse_matrix_text(std::istream& in, std::size_t channels = 16,
                            std::size_t samples_per_channel = 7680);
void write_matrix_text(std::ostream& out, const Recording& rec);

// Cuts a recording into fixed windows. window_s * sample_rate_hz must be a
// positive integer and 0 <= overlap < 1. A window longer than the recording
// yields an empty list; *window_too_long is set when the caller wants to
// surface a warning.
std::vector<Segment> segment_recording(const Recording& rec, double window_s,
                                       double overlap = 0.0,
                                       bool* window_too_long = nullptr);

// Deterministic synthetic EEG: pink-noise background plus a strong per-class
// sinusoid (class 0: 10 Hz alpha, class 1: 6 Hz theta) with random phase per
// channel. Amplitudes give >= 3x band-power separation between the classes.
std::vector<Recording> synth_generate(int n_subjects_per_class, int channels,
                                      int samples, double fs, std::uint64_t seed);

// Segment store on disk: manifest.json plus a flat float64 little-endian
// blob with one [channels x T] block per segment.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& dir);
DatasetManifest load_manifest(const std::filesystem::path& dir);

// Reads a dataset directory described by an index.json mapping each data
// file to {subject_id, label}, parses every file (EDF for dataset 1, text
// for dataset 2) and cuts it into windows.
DatasetManifest ingest_dataset_dir(const std::filesystem::path& dir, double window_s,
                                   double overlap = 0.0);

// Keeps only the named channels (in the order given). Throws ParamError on
// unknown names.
DatasetManifest select_channels(const DatasetManifest& manifest,
                                const std::vector<std::string>& channels);

}  // namespace szeeg::ingest
