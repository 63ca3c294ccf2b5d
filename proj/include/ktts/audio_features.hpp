#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ktts::audio {

inline constexpr int kCorpusSampleRate = 22050;

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = kCorpusSampleRate;

  double seconds() const { return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0; }
};

/// Reads a PCM WAV (8/16/24/32-bit integer). Stereo and wider are averaged
/// down to mono. Throws AudioError for missing, empty or non-PCM files and
/// RateMismatchError when the rate differs from `expected_rate` (pass 0 to
/// accept any rate).
Waveform load_wav(const std::string& path, int expected_rate = kCorpusSampleRate);

/// Writes 16-bit mono PCM, clipping to [-1, 1].
void write_wav(const std::string& path, const Waveform& w);

struct MelConfig {
  int sample_rate = kCorpusSampleRate;
  int n_fft = 1024;
  int hop = 256;
  int window = 1024;
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-5;

  /// Throws ConfigError when hop <= window <= n_fft or n_mels = 80 fails.
  void validate() const;
  std::string canonical() const;
  std::uint64_t hash() const;
  double frame_seconds() const { return static_cast<double>(hop) / sample_rate; }
  int n_freq() const { return n_fft / 2 + 1; }

  friend bool operator==(const MelConfig&, const MelConfig&) = default;
};

/// T x n_mels natural-log mel magnitudes.
struct MelSpectrogram {
  Eigen::MatrixXd frames;
  MelConfig config;

  Eigen::Index num_frames() const { return frames.rows(); }
};

/// n_mels x n_freq Slaney-normalised triangular filterbank.
Eigen::MatrixXd mel_filterbank(const MelConfig& cfg);

/// Centered STFT (reflect padding of n_fft/2 at both ends) with a periodic
/// Hann window. Returns n_freq x T magnitudes.
Eigen::MatrixXd stft_magnitude(const std::vector<double>& samples, const MelConfig& cfg);

/// Throws AudioError when the waveform is shorter than one window and
/// RateMismatchError when its rate differs from cfg.sample_rate.
MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg = {});

/// Mel -> linear magnitude via a non-negative pseudo-inverse, then classic
/// Griffin-Lim phase recovery from a seeded random start.
Waveform griffin_lim_invert(const MelSpectrogram& m, int iterations = 60, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Pause analysis

struct PauseSegment {
  Eigen::Index start = 0;  // first frame
  Eigen::Index end = 0;    // one past the last frame
  double seconds = 0.0;

  Eigen::Index frames() const { return end - start; }
  friend bool operator==(const PauseSegment& a, const PauseSegment& b) { return a.start == b.start && a.end == b.end; }
};

struct PauseDetection {
  /// Internal pauses, sorted and disjoint.
  std::vector<PauseSegment> pauses;
  /// Silence touching the first or last frame; not counted as pauses.
  std::optional<PauseSegment> leading;
  std::optional<PauseSegment> trailing;

  /// Pauses plus leading/trailing silence.
  double detected_silence_seconds() const;
};

struct PauseStats {
  std::size_t count = 0;
  double mean_seconds = 0.0;
  double total_seconds = 0.0;
  double rate_per_second = 0.0;
};

/// Mean log-mel value of each frame.
Eigen::VectorXd frame_energies(const Eigen::MatrixXd& frames);

/// q-quantile (linear interpolation) of the frame energies, q in [0, 1].
double energy_percentile(const Eigen::MatrixXd& frames, double q);

/// Maximal runs of frames with energy < threshold lasting at least
/// `min_frames`. Runs that touch either end are reported as leading/trailing
/// silence instead of pauses. `frame_seconds` only fills PauseSegment::seconds.
PauseDetection detect_pauses(const Eigen::MatrixXd& frames, double threshold, int min_frames,
                             double frame_seconds = 256.0 / kCorpusSampleRate);
PauseDetection detect_pauses(const MelSpectrogram& m, double threshold, int min_frames);

/// Throws RangeError for unsorted or overlapping segments.
PauseStats pause_statistics(const std::vector<PauseSegment>& segments, Eigen::Index total_frames, const MelConfig& cfg);

}  // namespace ktts::audio
