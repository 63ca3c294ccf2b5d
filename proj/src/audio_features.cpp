#include "ktts/audio_features.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <unsupported/Eigen/FFT>

#include "ktts/errors.hpp"
#include "ktts/hash.hpp"

namespace ktts::audio {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xFF));
  s.push_back(static_cast<char>(v >> 8));
}

double hz_to_mel(double f) {
  // Slaney: linear below 1 kHz, logarithmic above.
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  const double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  if (f < min_log_hz) return f / f_sp;
  return min_log_mel + std::log(f / min_log_hz) / logstep;
}

double mel_to_hz(double m) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  const double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  if (m < min_log_mel) return m * f_sp;
  return min_log_hz * std::exp(logstep * (m - min_log_mel));
}

// Periodic Hann of length `window`, centered in an n_fft frame.
std::vector<double> padded_window(const MelConfig& cfg) {
  std::vector<double> w(static_cast<std::size_t>(cfg.n_fft), 0.0);
  const int offset = (cfg.n_fft - cfg.window) / 2;
  for (int i = 0; i < cfg.window; ++i) {
    w[static_cast<std::size_t>(offset + i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / cfg.window);
  }
  return w;
}

std::vector<double> reflect_pad(const std::vector<double>& x, int pad) {
  const auto n = static_cast<long>(x.size());
  std::vector<double> out(x.size() + 2 * static_cast<std::size_t>(pad), 0.0);
  if (n == 0) return out;
  for (long i = 0; i < static_cast<long>(out.size()); ++i) {
    long j = i - pad;
    if (j < 0) j = -j;
    if (j >= n) j = 2 * (n - 1) - j;
    j = std::clamp(j, 0L, n - 1);
    out[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(j)];
  }
  return out;
}

using ComplexSpec = Eigen::MatrixXcd;  // n_freq x T

ComplexSpec stft_complex(const std::vector<double>& samples, const MelConfig& cfg) {
  const int pad = cfg.n_fft / 2;
  const std::vector<double> x = reflect_pad(samples, pad);
  const auto frames = 1 + (static_cast<Eigen::Index>(x.size()) - cfg.n_fft) / cfg.hop;
  const std::vector<double> win = padded_window(cfg);
  ComplexSpec spec(cfg.n_freq(), frames);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> buf(static_cast<std::size_t>(cfg.n_fft));
  std::vector<std::complex<double>> out;
  for (Eigen::Index t = 0; t < frames; ++t) {
    const std::size_t base = static_cast<std::size_t>(t * cfg.hop);
    for (int i = 0; i < cfg.n_fft; ++i) buf[static_cast<std::size_t>(i)] = x[base + static_cast<std::size_t>(i)] * win[static_cast<std::size_t>(i)];
    fft.fwd(out, buf);
    for (int k = 0; k < cfg.n_freq(); ++k) spec(k, t) = out[static_cast<std::size_t>(k)];
  }
  return spec;
}

std::vector<double> istft(const ComplexSpec& spec, const MelConfig& cfg, std::size_t length) {
  const int pad = cfg.n_fft / 2;
  const Eigen::Index frames = spec.cols();
  const std::vector<double> win = padded_window(cfg);
  const std::size_t total = static_cast<std::size_t>(cfg.n_fft + cfg.hop * (frames - 1));
  std::vector<double> acc(total, 0.0), norm(total, 0.0);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> half(static_cast<std::size_t>(cfg.n_freq()));
  std::vector<double> frame;
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (int k = 0; k < cfg.n_freq(); ++k) half[static_cast<std::size_t>(k)] = spec(k, t);
    fft.inv(frame, half, cfg.n_fft);
    const std::size_t base = static_cast<std::size_t>(t * cfg.hop);
    for (int i = 0; i < cfg.n_fft; ++i) {
      const double w = win[static_cast<std::size_t>(i)];
      acc[base + static_cast<std::size_t>(i)] += frame[static_cast<std::size_t>(i)] * w;
      norm[base + static_cast<std::size_t>(i)] += w * w;
    }
  }
  std::vector<double> out(length, 0.0);
  for (std::size_t i = 0; i < length; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(pad);
    if (j >= total) break;
    out[i] = norm[j] > 1e-10 ? acc[j] / norm[j] : 0.0;
  }
  return out;
}

}  // namespace

Waveform load_wav(const std::string& path, int expected_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AudioError("cannot open WAV file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();
  if (data.empty()) throw AudioError("empty WAV file " + path);
  const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());
  if (data.size() < 12 || std::memcmp(bytes, "RIFF", 4) != 0 || std::memcmp(bytes + 8, "WAVE", 4) != 0) {
    throw AudioError("not a RIFF/WAVE file: " + path);
  }
  std::size_t pos = 12;
  int channels = 0, rate = 0, bits = 0;
  bool have_fmt = false;
  const unsigned char* pcm = nullptr;
  std::size_t pcm_bytes = 0;
  while (pos + 8 <= data.size()) {
    const std::uint32_t size = read_u32(bytes + pos + 4);
    const unsigned char* body = bytes + pos + 8;
    const std::size_t avail = std::min<std::size_t>(size, data.size() - pos - 8);
    if (std::memcmp(bytes + pos, "fmt ", 4) == 0) {
      if (avail < 16) throw AudioError("truncated fmt chunk in " + path);
      std::uint16_t format = read_u16(body);
      channels = read_u16(body + 2);
      rate = static_cast<int>(read_u32(body + 4));
      bits = read_u16(body + 14);
      if (format == 0xFFFE && avail >= 26) format = read_u16(body + 24);  // extensible: sub-format GUID
      if (format != 1) throw AudioError("non-PCM WAV encoding (format " + std::to_string(format) + ") in " + path);
      have_fmt = true;
    } else if (std::memcmp(bytes + pos, "data", 4) == 0) {
      pcm = body;
      pcm_bytes = avail;
    }
    pos += 8 + size + (size & 1);
  }
  if (!have_fmt) throw AudioError("missing fmt chunk in " + path);
  if (!pcm) throw AudioError("missing data chunk in " + path);
  if (bits != 8 && bits != 16 && bits != 24 && bits != 32) {
    throw AudioError("unsupported PCM bit depth " + std::to_string(bits) + " in " + path);
  }
  if (channels < 1) throw AudioError("invalid channel count in " + path);
  if (expected_rate > 0 && rate != expected_rate) throw RateMismatchError(expected_rate, rate);

  const std::size_t width = static_cast<std::size_t>(bits / 8);
  const std::size_t frame_bytes = width * static_cast<std::size_t>(channels);
  const std::size_t n = pcm_bytes / frame_bytes;
  if (n == 0) throw AudioError("WAV file has no samples: " + path);
  const double scale = std::ldexp(1.0, bits - 1);

  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (int c = 0; c < channels; ++c) {
      const unsigned char* p = pcm + i * frame_bytes + static_cast<std::size_t>(c) * width;
      std::int32_t v = 0;
      switch (bits) {
        case 8: v = static_cast<std::int32_t>(p[0]) - 128; break;
        case 16: v = static_cast<std::int16_t>(read_u16(p)); break;
        case 24: v = (static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16)) << 8) >> 8; break;
        default: v = static_cast<std::int32_t>(read_u32(p)); break;
      }
      sum += v / scale;
    }
    w.samples[i] = sum / channels;
  }
  return w;
}

void write_wav(const std::string& path, const Waveform& w) {
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  std::string out;
  out.reserve(44 + 2 * w.samples.size());
  out += "RIFF";
  put_u32(out, 36 + 2 * n);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, 2 * n);
  for (double s : w.samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    const auto v = static_cast<std::int16_t>(std::lround(c * 32767.0));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw AudioError("cannot write WAV file " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

// ---------------------------------------------------------------------------

void MelConfig::validate() const {
  if (sample_rate <= 0) throw ConfigError("mel: sample rate must be positive");
  if (hop < 1 || hop > window || window > n_fft) throw ConfigError("mel: require 1 <= hop <= window <= n_fft");
  if (n_mels != 80) throw ConfigError("mel: band count must be 80");
  if (!(fmin >= 0.0 && fmax > fmin && fmax <= sample_rate / 2.0)) throw ConfigError("mel: invalid fmin/fmax");
  if (!(log_floor > 0.0)) throw ConfigError("mel: log floor must be positive");
}

std::string MelConfig::canonical() const {
  std::ostringstream os;
  os.precision(17);
  os << "sample_rate=" << sample_rate << ";n_fft=" << n_fft << ";hop=" << hop << ";window=" << window
     << ";n_mels=" << n_mels << ";fmin=" << fmin << ";fmax=" << fmax << ";log_floor=" << log_floor;
  return os.str();
}

std::uint64_t MelConfig::hash() const { return fnv1a(canonical()); }

Eigen::MatrixXd mel_filterbank(const MelConfig& cfg) {
  const int n_freq = cfg.n_freq();
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(cfg.n_mels, n_freq);
  const double mel_lo = hz_to_mel(cfg.fmin), mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> pts(static_cast<std::size_t>(cfg.n_mels + 2));
  for (int i = 0; i < cfg.n_mels + 2; ++i) {
    pts[static_cast<std::size_t>(i)] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));
  }
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = pts[static_cast<std::size_t>(m)], mid = pts[static_cast<std::size_t>(m + 1)],
                 hi = pts[static_cast<std::size_t>(m + 2)];
    const double enorm = 2.0 / (hi - lo);
    for (int k = 0; k < n_freq; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
      const double up = (f - lo) / (mid - lo);
      const double down = (hi - f) / (hi - mid);
      fb(m, k) = std::max(0.0, std::min(up, down)) * enorm;
    }
  }
  return fb;
}

Eigen::MatrixXd stft_magnitude(const std::vector<double>& samples, const MelConfig& cfg) {
  return stft_complex(samples, cfg).cwiseAbs();
}

MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg) {
  cfg.validate();
  if (w.sample_rate != cfg.sample_rate) throw RateMismatchError(cfg.sample_rate, w.sample_rate);
  if (static_cast<long>(w.samples.size()) < cfg.window) {
    throw AudioError("waveform of " + std::to_string(w.samples.size()) + " samples is shorter than one window");
  }
  const Eigen::MatrixXd mag = stft_magnitude(w.samples, cfg);
  const Eigen::MatrixXd mel = mel_filterbank(cfg) * mag;  // n_mels x T
  MelSpectrogram out;
  out.config = cfg;
  out.frames = mel.transpose().array().max(cfg.log_floor).log().matrix();
  return out;
}

Waveform griffin_lim_invert(const MelSpectrogram& m, int iterations, std::uint64_t seed) {
  if (!m.frames.allFinite()) throw NumericError("griffin_lim_invert input");
  const MelConfig& cfg = m.config;
  const Eigen::MatrixXd fb = mel_filterbank(cfg);
  const Eigen::MatrixXd pinv = fb.completeOrthogonalDecomposition().pseudoInverse();  // n_freq x n_mels
  const Eigen::MatrixXd linear = (pinv * m.frames.transpose().array().exp().matrix()).cwiseMax(0.0);
  const Eigen::Index frames = linear.cols();
  if (frames == 0) throw AudioError("griffin_lim_invert needs at least one frame");
  const std::size_t length = static_cast<std::size_t>(cfg.hop * (frames - 1));

  std::mt19937_64 rng(seed);
  ComplexSpec phase(linear.rows(), frames);
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (Eigen::Index k = 0; k < linear.rows(); ++k) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      phase(k, t) = std::polar(1.0, 2.0 * std::numbers::pi * u);
    }
  }

  std::vector<double> signal;
  for (int it = 0; it < std::max(1, iterations); ++it) {
    const ComplexSpec spec = linear.cast<std::complex<double>>().cwiseProduct(phase);
    signal = istft(spec, cfg, length);
    const ComplexSpec est = stft_complex(signal, cfg);
    for (Eigen::Index t = 0; t < frames && t < est.cols(); ++t) {
      for (Eigen::Index k = 0; k < est.rows(); ++k) {
        const double a = std::abs(est(k, t));
        phase(k, t) = a > 1e-12 ? est(k, t) / a : std::complex<double>(1.0, 0.0);
      }
    }
  }
  const ComplexSpec spec = linear.cast<std::complex<double>>().cwiseProduct(phase);
  Waveform w;
  w.sample_rate = cfg.sample_rate;
  w.samples = istft(spec, cfg, length);
  return w;
}

// ---------------------------------------------------------------------------

double PauseDetection::detected_silence_seconds() const {
  double s = 0.0;
  for (const auto& p : pauses) s += p.seconds;
  if (leading) s += leading->seconds;
  if (trailing) s += trailing->seconds;
  return s;
}

Eigen::VectorXd frame_energies(const Eigen::MatrixXd& frames) { return frames.rowwise().mean(); }

double energy_percentile(const Eigen::MatrixXd& frames, double q) {
  if (frames.rows() == 0) return 0.0;
  Eigen::VectorXd e = frame_energies(frames);
  std::vector<double> v(e.data(), e.data() + e.size());
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (v[hi] - v[lo]) * (pos - static_cast<double>(lo));
}

PauseDetection detect_pauses(const Eigen::MatrixXd& frames, double threshold, int min_frames, double frame_seconds) {
  const Eigen::VectorXd e = frame_energies(frames);
  const Eigen::Index n = e.size();
  const Eigen::Index min_len = std::max(1, min_frames);
  PauseDetection out;
  Eigen::Index t = 0;
  while (t < n) {
    if (!(e[t] < threshold)) {
      ++t;
      continue;
    }
    const Eigen::Index start = t;
    while (t < n && e[t] < threshold) ++t;
    if (t - start < min_len) continue;
    PauseSegment seg{start, t, static_cast<double>(t - start) * frame_seconds};
    if (start == 0) {
      out.leading = seg;  // an all-silent clip is reported once, as leading
    } else if (t == n) {
      out.trailing = seg;
    } else {
      out.pauses.push_back(seg);
    }
  }
  return out;
}

PauseDetection detect_pauses(const MelSpectrogram& m, double threshold, int min_frames) {
  return detect_pauses(m.frames, threshold, min_frames, m.config.frame_seconds());
}

PauseStats pause_statistics(const std::vector<PauseSegment>& segments, Eigen::Index total_frames, const MelConfig& cfg) {
  PauseStats s;
  const double fs = cfg.frame_seconds();
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& seg = segments[i];
    if (seg.end <= seg.start) throw RangeError("pause segment " + std::to_string(i) + " is empty");
    if (i > 0 && seg.start < segments[i - 1].end) {
      throw RangeError("pause segments " + std::to_string(i - 1) + " and " + std::to_string(i) + " overlap or are unsorted");
    }
    s.total_seconds += static_cast<double>(seg.end - seg.start) * fs;
  }
  s.count = segments.size();
  s.mean_seconds = s.count ? s.total_seconds / static_cast<double>(s.count) : 0.0;
  const double clip_seconds = static_cast<double>(total_frames) * fs;
  s.rate_per_second = clip_seconds > 0.0 ? static_cast<double>(s.count) / clip_seconds : 0.0;
  return s;
}

}  // namespace ktts::audio
