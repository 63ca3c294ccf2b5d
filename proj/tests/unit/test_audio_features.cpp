#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "ktts/audio_features.hpp"
#include "ktts/errors.hpp"
#include "test_util.hpp"

using namespace ktts;
using namespace ktts::audio;
using Eigen::MatrixXd;

namespace {

constexpr double kPi = std::numbers::pi;

Waveform tone(double freq, double seconds, double amp = 0.5, int rate = kCorpusSampleRate) {
  Waveform w;
  w.sample_rate = rate;
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  for (std::size_t i = 0; i < n; ++i) w.samples.push_back(amp * std::sin(2 * kPi * freq * static_cast<double>(i) / rate));
  return w;
}

double hz_to_mel_slaney(double hz) {
  const double f_sp = 200.0 / 3.0, min_log_hz = 1000.0, min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return hz < min_log_hz ? hz / f_sp : min_log_mel + std::log(hz / min_log_hz) / logstep;
}

// Frames of a loud/silent pattern: loud rows are 0, silent rows are -10.
MatrixXd pattern(const std::vector<std::pair<bool, int>>& runs, int bands = 80) {
  int total = 0;
  for (auto [loud, n] : runs) total += n;
  MatrixXd m(total, bands);
  int row = 0;
  for (auto [loud, n] : runs) {
    for (int i = 0; i < n; ++i, ++row) m.row(row).setConstant(loud ? 0.0 : -10.0);
  }
  return m;
}

double total_seconds(const std::vector<PauseSegment>& segs) {
  double s = 0;
  for (const auto& p : segs) s += p.seconds;
  return s;
}

}  // namespace

TEST_CASE("load_wav sample count and full-scale normalisation") {
  testutil::TempDir dir("wav");
  const std::size_t n = static_cast<std::size_t>(std::llround(2.38 * 22050));
  CHECK(n == 52479);
  std::vector<std::int32_t> frames(n, 0);
  frames[0] = 32767;
  frames[1] = -32768;
  testutil::write_raw_wav(dir.file("a.wav"), 22050, 1, 16, frames);
  const Waveform w = load_wav(dir.file("a.wav"));
  CHECK(w.samples.size() == 52479);
  CHECK(w.sample_rate == 22050);
  CHECK(std::abs(w.samples[0] - 1.0) <= 1.0 / 32768);
  CHECK(w.samples[1] == doctest::Approx(-1.0));
  CHECK(w.seconds() == doctest::Approx(2.38).epsilon(1e-4));
}

TEST_CASE("load_wav downmixes stereo and reads other depths") {
  testutil::TempDir dir("wav2");
  testutil::write_raw_wav(dir.file("st.wav"), 22050, 2, 16, {16384, 0, -16384, -16384, 8192, 24576});
  const Waveform w = load_wav(dir.file("st.wav"));
  REQUIRE(w.samples.size() == 3);
  CHECK(w.samples[0] == doctest::Approx(0.25));
  CHECK(w.samples[1] == doctest::Approx(-0.5));
  CHECK(w.samples[2] == doctest::Approx(0.5));

  testutil::write_raw_wav(dir.file("b8.wav"), 22050, 1, 8, {127, -128, 0});
  const Waveform w8 = load_wav(dir.file("b8.wav"));
  CHECK(w8.samples[1] == doctest::Approx(-1.0));
  CHECK(w8.samples[2] == doctest::Approx(0.0));

  testutil::write_raw_wav(dir.file("b24.wav"), 22050, 1, 24, {4194304, -8388608});
  const Waveform w24 = load_wav(dir.file("b24.wav"));
  CHECK(w24.samples[0] == doctest::Approx(0.5));
  CHECK(w24.samples[1] == doctest::Approx(-1.0));
}

TEST_CASE("load_wav errors") {
  testutil::TempDir dir("wav3");
  CHECK_THROWS_AS(load_wav(dir.file("missing.wav")), AudioError);
  { std::ofstream(dir.file("empty.wav")); }
  CHECK_THROWS_AS(load_wav(dir.file("empty.wav")), AudioError);
  testutil::write_raw_wav(dir.file("nodata.wav"), 22050, 1, 16, {});
  CHECK_THROWS_AS(load_wav(dir.file("nodata.wav")), AudioError);
  testutil::write_raw_wav(dir.file("float.wav"), 22050, 1, 32, {0, 0}, 3);
  CHECK_THROWS_AS(load_wav(dir.file("float.wav")), AudioError);
  testutil::write_raw_wav(dir.file("16k.wav"), 16000, 1, 16, {0, 1, 2});
  try {
    load_wav(dir.file("16k.wav"));
    FAIL("expected RateMismatchError");
  } catch (const RateMismatchError& e) {
    CHECK(e.actual() == 16000);
    CHECK(e.expected() == 22050);
  }
}

TEST_CASE("write_wav then load_wav round trip within 16-bit quantisation") {
  testutil::TempDir dir("wav4");
  const Waveform w = tone(220, 0.1);
  write_wav(dir.file("t.wav"), w);
  const Waveform back = load_wav(dir.file("t.wav"));
  REQUIRE(back.samples.size() == w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i) CHECK(std::abs(back.samples[i] - w.samples[i]) <= 1.0 / 32767);
}

TEST_CASE("MelConfig validation and hashing") {
  MelConfig c;
  CHECK_NOTHROW(c.validate());
  MelConfig bad = c;
  bad.hop = 2048;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.window = 2048;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.n_mels = 40;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  MelConfig other = c;
  other.fmax = 7600;
  CHECK(other.hash() != c.hash());
  CHECK(MelConfig{}.hash() == c.hash());
}

TEST_CASE("frame count follows the centred-padding convention") {
  const MelSpectrogram m = mel_spectrogram(tone(440, 1.0));
  CHECK(m.frames.cols() == 80);
  // 22050 samples, reflect-padded by 512 at both ends: 1 + 22050 / 256 frames.
  CHECK(m.num_frames() == 1 + 22050 / 256);
  CHECK(std::abs(m.num_frames() - 87) <= 1);
  CHECK_THROWS_AS(mel_spectrogram(tone(440, 0.01)), AudioError);
}

TEST_CASE("digital silence sits on the log floor") {
  Waveform w;
  w.samples.assign(4000, 0.0);
  const MelSpectrogram m = mel_spectrogram(w);
  CHECK((m.frames.array() == std::log(1e-5)).all());
}

TEST_CASE("doubling amplitude adds log 2 to unclamped entries") {
  const MelSpectrogram a = mel_spectrogram(tone(440, 0.5, 0.2));
  const MelSpectrogram b = mel_spectrogram(tone(440, 0.5, 0.4));
  const double floor = std::log(1e-5);
  int checked = 0;
  for (Eigen::Index i = 0; i < a.frames.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.frames.cols(); ++j) {
      if (a.frames(i, j) > floor + 1.0) {
        CHECK(b.frames(i, j) - a.frames(i, j) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
        ++checked;
      }
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("mel_spectrogram is bitwise deterministic and rejects mismatched rates") {
  const Waveform w = tone(300, 0.3);
  const MelSpectrogram a = mel_spectrogram(w), b = mel_spectrogram(w);
  CHECK((a.frames.array() == b.frames.array()).all());
  Waveform w16 = w;
  w16.sample_rate = 16000;
  CHECK_THROWS_AS(mel_spectrogram(w16), RateMismatchError);
}

TEST_CASE("STFT magnitudes match a direct DFT") {
  MelConfig cfg;
  std::mt19937 rng(2);
  std::normal_distribution<double> g(0, 0.3);
  std::vector<double> x(5000);
  for (auto& v : x) v = g(rng);
  const MatrixXd S = stft_magnitude(x, cfg);
  const int pad = cfg.n_fft / 2;
  auto reflect = [&](long i) {
    const long n = static_cast<long>(x.size());
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
    return x[static_cast<std::size_t>(i)];
  };
  for (int t : {0, 3, 10, static_cast<int>(S.cols()) - 1}) {
    for (int k : {0, 5, 100, 511, 512}) {
      std::complex<double> acc = 0;
      for (int n = 0; n < cfg.n_fft; ++n) {
        const double win = 0.5 - 0.5 * std::cos(2 * kPi * n / cfg.window);
        acc += win * reflect(static_cast<long>(t) * cfg.hop + n - pad) *
               std::polar(1.0, -2 * kPi * k * n / cfg.n_fft);
      }
      CHECK(S(k, t) == doctest::Approx(std::abs(acc)).epsilon(1e-9));
    }
  }
}

TEST_CASE("Slaney filterbank: unit area triangles with increasing centres") {
  MelConfig cfg;
  const MatrixXd fb = mel_filterbank(cfg);
  REQUIRE(fb.rows() == 80);
  REQUIRE(fb.cols() == cfg.n_freq());
  CHECK((fb.array() >= 0).all());
  const double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.n_fft;
  Eigen::Index prev_peak = -1;
  for (Eigen::Index m = 0; m < fb.rows(); ++m) {
    Eigen::Index peak;
    fb.row(m).maxCoeff(&peak);
    CHECK(peak >= prev_peak);
    prev_peak = peak;
  }
  // Wide upper filters integrate to ~1 over Hz under the Slaney normalisation.
  for (Eigen::Index m = 40; m < 80; ++m) CHECK(fb.row(m).sum() * bin_hz == doctest::Approx(1.0).epsilon(0.05));
  // Edge frequencies of the last filter follow the Slaney mel scale.
  const double top_mel = hz_to_mel_slaney(cfg.fmax);
  CHECK(top_mel == doctest::Approx(45.245640471924965).epsilon(1e-9));
}

TEST_CASE("Griffin-Lim recovers a tone's pitch") {
  const Waveform w = tone(440, 0.6);
  const MelSpectrogram m = mel_spectrogram(w);
  const Waveform inv = griffin_lim_invert(m, 60, 1);
  REQUIRE(inv.samples.size() > 4096);
  // Peak of the averaged magnitude spectrum of the output.
  const MatrixXd S = stft_magnitude(inv.samples, m.config);
  Eigen::Index peak;
  S.rowwise().sum().maxCoeff(&peak);
  const double peak_hz = static_cast<double>(peak) * inv.sample_rate / m.config.n_fft;
  // Within one mel band of 440 Hz (bands are 66.7 Hz wide below 1 kHz).
  CHECK(std::abs(hz_to_mel_slaney(peak_hz) - hz_to_mel_slaney(440)) <= hz_to_mel_slaney(8000) / 81.0);
}

TEST_CASE("Griffin-Lim on an all-floor mel is near silent and deterministic") {
  MelSpectrogram m;
  m.frames = MatrixXd::Constant(40, 80, std::log(1e-5));
  const Waveform a = griffin_lim_invert(m, 20, 3), b = griffin_lim_invert(m, 20, 3);
  double sq = 0;
  for (double s : a.samples) sq += s * s;
  CHECK(std::sqrt(sq / static_cast<double>(a.samples.size())) < 1e-3);
  CHECK(a.samples == b.samples);

  m.frames(0, 0) = std::nan("");
  CHECK_THROWS_AS(griffin_lim_invert(m, 5, 0), NumericError);

  // A single frame inverts to an empty signal rather than crashing.
  MelSpectrogram one;
  one.frames = MatrixXd::Zero(1, 80);
  CHECK(griffin_lim_invert(one, 3, 0).samples.empty());
  MelSpectrogram none;
  none.frames.resize(0, 80);
  CHECK_THROWS_AS(griffin_lim_invert(none, 3, 0), AudioError);
}

TEST_CASE("detect_pauses on constructed spectrograms") {
  const double fs = 256.0 / 22050;
  const auto d = detect_pauses(pattern({{true, 10}, {false, 8}, {true, 10}}), -5.0, 5, fs);
  REQUIRE(d.pauses.size() == 1);
  CHECK(d.pauses[0].start == 10);
  CHECK(d.pauses[0].end == 18);
  CHECK(d.pauses[0].seconds == doctest::Approx(8 * fs));
  CHECK(!d.leading);
  CHECK(!d.trailing);

  CHECK(detect_pauses(pattern({{true, 30}}), -5.0, 5, fs).pauses.empty());
  CHECK(detect_pauses(pattern({{true, 10}, {false, 3}, {true, 10}}), -5.0, 5, fs).pauses.empty());

  const auto edges = detect_pauses(pattern({{false, 6}, {true, 5}, {false, 7}, {true, 5}, {false, 9}}), -5.0, 5, fs);
  REQUIRE(edges.pauses.size() == 1);
  CHECK(edges.pauses[0] == PauseSegment{11, 18, 0});
  REQUIRE(edges.leading);
  CHECK(edges.leading->end == 6);
  REQUIRE(edges.trailing);
  CHECK(edges.trailing->start == 23);
  CHECK(edges.detected_silence_seconds() == doctest::Approx((6 + 7 + 9) * fs));
}

TEST_CASE("constructed waveforms: pauses land on the frames whose windows are silent") {
  // Broadband noise with two 150 ms silences. A frame is silent exactly when
  // its whole analysis window (centre +- 512 samples) lies inside a silence.
  MelConfig cfg;
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  Waveform w;
  const std::size_t n = 22050 * 2;
  w.samples.resize(n);
  for (auto& s : w.samples) s = u(rng);
  const std::vector<std::pair<std::size_t, std::size_t>> gaps = {{11025, 11025 + 3308}, {26000, 26000 + 3308}};
  for (auto [a, b] : gaps)
    for (std::size_t i = a; i < b; ++i) w.samples[i] = 0.0;

  const MelSpectrogram m = mel_spectrogram(w, cfg);
  const double thr = 0.5 * (energy_percentile(m.frames, 0.0) + energy_percentile(m.frames, 1.0));
  const auto d = detect_pauses(m, thr, 5);
  REQUIRE(d.pauses.size() == gaps.size());
  const long half = cfg.n_fft / 2, hop = cfg.hop;
  for (std::size_t k = 0; k < gaps.size(); ++k) {
    const long a = static_cast<long>(gaps[k].first), b = static_cast<long>(gaps[k].second);
    const long first = (a + half + hop - 1) / hop;  // first centre with window start >= a
    const long last_excl = (b - half) / hop + 1;    // one past last centre with window end <= b
    CHECK(std::abs(d.pauses[k].start - first) <= 1);
    CHECK(std::abs(d.pauses[k].end - last_excl) <= 1);
  }
}

TEST_CASE("detected segments are sorted, disjoint and long enough") {
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> u(-11.5, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    MatrixXd m(120, 8);
    for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i).setConstant(u(rng));
    const int min_frames = 1 + trial % 4;
    const auto d = detect_pauses(m, -5.0, min_frames);
    for (std::size_t i = 0; i < d.pauses.size(); ++i) {
      CHECK(d.pauses[i].frames() >= min_frames);
      if (i) CHECK(d.pauses[i].start > d.pauses[i - 1].end);
    }
  }
}

TEST_CASE("concatenation with loud junctions yields the union of pauses") {
  const MatrixXd a = pattern({{true, 4}, {false, 6}, {true, 4}, {false, 9}, {true, 3}});
  const MatrixXd b = pattern({{true, 2}, {false, 7}, {true, 5}});
  MatrixXd ab(a.rows() + b.rows(), a.cols());
  ab << a, b;
  const auto da = detect_pauses(a, -5.0, 5), db = detect_pauses(b, -5.0, 5), dab = detect_pauses(ab, -5.0, 5);
  REQUIRE(dab.pauses.size() == da.pauses.size() + db.pauses.size());
  for (std::size_t i = 0; i < da.pauses.size(); ++i) CHECK(dab.pauses[i] == da.pauses[i]);
  for (std::size_t i = 0; i < db.pauses.size(); ++i) {
    const auto& p = dab.pauses[da.pauses.size() + i];
    CHECK(p.start == db.pauses[i].start + a.rows());
    CHECK(p.end == db.pauses[i].end + a.rows());
  }
}

TEST_CASE("lowering the threshold never increases detected silence") {
  std::mt19937 rng(77);
  std::uniform_real_distribution<double> u(-11.5, 0.5);
  for (int trial = 0; trial < 100; ++trial) {
    MatrixXd m(200, 80);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = u(rng);
    double prev = std::numeric_limits<double>::infinity();
    for (double q = 1.0; q >= 0.0; q -= 0.05) {
      const double s = detect_pauses(m, energy_percentile(m, q), 3).detected_silence_seconds();
      CHECK(s <= prev + 1e-12);
      prev = s;
    }
  }
}

TEST_CASE("pause_statistics") {
  MelConfig cfg;
  const PauseSegment eight{10, 18, 8.0 * 256 / 22050};
  const auto one = pause_statistics({eight}, 100, cfg);
  CHECK(one.count == 1);
  CHECK(one.mean_seconds == doctest::Approx(0.0929).epsilon(1e-3));
  CHECK(one.total_seconds == doctest::Approx(8.0 * 256 / 22050));

  const auto none = pause_statistics({}, 100, cfg);
  CHECK(none.count == 0);
  CHECK(none.mean_seconds == 0.0);
  CHECK(none.total_seconds == 0.0);

  const PauseSegment other{30, 38, 8.0 * 256 / 22050};
  const auto two = pause_statistics({eight, other}, 100, cfg);
  CHECK(two.mean_seconds == doctest::Approx(eight.seconds));
  CHECK(two.total_seconds == doctest::Approx(total_seconds({eight, other})));
  CHECK(two.rate_per_second == doctest::Approx(2.0 / (100 * 256.0 / 22050)));

  CHECK_THROWS_AS(pause_statistics({eight, PauseSegment{15, 25, 0.1}}, 100, cfg), RangeError);
  CHECK_THROWS_AS(pause_statistics({other, eight}, 100, cfg), RangeError);
}

TEST_CASE("energy_percentile interpolates") {
  MatrixXd m(5, 1);
  m << 0, 1, 2, 3, 4;
  CHECK(energy_percentile(m, 0.0) == 0.0);
  CHECK(energy_percentile(m, 1.0) == 4.0);
  CHECK(energy_percentile(m, 0.5) == 2.0);
  CHECK(energy_percentile(m, 0.2) == doctest::Approx(0.8));
}
