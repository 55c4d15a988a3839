#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "ktts/audio.hpp"
#include "ktts/rng.hpp"
#include "testutil.hpp"

using namespace ktts;
using namespace ktts::audio;

namespace {

// Independent WAV fixture writer: hand-assembled header, no shared code with
// the reader under test.
void write_fixture_wav(const std::string& path, const std::vector<int16_t>& samples,
                       int sample_rate = 22050, int channels = 1, int bits = 16) {
  std::ofstream out(path, std::ios::binary);
  auto u32 = [&](uint32_t v) {
    for (int i = 0; i < 4; ++i) out.put(char(v >> (8 * i) & 0xff));
  };
  auto u16 = [&](uint16_t v) {
    for (int i = 0; i < 2; ++i) out.put(char(v >> (8 * i) & 0xff));
  };
  uint32_t data_bytes = static_cast<uint32_t>(samples.size()) * 2;
  out.write("RIFF", 4);
  u32(36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  u32(16);
  u16(1);
  u16(static_cast<uint16_t>(channels));
  u32(static_cast<uint32_t>(sample_rate));
  u32(static_cast<uint32_t>(sample_rate * channels * bits / 8));
  u16(static_cast<uint16_t>(channels * bits / 8));
  u16(static_cast<uint16_t>(bits));
  out.write("data", 4);
  u32(data_bytes);
  for (int16_t s : samples) u16(static_cast<uint16_t>(s));
}

}  // namespace

TEST_CASE("read_wav accepts a one-second 440 Hz fixture") {
  test::TempDir tmp("wav_read");
  std::vector<int16_t> samples(22050);
  for (size_t i = 0; i < samples.size(); ++i)
    samples[i] = static_cast<int16_t>(
        std::lrint(12000.0 * std::sin(2.0 * M_PI * 440.0 * i / 22050.0)));
  write_fixture_wav(tmp.file("a.wav"), samples);

  Waveform w = read_wav(tmp.file("a.wav"));
  CHECK(w.samples.size() == 22050);
  CHECK(w.sample_rate == 22050);
  for (Index i = 0; i < 64; ++i)
    CHECK(w.samples(i) == doctest::Approx(samples[i] / 32768.0).epsilon(1e-12));
}

TEST_CASE("read_wav rejects non-conforming files field by field") {
  test::TempDir tmp("wav_reject");
  std::vector<int16_t> s(64, 0);

  write_fixture_wav(tmp.file("stereo.wav"), s, 22050, 2);
  CHECK_THROWS_WITH_AS(read_wav(tmp.file("stereo.wav")),
                       doctest::Contains("channels: expected 1"), DataError);

  write_fixture_wav(tmp.file("rate.wav"), s, 16000, 1);
  CHECK_THROWS_WITH_AS(read_wav(tmp.file("rate.wav")),
                       doctest::Contains("sample_rate: expected 22050"), DataError);

  std::ofstream(tmp.file("junk.wav")) << "this is not a riff file at all";
  CHECK_THROWS_WITH_AS(read_wav(tmp.file("junk.wav")), doctest::Contains("RIFF"), DataError);

  CHECK_THROWS_AS(read_wav(tmp.file("missing.wav")), DataError);
}

TEST_CASE("all-zero file reads as all-zero waveform") {
  test::TempDir tmp("wav_zero");
  write_fixture_wav(tmp.file("z.wav"), std::vector<int16_t>(100, 0));
  Waveform w = read_wav(tmp.file("z.wav"));
  CHECK(w.samples.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("wav round trip stays within one quantization step") {
  test::TempDir tmp("wav_rt");
  Rng rng(7);
  Waveform w;
  w.samples = rng.uniform_mat(1000, 1, -1.0, 1.0).col(0);
  write_wav(tmp.file("rt.wav"), w);
  Waveform r = read_wav(tmp.file("rt.wav"));
  REQUIRE(r.samples.size() == w.samples.size());
  CHECK((r.samples - w.samples).cwiseAbs().maxCoeff() <= 1.0 / 32768.0);
}

TEST_CASE("write_wav saturates out-of-range samples") {
  test::TempDir tmp("wav_sat");
  Waveform w;
  w.samples.resize(3);
  w.samples << 1.5, -2.0, 0.0;
  write_wav(tmp.file("sat.wav"), w);
  Waveform r = read_wav(tmp.file("sat.wav"));
  CHECK(r.samples(0) == doctest::Approx(32767.0 / 32768.0));
  CHECK(r.samples(1) == doctest::Approx(-1.0));
  CHECK(r.samples(2) == 0.0);
}

TEST_CASE("write_wav to a missing directory fails") {
  Waveform w;
  w.samples = Vec::Zero(4);
  CHECK_THROWS_AS(write_wav("/nonexistent_dir_ktts/x.wav", w), DataError);
}

TEST_CASE("stft framing, zeros and bin-center sine") {
  Waveform zeros;
  zeros.samples = Vec::Zero(1024);
  Spectrogram s = stft(zeros, 256, 64, 128);
  CHECK(s.magnitudes.rows() == 129);
  CHECK(s.magnitudes.cols() == (1024 - 128) / 64 + 1);
  CHECK(s.magnitudes.maxCoeff() == 0.0);

  // Single frame when len == win_size.
  Waveform one;
  one.samples = Vec::Ones(128);
  CHECK(stft(one, 256, 64, 128).magnitudes.cols() == 1);

  CHECK_THROWS_AS(stft(one, 256, 64, 256), DataError);

  // Sine at an exact bin center: argmax magnitude lands on that bin in
  // every frame. f = k * sr / fft with k = 32, fft = 256.
  const int fft = 256, hop = 64, win = 256;
  const int k = 32;
  Waveform sine = test::tone(4096, static_cast<Scalar>(k) * kSampleRate / fft, 0.5);
  Spectrogram sp = stft(sine, fft, hop, win);
  for (Index t = 0; t < sp.magnitudes.cols(); ++t) {
    Index argmax;
    sp.magnitudes.col(t).maxCoeff(&argmax);
    CHECK(argmax == k);
  }
}

TEST_CASE("stft magnitudes are linear in positive gain") {
  Rng rng(3);
  Waveform x;
  x.samples = rng.normal_mat(700, 1).col(0) * 0.2;
  Waveform gx;
  gx.samples = 3.5 * x.samples;
  Spectrogram a = stft(x, 128, 32, 64);
  Spectrogram b = stft(gx, 128, 32, 64);
  CHECK(((b.magnitudes - 3.5 * a.magnitudes).cwiseAbs().maxCoeff()) <=
        1e-6 * b.magnitudes.maxCoeff());
}

namespace {
StftLossConfig small_cfg() {
  StftLossConfig cfg;
  cfg.resolutions = {{64, 16, 32}, {128, 32, 64}};
  return cfg;
}
}  // namespace

TEST_CASE("multi_res_stft_loss identity and analytic half-gain values") {
  Rng rng(5);
  Waveform x;
  x.samples = rng.normal_mat(400, 1).col(0) * 0.3;
  StftLossConfig cfg = small_cfg();

  StftLoss id = multi_res_stft_loss(x, x, cfg);
  CHECK(id.sc == 0.0);
  CHECK(id.mag == 0.0);

  // Scaling a magnitude spectrum by 0.5 gives spectral convergence 0.5 and
  // a log-magnitude gap of log 2 (floor never binds at this amplitude).
  Waveform half;
  half.samples = 0.5 * x.samples;
  StftLoss h = multi_res_stft_loss(half, x, cfg);
  CHECK(h.sc == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(h.mag == doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("multi_res_stft_loss handles an all-zero reference via the floor") {
  Waveform z;
  z.samples = Vec::Zero(300);
  Rng rng(6);
  Waveform y;
  y.samples = rng.normal_mat(300, 1).col(0) * 0.1;
  StftLoss l = multi_res_stft_loss(y, z, small_cfg());
  CHECK(std::isfinite(l.sc));
  CHECK(std::isfinite(l.mag));
  CHECK(l.sc >= 0.0);
  CHECK(l.mag >= 0.0);
}

TEST_CASE("multi_res_stft_loss rejects length mismatch") {
  Waveform a, b;
  a.samples = Vec::Zero(200);
  b.samples = Vec::Zero(201);
  CHECK_THROWS_AS(multi_res_stft_loss(a, b, small_cfg()), DataError);
}

TEST_CASE("loss terms are non-negative and zero only at equal magnitudes") {
  Rng rng(11);
  StftLossConfig cfg = small_cfg();
  for (int trial = 0; trial < 20; ++trial) {
    Waveform a, b;
    a.samples = rng.normal_mat(256, 1).col(0) * 0.4;
    b.samples = rng.normal_mat(256, 1).col(0) * 0.4;
    StftLoss l = multi_res_stft_loss(a, b, cfg);
    CHECK(l.sc >= 0.0);
    CHECK(l.mag >= 0.0);
    CHECK(l.sc > 0.0);  // random signals never share magnitudes
  }
}

TEST_CASE("stft loss gradient matches central differences") {
  Rng rng(17);
  StftLossConfig cfg = small_cfg();
  Waveform x;
  x.samples = rng.normal_mat(200, 1).col(0) * 0.5;
  Waveform xh;
  xh.samples = rng.normal_mat(200, 1).col(0) * 0.5;

  StftLossGrad g = multi_res_stft_loss_grad(xh, x, cfg);
  CHECK(g.loss.sc == doctest::Approx(multi_res_stft_loss(xh, x, cfg).sc));

  Mat xh_mat = xh.samples;
  Mat analytic = g.grad_sc + g.grad_mag;
  auto loss = [&]() {
    Waveform w;
    w.samples = xh_mat.col(0);
    StftLoss l = multi_res_stft_loss(w, x, cfg);
    return l.sc + l.mag;
  };
  test::GradCheck check = test::fd_check_input(xh_mat, analytic, loss, 1e-6);
  INFO(check.worst);
  CHECK(check.ok(1e-3));
}
