#include "ktts/audio.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>

namespace ktts::audio {

namespace {

constexpr Scalar kMagFloor = 1e-7;

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return uint16_t(b[0]) | uint16_t(b[1]) << 8;
}

void write_u32(std::ostream& out, uint32_t v) {
  char b[4] = {char(v & 0xff), char(v >> 8 & 0xff), char(v >> 16 & 0xff), char(v >> 24 & 0xff)};
  out.write(b, 4);
}

void write_u16(std::ostream& out, uint16_t v) {
  char b[2] = {char(v & 0xff), char(v >> 8 & 0xff)};
  out.write(b, 2);
}

struct WavHeader {
  WavInfo info;
  std::streamoff data_offset = 0;
  uint32_t data_bytes = 0;
};

WavHeader parse_wav_header(std::ifstream& in, const std::string& path) {
  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0)
    throw DataError(path + ": not a RIFF file");
  read_u32(in);  // riff size, unchecked
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0)
    throw DataError(path + ": not a WAVE file");

  WavHeader h;
  bool have_fmt = false;
  while (in.read(tag, 4)) {
    uint32_t chunk_size = read_u32(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      uint16_t format = read_u16(in);
      h.info.channels = read_u16(in);
      h.info.sample_rate = static_cast<int>(read_u32(in));
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      h.info.bits_per_sample = read_u16(in);
      if (chunk_size > 16) in.seekg(chunk_size - 16, std::ios::cur);
      if (format != 1)
        throw DataError(path + ": format: expected PCM (1), got " + std::to_string(format));
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw DataError(path + ": data chunk before fmt chunk");
      h.data_offset = in.tellg();
      h.data_bytes = chunk_size;
      break;
    } else {
      // Skip unknown chunks (LIST, fact, ...), padded to even size.
      in.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
    }
  }
  if (h.data_offset == 0) throw DataError(path + ": no data chunk");
  if (h.info.channels != 1)
    throw DataError(path + ": channels: expected 1, got " + std::to_string(h.info.channels));
  if (h.info.sample_rate != kSampleRate)
    throw DataError(path + ": sample_rate: expected 22050, got " +
                    std::to_string(h.info.sample_rate));
  if (h.info.bits_per_sample != 16)
    throw DataError(path + ": bits_per_sample: expected 16, got " +
                    std::to_string(h.info.bits_per_sample));
  h.info.n_samples = h.data_bytes / 2;
  if (h.info.n_samples < 1) throw DataError(path + ": empty data chunk");
  return h;
}

Vec hann_window(int n) {
  Vec w(n);
  for (int i = 0; i < n; ++i) w(i) = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);
  return w;
}

// Real-DFT basis restricted to the first win_size points of a zero-padded
// fft_size frame. Cached per (fft, win) pair; the matrices are shared
// read-only afterwards.
struct DftBasis {
  Mat cos_m;  // bins x win
  Mat sin_m;
};

const DftBasis& dft_basis(int fft_size, int win_size) {
  static std::map<std::pair<int, int>, DftBasis> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(fft_size, win_size);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  int bins = fft_size / 2 + 1;
  DftBasis b;
  b.cos_m.resize(bins, win_size);
  b.sin_m.resize(bins, win_size);
  for (int k = 0; k < bins; ++k) {
    for (int n = 0; n < win_size; ++n) {
      Scalar ang = 2.0 * M_PI * k * n / fft_size;
      b.cos_m(k, n) = std::cos(ang);
      b.sin_m(k, n) = -std::sin(ang);
    }
  }
  return cache.emplace(key, std::move(b)).first->second;
}

struct StftParts {
  Mat re, im, mag;  // raw magnitude, not floored
};

StftParts stft_parts(const Vec& x, int fft_size, int hop_size, int win_size) {
  Index frames = (x.size() - win_size) / hop_size + 1;
  const DftBasis& basis = dft_basis(fft_size, win_size);
  Vec window = hann_window(win_size);
  Mat framed(win_size, frames);
  for (Index t = 0; t < frames; ++t)
    framed.col(t) = x.segment(t * hop_size, win_size).cwiseProduct(window);
  StftParts p;
  p.re = basis.cos_m * framed;
  p.im = basis.sin_m * framed;
  p.mag = (p.re.array().square() + p.im.array().square()).sqrt();
  return p;
}

void check_stft_args(Index len, int fft_size, int hop_size, int win_size) {
  if (fft_size < 1 || hop_size < 1 || win_size < 1)
    throw DataError("stft: sizes must be positive");
  if (win_size > fft_size) throw DataError("stft: win_size exceeds fft_size");
  if (hop_size > win_size) throw DataError("stft: hop_size exceeds win_size");
  if (len < win_size)
    throw DataError("stft: signal of " + std::to_string(len) +
                    " samples is shorter than win_size " + std::to_string(win_size));
}

}  // namespace

WavInfo wav_info(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");
  return parse_wav_header(in, path).info;
}

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");
  WavHeader h = parse_wav_header(in, path);
  in.seekg(h.data_offset);
  std::vector<unsigned char> raw(h.data_bytes);
  in.read(reinterpret_cast<char*>(raw.data()), h.data_bytes);
  if (!in) throw DataError(path + ": truncated data chunk");
  Waveform w;
  w.samples.resize(h.info.n_samples);
  for (Index i = 0; i < h.info.n_samples; ++i) {
    int16_t s = static_cast<int16_t>(uint16_t(raw[2 * i]) | uint16_t(raw[2 * i + 1]) << 8);
    w.samples(i) = s / 32768.0;
  }
  return w;
}

void write_wav(const std::string& path, const Waveform& w) {
  if (w.samples.size() < 1) throw DataError("write_wav: empty waveform");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  uint32_t data_bytes = static_cast<uint32_t>(w.samples.size()) * 2;
  out.write("RIFF", 4);
  write_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);  // PCM
  write_u16(out, 1);  // mono
  write_u32(out, kSampleRate);
  write_u32(out, kSampleRate * 2);  // byte rate
  write_u16(out, 2);                // block align
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, data_bytes);
  for (Index i = 0; i < w.samples.size(); ++i) {
    Scalar v = std::min(1.0, std::max(-1.0, w.samples(i)));
    long q = std::lrint(v * 32768.0);
    q = std::min(32767L, std::max(-32768L, q));
    auto s = static_cast<int16_t>(q);
    char b[2] = {char(uint16_t(s) & 0xff), char(uint16_t(s) >> 8 & 0xff)};
    out.write(b, 2);
  }
  if (!out) throw DataError(path + ": write failed");
}

Spectrogram stft(const Waveform& w, int fft_size, int hop_size, int win_size) {
  check_stft_args(w.samples.size(), fft_size, hop_size, win_size);
  Spectrogram s;
  s.fft_size = fft_size;
  s.hop_size = hop_size;
  s.win_size = win_size;
  s.magnitudes = stft_parts(w.samples, fft_size, hop_size, win_size).mag;
  return s;
}

void StftLossConfig::validate() const {
  if (resolutions.empty()) throw DataError("StftLossConfig: resolutions empty");
  for (auto& [fft, hop, win] : resolutions) {
    if (win > fft) throw DataError("StftLossConfig: win_size exceeds fft_size");
    if (hop > win || hop < 1) throw DataError("StftLossConfig: bad hop_size");
  }
}

StftLoss multi_res_stft_loss(const Waveform& x_hat, const Waveform& x,
                             const StftLossConfig& cfg) {
  cfg.validate();
  if (x_hat.samples.size() != x.samples.size())
    throw DataError("multi_res_stft_loss: length mismatch: " +
                    std::to_string(x_hat.samples.size()) + " vs " +
                    std::to_string(x.samples.size()));
  StftLoss total;
  for (auto& [fft, hop, win] : cfg.resolutions) {
    check_stft_args(x.samples.size(), fft, hop, win);
    Mat mh = stft_parts(x_hat.samples, fft, hop, win).mag.cwiseMax(kMagFloor);
    Mat mx = stft_parts(x.samples, fft, hop, win).mag.cwiseMax(kMagFloor);
    total.sc += (mx - mh).norm() / mx.norm();
    total.mag += (mx.array().log() - mh.array().log()).abs().mean();
  }
  total.sc /= cfg.resolutions.size();
  total.mag /= cfg.resolutions.size();
  return total;
}

StftLossGrad multi_res_stft_loss_grad(const Waveform& x_hat, const Waveform& x,
                                      const StftLossConfig& cfg) {
  cfg.validate();
  if (x_hat.samples.size() != x.samples.size())
    throw DataError("multi_res_stft_loss: length mismatch");
  StftLossGrad out;
  out.grad_sc = Vec::Zero(x_hat.samples.size());
  out.grad_mag = Vec::Zero(x_hat.samples.size());
  size_t n_res = cfg.resolutions.size();
  for (auto& [fft, hop, win] : cfg.resolutions) {
    check_stft_args(x.samples.size(), fft, hop, win);
    StftParts ph = stft_parts(x_hat.samples, fft, hop, win);
    StftParts px = stft_parts(x.samples, fft, hop, win);
    Mat mh = ph.mag.cwiseMax(kMagFloor);
    Mat mx = px.mag.cwiseMax(kMagFloor);

    Mat diff = mx - mh;
    Scalar num = diff.norm();
    Scalar den = mx.norm();
    out.loss.sc += num / den;
    out.loss.mag += (mx.array().log() - mh.array().log()).abs().mean();

    // d(loss)/d(floored magnitude of x_hat)
    Mat d_sc = num > 0.0 ? Mat(-diff / (num * den)) : Mat(Mat::Zero(mh.rows(), mh.cols()));
    Mat d_mag = ((mh.array().log() - mx.array().log()) > 0.0)
                    .select(Mat::Ones(mh.rows(), mh.cols()), -Mat::Ones(mh.rows(), mh.cols()));
    d_mag.array() /= mh.array() * static_cast<Scalar>(mh.size());

    // Chain through floor and modulus back to the windowed frames.
    Mat active = (ph.mag.array() > kMagFloor)
                     .select(Mat::Ones(mh.rows(), mh.cols()), Mat::Zero(mh.rows(), mh.cols()));
    Mat safe_mag = ph.mag.cwiseMax(1e-300);
    for (Mat* d : {&d_sc, &d_mag}) {
      Vec* g = d == &d_sc ? &out.grad_sc : &out.grad_mag;
      Mat d_re = (d->array() * active.array() * ph.re.array() / safe_mag.array()).matrix();
      Mat d_im = (d->array() * active.array() * ph.im.array() / safe_mag.array()).matrix();
      const DftBasis& basis = dft_basis(fft, win);
      Mat d_framed = basis.cos_m.transpose() * d_re + basis.sin_m.transpose() * d_im;
      Vec window = hann_window(win);
      for (Index t = 0; t < d_framed.cols(); ++t)
        g->segment(t * hop, win) += d_framed.col(t).cwiseProduct(window);
    }
  }
  out.loss.sc /= n_res;
  out.loss.mag /= n_res;
  out.grad_sc /= static_cast<Scalar>(n_res);
  out.grad_mag /= static_cast<Scalar>(n_res);
  return out;
}

}  // namespace ktts::audio
