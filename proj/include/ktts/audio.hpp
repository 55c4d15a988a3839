#pragma once

#include <array>
#include <string>
#include <vector>

#include "ktts/types.hpp"

namespace ktts::audio {

inline constexpr int kSampleRate = 22050;

// Mono PCM audio, samples in [-1, 1].
struct Waveform {
  Vec samples;
  int sample_rate = kSampleRate;
};

struct WavInfo {
  int sample_rate = 0;
  int channels = 0;
  int bits_per_sample = 0;
  Index n_samples = 0;
  Scalar duration_s() const { return static_cast<Scalar>(n_samples) / sample_rate; }
};

// Header-only probe; validates RIFF/WAVE, PCM, mono, 22050 Hz, 16-bit.
WavInfo wav_info(const std::string& path);

// Reads a PCM16 mono 22050 Hz file, scaling samples by 1/32768.
Waveform read_wav(const std::string& path);

// Writes PCM16 mono; values outside [-1, 1] saturate.
void write_wav(const std::string& path, const Waveform& w);

struct Spectrogram {
  Mat magnitudes;  // (fft_size/2 + 1) x frames
  int fft_size = 0;
  int hop_size = 0;
  int win_size = 0;
};

// Hann-windowed magnitude STFT without centering; frames that would run past
// the end of the signal are dropped, so frames == (len - win)/hop + 1.
Spectrogram stft(const Waveform& w, int fft_size, int hop_size, int win_size);

struct StftLossConfig {
  // (fft_size, hop_size, win_size) triples.
  std::vector<std::array<int, 3>> resolutions = {
      {1024, 120, 600}, {2048, 240, 1200}, {512, 50, 240}};
  void validate() const;
};

struct StftLoss {
  Scalar sc = 0.0;   // spectral convergence
  Scalar mag = 0.0;  // log-magnitude distance
};

// Spectral convergence ||  |X| - |X_hat| ||_F / || |X| ||_F and mean
// | log|X| - log|X_hat| |, averaged over resolutions. Magnitudes are floored
// at 1e-7 before any log or division, so silent references stay finite.
StftLoss multi_res_stft_loss(const Waveform& x_hat, const Waveform& x,
                             const StftLossConfig& cfg);

struct StftLossGrad {
  StftLoss loss;
  Vec grad_sc;   // d(sc)/d(x_hat)
  Vec grad_mag;  // d(mag)/d(x_hat)
};

StftLossGrad multi_res_stft_loss_grad(const Waveform& x_hat, const Waveform& x,
                                      const StftLossConfig& cfg);

}  // namespace ktts::audio
