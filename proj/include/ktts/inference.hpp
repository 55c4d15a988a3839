#pragma once

#include <cstdint>
#include <vector>

#include "ktts/audio.hpp"
#include "ktts/checkpoint.hpp"
#include "ktts/nets.hpp"
#include "ktts/training.hpp"
#include "ktts/types.hpp"

namespace ktts::infer {

struct SynthesisOptions {
  Scalar temperature = 0.667;
  int slice_size = 32;
  uint64_t seed = 0;
  Scalar duration_scale = 1.0;

  void validate() const;
};

// Real duration -> frame count: round half away from zero, floor at one frame.
int quantize_duration(Scalar d, Scalar scale);

// The synthesis path: phonemes -> prior statistics -> predicted durations ->
// expanded prior -> temperature sampling -> slice-wise decoding -> one
// concatenated waveform of exactly stride * sum(durations) samples.
class Synthesizer {
 public:
  Synthesizer(train::ModelSpec spec, nets::ParameterStore text_params,
              nets::ParameterStore duration_params, nets::ParameterStore decoder_params);

  // Loads the text-encoder checkpoint and the VAE checkpoint (for the
  // decoder) and cross-checks their model specs.
  static Synthesizer from_checkpoints(const train::Checkpoint& align_ckpt,
                                      const train::Checkpoint& vae_ckpt);

  audio::Waveform synthesize(const std::vector<int>& phoneme_ids,
                             const SynthesisOptions& opts) const;

  // Frame counts the duration head assigns to each token; exposed so callers
  // can predict output length without decoding.
  std::vector<int> predicted_durations(const std::vector<int>& phoneme_ids,
                                       Scalar duration_scale) const;

  const train::ModelSpec& spec() const { return spec_; }
  int samples_per_frame() const { return spec_.decoder.total_upsampling(); }

 private:
  train::ModelSpec spec_;
  nets::TextEncoder text_;
  nets::DurationPredictor dur_;
  nets::WaveDecoder dec_;
  nets::ParameterStore text_store_, dur_store_, dec_store_;
};

}  // namespace ktts::infer
