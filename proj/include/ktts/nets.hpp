#pragma once

#include <string>
#include <vector>

#include "ktts/audio.hpp"
#include "ktts/autodiff.hpp"
#include "ktts/latent.hpp"
#include "ktts/params.hpp"
#include "ktts/rng.hpp"
#include "ktts/types.hpp"

namespace ktts::nets {

// Transformer encoder shape shared by the text and wave encoders.
struct TextEncoderConfig {
  int n_blocks = 8;
  int n_heads = 8;
  int model_dim = 256;
  int ffn_dim = 1024;
  // Learnable positional path: grouped convolution over the input sequence,
  // projected back to model_dim and added.
  int pos_filters = 64;
  int pos_kernel = 3;
  int pos_groups = 8;

  void validate() const;
};

struct FeatureEncoderConfig {
  std::vector<int> kernels = {15, 26, 16, 9, 8};
  std::vector<int> strides = {5, 4, 4, 2, 2};
  int channels = 256;

  void validate() const;
  int total_stride() const;    // 320 with the defaults
  int receptive_field() const; // 2200 with the defaults
  // Output frame count for an input of n samples; throws if n is too short.
  Index output_length(Index n_samples) const;
};

struct WaveDecoderConfig {
  int in_channels = 256;
  int channels = 64;  // residual/skip width and upsampler filter count
  std::vector<int> up_strides = {5, 4, 4, 2, 2};
  int n_blocks = 30;
  int kernel = 3;
  int dilation_cycle = 10;  // dilations 1,2,...,2^(cycle-1), repeated

  void validate() const;
  int total_upsampling() const;  // 320 with the defaults
};

struct DurationPredictorConfig {
  int n_blocks = 2;
  int channels = 256;
  int kernel = 3;

  void validate() const;
};

struct DiscriminatorConfig {
  int n_layers = 10;
  int channels = 64;
  int kernel = 3;
  Scalar leaky_slope = 0.2;

  void validate() const;
};

// ---------------------------------------------------------------------------

struct GaussianHead {
  ad::Var mu;
  ad::Var log_std;  // pre-clamp; use latent::DiagGaussianSeq::from_log_std
  ad::Var h;        // hidden representation feeding the head
};

struct TextEncoder {
  TextEncoderConfig cfg;
  int vocab = 0;
  std::string prefix = "text";

  TextEncoder() = default;
  TextEncoder(TextEncoderConfig c, int vocab_size);

  void init(ParameterStore& store, Rng& rng) const;
  GaussianHead forward(ad::Tape& tape, ParamBinding& params,
                       const std::vector<int>& phoneme_ids) const;

  struct Encoded {
    latent::DiagGaussianSeq prior;
    Mat h;
  };
  Encoded encode(const ParameterStore& store, const std::vector<int>& phoneme_ids) const;
};

struct WaveEncoder {
  FeatureEncoderConfig fe;
  TextEncoderConfig tr;
  std::string prefix = "wave";

  WaveEncoder() = default;
  WaveEncoder(FeatureEncoderConfig f, TextEncoderConfig t);

  void init(ParameterStore& store, Rng& rng) const;
  // Strided convolution stack only; one column per 320-sample hop, each
  // depending on exactly receptive_field() input samples.
  ad::Var features(ad::Tape& tape, ParamBinding& params, const Vec& samples) const;
  GaussianHead forward(ad::Tape& tape, ParamBinding& params, const Vec& samples) const;

  Mat feature_values(const ParameterStore& store, const Vec& samples) const;
  latent::DiagGaussianSeq encode(const ParameterStore& store, const Vec& samples) const;
};

struct WaveDecoder {
  WaveDecoderConfig cfg;
  std::string prefix = "dec";

  explicit WaveDecoder(WaveDecoderConfig c = {});

  void init(ParameterStore& store, Rng& rng) const;
  // z is (in_channels x T); returns a (1 x total_upsampling()*T) row in [-1, 1].
  ad::Var forward(ad::Tape& tape, ParamBinding& params, const ad::Var& z) const;

  audio::Waveform decode(const ParameterStore& store, const Mat& z) const;
};

struct DurationPredictor {
  DurationPredictorConfig cfg;
  std::string prefix = "dur";

  explicit DurationPredictor(DurationPredictorConfig c = {});

  void init(ParameterStore& store, Rng& rng) const;
  // Applies the stop-gradient barrier to h internally; no gradient ever
  // reaches the text encoder through this path.
  ad::Var forward(ad::Tape& tape, ParamBinding& params, const ad::Var& h_text) const;

  Vec predict(const ParameterStore& store, const Mat& h_text) const;
};

struct Discriminator {
  DiscriminatorConfig cfg;
  std::string prefix = "disc";

  explicit Discriminator(DiscriminatorConfig c = {});

  void init(ParameterStore& store, Rng& rng) const;
  // One score per sample position (same-padded dilated stack).
  ad::Var forward(ad::Tape& tape, ParamBinding& params, const ad::Var& x) const;

  Vec score(const ParameterStore& store, const Vec& samples) const;
};

// ---------------------------------------------------------------------------

// Initializers (uniform fan-in for weights, zeros for biases), exposed for
// the blocks above and reused by tests.
void init_uniform_fanin(ParameterStore& store, const std::string& name,
                        std::vector<Index> dims, Index fan_in, Rng& rng);
void init_constant(ParameterStore& store, const std::string& name,
                   std::vector<Index> dims, Scalar value);
void init_normal(ParameterStore& store, const std::string& name,
                 std::vector<Index> dims, Scalar stddev, Rng& rng);

}  // namespace ktts::nets
