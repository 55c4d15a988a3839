#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ktts/audio.hpp"
#include "ktts/checkpoint.hpp"
#include "ktts/config.hpp"
#include "ktts/nets.hpp"
#include "ktts/rng.hpp"
#include "ktts/types.hpp"

namespace ktts::train {

// Hyperparameters that define the network shapes. Serialized into every
// checkpoint's config snapshot so loaders can rebuild compatible models.
struct ModelSpec {
  nets::TextEncoderConfig encoder;  // shared by the text and wave transformers
  nets::FeatureEncoderConfig feature;
  nets::WaveDecoderConfig decoder;
  nets::DurationPredictorConfig duration;
  nets::DiscriminatorConfig discriminator;
  int vocab = 0;

  void validate() const;
  std::string to_kv() const;
  static ModelSpec from_kv(const cfg::KvMap& kv);
};

struct VaeTrainConfig {
  int batch_size = 18;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.98;
  Scalar adam_eps = 1e-9;
  Scalar initial_lr = 1e-3;
  Scalar lr_decay_per_epoch = std::pow(0.999, 1.0 / 8.0);
  int slice_window = 32;
  Scalar adv_weight = 4.0;  // multiplies STFT and LSGAN generator terms
  Scalar kl_weight = 1.0;
  int64_t disc_start_step = 0;
  int64_t max_steps = 430000;
  audio::StftLossConfig stft;

  void validate() const;
  static VaeTrainConfig from_kv(const cfg::KvMap& kv);
};

struct AlignTrainConfig {
  int batch_size = 12;
  Scalar beta1 = 0.8;
  Scalar beta2 = 0.98;
  Scalar adam_eps = 1e-9;
  Scalar weight_decay = 0.01;
  Scalar initial_lr = 2e-4;
  Scalar lr_decay_per_epoch = std::pow(0.999, 1.0 / 8.0);
  Scalar duration_weight = 1.0;
  // Duration MSE on linear durations as written in the source method;
  // log-domain targets available as an experiment.
  bool log_domain_durations = false;
  int64_t max_steps = 820000;

  void validate() const;
  static AlignTrainConfig from_kv(const cfg::KvMap& kv);
};

// lr0 * decay^epoch; the step argument is accepted for interface stability
// but the schedule is purely per-epoch.
Scalar lr_at(int64_t step, int64_t epoch, const VaeTrainConfig& cfg);
Scalar lr_at(int64_t step, int64_t epoch, const AlignTrainConfig& cfg);

// ---------------------------------------------------------------------------

struct AdamOptions {
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.98;
  Scalar eps = 1e-9;
  Scalar weight_decay = 0.0;  // > 0 gives decoupled (AdamW) decay
};

class Adam {
 public:
  Adam() = default;
  Adam(const nets::ParameterStore& params, AdamOptions opt);

  void step(nets::ParameterStore& params, const std::map<std::string, Mat>& grads,
            Scalar lr);

  int64_t t() const { return t_; }
  nets::ParameterStore to_store() const;
  void load_store(const nets::ParameterStore& state, const nets::ParameterStore& params);

 private:
  AdamOptions opt_;
  nets::ParameterStore m_, v_;
  int64_t t_ = 0;
};

// ---------------------------------------------------------------------------

struct VaeLossReport {
  Scalar mse = 0, kl = 0, stft_sc = 0, stft_mag = 0, adv_g = 0;
  Scalar gen_total = 0;
  Scalar disc_total = 0;
  int n_used = 0;
  int n_skipped = 0;
  bool disc_active = false;
};

struct AlignLossReport {
  Scalar nll_per_frame = 0;
  Scalar duration_mse = 0;
  Scalar total = 0;
  int n_used = 0;
  int n_skipped = 0;
};

// One utterance of the VAE objective as tape nodes, with the stochastic
// choices (posterior noise, slice origin) passed in so tests can pin them.
struct VaeLossVars {
  ad::Var gen_total;
  ad::Var rec_mse, kl, stft_pair, adv_g;  // stft_pair/adv_g invalid when off
  ad::Var disc_total;                     // invalid before disc_start_step
};

VaeLossVars build_vae_loss(ad::Tape& tape, nets::ParamBinding& enc_params,
                           nets::ParamBinding& dec_params, nets::ParamBinding& disc_params,
                           const nets::WaveEncoder& enc, const nets::WaveDecoder& dec,
                           const nets::Discriminator& disc, const VaeTrainConfig& cfg,
                           const audio::Waveform& x, const Mat& posterior_eps,
                           Index slice_start, bool adversarial_on);

// One pair of the alignment objective: MAS on the current prior against the
// frozen-posterior sample z, then aligned NLL plus the duration MSE behind
// the stop gradient.
struct AlignLossVars {
  ad::Var total;
  ad::Var nll_per_frame;
  ad::Var duration_mse;
  align::AlignmentPath path;
};

// forced_path skips the MAS search and scores the given alignment instead;
// gradient checks use it to stay on one branch of the piecewise objective.
AlignLossVars build_align_loss(ad::Tape& tape, nets::ParamBinding& text_params,
                               nets::ParamBinding& dur_params, const nets::TextEncoder& text,
                               const nets::DurationPredictor& dur,
                               const std::vector<int>& phoneme_ids, const Mat& z,
                               const AlignTrainConfig& cfg,
                               const align::AlignmentPath* forced_path = nullptr);

// ---------------------------------------------------------------------------

// Figure-1A phase: reconstruction + KL with adversarial refinement, updating
// the wave encoder, wave decoder and discriminator each step.
class VaeTrainer {
 public:
  VaeTrainer(nets::WaveEncoder enc, nets::WaveDecoder dec, nets::Discriminator disc,
             VaeTrainConfig cfg, uint64_t init_seed);

  // Waveforms shorter than one decodable slice are skipped with a warning.
  VaeLossReport step(const std::vector<audio::Waveform>& batch, Rng& rng);

  int64_t global_step() const { return step_; }
  void set_epoch(int64_t epoch) { epoch_ = epoch; }

  Checkpoint make_checkpoint(const std::string& config_text) const;
  void restore(const Checkpoint& c);

  const nets::ParameterStore& encoder_params() const { return enc_store_; }
  const nets::ParameterStore& decoder_params() const { return dec_store_; }
  const nets::ParameterStore& discriminator_params() const { return disc_store_; }
  const nets::WaveEncoder& encoder() const { return enc_; }
  const nets::WaveDecoder& decoder() const { return dec_; }
  const VaeTrainConfig& config() const { return cfg_; }

 private:
  nets::WaveEncoder enc_;
  nets::WaveDecoder dec_;
  nets::Discriminator disc_;
  VaeTrainConfig cfg_;
  nets::ParameterStore enc_store_, dec_store_, disc_store_;
  Adam opt_enc_, opt_dec_, opt_disc_;
  int64_t step_ = 0;
  int64_t epoch_ = 0;
};

// Figure-1B phase: the wave encoder stays frozen while the text encoder and
// duration predictor learn to match its posterior.
class AlignTrainer {
 public:
  AlignTrainer(nets::TextEncoder text, nets::DurationPredictor dur,
               nets::WaveEncoder frozen_enc, nets::ParameterStore frozen_enc_params,
               AlignTrainConfig cfg, uint64_t init_seed);

  struct Pair {
    std::vector<int> phoneme_ids;
    audio::Waveform wave;
  };

  // Pairs whose latent length falls short of the token count are skipped
  // and counted.
  AlignLossReport step(const std::vector<Pair>& batch, Rng& rng);

  int64_t global_step() const { return step_; }
  void set_epoch(int64_t epoch) { epoch_ = epoch; }

  Checkpoint make_checkpoint(const std::string& config_text) const;
  void restore(const Checkpoint& c);

  const nets::ParameterStore& text_params() const { return text_store_; }
  const nets::ParameterStore& duration_params() const { return dur_store_; }
  const nets::ParameterStore& frozen_encoder_params() const { return frozen_enc_store_; }
  const nets::TextEncoder& text_encoder() const { return text_; }

 private:
  nets::TextEncoder text_;
  nets::DurationPredictor dur_;
  nets::WaveEncoder frozen_enc_;
  AlignTrainConfig cfg_;
  nets::ParameterStore text_store_, dur_store_;
  nets::ParameterStore frozen_enc_store_;
  Adam opt_text_, opt_dur_;
  int64_t step_ = 0;
  int64_t epoch_ = 0;
};

// Section names used in checkpoint files.
inline constexpr const char* kSectionWaveEncoder = "wave_encoder";
inline constexpr const char* kSectionWaveDecoder = "wave_decoder";
inline constexpr const char* kSectionDiscriminator = "discriminator";
inline constexpr const char* kSectionTextEncoder = "text_encoder";
inline constexpr const char* kSectionDurationPredictor = "duration_predictor";

}  // namespace ktts::train
