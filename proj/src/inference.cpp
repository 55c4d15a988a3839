#include "ktts/inference.hpp"

#include <cmath>

#include "ktts/alignment.hpp"
#include "ktts/latent.hpp"

namespace ktts::infer {

void SynthesisOptions::validate() const {
  if (temperature < 0.0) throw DataError("SynthesisOptions: negative temperature");
  if (slice_size < 1) throw DataError("SynthesisOptions: slice_size must be >= 1");
  if (duration_scale <= 0.0) throw DataError("SynthesisOptions: duration_scale must be > 0");
}

int quantize_duration(Scalar d, Scalar scale) {
  long rounded = std::lround(scale * d);
  return static_cast<int>(std::max(1L, rounded));
}

Synthesizer::Synthesizer(train::ModelSpec spec, nets::ParameterStore text_params,
                         nets::ParameterStore duration_params,
                         nets::ParameterStore decoder_params)
    : spec_(std::move(spec)),
      text_(spec_.encoder, spec_.vocab),
      dur_(spec_.duration),
      dec_(spec_.decoder),
      text_store_(std::move(text_params)),
      dur_store_(std::move(duration_params)),
      dec_store_(std::move(decoder_params)) {
  spec_.validate();
}

Synthesizer Synthesizer::from_checkpoints(const train::Checkpoint& align_ckpt,
                                          const train::Checkpoint& vae_ckpt) {
  train::ModelSpec align_spec = train::ModelSpec::from_kv(cfg::parse_kv(align_ckpt.config_text));
  train::ModelSpec vae_spec = train::ModelSpec::from_kv(cfg::parse_kv(vae_ckpt.config_text));
  if (align_spec.encoder.model_dim != vae_spec.encoder.model_dim)
    throw CheckpointError("incompatible checkpoints: text encoder model_dim " +
                          std::to_string(align_spec.encoder.model_dim) +
                          " vs VAE latent width " + std::to_string(vae_spec.encoder.model_dim));
  if (align_spec.decoder.in_channels != vae_spec.decoder.in_channels ||
      align_spec.decoder.channels != vae_spec.decoder.channels ||
      align_spec.decoder.n_blocks != vae_spec.decoder.n_blocks)
    throw CheckpointError("incompatible checkpoints: wave decoder configuration differs");
  return Synthesizer(align_spec, align_ckpt.section(train::kSectionTextEncoder),
                     align_ckpt.section(train::kSectionDurationPredictor),
                     vae_ckpt.section(train::kSectionWaveDecoder));
}

std::vector<int> Synthesizer::predicted_durations(const std::vector<int>& phoneme_ids,
                                                  Scalar duration_scale) const {
  if (phoneme_ids.empty()) throw DataError("synthesize: empty phoneme sequence");
  nets::TextEncoder::Encoded enc = text_.encode(text_store_, phoneme_ids);
  Vec d = dur_.predict(dur_store_, enc.h);
  std::vector<int> out(static_cast<size_t>(d.size()));
  for (Index i = 0; i < d.size(); ++i)
    out[static_cast<size_t>(i)] = quantize_duration(d(i), duration_scale);
  return out;
}

audio::Waveform Synthesizer::synthesize(const std::vector<int>& phoneme_ids,
                                        const SynthesisOptions& opts) const {
  opts.validate();
  if (phoneme_ids.empty()) throw DataError("synthesize: empty phoneme sequence");

  nets::TextEncoder::Encoded enc = text_.encode(text_store_, phoneme_ids);
  Vec d_real = dur_.predict(dur_store_, enc.h);
  align::Durations d;
  d.d.resize(static_cast<size_t>(d_real.size()));
  for (Index i = 0; i < d_real.size(); ++i)
    d.d[static_cast<size_t>(i)] = quantize_duration(d_real(i), opts.duration_scale);

  latent::DiagGaussianSeq expanded(align::expand_by_durations(enc.prior.mean, d),
                                   align::expand_by_durations(enc.prior.std, d));
  latent::LatentSeq z = latent::sample(expanded, opts.temperature, opts.seed);

  const Index total_frames = z.z.cols();
  const Index stride = samples_per_frame();
  audio::Waveform out;
  out.samples.resize(stride * total_frames);
  Index frame = 0;
  while (frame < total_frames) {
    Index len = std::min<Index>(opts.slice_size, total_frames - frame);
    audio::Waveform clip = dec_.decode(dec_store_, z.z.middleCols(frame, len));
    out.samples.segment(frame * stride, clip.samples.size()) = clip.samples;
    frame += len;
  }
  return out;
}

}  // namespace ktts::infer
