#include "ktts/training.hpp"

#include <cmath>
#include <iostream>

namespace ktts::train {

namespace {

// Closed-form KL(q || N(0,1)) as tape nodes: mean over frames of the
// channel-summed 0.5 (sigma^2 + mu^2 - 1 - 2 log sigma).
ad::Var gaussian_kl_node(const ad::Var& mu, const ad::Var& log_std) {
  ad::Var ls = ad::clamp(log_std, latent::kLogStdMin, latent::kLogStdMax);
  ad::Var var_sum = ad::sum(ad::exp_(ad::scale(ls, 2.0)));
  ad::Var mu_sum = ad::sum(ad::mul(mu, mu));
  ad::Var ls_sum = ad::scale(ad::sum(ls), -2.0);
  Scalar n = static_cast<Scalar>(mu.value().size());
  ad::Var total = ad::add_scalar(ad::add(ad::add(var_sum, mu_sum), ls_sum), -n);
  return ad::scale(total, 0.5 / static_cast<Scalar>(mu.cols()));
}

ad::Var average(const std::vector<ad::Var>& vars) {
  ad::Var acc = vars[0];
  for (size_t i = 1; i < vars.size(); ++i) acc = ad::add(acc, vars[i]);
  return ad::scale(acc, 1.0 / static_cast<Scalar>(vars.size()));
}

const Scalar kLog2Pi = std::log(2.0 * M_PI);

}  // namespace

// ---------------------------------------------------------------------------

void ModelSpec::validate() const {
  encoder.validate();
  feature.validate();
  decoder.validate();
  duration.validate();
  discriminator.validate();
  if (vocab < 1) throw DataError("ModelSpec: vocab must be positive");
  if (feature.channels != encoder.model_dim)
    throw DataError("ModelSpec: feature channels must equal model_dim");
  if (decoder.in_channels != encoder.model_dim)
    throw DataError("ModelSpec: decoder input channels must equal model_dim");
  if (duration.channels != encoder.model_dim)
    throw DataError("ModelSpec: duration predictor channels must equal model_dim");
  if (decoder.total_upsampling() != feature.total_stride())
    throw DataError("ModelSpec: decoder upsampling must mirror the feature stride");
}

std::string ModelSpec::to_kv() const {
  cfg::KvMap kv;
  kv["model.n_blocks"] = std::to_string(encoder.n_blocks);
  kv["model.n_heads"] = std::to_string(encoder.n_heads);
  kv["model.dim"] = std::to_string(encoder.model_dim);
  kv["model.ffn_dim"] = std::to_string(encoder.ffn_dim);
  kv["model.pos_filters"] = std::to_string(encoder.pos_filters);
  kv["model.pos_kernel"] = std::to_string(encoder.pos_kernel);
  kv["model.pos_groups"] = std::to_string(encoder.pos_groups);
  kv["model.fe_kernels"] = cfg::ints_to_string(feature.kernels);
  kv["model.fe_strides"] = cfg::ints_to_string(feature.strides);
  kv["model.dec_channels"] = std::to_string(decoder.channels);
  kv["model.dec_blocks"] = std::to_string(decoder.n_blocks);
  kv["model.dec_kernel"] = std::to_string(decoder.kernel);
  kv["model.dec_dilation_cycle"] = std::to_string(decoder.dilation_cycle);
  kv["model.dur_blocks"] = std::to_string(duration.n_blocks);
  kv["model.dur_kernel"] = std::to_string(duration.kernel);
  kv["model.disc_layers"] = std::to_string(discriminator.n_layers);
  kv["model.disc_channels"] = std::to_string(discriminator.channels);
  kv["model.disc_kernel"] = std::to_string(discriminator.kernel);
  kv["model.vocab"] = std::to_string(vocab);
  return cfg::dump_kv(kv);
}

ModelSpec ModelSpec::from_kv(const cfg::KvMap& kv) {
  ModelSpec s;
  s.encoder.n_blocks = static_cast<int>(cfg::get_int(kv, "model.n_blocks", s.encoder.n_blocks));
  s.encoder.n_heads = static_cast<int>(cfg::get_int(kv, "model.n_heads", s.encoder.n_heads));
  s.encoder.model_dim = static_cast<int>(cfg::get_int(kv, "model.dim", s.encoder.model_dim));
  s.encoder.ffn_dim = static_cast<int>(cfg::get_int(kv, "model.ffn_dim", s.encoder.ffn_dim));
  s.encoder.pos_filters =
      static_cast<int>(cfg::get_int(kv, "model.pos_filters", s.encoder.pos_filters));
  s.encoder.pos_kernel =
      static_cast<int>(cfg::get_int(kv, "model.pos_kernel", s.encoder.pos_kernel));
  s.encoder.pos_groups =
      static_cast<int>(cfg::get_int(kv, "model.pos_groups", s.encoder.pos_groups));
  s.feature.kernels = cfg::get_ints(kv, "model.fe_kernels", s.feature.kernels);
  s.feature.strides = cfg::get_ints(kv, "model.fe_strides", s.feature.strides);
  s.feature.channels = s.encoder.model_dim;
  s.decoder.in_channels = s.encoder.model_dim;
  s.decoder.channels =
      static_cast<int>(cfg::get_int(kv, "model.dec_channels", s.decoder.channels));
  s.decoder.n_blocks = static_cast<int>(cfg::get_int(kv, "model.dec_blocks", s.decoder.n_blocks));
  s.decoder.kernel = static_cast<int>(cfg::get_int(kv, "model.dec_kernel", s.decoder.kernel));
  s.decoder.dilation_cycle =
      static_cast<int>(cfg::get_int(kv, "model.dec_dilation_cycle", s.decoder.dilation_cycle));
  s.decoder.up_strides = s.feature.strides;
  s.duration.n_blocks = static_cast<int>(cfg::get_int(kv, "model.dur_blocks", s.duration.n_blocks));
  s.duration.kernel = static_cast<int>(cfg::get_int(kv, "model.dur_kernel", s.duration.kernel));
  s.duration.channels = s.encoder.model_dim;
  s.discriminator.n_layers =
      static_cast<int>(cfg::get_int(kv, "model.disc_layers", s.discriminator.n_layers));
  s.discriminator.channels =
      static_cast<int>(cfg::get_int(kv, "model.disc_channels", s.discriminator.channels));
  s.discriminator.kernel =
      static_cast<int>(cfg::get_int(kv, "model.disc_kernel", s.discriminator.kernel));
  s.vocab = static_cast<int>(cfg::get_int(kv, "model.vocab", s.vocab));
  s.validate();
  return s;
}

void VaeTrainConfig::validate() const {
  if (batch_size < 1 || slice_window < 1 || max_steps < 0)
    throw DataError("VaeTrainConfig: bad sizes");
  if (initial_lr <= 0 || lr_decay_per_epoch <= 0 || adam_eps <= 0)
    throw DataError("VaeTrainConfig: rates must be positive");
  if (adv_weight < 0 || kl_weight < 0) throw DataError("VaeTrainConfig: negative loss weight");
  stft.validate();
}

VaeTrainConfig VaeTrainConfig::from_kv(const cfg::KvMap& kv) {
  VaeTrainConfig c;
  c.batch_size = static_cast<int>(cfg::get_int(kv, "vae.batch_size", c.batch_size));
  c.beta1 = cfg::get_scalar(kv, "vae.beta1", c.beta1);
  c.beta2 = cfg::get_scalar(kv, "vae.beta2", c.beta2);
  c.adam_eps = cfg::get_scalar(kv, "vae.adam_eps", c.adam_eps);
  c.initial_lr = cfg::get_scalar(kv, "vae.initial_lr", c.initial_lr);
  c.lr_decay_per_epoch = cfg::get_scalar(kv, "vae.lr_decay_per_epoch", c.lr_decay_per_epoch);
  c.slice_window = static_cast<int>(cfg::get_int(kv, "vae.slice_window", c.slice_window));
  c.adv_weight = cfg::get_scalar(kv, "vae.adv_weight", c.adv_weight);
  c.kl_weight = cfg::get_scalar(kv, "vae.kl_weight", c.kl_weight);
  c.disc_start_step = cfg::get_int(kv, "vae.disc_start_step", c.disc_start_step);
  c.max_steps = cfg::get_int(kv, "vae.max_steps", c.max_steps);
  c.validate();
  return c;
}

void AlignTrainConfig::validate() const {
  if (batch_size < 1 || max_steps < 0) throw DataError("AlignTrainConfig: bad sizes");
  if (initial_lr <= 0 || lr_decay_per_epoch <= 0 || adam_eps <= 0)
    throw DataError("AlignTrainConfig: rates must be positive");
  if (weight_decay < 0 || duration_weight < 0)
    throw DataError("AlignTrainConfig: negative weight");
}

AlignTrainConfig AlignTrainConfig::from_kv(const cfg::KvMap& kv) {
  AlignTrainConfig c;
  c.batch_size = static_cast<int>(cfg::get_int(kv, "align.batch_size", c.batch_size));
  c.beta1 = cfg::get_scalar(kv, "align.beta1", c.beta1);
  c.beta2 = cfg::get_scalar(kv, "align.beta2", c.beta2);
  c.adam_eps = cfg::get_scalar(kv, "align.adam_eps", c.adam_eps);
  c.weight_decay = cfg::get_scalar(kv, "align.weight_decay", c.weight_decay);
  c.initial_lr = cfg::get_scalar(kv, "align.initial_lr", c.initial_lr);
  c.lr_decay_per_epoch = cfg::get_scalar(kv, "align.lr_decay_per_epoch", c.lr_decay_per_epoch);
  c.duration_weight = cfg::get_scalar(kv, "align.duration_weight", c.duration_weight);
  c.log_domain_durations = cfg::get_int(kv, "align.log_domain_durations", 0) != 0;
  c.max_steps = cfg::get_int(kv, "align.max_steps", c.max_steps);
  c.validate();
  return c;
}

Scalar lr_at(int64_t step, int64_t epoch, const VaeTrainConfig& cfg) {
  (void)step;
  if (epoch < 0) throw DataError("lr_at: negative epoch");
  return cfg.initial_lr * std::pow(cfg.lr_decay_per_epoch, static_cast<Scalar>(epoch));
}

Scalar lr_at(int64_t step, int64_t epoch, const AlignTrainConfig& cfg) {
  (void)step;
  if (epoch < 0) throw DataError("lr_at: negative epoch");
  return cfg.initial_lr * std::pow(cfg.lr_decay_per_epoch, static_cast<Scalar>(epoch));
}

// ---------------------------------------------------------------------------

Adam::Adam(const nets::ParameterStore& params, AdamOptions opt) : opt_(opt) {
  for (const auto& name : params.names()) {
    const nets::Tensor& t = params.at(name);
    nets::Tensor z;
    z.dims = t.dims;
    z.data = Mat::Zero(t.data.rows(), t.data.cols());
    m_.add(name, z);
    v_.add(name, std::move(z));
  }
}

void Adam::step(nets::ParameterStore& params, const std::map<std::string, Mat>& grads,
                Scalar lr) {
  ++t_;
  const Scalar bc1 = 1.0 - std::pow(opt_.beta1, static_cast<Scalar>(t_));
  const Scalar bc2 = 1.0 - std::pow(opt_.beta2, static_cast<Scalar>(t_));
  for (const auto& name : params.names()) {
    Mat& p = params.at(name).data;
    Mat& m = m_.at(name).data;
    Mat& v = v_.at(name).data;
    auto it = grads.find(name);
    const Mat g = it != grads.end() ? it->second : Mat::Zero(p.rows(), p.cols());
    m = opt_.beta1 * m + (1.0 - opt_.beta1) * g;
    v = opt_.beta2 * v + (1.0 - opt_.beta2) * g.cwiseProduct(g);
    Mat update =
        (m.array() / bc1 / ((v.array() / bc2).sqrt() + opt_.eps)).matrix();
    if (opt_.weight_decay > 0.0) update += opt_.weight_decay * p;
    p -= lr * update;
  }
}

nets::ParameterStore Adam::to_store() const {
  nets::ParameterStore out;
  nets::Tensor t = nets::Tensor::zeros({1});
  t.data(0, 0) = static_cast<Scalar>(t_);
  out.add("t", std::move(t));
  for (const auto& name : m_.names()) {
    out.add("m." + name, m_.at(name));
    out.add("v." + name, v_.at(name));
  }
  return out;
}

void Adam::load_store(const nets::ParameterStore& state, const nets::ParameterStore& params) {
  t_ = static_cast<int64_t>(state.at("t").data(0, 0));
  for (const auto& name : params.names()) {
    const nets::Tensor& sm = state.at("m." + name);
    const nets::Tensor& sv = state.at("v." + name);
    if (sm.dims != params.at(name).dims || sv.dims != params.at(name).dims)
      throw CheckpointError("optimizer state shape mismatch for '" + name + "'");
    m_.at(name).data = sm.data;
    v_.at(name).data = sv.data;
  }
}

// ---------------------------------------------------------------------------

VaeLossVars build_vae_loss(ad::Tape& tape, nets::ParamBinding& enc_params,
                           nets::ParamBinding& dec_params, nets::ParamBinding& disc_params,
                           const nets::WaveEncoder& enc, const nets::WaveDecoder& dec,
                           const nets::Discriminator& disc, const VaeTrainConfig& cfg,
                           const audio::Waveform& x, const Mat& posterior_eps,
                           Index slice_start, bool adversarial_on) {
  const int hop = enc.fe.total_stride();
  const int window = cfg.slice_window;

  nets::GaussianHead post = enc.forward(tape, enc_params, x.samples);
  if (posterior_eps.rows() != post.mu.rows() || posterior_eps.cols() != post.mu.cols())
    throw DataError("build_vae_loss: posterior noise shape mismatch");
  if (slice_start < 0 || slice_start + window > post.mu.cols())
    throw DataError("build_vae_loss: slice start out of range");

  ad::Var sigma = ad::exp_(ad::clamp(post.log_std, latent::kLogStdMin, latent::kLogStdMax));
  ad::Var z = ad::add(post.mu, ad::mul(sigma, tape.constant(posterior_eps)));
  ad::Var z_slice = ad::slice_cols(z, slice_start, window);
  ad::Var x_hat = dec.forward(tape, dec_params, z_slice);

  // The ground-truth clip under the left-aligned stride convention: latent
  // frame j owns samples [hop*j, hop*(j+1)).
  Vec clip = x.samples.segment(static_cast<Index>(hop) * slice_start,
                               static_cast<Index>(hop) * window);
  ad::Var clip_row = tape.constant(clip.transpose());

  VaeLossVars out;
  out.rec_mse = ad::mse(x_hat, clip_row);
  out.kl = gaussian_kl_node(post.mu, post.log_std);
  out.gen_total = ad::add(out.rec_mse, ad::scale(out.kl, cfg.kl_weight));

  if (cfg.adv_weight > 0.0) {
    out.stft_pair = ad::stft_loss_pair(x_hat, clip, cfg.stft);
    out.gen_total = ad::add(out.gen_total, ad::scale(ad::sum(out.stft_pair), cfg.adv_weight));
    if (adversarial_on) {
      Mat ones = Mat::Ones(1, x_hat.cols());
      ad::Var target = tape.constant(ones);
      out.adv_g = ad::mse(disc.forward(tape, disc_params, x_hat), target);
      out.gen_total = ad::add(out.gen_total, ad::scale(out.adv_g, cfg.adv_weight));

      ad::Var d_real = disc.forward(tape, disc_params, clip_row);
      ad::Var d_fake = disc.forward(tape, disc_params, ad::detach(x_hat));
      out.disc_total = ad::add(ad::mse(d_real, target), ad::mean(ad::mul(d_fake, d_fake)));
    }
  }
  return out;
}

AlignLossVars build_align_loss(ad::Tape& tape, nets::ParamBinding& text_params,
                               nets::ParamBinding& dur_params, const nets::TextEncoder& text,
                               const nets::DurationPredictor& dur,
                               const std::vector<int>& phoneme_ids, const Mat& z,
                               const AlignTrainConfig& cfg,
                               const align::AlignmentPath* forced_path) {
  nets::GaussianHead prior = text.forward(tape, text_params, phoneme_ids);
  const Index n_frames = z.cols();
  const Index n_tokens = prior.mu.cols();
  if (n_frames < n_tokens)
    throw DataError("build_align_loss: latent shorter than token sequence");

  // MAS runs on values; gradient flows only through the chosen path.
  align::AlignmentPath path;
  if (forced_path) {
    path = *forced_path;
    path.validate(static_cast<int>(n_tokens));
  } else {
    latent::DiagGaussianSeq prior_vals =
        latent::DiagGaussianSeq::from_log_std(prior.mu.value(), prior.log_std.value());
    Mat logp = latent::log_likelihood_table(latent::LatentSeq{z}, prior_vals);
    path = align::mas(logp);
  }

  ad::Var ls = ad::clamp(prior.log_std, latent::kLogStdMin, latent::kLogStdMax);
  ad::Var mu_a = ad::gather_cols(prior.mu, path.token_of_frame);
  ad::Var ls_a = ad::gather_cols(ls, path.token_of_frame);
  ad::Var diff = ad::sub(tape.constant(z), mu_a);
  ad::Var quad = ad::mul(ad::mul(diff, diff), ad::exp_(ad::scale(ls_a, -2.0)));
  ad::Var ll = ad::add(ad::scale(ad::sum(ls_a), -1.0), ad::scale(ad::sum(quad), -0.5));
  ll = ad::add_scalar(ll, -0.5 * kLog2Pi * static_cast<Scalar>(z.size()));

  AlignLossVars out;
  out.path = path;
  out.nll_per_frame = ad::scale(ll, -1.0 / static_cast<Scalar>(n_frames));

  align::Durations d = align::durations_from_alignment(path);
  Mat target(1, n_tokens);
  for (Index i = 0; i < n_tokens; ++i) {
    Scalar di = static_cast<Scalar>(d.d[static_cast<size_t>(i)]);
    target(0, i) = cfg.log_domain_durations ? std::log(di) : di;
  }
  ad::Var predicted = dur.forward(tape, dur_params, prior.h);
  out.duration_mse = ad::mse(predicted, tape.constant(target));
  out.total = ad::add(out.nll_per_frame, ad::scale(out.duration_mse, cfg.duration_weight));
  return out;
}

// ---------------------------------------------------------------------------

VaeTrainer::VaeTrainer(nets::WaveEncoder enc, nets::WaveDecoder dec, nets::Discriminator disc,
                       VaeTrainConfig cfg, uint64_t init_seed)
    : enc_(std::move(enc)), dec_(std::move(dec)), disc_(std::move(disc)), cfg_(cfg) {
  cfg_.validate();
  if (dec_.cfg.total_upsampling() != enc_.fe.total_stride())
    throw DataError("VaeTrainer: decoder upsampling must mirror the encoder stride");
  if (dec_.cfg.in_channels != enc_.tr.model_dim)
    throw DataError("VaeTrainer: decoder input channels must equal the latent width");
  Rng rng(init_seed);
  enc_.init(enc_store_, rng);
  dec_.init(dec_store_, rng);
  disc_.init(disc_store_, rng);
  AdamOptions opt{cfg_.beta1, cfg_.beta2, cfg_.adam_eps, 0.0};
  opt_enc_ = Adam(enc_store_, opt);
  opt_dec_ = Adam(dec_store_, opt);
  opt_disc_ = Adam(disc_store_, opt);
}

VaeLossReport VaeTrainer::step(const std::vector<audio::Waveform>& batch, Rng& rng) {
  VaeLossReport report;
  const Index min_len = enc_.fe.receptive_field() +
                        static_cast<Index>(enc_.fe.total_stride()) * cfg_.slice_window;
  const bool adversarial_on = step_ >= cfg_.disc_start_step && cfg_.adv_weight > 0.0;
  report.disc_active = adversarial_on;

  ad::Tape tape;
  nets::ParamBinding enc_b(tape, enc_store_, true);
  nets::ParamBinding dec_b(tape, dec_store_, true);
  nets::ParamBinding disc_b(tape, disc_store_, true);

  std::vector<ad::Var> gen_losses, disc_losses;
  for (const audio::Waveform& w : batch) {
    if (w.samples.size() < min_len) {
      std::cerr << "vae_step: skipping waveform of " << w.samples.size()
                << " samples (< " << min_len << ")\n";
      ++report.n_skipped;
      continue;
    }
    Index t_latent = enc_.fe.output_length(w.samples.size());
    Mat eps = rng.normal_mat(enc_.tr.model_dim, t_latent);
    Index slice_start =
        static_cast<Index>(rng.integer(static_cast<uint64_t>(t_latent - cfg_.slice_window) + 1));
    VaeLossVars vars = build_vae_loss(tape, enc_b, dec_b, disc_b, enc_, dec_, disc_, cfg_, w,
                                      eps, slice_start, adversarial_on);
    gen_losses.push_back(vars.gen_total);
    if (vars.disc_total.valid()) disc_losses.push_back(vars.disc_total);
    report.mse += vars.rec_mse.scalar();
    report.kl += vars.kl.scalar();
    if (vars.stft_pair.valid()) {
      report.stft_sc += vars.stft_pair.value()(0, 0);
      report.stft_mag += vars.stft_pair.value()(1, 0);
    }
    if (vars.adv_g.valid()) report.adv_g += vars.adv_g.scalar();
    if (vars.disc_total.valid()) report.disc_total += vars.disc_total.scalar();
    ++report.n_used;
  }
  if (report.n_used == 0) return report;

  const Scalar inv_n = 1.0 / report.n_used;
  report.mse *= inv_n;
  report.kl *= inv_n;
  report.stft_sc *= inv_n;
  report.stft_mag *= inv_n;
  report.adv_g *= inv_n;
  report.disc_total *= inv_n;

  ad::Var gen_total = average(gen_losses);
  report.gen_total = gen_total.scalar();
  tape.backward(gen_total);
  std::map<std::string, Mat> g_enc = enc_b.grads();
  std::map<std::string, Mat> g_dec = dec_b.grads();

  std::map<std::string, Mat> g_disc;
  if (!disc_losses.empty()) {
    tape.zero_grad();
    ad::Var disc_total = average(disc_losses);
    tape.backward(disc_total);
    g_disc = disc_b.grads();
  }

  const Scalar lr = lr_at(step_, epoch_, cfg_);
  opt_enc_.step(enc_store_, g_enc, lr);
  opt_dec_.step(dec_store_, g_dec, lr);
  if (!disc_losses.empty()) opt_disc_.step(disc_store_, g_disc, lr);
  ++step_;
  return report;
}

Checkpoint VaeTrainer::make_checkpoint(const std::string& config_text) const {
  Checkpoint c;
  c.config_text = config_text;
  c.global_step = static_cast<uint64_t>(step_);
  c.sections.emplace_back(kSectionWaveEncoder, enc_store_);
  c.sections.emplace_back(kSectionWaveDecoder, dec_store_);
  c.sections.emplace_back(kSectionDiscriminator, disc_store_);
  c.sections.emplace_back(std::string("opt.") + kSectionWaveEncoder, opt_enc_.to_store());
  c.sections.emplace_back(std::string("opt.") + kSectionWaveDecoder, opt_dec_.to_store());
  c.sections.emplace_back(std::string("opt.") + kSectionDiscriminator, opt_disc_.to_store());
  return c;
}

namespace {
void restore_store(nets::ParameterStore& dst, const nets::ParameterStore& src,
                   const char* what) {
  if (dst.names() != src.names())
    throw CheckpointError(std::string("checkpoint section '") + what +
                          "' does not match the model");
  for (const auto& name : dst.names()) {
    if (dst.at(name).dims != src.at(name).dims)
      throw CheckpointError(std::string("checkpoint tensor '") + name + "' in '" + what +
                            "' has a different shape");
    dst.at(name).data = src.at(name).data;
  }
}
}  // namespace

void VaeTrainer::restore(const Checkpoint& c) {
  restore_store(enc_store_, c.section(kSectionWaveEncoder), kSectionWaveEncoder);
  restore_store(dec_store_, c.section(kSectionWaveDecoder), kSectionWaveDecoder);
  restore_store(disc_store_, c.section(kSectionDiscriminator), kSectionDiscriminator);
  opt_enc_.load_store(c.section(std::string("opt.") + kSectionWaveEncoder), enc_store_);
  opt_dec_.load_store(c.section(std::string("opt.") + kSectionWaveDecoder), dec_store_);
  opt_disc_.load_store(c.section(std::string("opt.") + kSectionDiscriminator), disc_store_);
  step_ = static_cast<int64_t>(c.global_step);
}

// ---------------------------------------------------------------------------

AlignTrainer::AlignTrainer(nets::TextEncoder text, nets::DurationPredictor dur,
                           nets::WaveEncoder frozen_enc, nets::ParameterStore frozen_enc_params,
                           AlignTrainConfig cfg, uint64_t init_seed)
    : text_(std::move(text)),
      dur_(std::move(dur)),
      frozen_enc_(std::move(frozen_enc)),
      cfg_(cfg),
      frozen_enc_store_(std::move(frozen_enc_params)) {
  cfg_.validate();
  if (dur_.cfg.channels != text_.cfg.model_dim)
    throw DataError("AlignTrainer: duration predictor width must equal model_dim");
  if (frozen_enc_.tr.model_dim != text_.cfg.model_dim)
    throw DataError("AlignTrainer: frozen encoder and text encoder widths differ");
  Rng rng(init_seed);
  text_.init(text_store_, rng);
  dur_.init(dur_store_, rng);
  AdamOptions opt{cfg_.beta1, cfg_.beta2, cfg_.adam_eps, cfg_.weight_decay};
  opt_text_ = Adam(text_store_, opt);
  opt_dur_ = Adam(dur_store_, opt);
}

AlignLossReport AlignTrainer::step(const std::vector<Pair>& batch, Rng& rng) {
  AlignLossReport report;
  ad::Tape tape;
  nets::ParamBinding text_b(tape, text_store_, true);
  nets::ParamBinding dur_b(tape, dur_store_, true);

  std::vector<ad::Var> totals;
  for (const Pair& pair : batch) {
    if (pair.phoneme_ids.empty()) {
      ++report.n_skipped;
      continue;
    }
    // Frozen posterior; values only, no gradient.
    latent::DiagGaussianSeq post = frozen_enc_.encode(frozen_enc_store_, pair.wave.samples);
    Mat eps = rng.normal_mat(post.channels(), post.frames());
    Mat z = post.mean + post.std.cwiseProduct(eps);
    if (z.cols() < static_cast<Index>(pair.phoneme_ids.size())) {
      std::cerr << "align_step: skipping pair with " << z.cols() << " latent frames < "
                << pair.phoneme_ids.size() << " tokens\n";
      ++report.n_skipped;
      continue;
    }
    AlignLossVars vars =
        build_align_loss(tape, text_b, dur_b, text_, dur_, pair.phoneme_ids, z, cfg_);
    totals.push_back(vars.total);
    report.nll_per_frame += vars.nll_per_frame.scalar();
    report.duration_mse += vars.duration_mse.scalar();
    ++report.n_used;
  }
  if (report.n_used == 0) return report;
  const Scalar inv_n = 1.0 / report.n_used;
  report.nll_per_frame *= inv_n;
  report.duration_mse *= inv_n;

  ad::Var total = average(totals);
  report.total = total.scalar();
  tape.backward(total);
  const Scalar lr = lr_at(step_, epoch_, cfg_);
  opt_text_.step(text_store_, text_b.grads(), lr);
  opt_dur_.step(dur_store_, dur_b.grads(), lr);
  ++step_;
  return report;
}

Checkpoint AlignTrainer::make_checkpoint(const std::string& config_text) const {
  Checkpoint c;
  c.config_text = config_text;
  c.global_step = static_cast<uint64_t>(step_);
  c.sections.emplace_back(kSectionTextEncoder, text_store_);
  c.sections.emplace_back(kSectionDurationPredictor, dur_store_);
  c.sections.emplace_back(std::string("opt.") + kSectionTextEncoder, opt_text_.to_store());
  c.sections.emplace_back(std::string("opt.") + kSectionDurationPredictor,
                          opt_dur_.to_store());
  return c;
}

void AlignTrainer::restore(const Checkpoint& c) {
  restore_store(text_store_, c.section(kSectionTextEncoder), kSectionTextEncoder);
  restore_store(dur_store_, c.section(kSectionDurationPredictor), kSectionDurationPredictor);
  opt_text_.load_store(c.section(std::string("opt.") + kSectionTextEncoder), text_store_);
  opt_dur_.load_store(c.section(std::string("opt.") + kSectionDurationPredictor), dur_store_);
  step_ = static_cast<int64_t>(c.global_step);
}

}  // namespace ktts::train
