#include "ktts/nets.hpp"

#include <cmath>

namespace ktts::nets {

namespace {

std::string blk(const std::string& prefix, int i, const char* rest) {
  return prefix + ".blk" + std::to_string(i) + "." + rest;
}

// Same-padded convolution helper used by every stride-1 stack.
ad::Var conv_same(const ad::Var& x, const ad::Var& w, const ad::Var& b, int dilation,
                  int groups, int kernel) {
  Index pad = static_cast<Index>(dilation) * (kernel - 1) / 2;
  return ad::conv1d(ad::pad_cols(x, pad, pad), w, b, 1, dilation, groups, kernel);
}

void init_transformer(const TextEncoderConfig& cfg, const std::string& prefix,
                      ParameterStore& store, Rng& rng) {
  const Index m = cfg.model_dim;
  const int cin_g = cfg.model_dim / cfg.pos_groups;
  init_uniform_fanin(store, prefix + ".pos.conv.w",
                     {cfg.pos_filters, cin_g, cfg.pos_kernel},
                     static_cast<Index>(cin_g) * cfg.pos_kernel, rng);
  init_constant(store, prefix + ".pos.conv.b", {cfg.pos_filters}, 0.0);
  init_uniform_fanin(store, prefix + ".pos.proj.w", {m, cfg.pos_filters}, cfg.pos_filters, rng);
  init_constant(store, prefix + ".pos.proj.b", {m}, 0.0);
  for (int i = 0; i < cfg.n_blocks; ++i) {
    init_constant(store, blk(prefix, i, "ln1.g"), {m}, 1.0);
    init_constant(store, blk(prefix, i, "ln1.b"), {m}, 0.0);
    for (const char* nm : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
      init_uniform_fanin(store, blk(prefix, i, nm), {m, m}, m, rng);
    for (const char* nm : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"})
      init_constant(store, blk(prefix, i, nm), {m}, 0.0);
    init_constant(store, blk(prefix, i, "ln2.g"), {m}, 1.0);
    init_constant(store, blk(prefix, i, "ln2.b"), {m}, 0.0);
    init_uniform_fanin(store, blk(prefix, i, "ffn.w1"), {cfg.ffn_dim, m}, m, rng);
    init_constant(store, blk(prefix, i, "ffn.b1"), {cfg.ffn_dim}, 0.0);
    init_uniform_fanin(store, blk(prefix, i, "ffn.w2"), {m, cfg.ffn_dim}, cfg.ffn_dim, rng);
    init_constant(store, blk(prefix, i, "ffn.b2"), {m}, 0.0);
  }
  init_constant(store, prefix + ".lnf.g", {m}, 1.0);
  init_constant(store, prefix + ".lnf.b", {m}, 0.0);
  init_uniform_fanin(store, prefix + ".head.w", {2 * m, m}, m, rng);
  init_constant(store, prefix + ".head.b", {2 * m}, 0.0);
}

ad::Var self_attention(ad::Tape& tape, ParamBinding& params, const std::string& name,
                       const ad::Var& x, int n_heads) {
  (void)tape;
  const Index m = x.rows();
  const Index dh = m / n_heads;
  ad::Var q = ad::affine(params(name + ".attn.wq"), x, params(name + ".attn.bq"));
  ad::Var k = ad::affine(params(name + ".attn.wk"), x, params(name + ".attn.bk"));
  ad::Var v = ad::affine(params(name + ".attn.wv"), x, params(name + ".attn.bv"));
  std::vector<ad::Var> heads;
  heads.reserve(static_cast<size_t>(n_heads));
  const Scalar inv_sqrt = 1.0 / std::sqrt(static_cast<Scalar>(dh));
  for (int h = 0; h < n_heads; ++h) {
    ad::Var qh = ad::slice_rows(q, h * dh, dh);
    ad::Var kh = ad::slice_rows(k, h * dh, dh);
    ad::Var vh = ad::slice_rows(v, h * dh, dh);
    // scores: keys along rows, queries along columns.
    ad::Var scores = ad::scale(ad::matmul(ad::transpose(kh), qh), inv_sqrt);
    ad::Var weights = ad::softmax_cols(scores);
    heads.push_back(ad::matmul(vh, weights));
  }
  ad::Var merged = ad::concat_rows(heads);
  return ad::affine(params(name + ".attn.wo"), merged, params(name + ".attn.bo"));
}

// Pre-norm transformer stack with the learnable positional path in front;
// returns the hidden sequence after the final layer norm.
ad::Var transformer_tower(ad::Tape& tape, ParamBinding& params,
                          const TextEncoderConfig& cfg, const std::string& prefix,
                          ad::Var x) {
  ad::Var pos = conv_same(x, params(prefix + ".pos.conv.w"), params(prefix + ".pos.conv.b"),
                          1, cfg.pos_groups, cfg.pos_kernel);
  ad::Var pos_proj =
      ad::affine(params(prefix + ".pos.proj.w"), pos, params(prefix + ".pos.proj.b"));
  x = ad::add(x, pos_proj);
  for (int i = 0; i < cfg.n_blocks; ++i) {
    std::string name = prefix + ".blk" + std::to_string(i);
    ad::Var a = ad::layer_norm(x, params(name + ".ln1.g"), params(name + ".ln1.b"));
    x = ad::add(x, self_attention(tape, params, name, a, cfg.n_heads));
    ad::Var f = ad::layer_norm(x, params(name + ".ln2.g"), params(name + ".ln2.b"));
    ad::Var ff = ad::affine(params(name + ".ffn.w1"), f, params(name + ".ffn.b1"));
    ff = ad::affine(params(name + ".ffn.w2"), ad::relu(ff), params(name + ".ffn.b2"));
    x = ad::add(x, ff);
  }
  return ad::layer_norm(x, params(prefix + ".lnf.g"), params(prefix + ".lnf.b"));
}

GaussianHead stats_head(ParamBinding& params, const std::string& prefix, const ad::Var& h,
                        Index model_dim) {
  ad::Var stats = ad::affine(params(prefix + ".head.w"), h, params(prefix + ".head.b"));
  GaussianHead out;
  out.mu = ad::slice_rows(stats, 0, model_dim);
  out.log_std = ad::slice_rows(stats, model_dim, model_dim);
  out.h = h;
  return out;
}

latent::DiagGaussianSeq head_values(const GaussianHead& g) {
  return latent::DiagGaussianSeq::from_log_std(g.mu.value(), g.log_std.value());
}

}  // namespace

// ---------------------------------------------------------------------------

void TextEncoderConfig::validate() const {
  if (model_dim < 1 || n_heads < 1 || n_blocks < 1 || ffn_dim < 1)
    throw DataError("TextEncoderConfig: dimensions must be positive");
  if (model_dim % n_heads != 0)
    throw DataError("TextEncoderConfig: model_dim must be divisible by n_heads");
  if (pos_kernel % 2 != 1) throw DataError("TextEncoderConfig: pos_kernel must be odd");
  if (model_dim % pos_groups != 0 || pos_filters % pos_groups != 0)
    throw DataError("TextEncoderConfig: pos_groups must divide model_dim and pos_filters");
}

void FeatureEncoderConfig::validate() const {
  if (kernels.size() != strides.size() || kernels.empty())
    throw DataError("FeatureEncoderConfig: kernels/strides size mismatch");
  for (size_t i = 0; i < kernels.size(); ++i)
    if (kernels[i] < 1 || strides[i] < 1)
      throw DataError("FeatureEncoderConfig: kernels and strides must be positive");
  if (channels < 1) throw DataError("FeatureEncoderConfig: channels must be positive");
}

int FeatureEncoderConfig::total_stride() const {
  int s = 1;
  for (int v : strides) s *= v;
  return s;
}

int FeatureEncoderConfig::receptive_field() const {
  int rf = 1;
  int jump = 1;
  for (size_t i = 0; i < kernels.size(); ++i) {
    rf += (kernels[i] - 1) * jump;
    jump *= strides[i];
  }
  return rf;
}

Index FeatureEncoderConfig::output_length(Index n_samples) const {
  Index len = n_samples;
  for (size_t i = 0; i < kernels.size(); ++i) {
    if (len < kernels[i])
      throw DataError("feature encoder: input of " + std::to_string(n_samples) +
                      " samples is shorter than the receptive field " +
                      std::to_string(receptive_field()));
    len = (len - kernels[i]) / strides[i] + 1;
  }
  return len;
}

void WaveDecoderConfig::validate() const {
  if (in_channels < 1 || channels < 1 || n_blocks < 1 || dilation_cycle < 1)
    throw DataError("WaveDecoderConfig: dimensions must be positive");
  if (kernel % 2 != 1) throw DataError("WaveDecoderConfig: kernel must be odd");
  if (up_strides.empty()) throw DataError("WaveDecoderConfig: no upsampling stages");
}

int WaveDecoderConfig::total_upsampling() const {
  int s = 1;
  for (int v : up_strides) s *= v;
  return s;
}

void DurationPredictorConfig::validate() const {
  if (n_blocks < 1 || channels < 1) throw DataError("DurationPredictorConfig: bad dimensions");
  if (kernel % 2 != 1) throw DataError("DurationPredictorConfig: kernel must be odd");
}

void DiscriminatorConfig::validate() const {
  if (n_layers < 1 || channels < 1) throw DataError("DiscriminatorConfig: bad dimensions");
  if (kernel % 2 != 1) throw DataError("DiscriminatorConfig: kernel must be odd");
}

// ---------------------------------------------------------------------------

void init_uniform_fanin(ParameterStore& store, const std::string& name,
                        std::vector<Index> dims, Index fan_in, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(dims));
  Scalar bound = std::sqrt(1.0 / static_cast<Scalar>(fan_in));
  t.data = rng.uniform_mat(t.data.rows(), t.data.cols(), -bound, bound);
  store.add(name, std::move(t));
}

void init_constant(ParameterStore& store, const std::string& name,
                   std::vector<Index> dims, Scalar value) {
  Tensor t = Tensor::zeros(std::move(dims));
  t.data.setConstant(value);
  store.add(name, std::move(t));
}

void init_normal(ParameterStore& store, const std::string& name,
                 std::vector<Index> dims, Scalar stddev, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(dims));
  t.data = stddev * rng.normal_mat(t.data.rows(), t.data.cols());
  store.add(name, std::move(t));
}

// ---------------------------------------------------------------------------

TextEncoder::TextEncoder(TextEncoderConfig c, int vocab_size) : cfg(c), vocab(vocab_size) {
  cfg.validate();
  if (vocab < 1) throw DataError("TextEncoder: empty phoneme inventory");
}

void TextEncoder::init(ParameterStore& store, Rng& rng) const {
  init_normal(store, prefix + ".embed", {cfg.model_dim, vocab}, 0.02, rng);
  init_transformer(cfg, prefix, store, rng);
}

GaussianHead TextEncoder::forward(ad::Tape& tape, ParamBinding& params,
                                  const std::vector<int>& phoneme_ids) const {
  if (phoneme_ids.empty()) throw DataError("text_encode: empty phoneme sequence");
  for (int id : phoneme_ids)
    if (id < 0 || id >= vocab)
      throw DataError("text_encode: phoneme id " + std::to_string(id) +
                      " outside embedding range [0, " + std::to_string(vocab) + ")");
  ad::Var x = ad::gather_cols(params(prefix + ".embed"), phoneme_ids);
  ad::Var h = transformer_tower(tape, params, cfg, prefix, x);
  return stats_head(params, prefix, h, cfg.model_dim);
}

TextEncoder::Encoded TextEncoder::encode(const ParameterStore& store,
                                         const std::vector<int>& phoneme_ids) const {
  ad::Tape tape;
  ParamBinding params(tape, store, false);
  GaussianHead g = forward(tape, params, phoneme_ids);
  return Encoded{head_values(g), g.h.value()};
}

// ---------------------------------------------------------------------------

WaveEncoder::WaveEncoder(FeatureEncoderConfig f, TextEncoderConfig t) : fe(f), tr(t) {
  fe.validate();
  tr.validate();
  if (fe.channels != tr.model_dim)
    throw DataError("WaveEncoder: feature channels must equal transformer model_dim");
}

void WaveEncoder::init(ParameterStore& store, Rng& rng) const {
  int prev = 1;
  for (size_t i = 0; i < fe.kernels.size(); ++i) {
    std::string name = prefix + ".fe" + std::to_string(i);
    init_uniform_fanin(store, name + ".w", {fe.channels, prev, fe.kernels[i]},
                       static_cast<Index>(prev) * fe.kernels[i], rng);
    init_constant(store, name + ".b", {fe.channels}, 0.0);
    init_constant(store, name + ".alpha", {fe.channels}, 0.25);
    prev = fe.channels;
  }
  init_transformer(tr, prefix, store, rng);
}

ad::Var WaveEncoder::features(ad::Tape& tape, ParamBinding& params, const Vec& samples) const {
  if (samples.size() < fe.receptive_field())
    throw DataError("wave_encode: input of " + std::to_string(samples.size()) +
                    " samples is shorter than the receptive field " +
                    std::to_string(fe.receptive_field()));
  ad::Var x = tape.constant(samples.transpose());
  for (size_t i = 0; i < fe.kernels.size(); ++i) {
    std::string name = prefix + ".fe" + std::to_string(i);
    x = ad::conv1d(x, params(name + ".w"), params(name + ".b"), fe.strides[i], 1, 1,
                   fe.kernels[i]);
    x = ad::prelu(x, params(name + ".alpha"));
  }
  return x;
}

GaussianHead WaveEncoder::forward(ad::Tape& tape, ParamBinding& params,
                                  const Vec& samples) const {
  ad::Var feats = features(tape, params, samples);
  ad::Var h = transformer_tower(tape, params, tr, prefix, feats);
  return stats_head(params, prefix, h, tr.model_dim);
}

Mat WaveEncoder::feature_values(const ParameterStore& store, const Vec& samples) const {
  ad::Tape tape;
  ParamBinding params(tape, store, false);
  return features(tape, params, samples).value();
}

latent::DiagGaussianSeq WaveEncoder::encode(const ParameterStore& store,
                                            const Vec& samples) const {
  ad::Tape tape;
  ParamBinding params(tape, store, false);
  return head_values(forward(tape, params, samples));
}

// ---------------------------------------------------------------------------

WaveDecoder::WaveDecoder(WaveDecoderConfig c) : cfg(c) { cfg.validate(); }

void WaveDecoder::init(ParameterStore& store, Rng& rng) const {
  int prev = cfg.in_channels;
  for (size_t i = 0; i < cfg.up_strides.size(); ++i) {
    int k = 2 * cfg.up_strides[i];
    std::string name = prefix + ".up" + std::to_string(i);
    init_uniform_fanin(store, name + ".w", {cfg.channels, prev, k},
                       static_cast<Index>(prev) * k, rng);
    init_constant(store, name + ".b", {cfg.channels}, 0.0);
    prev = cfg.channels;
  }
  for (int i = 0; i < cfg.n_blocks; ++i) {
    std::string name = prefix + ".blk" + std::to_string(i);
    init_uniform_fanin(store, name + ".dil.w", {2 * cfg.channels, cfg.channels, cfg.kernel},
                       static_cast<Index>(cfg.channels) * cfg.kernel, rng);
    init_constant(store, name + ".dil.b", {2 * cfg.channels}, 0.0);
    init_uniform_fanin(store, name + ".res.w", {cfg.channels, cfg.channels}, cfg.channels, rng);
    init_constant(store, name + ".res.b", {cfg.channels}, 0.0);
    init_uniform_fanin(store, name + ".skip.w", {cfg.channels, cfg.channels}, cfg.channels,
                       rng);
    init_constant(store, name + ".skip.b", {cfg.channels}, 0.0);
  }
  init_uniform_fanin(store, prefix + ".post1.w", {cfg.channels, cfg.channels}, cfg.channels,
                     rng);
  init_constant(store, prefix + ".post1.b", {cfg.channels}, 0.0);
  init_uniform_fanin(store, prefix + ".post2.w", {1, cfg.channels}, cfg.channels, rng);
  init_constant(store, prefix + ".post2.b", {1}, 0.0);
}

ad::Var WaveDecoder::forward(ad::Tape& tape, ParamBinding& params, const ad::Var& z) const {
  (void)tape;
  if (z.rows() != cfg.in_channels)
    throw DataError("wave_decode: slice has " + std::to_string(z.rows()) +
                    " channels, expected " + std::to_string(cfg.in_channels));
  if (z.cols() < 1) throw DataError("wave_decode: empty slice");
  ad::Var x = z;
  for (size_t i = 0; i < cfg.up_strides.size(); ++i) {
    int s = cfg.up_strides[i];
    std::string name = prefix + ".up" + std::to_string(i);
    Index want = x.cols() * s;
    // Kernel 2s overshoots by s samples; trim to the exact stride multiple.
    x = ad::conv1d_transpose(x, params(name + ".w"), params(name + ".b"), s, 2 * s);
    x = ad::slice_cols(x, s / 2, want);
    x = ad::leaky_relu(x, 0.1);
  }
  ad::Var skips;
  for (int i = 0; i < cfg.n_blocks; ++i) {
    std::string name = prefix + ".blk" + std::to_string(i);
    int dilation = 1 << (i % cfg.dilation_cycle);
    ad::Var gates = conv_same(x, params(name + ".dil.w"), params(name + ".dil.b"),
                              dilation, 1, cfg.kernel);
    ad::Var gate = ad::mul(ad::tanh_(ad::slice_rows(gates, 0, cfg.channels)),
                           ad::sigmoid(ad::slice_rows(gates, cfg.channels, cfg.channels)));
    ad::Var skip = ad::affine(params(name + ".skip.w"), gate, params(name + ".skip.b"));
    skips = skips.valid() ? ad::add(skips, skip) : skip;
    x = ad::add(x, ad::affine(params(name + ".res.w"), gate, params(name + ".res.b")));
  }
  ad::Var out = ad::relu(skips);
  out = ad::relu(ad::affine(params(prefix + ".post1.w"), out, params(prefix + ".post1.b")));
  out = ad::affine(params(prefix + ".post2.w"), out, params(prefix + ".post2.b"));
  return ad::tanh_(out);
}

audio::Waveform WaveDecoder::decode(const ParameterStore& store, const Mat& z) const {
  ad::Tape tape;
  ParamBinding params(tape, store, false);
  ad::Var out = forward(tape, params, tape.constant(z));
  return audio::Waveform{out.value().row(0).transpose(), audio::kSampleRate};
}

// ---------------------------------------------------------------------------

DurationPredictor::DurationPredictor(DurationPredictorConfig c) : cfg(c) { cfg.validate(); }

void DurationPredictor::init(ParameterStore& store, Rng& rng) const {
  for (int i = 0; i < cfg.n_blocks; ++i) {
    std::string name = prefix + ".blk" + std::to_string(i);
    init_uniform_fanin(store, name + ".conv.w", {cfg.channels, cfg.channels, cfg.kernel},
                       static_cast<Index>(cfg.channels) * cfg.kernel, rng);
    init_constant(store, name + ".conv.b", {cfg.channels}, 0.0);
    init_constant(store, name + ".alpha", {cfg.channels}, 0.25);
    init_constant(store, name + ".ln.g", {cfg.channels}, 1.0);
    init_constant(store, name + ".ln.b", {cfg.channels}, 0.0);
  }
  init_uniform_fanin(store, prefix + ".head.w", {1, cfg.channels}, cfg.channels, rng);
  init_constant(store, prefix + ".head.b", {1}, 0.0);
}

ad::Var DurationPredictor::forward(ad::Tape& tape, ParamBinding& params,
                                   const ad::Var& h_text) const {
  (void)tape;
  if (h_text.rows() != cfg.channels)
    throw DataError("predict_durations: hidden size " + std::to_string(h_text.rows()) +
                    " != duration predictor channels " + std::to_string(cfg.channels));
  // Stop gradient: the duration loss must not disturb the likelihood
  // objective upstream.
  ad::Var x = ad::detach(h_text);
  for (int i = 0; i < cfg.n_blocks; ++i) {
    std::string name = prefix + ".blk" + std::to_string(i);
    ad::Var y = conv_same(x, params(name + ".conv.w"), params(name + ".conv.b"), 1, 1,
                          cfg.kernel);
    y = ad::prelu(y, params(name + ".alpha"));
    y = ad::layer_norm(y, params(name + ".ln.g"), params(name + ".ln.b"));
    x = ad::add(x, y);
  }
  return ad::affine(params(prefix + ".head.w"), x, params(prefix + ".head.b"));
}

Vec DurationPredictor::predict(const ParameterStore& store, const Mat& h_text) const {
  ad::Tape tape;
  ParamBinding params(tape, store, false);
  ad::Var out = forward(tape, params, tape.constant(h_text));
  return out.value().row(0).transpose();
}

// ---------------------------------------------------------------------------

Discriminator::Discriminator(DiscriminatorConfig c) : cfg(c) { cfg.validate(); }

void Discriminator::init(ParameterStore& store, Rng& rng) const {
  int prev = 1;
  for (int i = 0; i < cfg.n_layers; ++i) {
    std::string name = prefix + ".l" + std::to_string(i);
    init_uniform_fanin(store, name + ".w", {cfg.channels, prev, cfg.kernel},
                       static_cast<Index>(prev) * cfg.kernel, rng);
    init_constant(store, name + ".b", {cfg.channels}, 0.0);
    prev = cfg.channels;
  }
  init_uniform_fanin(store, prefix + ".head.w", {1, cfg.channels}, cfg.channels, rng);
  init_constant(store, prefix + ".head.b", {1}, 0.0);
}

ad::Var Discriminator::forward(ad::Tape& tape, ParamBinding& params, const ad::Var& x) const {
  (void)tape;
  if (x.rows() != 1) throw DataError("discriminate: input must be a 1 x N row");
  ad::Var h = x;
  for (int i = 0; i < cfg.n_layers; ++i) {
    std::string name = prefix + ".l" + std::to_string(i);
    int dilation = i + 1;  // dilation = layer index, 1-based
    h = conv_same(h, params(name + ".w"), params(name + ".b"), dilation, 1, cfg.kernel);
    h = ad::leaky_relu(h, cfg.leaky_slope);
  }
  return ad::affine(params(prefix + ".head.w"), h, params(prefix + ".head.b"));
}

Vec Discriminator::score(const ParameterStore& store, const Vec& samples) const {
  ad::Tape tape;
  ParamBinding params(tape, store, false);
  ad::Var out = forward(tape, params, tape.constant(samples.transpose()));
  return out.value().row(0).transpose();
}

}  // namespace ktts::nets
