#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ktts/nets.hpp"
#include "ktts/rng.hpp"
#include "testutil.hpp"

using namespace ktts;
using namespace ktts::nets;

namespace {

train::ModelSpec spec() { return test::tiny_spec(12); }

}  // namespace

TEST_CASE("feature encoder length formula and defaults") {
  FeatureEncoderConfig fe;  // paper-scale defaults
  CHECK(fe.total_stride() == 320);
  CHECK(fe.receptive_field() == 2200);
  CHECK(fe.output_length(2200) == 1);
  CHECK(fe.output_length(2200 + 320) == 2);
  CHECK(fe.output_length(22050) == 63);
  CHECK_THROWS_AS(fe.output_length(2199), DataError);
}

TEST_CASE("config invariants reject bad shapes") {
  TextEncoderConfig t;
  t.model_dim = 10;
  t.n_heads = 4;
  CHECK_THROWS_AS(t.validate(), DataError);
  WaveDecoderConfig d;
  d.kernel = 4;
  CHECK_THROWS_AS(d.validate(), DataError);
}

TEST_CASE("text encoder shape contract") {
  train::ModelSpec s = spec();
  TextEncoder enc(s.encoder, s.vocab);
  ParameterStore store;
  Rng rng(1);
  enc.init(store, rng);

  auto out1 = enc.encode(store, {3});
  CHECK(out1.prior.mean.rows() == s.encoder.model_dim);
  CHECK(out1.prior.mean.cols() == 1);
  CHECK(out1.prior.std.cols() == 1);
  CHECK(out1.h.cols() == 1);

  auto out4 = enc.encode(store, {3, 5, 1, 3});
  CHECK(out4.prior.mean.cols() == 4);
  CHECK(out4.h.cols() == 4);

  CHECK_THROWS_AS(enc.encode(store, {}), DataError);
  CHECK_THROWS_AS(enc.encode(store, {s.vocab}), DataError);
}

TEST_CASE("positional path breaks permutation equivariance") {
  train::ModelSpec s = spec();
  TextEncoder enc(s.encoder, s.vocab);
  ParameterStore store;
  Rng rng(2);
  enc.init(store, rng);

  std::vector<int> ids = {1, 4, 7, 2};
  std::vector<int> swapped = {4, 1, 7, 2};

  // Active positional path: swapping two distinct phonemes changes the
  // output beyond a column swap.
  Mat h = enc.encode(store, ids).h;
  Mat hs = enc.encode(store, swapped).h;
  Mat hs_unswapped = hs;
  hs_unswapped.col(0) = hs.col(1);
  hs_unswapped.col(1) = hs.col(0);
  CHECK((h - hs_unswapped).cwiseAbs().maxCoeff() > 1e-8);

  // Zeroed positional path: the encoder becomes permutation-equivariant.
  store.at(enc.prefix + ".pos.conv.w").data.setZero();
  store.at(enc.prefix + ".pos.conv.b").data.setZero();
  store.at(enc.prefix + ".pos.proj.w").data.setZero();
  store.at(enc.prefix + ".pos.proj.b").data.setZero();
  Mat h0 = enc.encode(store, ids).h;
  Mat hs0 = enc.encode(store, swapped).h;
  Mat hs0_unswapped = hs0;
  hs0_unswapped.col(0) = hs0.col(1);
  hs0_unswapped.col(1) = hs0.col(0);
  CHECK((h0 - hs0_unswapped).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("wave encoder receptive field is exactly 2200 samples") {
  train::ModelSpec s = spec();
  WaveEncoder enc(s.feature, s.encoder);
  ParameterStore store;
  Rng rng(3);
  enc.init(store, rng);

  Rng noise(4);
  Vec x = noise.normal_mat(2200 + 320, 1).col(0) * 0.1;
  Mat base = enc.feature_values(store, x);
  REQUIRE(base.cols() == 2);

  // Perturbing sample 2200 leaves column 0 bit-identical; 2199 changes it.
  Vec x_after = x;
  x_after(2200) += 0.5;
  Mat after = enc.feature_values(store, x_after);
  CHECK(after.col(0) == base.col(0));
  CHECK((after.col(1) - base.col(1)).cwiseAbs().maxCoeff() > 0.0);

  Vec x_inside = x;
  x_inside(2199) += 0.5;
  Mat inside = enc.feature_values(store, x_inside);
  CHECK((inside.col(0) - base.col(0)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("feature column j depends only on samples [320 j, 320 j + 2200)") {
  train::ModelSpec s = spec();
  WaveEncoder enc(s.feature, s.encoder);
  ParameterStore store;
  Rng rng(5);
  enc.init(store, rng);

  Rng noise(6);
  const Index n = 2200 + 320 * 9;
  Vec x = noise.normal_mat(n, 1).col(0) * 0.1;
  Mat base = enc.feature_values(store, x);
  const Index cols = base.cols();

  Rng pick(7);
  for (int probe = 0; probe < 10; ++probe) {
    Index pos = static_cast<Index>(pick.integer(static_cast<uint64_t>(n)));
    Vec xp = x;
    xp(pos) += 1.0;
    Mat out = enc.feature_values(store, xp);
    for (Index j = 0; j < cols; ++j) {
      bool in_field = pos >= 320 * j && pos < 320 * j + 2200;
      bool changed = (out.col(j) - base.col(j)).cwiseAbs().maxCoeff() > 0.0;
      CHECK(changed == in_field);
    }
  }
}

TEST_CASE("wave encoder clamps sigma and is deterministic") {
  train::ModelSpec s = spec();
  WaveEncoder enc(s.feature, s.encoder);
  ParameterStore store;
  Rng rng(8);
  enc.init(store, rng);
  Vec x = test::tone(22050, 330.0).samples;
  auto g1 = enc.encode(store, x);
  auto g2 = enc.encode(store, x);
  CHECK(g1.mean == g2.mean);
  CHECK(g1.std == g2.std);
  CHECK(g1.mean.cols() == 63);
  CHECK(g1.std.minCoeff() >= std::exp(latent::kLogStdMin));
  CHECK(g1.std.maxCoeff() <= std::exp(latent::kLogStdMax));
  CHECK_THROWS_AS(enc.encode(store, Vec::Zero(2000)), DataError);
}

TEST_CASE("wave decoder length algebra and tanh bound") {
  train::ModelSpec s = spec();
  WaveDecoder dec(s.decoder);
  ParameterStore store;
  Rng rng(9);
  dec.init(store, rng);

  for (Index t : {1, 7, 32}) {
    Mat z = Rng(100 + t).normal_mat(s.decoder.in_channels, t);
    audio::Waveform w = dec.decode(store, z);
    CHECK(w.samples.size() == 320 * t);
    CHECK(w.samples.cwiseAbs().maxCoeff() <= 1.0);
  }
  // All-zero latent stays bounded.
  audio::Waveform silent = dec.decode(store, Mat::Zero(s.decoder.in_channels, 4));
  CHECK(silent.samples.cwiseAbs().maxCoeff() <= 1.0);

  CHECK_THROWS_AS(dec.decode(store, Mat::Zero(s.decoder.in_channels + 1, 4)), DataError);
}

TEST_CASE("duration predictor shape, determinism and hard gradient barrier") {
  train::ModelSpec s = spec();
  DurationPredictor dp(s.duration);
  ParameterStore store;
  Rng rng(10);
  dp.init(store, rng);

  Mat h = Rng(11).normal_mat(s.encoder.model_dim, 6);
  Vec d1 = dp.predict(store, h);
  Vec d2 = dp.predict(store, h);
  CHECK(d1.size() == 6);
  CHECK(d1 == d2);

  // Gradient of a loss on the predictions with respect to h is exactly zero.
  ad::Tape tape;
  ParamBinding params(tape, store, true);
  ad::Var hv = tape.leaf(h);
  ad::Var out = dp.forward(tape, params, hv);
  tape.backward(ad::sum(ad::mul(out, out)));
  CHECK(tape.grad(hv).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("discriminator emits one finite score per sample") {
  train::ModelSpec s = spec();
  Discriminator disc(s.discriminator);
  ParameterStore store;
  Rng rng(12);
  disc.init(store, rng);

  Vec x = test::tone(500, 200.0).samples;
  Vec scores = disc.score(store, x);
  CHECK(scores.size() == x.size());
  CHECK(scores.allFinite());
}

TEST_CASE("discriminator receptive field grows with layer count") {
  // With L dilated layers (dilation = layer index) and kernel 3, the output
  // at position p sees p +/- sum(dilations). Probe: perturb one sample far
  // away and watch the deepest layer that still reacts.
  train::ModelSpec s = spec();
  auto field = [&](int layers) {
    DiscriminatorConfig cfg = s.discriminator;
    cfg.n_layers = layers;
    Discriminator disc(cfg);
    ParameterStore store;
    Rng rng(13);
    disc.init(store, rng);
    const Index n = 160;
    Vec x = Vec::Zero(n);
    Vec base = disc.score(store, x);
    Vec xp = x;
    xp(n / 2) = 1.0;
    Vec out = disc.score(store, xp);
    Index lo = n, hi = 0;
    for (Index i = 0; i < n; ++i)
      if (std::abs(out(i) - base(i)) > 0.0) {
        lo = std::min(lo, i);
        hi = std::max(hi, i);
      }
    return hi - lo;
  };
  Index f2 = field(2);
  Index f3 = field(3);
  // Span between first and last reacting positions is twice the dilation
  // sum: 2*(1+2)=6, then 2*(1+2+3)=12.
  CHECK(f2 == 6);
  CHECK(f3 == 12);
}

TEST_CASE("parameter init is deterministic in the seed") {
  train::ModelSpec s = spec();
  TextEncoder enc(s.encoder, s.vocab);
  ParameterStore a, b, c;
  Rng r1(77), r2(77), r3(78);
  enc.init(a, r1);
  enc.init(b, r2);
  enc.init(c, r3);
  CHECK(bitwise_equal(a, b));
  CHECK(!bitwise_equal(a, c));
}

TEST_CASE("every network block passes a full finite-difference gradient check") {
  train::ModelSpec s = test::tiny_spec(6, /*dim=*/4, /*dec_channels=*/4, /*dec_blocks=*/2);
  s.encoder.n_heads = 2;
  s.encoder.ffn_dim = 8;
  Rng rng(21);

  SUBCASE("text encoder") {
    TextEncoder enc(s.encoder, s.vocab);
    ParameterStore store;
    enc.init(store, rng);
    test::jitter_store(store, rng);
    std::vector<int> ids = {1, 3, 0, 5};
    Mat probe_mu = Rng(50).normal_mat(4, 4);
    auto loss_value = [&]() {
      ad::Tape t;
      ParamBinding p(t, store, false);
      GaussianHead g = enc.forward(t, p, ids);
      ad::Var l = ad::add(ad::mse(g.mu, t.constant(probe_mu)), ad::sum(g.log_std));
      return l.scalar();
    };
    ad::Tape t;
    ParamBinding p(t, store, true);
    GaussianHead g = enc.forward(t, p, ids);
    t.backward(ad::add(ad::mse(g.mu, t.constant(probe_mu)), ad::sum(g.log_std)));
    auto check = test::fd_check_store(store, p.grads(), loss_value);
    INFO(check.worst);
    CHECK(check.ok(1e-3));
  }

  SUBCASE("wave encoder head") {
    WaveEncoder enc(s.feature, s.encoder);
    ParameterStore store;
    enc.init(store, rng);
    test::jitter_store(store, rng);
    Vec x = test::tone(2200 + 320, 260.0).samples;
    auto loss_value = [&]() {
      ad::Tape t;
      ParamBinding p(t, store, false);
      GaussianHead g = enc.forward(t, p, x);
      return ad::add(ad::sum(ad::mul(g.mu, g.mu)), ad::sum(g.log_std)).scalar();
    };
    ad::Tape t;
    ParamBinding p(t, store, true);
    GaussianHead g = enc.forward(t, p, x);
    t.backward(ad::add(ad::sum(ad::mul(g.mu, g.mu)), ad::sum(g.log_std)));
    auto check = test::fd_check_store(store, p.grads(), loss_value, 1e-5, 24);
    INFO(check.worst);
    CHECK(check.ok(1e-3));
  }

  SUBCASE("wave decoder") {
    WaveDecoder dec(s.decoder);
    ParameterStore store;
    dec.init(store, rng);
    test::jitter_store(store, rng);
    Mat z = Rng(51).normal_mat(s.decoder.in_channels, 2);
    auto loss_value = [&]() {
      ad::Tape t;
      ParamBinding p(t, store, false);
      ad::Var y = dec.forward(t, p, t.constant(z));
      return ad::sum(ad::mul(y, y)).scalar();
    };
    ad::Tape t;
    ParamBinding p(t, store, true);
    ad::Var y = dec.forward(t, p, t.constant(z));
    t.backward(ad::sum(ad::mul(y, y)));
    auto check = test::fd_check_store(store, p.grads(), loss_value, 1e-5, 24);
    INFO(check.worst);
    CHECK(check.ok(1e-3));
  }

  SUBCASE("duration predictor") {
    DurationPredictor dp(s.duration);
    ParameterStore store;
    dp.init(store, rng);
    test::jitter_store(store, rng);
    Mat h = Rng(52).normal_mat(s.encoder.model_dim, 5);
    auto loss_value = [&]() {
      ad::Tape t;
      ParamBinding p(t, store, false);
      ad::Var y = dp.forward(t, p, t.constant(h));
      return ad::sum(ad::mul(y, y)).scalar();
    };
    ad::Tape t;
    ParamBinding p(t, store, true);
    ad::Var y = dp.forward(t, p, t.constant(h));
    t.backward(ad::sum(ad::mul(y, y)));
    auto check = test::fd_check_store(store, p.grads(), loss_value);
    INFO(check.worst);
    CHECK(check.ok(1e-3));
  }

  SUBCASE("discriminator") {
    Discriminator disc(s.discriminator);
    ParameterStore store;
    disc.init(store, rng);
    test::jitter_store(store, rng);
    Vec x = test::tone(120, 500.0).samples;
    auto loss_value = [&]() {
      ad::Tape t;
      ParamBinding p(t, store, false);
      ad::Var y = disc.forward(t, p, t.constant(x.transpose()));
      return ad::sum(ad::mul(y, y)).scalar();
    };
    ad::Tape t;
    ParamBinding p(t, store, true);
    ad::Var y = disc.forward(t, p, t.constant(x.transpose()));
    t.backward(ad::sum(ad::mul(y, y)));
    auto check = test::fd_check_store(store, p.grads(), loss_value);
    INFO(check.worst);
    CHECK(check.ok(1e-3));
  }
}
