#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>

#include "ktts/autodiff.hpp"
#include "ktts/rng.hpp"
#include "testutil.hpp"

using namespace ktts;
using namespace ktts::ad;

namespace {

// FD check for a unary graph builder: loss = sum(f(x)) or a custom scalar.
test::GradCheck check_unary(const std::function<Var(Tape&, Var)>& build, Mat x0,
                            Scalar h = 1e-5) {
  auto eval = [&](const Mat& x) {
    Tape t;
    Var v = build(t, t.leaf(x));
    return v.scalar();
  };
  Tape t;
  Var x = t.leaf(x0);
  Var loss = build(t, x);
  t.backward(loss);
  Mat analytic = t.grad(x);
  Mat xm = x0;
  return test::fd_check_input(xm, analytic, [&] { return eval(xm); }, h);
}

// FD check over two inputs.
test::GradCheck check_binary(const std::function<Var(Tape&, Var, Var)>& build, Mat a0,
                             Mat b0) {
  Mat am = a0, bm = b0;
  auto eval = [&]() {
    Tape t;
    return build(t, t.leaf(am), t.leaf(bm)).scalar();
  };
  Tape t;
  Var a = t.leaf(a0);
  Var b = t.leaf(b0);
  Var loss = build(t, a, b);
  t.backward(loss);
  test::GradCheck ra = test::fd_check_input(am, t.grad(a), eval);
  test::GradCheck rb = test::fd_check_input(bm, t.grad(b), eval);
  return ra.max_err > rb.max_err ? ra : rb;
}

Rng& rng() {
  static Rng r(20250811);
  return r;
}

}  // namespace

TEST_CASE("tape accumulates into shared nodes and skips constants") {
  Tape t;
  Var x = t.leaf(Mat::Constant(1, 1, 3.0));
  Var c = t.constant(Mat::Constant(1, 1, 2.0));
  Var y = mul(add(x, c), x);  // (x + 2) x
  t.backward(sum(y));
  CHECK(t.grad(x)(0, 0) == doctest::Approx(2.0 * 3.0 + 2.0));  // 2x + 2
  CHECK(t.grad(c)(0, 0) == 0.0);
}

TEST_CASE("backward twice without zeroing adds gradients") {
  Tape t;
  Var x = t.leaf(Mat::Constant(1, 1, 5.0));
  Var loss = mul(x, x);
  t.backward(loss);
  CHECK(t.grad(x)(0, 0) == doctest::Approx(10.0));
  t.backward(loss);
  CHECK(t.grad(x)(0, 0) == doctest::Approx(20.0));
  t.zero_grad();
  t.backward(loss);
  CHECK(t.grad(x)(0, 0) == doctest::Approx(10.0));
}

TEST_CASE("detach blocks gradient flow") {
  Tape t;
  Var x = t.leaf(Mat::Constant(1, 1, 4.0));
  Var loss = sum(mul(detach(x), x));
  t.backward(loss);
  // d/dx of detach(x) * x is detach(x) alone.
  CHECK(t.grad(x)(0, 0) == doctest::Approx(4.0));
}

TEST_CASE("elementwise op gradients match finite differences") {
  Mat x = rng().normal_mat(3, 4);
  auto s = [](Tape&, Var v) { return sum(v); };
  (void)s;
  CHECK(check_unary([](Tape&, Var v) { return sum(tanh_(v)); }, x).ok());
  CHECK(check_unary([](Tape&, Var v) { return sum(sigmoid(v)); }, x).ok());
  CHECK(check_unary([](Tape&, Var v) { return sum(exp_(v)); }, x * 0.3).ok());
  CHECK(check_unary([](Tape&, Var v) { return sum(relu(v)); }, x).ok());
  CHECK(check_unary([](Tape&, Var v) { return sum(leaky_relu(v, 0.2)); }, x).ok());
  CHECK(check_unary([](Tape&, Var v) { return mean(mul(v, v)); }, x).ok());
  CHECK(check_unary([](Tape&, Var v) { return sum(scale(add_scalar(v, 1.5), -2.0)); }, x).ok());
  CHECK(check_unary([](Tape&, Var v) { return sum(clamp(v, -0.5, 0.5)); }, x).ok());
}

TEST_CASE("shape op gradients match finite differences") {
  Mat x = rng().normal_mat(4, 6);
  CHECK(check_unary([](Tape&, Var v) { return sum(slice_cols(v, 1, 3)); }, x).ok());
  CHECK(check_unary([](Tape&, Var v) { return sum(slice_rows(v, 2, 2)); }, x).ok());
  CHECK(check_unary([](Tape&, Var v) { return sum(pad_cols(v, 2, 1)); }, x).ok());
  CHECK(check_unary([](Tape&, Var v) { return sum(transpose(v)); }, x).ok());
  CHECK(check_unary([](Tape&, Var v) {
          return sum(mul(gather_cols(v, {0, 2, 2, 5}), gather_cols(v, {1, 1, 3, 4})));
        },
                    x)
            .ok());
  Mat probe = rng().normal_mat(4, 6);
  CHECK(check_unary([&probe](Tape& t, Var v) {
          std::vector<Var> parts = {slice_rows(v, 0, 2), slice_rows(v, 2, 2)};
          Var c = concat_rows(parts);
          return sum(mul(c, t.constant(probe)));
        },
                    x)
            .ok());
}

TEST_CASE("matmul, bias broadcast, softmax and layer norm gradients") {
  Mat a = rng().normal_mat(3, 4), b = rng().normal_mat(4, 5);
  Mat probe34 = rng().normal_mat(3, 4);
  CHECK(check_binary([](Tape&, Var x, Var y) { return sum(matmul(x, y)); }, a, b).ok());
  CHECK(check_binary([&probe34](Tape& t, Var x, Var y) {
          return sum(mul(add_col_broadcast(x, y), t.constant(probe34)));
        },
                     a, rng().normal_mat(3, 1))
            .ok());
  CHECK(check_unary([&probe34](Tape& t, Var v) {
          return sum(mul(softmax_cols(v), t.constant(probe34)));
        },
                    a)
            .ok());
  // prelu over both input and slope.
  CHECK(check_binary([](Tape&, Var x, Var alpha) { return sum(prelu(x, alpha)); }, a,
                     rng().uniform_mat(3, 1, 0.1, 0.5))
            .ok());
}

TEST_CASE("layer_norm gradient in x, gamma and beta") {
  Mat x = rng().normal_mat(5, 3);
  Mat gamma = rng().uniform_mat(5, 1, 0.5, 1.5);
  Mat beta = rng().normal_mat(5, 1);
  Mat probe = Mat::Random(5, 3);

  auto build = [&](Tape& t, Var xv, Var gv, Var bv) {
    return sum(mul(layer_norm(xv, gv, bv), t.constant(probe)));
  };
  Mat xm = x, gm = gamma, bm = beta;
  auto eval = [&]() {
    Tape t;
    return build(t, t.leaf(xm), t.leaf(gm), t.leaf(bm)).scalar();
  };
  Tape t;
  Var xv = t.leaf(x), gv = t.leaf(gamma), bv = t.leaf(beta);
  t.backward(build(t, xv, gv, bv));
  CHECK(test::fd_check_input(xm, t.grad(xv), eval).ok());
  CHECK(test::fd_check_input(gm, t.grad(gv), eval).ok());
  CHECK(test::fd_check_input(bm, t.grad(bv), eval).ok());
}

TEST_CASE("conv1d gradients across stride, dilation and groups") {
  struct Case {
    Index cin, cout;
    int k, stride, dilation, groups;
    Index t;
  };
  for (const Case& c : {Case{3, 4, 3, 1, 1, 1, 8}, Case{4, 6, 5, 2, 1, 2, 12},
                        Case{2, 2, 3, 1, 3, 1, 12}, Case{6, 4, 2, 3, 2, 2, 14}}) {
    Mat x = rng().normal_mat(c.cin, c.t);
    Mat w = rng().normal_mat(c.cout, c.cin / c.groups * c.k);
    Mat b = rng().normal_mat(c.cout, 1);
    Mat xm = x, wm = w, bm = b;
    auto eval = [&]() {
      Tape t;
      Var y = conv1d(t.leaf(xm), t.leaf(wm), t.leaf(bm), c.stride, c.dilation, c.groups, c.k);
      return sum(mul(y, y)).scalar();
    };
    Tape t;
    Var xv = t.leaf(x), wv = t.leaf(w), bv = t.leaf(b);
    Var y = conv1d(xv, wv, bv, c.stride, c.dilation, c.groups, c.k);
    t.backward(sum(mul(y, y)));
    INFO("case k=" << c.k << " s=" << c.stride << " d=" << c.dilation << " g=" << c.groups);
    CHECK(test::fd_check_input(xm, t.grad(xv), eval).ok());
    CHECK(test::fd_check_input(wm, t.grad(wv), eval).ok());
    CHECK(test::fd_check_input(bm, t.grad(bv), eval).ok());
  }
}

TEST_CASE("conv1d_transpose gradients and length") {
  const Index cin = 3, cout = 2, t_in = 5;
  const int stride = 4, k = 8;
  Mat x = rng().normal_mat(cin, t_in);
  Mat w = rng().normal_mat(cout, cin * k);
  Mat b = rng().normal_mat(cout, 1);
  {
    Tape t;
    Var y = conv1d_transpose(t.constant(x), t.constant(w), t.constant(b), stride, k);
    CHECK(y.cols() == (t_in - 1) * stride + k);
  }
  Mat xm = x, wm = w, bm = b;
  auto eval = [&]() {
    Tape t;
    Var y = conv1d_transpose(t.leaf(xm), t.leaf(wm), t.leaf(bm), stride, k);
    return sum(mul(y, y)).scalar();
  };
  Tape t;
  Var xv = t.leaf(x), wv = t.leaf(w), bv = t.leaf(b);
  Var y = conv1d_transpose(xv, wv, bv, stride, k);
  t.backward(sum(mul(y, y)));
  CHECK(test::fd_check_input(xm, t.grad(xv), eval).ok());
  CHECK(test::fd_check_input(wm, t.grad(wv), eval).ok());
  CHECK(test::fd_check_input(bm, t.grad(bv), eval).ok());
}

TEST_CASE("conv1d forward equals a naive reference") {
  const Index cin = 3, cout = 2, tlen = 9;
  const int k = 3, stride = 2, dilation = 2;
  Mat x = rng().normal_mat(cin, tlen);
  Mat w = rng().normal_mat(cout, cin * k);
  Tape t;
  Var y = conv1d(t.constant(x), t.constant(w), Var{}, stride, dilation, 1, k);
  const Index span = dilation * (k - 1) + 1;
  const Index t_out = (tlen - span) / stride + 1;
  REQUIRE(y.cols() == t_out);
  for (Index o = 0; o < cout; ++o)
    for (Index tt = 0; tt < t_out; ++tt) {
      Scalar acc = 0;
      for (int ki = 0; ki < k; ++ki)
        for (Index c = 0; c < cin; ++c)
          acc += w(o, ki * cin + c) * x(c, tt * stride + ki * dilation);
      CHECK(y.value()(o, tt) == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("stft loss node backward matches finite differences") {
  audio::StftLossConfig cfg;
  cfg.resolutions = {{64, 16, 32}};
  Vec ref = rng().normal_mat(96, 1).col(0) * 0.4;
  Mat x0 = rng().normal_mat(1, 96) * 0.4;
  Mat xm = x0;
  auto eval = [&]() {
    Tape t;
    return sum(stft_loss_pair(t.leaf(xm), ref, cfg)).scalar();
  };
  Tape t;
  Var x = t.leaf(x0);
  Var loss = sum(stft_loss_pair(x, ref, cfg));
  t.backward(loss);
  test::GradCheck r = test::fd_check_input(xm, t.grad(x), eval, 1e-6);
  INFO(r.worst);
  CHECK(r.ok(1e-3));
}

TEST_CASE("mse matches its definition and differentiates") {
  Mat a = rng().normal_mat(2, 3), b = rng().normal_mat(2, 3);
  Tape t;
  Var loss = mse(t.leaf(a), t.constant(b));
  CHECK(loss.scalar() == doctest::Approx((a - b).array().square().mean()));
  CHECK(check_unary([&](Tape& tt, Var v) { return mse(v, tt.constant(b)); }, a).ok());
}
