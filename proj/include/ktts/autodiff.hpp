#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ktts/audio.hpp"
#include "ktts/types.hpp"

// Reverse-mode automatic differentiation over Eigen matrices. A Tape records
// every operation; backward() replays it in reverse, accumulating gradients
// into each node that requires them. Matrices follow the channels x time
// convention used throughout the model code.
namespace ktts::ad {

class Tape;

// Cheap handle to a tape node.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr; }
  const Mat& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Scalar scalar() const;  // requires a 1x1 value
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Mat& gout)>;

  // Leaf that never receives gradient; frozen parameters and data enter here.
  Var constant(Mat value);
  // Trainable leaf.
  Var leaf(Mat value);

  Var make_node(Mat value, bool requires_grad, BackwardFn backward);

  const Mat& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  bool requires_grad(int id) const {
    return nodes_[static_cast<size_t>(id)].requires_grad;
  }

  // Gradient of the last backward() root with respect to v; zeros if the
  // node was never reached.
  Mat grad(const Var& v) const;

  void accumulate(int id, const Mat& delta);

  // Reverse sweep from a scalar root. Interior gradients are scratch for the
  // sweep; leaf gradients accumulate across sweeps until zero_grad().
  void backward(const Var& root);

  void zero_grad();

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;  // empty until touched by a sweep
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// ---- elementwise and scalar ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, Scalar s);
Var add_scalar(const Var& a, Scalar s);
Var relu(const Var& a);
Var leaky_relu(const Var& a, Scalar slope);
Var tanh_(const Var& a);
Var sigmoid(const Var& a);
Var exp_(const Var& a);
Var clamp(const Var& a, Scalar lo, Scalar hi);

// PReLU with one learnable slope per channel (row); alpha is (rows x 1).
Var prelu(const Var& a, const Var& alpha);

// ---- shape ----
Var slice_cols(const Var& a, Index start, Index len);
Var slice_rows(const Var& a, Index start, Index len);
Var concat_rows(const std::vector<Var>& parts);
Var transpose(const Var& a);
// Zero-pads columns on both sides; backward slices the middle back out.
Var pad_cols(const Var& a, Index left, Index right);
// Copies columns idx[j]; backward scatter-adds, so repeated indices work
// (embedding lookup and duration expansion both ride on this).
Var gather_cols(const Var& a, const std::vector<int>& idx);

// ---- reductions ----
Var sum(const Var& a);
Var mean(const Var& a);

// ---- linear algebra ----
Var matmul(const Var& a, const Var& b);
// y = w x + b with b (rows x 1) broadcast over columns; pass an invalid Var
// to skip the bias.
Var affine(const Var& w, const Var& x, const Var& b);
Var add_col_broadcast(const Var& a, const Var& col);

// Softmax over each column.
Var softmax_cols(const Var& a);

// Per-column layer normalization with learnable gain/shift (rows x 1 each).
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, Scalar eps = 1e-5);

// ---- convolutions (channels x time) ----
// w holds taps side by side: tap k of group g sits in the
// (cout_g x cin_g) block at column k * cin_g, row g * cout_g.
Var conv1d(const Var& x, const Var& w, const Var& b, int stride, int dilation,
           int groups, int kernel);
// Transposed convolution; output length (T-1)*stride + kernel.
Var conv1d_transpose(const Var& x, const Var& w, const Var& b, int stride, int kernel);

// ---- losses ----
Var mse(const Var& a, const Var& b);

// Multi-resolution STFT loss against a fixed reference; returns a 2x1 node
// [spectral_convergence; log_magnitude]. x_hat is a (1 x N) row.
Var stft_loss_pair(const Var& x_hat, const Vec& reference,
                   const audio::StftLossConfig& cfg);

// Identity value, no gradient flow (the stop-gradient barrier).
Var detach(const Var& a);

}  // namespace ktts::ad
