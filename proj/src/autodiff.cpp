#include "ktts/autodiff.hpp"

#include <cmath>

namespace ktts::ad {

namespace {

void check_same_shape(const Var& a, const Var& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DataError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                    std::to_string(b.cols()) + ")");
}

void check_same_tape(const Var& a, const Var& b) {
  if (a.tape != b.tape) throw DataError("autodiff: variables live on different tapes");
}

}  // namespace

const Mat& Var::value() const { return tape->value(id); }

Scalar Var::scalar() const {
  const Mat& v = value();
  if (v.size() != 1) throw DataError("Var::scalar: value is not 1x1");
  return v(0, 0);
}

Var Tape::constant(Mat value) { return make_node(std::move(value), false, nullptr); }

Var Tape::leaf(Mat value) { return make_node(std::move(value), true, nullptr); }

Var Tape::make_node(Mat value, bool requires_grad, BackwardFn backward) {
  nodes_.push_back(Node{std::move(value), Mat(), requires_grad, std::move(backward)});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Mat Tape::grad(const Var& v) const {
  const Node& n = nodes_[static_cast<size_t>(v.id)];
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(int id, const Mat& delta) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0)
    n.grad = delta;
  else
    n.grad += delta;
}

void Tape::backward(const Var& root) {
  if (root.tape != this) throw DataError("backward: root from another tape");
  Node& r = nodes_[static_cast<size_t>(root.id)];
  if (r.value.size() != 1) throw DataError("backward: root must be scalar");
  if (!r.requires_grad) return;
  // Interior grads are per-sweep scratch; leaves accumulate across sweeps.
  for (Node& n : nodes_)
    if (n.backward) n.grad.resize(0, 0);
  if (r.backward)
    r.grad = Mat::Ones(1, 1);
  else
    accumulate(root.id, Mat::Ones(1, 1));
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

void Tape::zero_grad() {
  for (Node& n : nodes_) n.grad.resize(0, 0);
}

// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  check_same_tape(a, b);
  check_same_shape(a, b, "add");
  int aid = a.id, bid = b.id;
  return a.tape->make_node(a.value() + b.value(), a.tape->requires_grad(aid) || b.tape->requires_grad(bid),
                           [aid, bid](Tape& t, const Mat& g) {
                             t.accumulate(aid, g);
                             t.accumulate(bid, g);
                           });
}

Var sub(const Var& a, const Var& b) {
  check_same_tape(a, b);
  check_same_shape(a, b, "sub");
  int aid = a.id, bid = b.id;
  return a.tape->make_node(a.value() - b.value(), a.tape->requires_grad(aid) || b.tape->requires_grad(bid),
                           [aid, bid](Tape& t, const Mat& g) {
                             t.accumulate(aid, g);
                             t.accumulate(bid, -g);
                           });
}

Var mul(const Var& a, const Var& b) {
  check_same_tape(a, b);
  check_same_shape(a, b, "mul");
  int aid = a.id, bid = b.id;
  return a.tape->make_node(a.value().cwiseProduct(b.value()),
                           a.tape->requires_grad(aid) || b.tape->requires_grad(bid),
                           [aid, bid](Tape& t, const Mat& g) {
                             if (t.requires_grad(aid)) t.accumulate(aid, g.cwiseProduct(t.value(bid)));
                             if (t.requires_grad(bid)) t.accumulate(bid, g.cwiseProduct(t.value(aid)));
                           });
}

Var scale(const Var& a, Scalar s) {
  int aid = a.id;
  return a.tape->make_node(a.value() * s, a.tape->requires_grad(aid),
                           [aid, s](Tape& t, const Mat& g) { t.accumulate(aid, g * s); });
}

Var add_scalar(const Var& a, Scalar s) {
  int aid = a.id;
  return a.tape->make_node((a.value().array() + s).matrix(), a.tape->requires_grad(aid),
                           [aid](Tape& t, const Mat& g) { t.accumulate(aid, g); });
}

Var relu(const Var& a) {
  int aid = a.id;
  return a.tape->make_node(a.value().cwiseMax(0.0), a.tape->requires_grad(aid),
                           [aid](Tape& t, const Mat& g) {
                             const Mat& x = t.value(aid);
                             t.accumulate(aid, (x.array() > 0.0).select(g, Mat::Zero(g.rows(), g.cols())));
                           });
}

Var leaky_relu(const Var& a, Scalar slope) {
  int aid = a.id;
  Mat y = a.value().cwiseMax(0.0) + slope * a.value().cwiseMin(0.0);
  return a.tape->make_node(std::move(y), a.tape->requires_grad(aid),
                           [aid, slope](Tape& t, const Mat& g) {
                             const Mat& x = t.value(aid);
                             Mat gx = (x.array() > 0.0).select(g, (g.array() * slope).matrix());
                             t.accumulate(aid, gx);
                           });
}

Var prelu(const Var& a, const Var& alpha) {
  check_same_tape(a, alpha);
  if (alpha.cols() != 1 || alpha.rows() != a.rows())
    throw DataError("prelu: alpha must be (rows x 1)");
  int aid = a.id, pid = alpha.id;
  Mat neg = a.value().cwiseMin(0.0);
  Mat y = a.value().cwiseMax(0.0) +
          (neg.array().colwise() * alpha.value().col(0).array()).matrix();
  return a.tape->make_node(std::move(y),
                           a.tape->requires_grad(aid) || alpha.tape->requires_grad(pid),
                           [aid, pid](Tape& t, const Mat& g) {
                             const Mat& x = t.value(aid);
                             const Mat& al = t.value(pid);
                             if (t.requires_grad(aid)) {
                               Mat slopes = Mat::Ones(x.rows(), x.cols());
                               slopes = (x.array() > 0.0)
                                            .select(slopes, slopes.array().colwise() *
                                                                al.col(0).array());
                               t.accumulate(aid, g.cwiseProduct(slopes));
                             }
                             if (t.requires_grad(pid)) {
                               Mat dneg = g.cwiseProduct(x.cwiseMin(0.0));
                               t.accumulate(pid, dneg.rowwise().sum());
                             }
                           });
}

Var tanh_(const Var& a) {
  int aid = a.id;
  Mat y = a.value().array().tanh().matrix();
  return a.tape->make_node(y, a.tape->requires_grad(aid),
                           [aid, y](Tape& t, const Mat& g) {
                             t.accumulate(aid, (g.array() * (1.0 - y.array().square())).matrix());
                           });
}

Var sigmoid(const Var& a) {
  int aid = a.id;
  Mat y = (0.5 * (a.value().array() * 0.5).tanh() + 0.5).matrix();
  return a.tape->make_node(y, a.tape->requires_grad(aid),
                           [aid, y](Tape& t, const Mat& g) {
                             t.accumulate(aid, (g.array() * y.array() * (1.0 - y.array())).matrix());
                           });
}

Var exp_(const Var& a) {
  int aid = a.id;
  Mat y = a.value().array().exp().matrix();
  return a.tape->make_node(y, a.tape->requires_grad(aid),
                           [aid, y](Tape& t, const Mat& g) {
                             t.accumulate(aid, g.cwiseProduct(y));
                           });
}

Var clamp(const Var& a, Scalar lo, Scalar hi) {
  int aid = a.id;
  return a.tape->make_node(a.value().cwiseMax(lo).cwiseMin(hi), a.tape->requires_grad(aid),
                           [aid, lo, hi](Tape& t, const Mat& g) {
                             const Mat& x = t.value(aid);
                             Mat inside = ((x.array() >= lo) && (x.array() <= hi))
                                              .select(g, Mat::Zero(g.rows(), g.cols()));
                             t.accumulate(aid, inside);
                           });
}

Var slice_cols(const Var& a, Index start, Index len) {
  if (start < 0 || len < 1 || start + len > a.cols())
    throw DataError("slice_cols: range out of bounds");
  int aid = a.id;
  Index rows = a.rows(), cols = a.cols();
  return a.tape->make_node(a.value().middleCols(start, len), a.tape->requires_grad(aid),
                           [aid, start, rows, cols](Tape& t, const Mat& g) {
                             Mat full = Mat::Zero(rows, cols);
                             full.middleCols(start, g.cols()) = g;
                             t.accumulate(aid, full);
                           });
}

Var slice_rows(const Var& a, Index start, Index len) {
  if (start < 0 || len < 1 || start + len > a.rows())
    throw DataError("slice_rows: range out of bounds");
  int aid = a.id;
  Index rows = a.rows();
  return a.tape->make_node(a.value().middleRows(start, len), a.tape->requires_grad(aid),
                           [aid, start, rows](Tape& t, const Mat& g) {
                             Mat full = Mat::Zero(rows, g.cols());
                             full.middleRows(start, g.rows()) = g;
                             t.accumulate(aid, full);
                           });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DataError("concat_rows: no parts");
  Index cols = parts[0].cols();
  Index rows = 0;
  bool rg = false;
  for (const Var& p : parts) {
    check_same_tape(parts[0], p);
    if (p.cols() != cols) throw DataError("concat_rows: column mismatch");
    rows += p.rows();
    rg = rg || p.tape->requires_grad(p.id);
  }
  Mat y(rows, cols);
  std::vector<int> ids;
  std::vector<Index> sizes;
  Index at = 0;
  for (const Var& p : parts) {
    y.middleRows(at, p.rows()) = p.value();
    ids.push_back(p.id);
    sizes.push_back(p.rows());
    at += p.rows();
  }
  return parts[0].tape->make_node(std::move(y), rg,
                                  [ids, sizes](Tape& t, const Mat& g) {
                                    Index at = 0;
                                    for (size_t i = 0; i < ids.size(); ++i) {
                                      t.accumulate(ids[i], g.middleRows(at, sizes[i]));
                                      at += sizes[i];
                                    }
                                  });
}

Var transpose(const Var& a) {
  int aid = a.id;
  return a.tape->make_node(a.value().transpose(), a.tape->requires_grad(aid),
                           [aid](Tape& t, const Mat& g) { t.accumulate(aid, g.transpose()); });
}

Var pad_cols(const Var& a, Index left, Index right) {
  if (left < 0 || right < 0) throw DataError("pad_cols: negative padding");
  int aid = a.id;
  Index rows = a.rows(), cols = a.cols();
  Mat y = Mat::Zero(rows, cols + left + right);
  y.middleCols(left, cols) = a.value();
  return a.tape->make_node(std::move(y), a.tape->requires_grad(aid),
                           [aid, left, cols](Tape& t, const Mat& g) {
                             t.accumulate(aid, g.middleCols(left, cols));
                           });
}

Var gather_cols(const Var& a, const std::vector<int>& idx) {
  Index cols = a.cols();
  for (int i : idx)
    if (i < 0 || i >= cols) throw DataError("gather_cols: index out of range");
  int aid = a.id;
  Mat y(a.rows(), static_cast<Index>(idx.size()));
  const Mat& x = a.value();
  for (size_t j = 0; j < idx.size(); ++j) y.col(static_cast<Index>(j)) = x.col(idx[j]);
  Index rows = a.rows();
  return a.tape->make_node(std::move(y), a.tape->requires_grad(aid),
                           [aid, idx, rows, cols](Tape& t, const Mat& g) {
                             Mat full = Mat::Zero(rows, cols);
                             for (size_t j = 0; j < idx.size(); ++j)
                               full.col(idx[j]) += g.col(static_cast<Index>(j));
                             t.accumulate(aid, full);
                           });
}

Var sum(const Var& a) {
  int aid = a.id;
  Index rows = a.rows(), cols = a.cols();
  Mat y(1, 1);
  y(0, 0) = a.value().sum();
  return a.tape->make_node(std::move(y), a.tape->requires_grad(aid),
                           [aid, rows, cols](Tape& t, const Mat& g) {
                             t.accumulate(aid, Mat::Constant(rows, cols, g(0, 0)));
                           });
}

Var mean(const Var& a) {
  return scale(sum(a), 1.0 / static_cast<Scalar>(a.value().size()));
}

Var matmul(const Var& a, const Var& b) {
  check_same_tape(a, b);
  if (a.cols() != b.rows()) throw DataError("matmul: inner dimension mismatch");
  int aid = a.id, bid = b.id;
  return a.tape->make_node(a.value() * b.value(),
                           a.tape->requires_grad(aid) || b.tape->requires_grad(bid),
                           [aid, bid](Tape& t, const Mat& g) {
                             if (t.requires_grad(aid)) t.accumulate(aid, g * t.value(bid).transpose());
                             if (t.requires_grad(bid)) t.accumulate(bid, t.value(aid).transpose() * g);
                           });
}

Var add_col_broadcast(const Var& a, const Var& col) {
  check_same_tape(a, col);
  if (col.cols() != 1 || col.rows() != a.rows())
    throw DataError("add_col_broadcast: bias must be (rows x 1)");
  int aid = a.id, bid = col.id;
  Mat y = a.value();
  y.colwise() += col.value().col(0);
  return a.tape->make_node(std::move(y),
                           a.tape->requires_grad(aid) || col.tape->requires_grad(bid),
                           [aid, bid](Tape& t, const Mat& g) {
                             t.accumulate(aid, g);
                             if (t.requires_grad(bid)) t.accumulate(bid, g.rowwise().sum());
                           });
}

Var affine(const Var& w, const Var& x, const Var& b) {
  Var y = matmul(w, x);
  if (b.valid()) y = add_col_broadcast(y, b);
  return y;
}

Var softmax_cols(const Var& a) {
  int aid = a.id;
  Mat y = a.value();
  for (Index j = 0; j < y.cols(); ++j) {
    Vec c = y.col(j);
    c.array() -= c.maxCoeff();
    c = c.array().exp();
    y.col(j) = c / c.sum();
  }
  return a.tape->make_node(y, a.tape->requires_grad(aid),
                           [aid, y](Tape& t, const Mat& g) {
                             Mat gx(y.rows(), y.cols());
                             for (Index j = 0; j < y.cols(); ++j) {
                               Scalar dot = y.col(j).dot(g.col(j));
                               gx.col(j) = (y.col(j).array() * (g.col(j).array() - dot)).matrix();
                             }
                             t.accumulate(aid, gx);
                           });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, Scalar eps) {
  check_same_tape(x, gamma);
  check_same_tape(x, beta);
  if (gamma.cols() != 1 || beta.cols() != 1 || gamma.rows() != x.rows() ||
      beta.rows() != x.rows())
    throw DataError("layer_norm: gain/shift must be (rows x 1)");
  int xid = x.id, gid = gamma.id, bid = beta.id;
  const Mat& v = x.value();
  Eigen::RowVectorXd mu = v.colwise().mean();
  Mat centered = v.rowwise() - mu;
  Eigen::RowVectorXd var = centered.array().square().colwise().mean();
  Eigen::RowVectorXd inv_sd = (var.array() + eps).rsqrt();
  Mat xhat = (centered.array().rowwise() * inv_sd.array()).matrix();
  Mat y = (xhat.array().colwise() * gamma.value().col(0).array()).matrix();
  y.colwise() += beta.value().col(0);
  bool rg = x.tape->requires_grad(xid) || gamma.tape->requires_grad(gid) ||
            beta.tape->requires_grad(bid);
  return x.tape->make_node(
      std::move(y), rg,
      [xid, gid, bid, xhat, inv_sd](Tape& t, const Mat& g) {
        if (t.requires_grad(gid)) t.accumulate(gid, g.cwiseProduct(xhat).rowwise().sum());
        if (t.requires_grad(bid)) t.accumulate(bid, g.rowwise().sum());
        if (t.requires_grad(xid)) {
          const Mat& gam = t.value(gid);
          Mat gxhat = (g.array().colwise() * gam.col(0).array()).matrix();
          Eigen::RowVectorXd m1 = gxhat.colwise().mean();
          Eigen::RowVectorXd m2 = gxhat.cwiseProduct(xhat).colwise().mean();
          Mat gx = gxhat;
          gx.rowwise() -= m1;
          gx -= (xhat.array().rowwise() * m2.array()).matrix();
          gx = (gx.array().rowwise() * inv_sd.array()).matrix();
          t.accumulate(xid, gx);
        }
      });
}

namespace {

std::vector<Index> tap_indices(Index t_out, int k, int stride, int dilation) {
  std::vector<Index> idx(static_cast<size_t>(t_out));
  for (Index t = 0; t < t_out; ++t)
    idx[static_cast<size_t>(t)] = static_cast<Index>(k) * dilation + t * stride;
  return idx;
}

}  // namespace

Var conv1d(const Var& x, const Var& w, const Var& b, int stride, int dilation,
           int groups, int kernel) {
  check_same_tape(x, w);
  if (stride < 1 || dilation < 1 || groups < 1 || kernel < 1)
    throw DataError("conv1d: bad hyperparameters");
  const Index cin = x.rows();
  const Index cout = w.rows();
  if (cin % groups != 0 || cout % groups != 0)
    throw DataError("conv1d: groups must divide channel counts");
  const Index cin_g = cin / groups;
  const Index cout_g = cout / groups;
  if (w.cols() != cin_g * kernel)
    throw DataError("conv1d: weight has " + std::to_string(w.cols()) +
                    " columns, expected " + std::to_string(cin_g * kernel));
  const Index span = static_cast<Index>(dilation) * (kernel - 1) + 1;
  if (x.cols() < span)
    throw DataError("conv1d: input of " + std::to_string(x.cols()) +
                    " frames is shorter than the kernel span " + std::to_string(span));
  const Index t_out = (x.cols() - span) / stride + 1;

  Mat y = Mat::Zero(cout, t_out);
  const Mat& xv = x.value();
  const Mat& wv = w.value();
  for (int k = 0; k < kernel; ++k) {
    auto idx = tap_indices(t_out, k, stride, dilation);
    for (int g = 0; g < groups; ++g) {
      Mat gathered = xv.middleRows(g * cin_g, cin_g)(Eigen::all, idx);
      y.middleRows(g * cout_g, cout_g).noalias() +=
          wv.block(g * cout_g, static_cast<Index>(k) * cin_g, cout_g, cin_g) * gathered;
    }
  }
  int xid = x.id, wid = w.id;
  bool rg = x.tape->requires_grad(xid) || w.tape->requires_grad(wid);
  Var out = x.tape->make_node(
      std::move(y), rg,
      [xid, wid, stride, dilation, groups, kernel, cin_g, cout_g](Tape& t, const Mat& g) {
        const Mat& xv = t.value(xid);
        const Mat& wv = t.value(wid);
        const Index t_out = g.cols();
        Mat gx, gw;
        if (t.requires_grad(xid)) gx = Mat::Zero(xv.rows(), xv.cols());
        if (t.requires_grad(wid)) gw = Mat::Zero(wv.rows(), wv.cols());
        for (int k = 0; k < kernel; ++k) {
          auto idx = tap_indices(t_out, k, stride, dilation);
          for (int gi = 0; gi < groups; ++gi) {
            auto gy = g.middleRows(gi * cout_g, cout_g);
            auto wk = wv.block(gi * cout_g, static_cast<Index>(k) * cin_g, cout_g, cin_g);
            if (t.requires_grad(xid)) {
              Mat p = wk.transpose() * gy;  // cin_g x t_out
              auto gxg = gx.middleRows(gi * cin_g, cin_g);
              for (Index c = 0; c < t_out; ++c) gxg.col(idx[static_cast<size_t>(c)]) += p.col(c);
            }
            if (t.requires_grad(wid)) {
              Mat gathered = xv.middleRows(gi * cin_g, cin_g)(Eigen::all, idx);
              gw.block(gi * cout_g, static_cast<Index>(k) * cin_g, cout_g, cin_g).noalias() +=
                  gy * gathered.transpose();
            }
          }
        }
        if (t.requires_grad(xid)) t.accumulate(xid, gx);
        if (t.requires_grad(wid)) t.accumulate(wid, gw);
      });
  if (b.valid()) out = add_col_broadcast(out, b);
  return out;
}

Var conv1d_transpose(const Var& x, const Var& w, const Var& b, int stride, int kernel) {
  check_same_tape(x, w);
  if (stride < 1 || kernel < 1) throw DataError("conv1d_transpose: bad hyperparameters");
  const Index cin = x.rows();
  const Index cout = w.rows();
  if (w.cols() != cin * kernel)
    throw DataError("conv1d_transpose: weight has " + std::to_string(w.cols()) +
                    " columns, expected " + std::to_string(cin * kernel));
  const Index t_in = x.cols();
  const Index t_out = (t_in - 1) * stride + kernel;
  Mat y = Mat::Zero(cout, t_out);
  const Mat& xv = x.value();
  const Mat& wv = w.value();
  for (int k = 0; k < kernel; ++k) {
    Mat p = wv.middleCols(static_cast<Index>(k) * cin, cin) * xv;  // cout x t_in
    for (Index t = 0; t < t_in; ++t) y.col(t * stride + k) += p.col(t);
  }
  int xid = x.id, wid = w.id;
  bool rg = x.tape->requires_grad(xid) || w.tape->requires_grad(wid);
  Var out = x.tape->make_node(
      std::move(y), rg,
      [xid, wid, stride, kernel, cin](Tape& t, const Mat& g) {
        const Mat& xv = t.value(xid);
        const Mat& wv = t.value(wid);
        const Index t_in = xv.cols();
        Mat gx, gw;
        if (t.requires_grad(xid)) gx = Mat::Zero(xv.rows(), xv.cols());
        if (t.requires_grad(wid)) gw = Mat::Zero(wv.rows(), wv.cols());
        for (int k = 0; k < kernel; ++k) {
          auto idx = tap_indices(t_in, k, stride, 1);
          Mat gathered = g(Eigen::all, idx);  // cout x t_in
          if (t.requires_grad(xid))
            gx.noalias() += wv.middleCols(static_cast<Index>(k) * cin, cin).transpose() * gathered;
          if (t.requires_grad(wid))
            gw.middleCols(static_cast<Index>(k) * cin, cin).noalias() += gathered * xv.transpose();
        }
        if (t.requires_grad(xid)) t.accumulate(xid, gx);
        if (t.requires_grad(wid)) t.accumulate(wid, gw);
      });
  if (b.valid()) out = add_col_broadcast(out, b);
  return out;
}

Var mse(const Var& a, const Var& b) {
  Var d = sub(a, b);
  return mean(mul(d, d));
}

Var stft_loss_pair(const Var& x_hat, const Vec& reference,
                   const audio::StftLossConfig& cfg) {
  if (x_hat.rows() != 1) throw DataError("stft_loss_pair: x_hat must be a 1 x N row");
  audio::Waveform wh{x_hat.value().row(0).transpose(), audio::kSampleRate};
  audio::Waveform wx{reference, audio::kSampleRate};
  audio::StftLossGrad r = audio::multi_res_stft_loss_grad(wh, wx, cfg);
  Mat y(2, 1);
  y << r.loss.sc, r.loss.mag;
  int xid = x_hat.id;
  Vec gsc = r.grad_sc, gmag = r.grad_mag;
  return x_hat.tape->make_node(std::move(y), x_hat.tape->requires_grad(xid),
                               [xid, gsc, gmag](Tape& t, const Mat& g) {
                                 Mat gx = (g(0, 0) * gsc + g(1, 0) * gmag).transpose();
                                 t.accumulate(xid, gx);
                               });
}

Var detach(const Var& a) { return a.tape->constant(a.value()); }

}  // namespace ktts::ad
