#include "ktts/latent.hpp"

#include <cmath>
#include <string>

#include "ktts/rng.hpp"

namespace ktts::latent {

namespace {
const Scalar kLog2Pi = std::log(2.0 * M_PI);

void check_same_shape(const Mat& a, const Mat& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DataError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                    std::to_string(b.cols()) + ")");
}
}  // namespace

DiagGaussianSeq::DiagGaussianSeq(Mat mean_in, Mat std_in)
    : mean(std::move(mean_in)), std(std::move(std_in)) {
  check_same_shape(mean, std, "DiagGaussianSeq");
  if (mean.cols() < 1) throw DataError("DiagGaussianSeq: needs at least one frame");
  std = std.cwiseMax(kStdFloor);
}

DiagGaussianSeq DiagGaussianSeq::from_log_std(const Mat& mean, const Mat& log_std) {
  return DiagGaussianSeq(
      mean, log_std.array().min(kLogStdMax).max(kLogStdMin).exp().matrix());
}

LatentSeq sample(const DiagGaussianSeq& g, Scalar temperature, uint64_t seed) {
  if (temperature < 0.0) throw DataError("sample: negative temperature");
  LatentSeq out;
  if (temperature == 0.0) {
    out.z = g.mean;
    return out;
  }
  Rng rng(seed);
  Mat eps = rng.normal_mat(g.channels(), g.frames());
  out.z = g.mean + temperature * g.std.cwiseProduct(eps);
  return out;
}

Vec log_prob(const LatentSeq& z, const DiagGaussianSeq& g) {
  check_same_shape(z.z, g.mean, "log_prob");
  Mat w = (z.z - g.mean).cwiseQuotient(g.std);
  Vec quad = 0.5 * w.array().square().colwise().sum().transpose();
  Vec log_det = g.std.array().log().colwise().sum().transpose();
  Scalar norm_const = -0.5 * kLog2Pi * static_cast<Scalar>(g.channels());
  return (norm_const - log_det.array() - quad.array()).matrix();
}

Scalar kl_to_standard_normal(const DiagGaussianSeq& g) {
  auto var = g.std.array().square();
  return 0.5 *
         (var + g.mean.array().square() - 1.0 - var.log()).colwise().sum().mean();
}

Scalar aligned_log_likelihood(const LatentSeq& z, const DiagGaussianSeq& text_prior,
                              const align::AlignmentPath& a) {
  if (static_cast<Index>(a.token_of_frame.size()) != z.z.cols())
    throw DataError("aligned_log_likelihood: path length != frame count");
  Scalar total = 0.0;
  const Index channels = z.z.rows();
  if (channels != text_prior.channels())
    throw DataError("aligned_log_likelihood: channel mismatch");
  for (Index j = 0; j < z.z.cols(); ++j) {
    int tok = a.token_of_frame[static_cast<size_t>(j)];
    if (tok < 0 || tok >= text_prior.frames())
      throw DataError("aligned_log_likelihood: token index " + std::to_string(tok) +
                      " out of range");
    auto mu = text_prior.mean.col(tok).array();
    auto sd = text_prior.std.col(tok).array();
    auto w = (z.z.col(j).array() - mu) / sd;
    total += (-0.5 * kLog2Pi) * static_cast<Scalar>(channels) - sd.log().sum() -
             0.5 * w.square().sum();
  }
  return total;
}

Mat log_likelihood_table(const LatentSeq& z, const DiagGaussianSeq& text_prior) {
  if (z.z.rows() != text_prior.channels())
    throw DataError("log_likelihood_table: channel mismatch");
  const Index c = z.z.rows();
  // Expand sum_c (z - mu)^2 / (2 s^2) into three GEMM-friendly pieces.
  Mat inv_var = text_prior.std.array().square().inverse();
  Vec mu_term =
      0.5 * (text_prior.mean.array().square() * inv_var.array()).colwise().sum().transpose();
  Vec log_det = text_prior.std.array().log().colwise().sum().transpose();
  Mat z2_term = 0.5 * inv_var.transpose() * z.z.array().square().matrix();
  Mat cross = (text_prior.mean.array() * inv_var.array()).matrix().transpose() * z.z;
  Mat logp = -z2_term + cross;
  logp.colwise() -=
      (mu_term + log_det).eval() +
      Vec::Constant(text_prior.frames(), 0.5 * kLog2Pi * static_cast<Scalar>(c));
  return logp;
}

}  // namespace ktts::latent
