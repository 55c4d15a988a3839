#pragma once

#include <cstdint>

#include "ktts/alignment.hpp"
#include "ktts/types.hpp"

namespace ktts::latent {

inline constexpr Scalar kStdFloor = 1e-4;
inline constexpr Scalar kLogStdMin = -9.0;
inline constexpr Scalar kLogStdMax = 4.0;

// Per-frame diagonal Gaussian statistics, channels x frames.
struct DiagGaussianSeq {
  Mat mean;
  Mat std;

  DiagGaussianSeq() = default;
  // Floors std at kStdFloor and checks the shape contract.
  DiagGaussianSeq(Mat mean_in, Mat std_in);

  static DiagGaussianSeq from_log_std(const Mat& mean, const Mat& log_std);

  Index channels() const { return mean.rows(); }
  Index frames() const { return mean.cols(); }
};

struct LatentSeq {
  Mat z;
};

// z = mean + temperature * std .* eps with eps ~ N(0, I) drawn from seed,
// filled column-major so a seed pins the entire draw.
LatentSeq sample(const DiagGaussianSeq& g, Scalar temperature, uint64_t seed);

// Per-frame log densities: frame j gets sum over channels of
// -log(sigma) - (z - mu)^2 / (2 sigma^2) - log(2 pi)/2.
Vec log_prob(const LatentSeq& z, const DiagGaussianSeq& g);

// Mean over frames of the channel-summed KL(q || N(0, 1)) closed form.
Scalar kl_to_standard_normal(const DiagGaussianSeq& g);

// Sum over frames of the log density of z_j under the token Gaussian the
// alignment assigns to frame j.
Scalar aligned_log_likelihood(const LatentSeq& z, const DiagGaussianSeq& text_prior,
                              const align::AlignmentPath& a);

// Channel-summed log-density table logp(i, j) = log N(z_j; mu_i, sigma_i)
// for every token i and frame j; the MAS input.
Mat log_likelihood_table(const LatentSeq& z, const DiagGaussianSeq& text_prior);

}  // namespace ktts::latent
