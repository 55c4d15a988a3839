#pragma once

#include <vector>

#include "ktts/types.hpp"

namespace ktts::align {

// Monotone surjective map from latent frames to text tokens.
struct AlignmentPath {
  std::vector<int> token_of_frame;

  // Enforces: first 0, last n_tokens-1, steps of 0 or +1.
  void validate(int n_tokens) const;
};

struct Durations {
  std::vector<int> d;  // frames per token, all >= 1

  int total() const;
};

// Maximum-likelihood monotone surjective alignment over per-token/per-frame
// log-likelihoods logp (n_tokens x n_frames), by dynamic programming
//   Q[i,j] = logp[i,j] + max(Q[i-1,j-1], Q[i,j-1]),
// backtracking from the bottom-right corner. Ties prefer staying on the
// current token. Q is accumulated in double precision.
AlignmentPath mas(const Mat& logp);

// Sum of the DP path's log-likelihood entries; convenience for tests/training.
Scalar path_value(const Mat& logp, const AlignmentPath& path);

Durations durations_from_alignment(const AlignmentPath& path);

// Repeats column i of each statistic d[i] times, realizing the alignment a
// duration sequence implies.
Mat expand_by_durations(const Mat& token_cols, const Durations& d);

}  // namespace ktts::align
