#include "ktts/alignment.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace ktts::align {

namespace {
constexpr Scalar kNegInf = -std::numeric_limits<Scalar>::infinity();
}

void AlignmentPath::validate(int n_tokens) const {
  if (token_of_frame.empty()) throw DataError("AlignmentPath: empty");
  if (token_of_frame.front() != 0) throw DataError("AlignmentPath: must start at token 0");
  if (token_of_frame.back() != n_tokens - 1)
    throw DataError("AlignmentPath: must end at the last token");
  for (size_t j = 1; j < token_of_frame.size(); ++j) {
    int step = token_of_frame[j] - token_of_frame[j - 1];
    if (step != 0 && step != 1)
      throw DataError("AlignmentPath: non-monotone step at frame " + std::to_string(j));
  }
}

int Durations::total() const { return std::accumulate(d.begin(), d.end(), 0); }

AlignmentPath mas(const Mat& logp) {
  const Index n_tokens = logp.rows();
  const Index n_frames = logp.cols();
  if (n_tokens < 1 || n_frames < 1) throw DataError("mas: empty log-likelihood matrix");
  if (n_frames < n_tokens)
    throw DataError("mas: " + std::to_string(n_frames) + " frames cannot cover " +
                    std::to_string(n_tokens) + " tokens");
  if (!logp.allFinite()) throw DataError("mas: non-finite log-likelihood");

  // Q[i,j] is only reachable for i <= j and enough frames left to finish;
  // unreachable cells stay at -inf and never win the max.
  Mat q = Mat::Constant(n_tokens, n_frames, kNegInf);
  q(0, 0) = logp(0, 0);
  for (Index j = 1; j < n_frames; ++j) {
    Index i_lo = std::max<Index>(0, n_tokens - (n_frames - j));
    Index i_hi = std::min(j, n_tokens - 1);
    for (Index i = i_lo; i <= i_hi; ++i) {
      Scalar stay = q(i, j - 1);
      Scalar advance = i > 0 ? q(i - 1, j - 1) : kNegInf;
      q(i, j) = logp(i, j) + std::max(stay, advance);
    }
  }

  AlignmentPath path;
  path.token_of_frame.assign(n_frames, 0);
  Index i = n_tokens - 1;
  for (Index j = n_frames - 1; j > 0; --j) {
    path.token_of_frame[j] = static_cast<int>(i);
    if (i == 0) continue;
    // Tie-break: stay on the current token.
    if (q(i, j - 1) >= q(i - 1, j - 1)) continue;
    --i;
  }
  path.token_of_frame[0] = 0;
  if (i != 0) throw DataError("mas: backtrack failed to reach token 0");
  return path;
}

Scalar path_value(const Mat& logp, const AlignmentPath& path) {
  Scalar v = 0.0;
  for (size_t j = 0; j < path.token_of_frame.size(); ++j)
    v += logp(path.token_of_frame[j], static_cast<Index>(j));
  return v;
}

Durations durations_from_alignment(const AlignmentPath& path) {
  if (path.token_of_frame.empty()) throw DataError("durations_from_alignment: empty path");
  int n_tokens = path.token_of_frame.back() + 1;
  path.validate(n_tokens);
  Durations out;
  out.d.assign(n_tokens, 0);
  for (int tok : path.token_of_frame) out.d[tok] += 1;
  return out;
}

Mat expand_by_durations(const Mat& token_cols, const Durations& d) {
  if (static_cast<size_t>(token_cols.cols()) != d.d.size())
    throw DataError("expand_by_durations: " + std::to_string(token_cols.cols()) +
                    " columns vs " + std::to_string(d.d.size()) + " durations");
  Index total = 0;
  for (int di : d.d) {
    if (di < 1) throw DataError("expand_by_durations: duration < 1");
    total += di;
  }
  Mat out(token_cols.rows(), total);
  Index col = 0;
  for (size_t i = 0; i < d.d.size(); ++i)
    for (int r = 0; r < d.d[i]; ++r) out.col(col++) = token_cols.col(static_cast<Index>(i));
  return out;
}

}  // namespace ktts::align
