#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ktts/audio.hpp"
#include "ktts/types.hpp"

namespace ktts::bench {

struct BenchResult {
  Scalar mean = 0;
  Scalar ci95_halfwidth = 0;
  int n = 0;
  std::string unit;  // "seconds" or "ratio"
};

struct MosReport {
  Scalar mos = 0;
  Scalar ci95_halfwidth = 0;
  int n_used = 0;
  int n_excluded = 0;
};

using SynthFn = std::function<audio::Waveform(const std::string&)>;
// Monotonic time in seconds; injectable so tests can script it.
using ClockFn = std::function<Scalar()>;

// Wall-clock per synthesis call over texts x repeats, one warm-up call
// excluded; 95% CI from Student-t with n-1 degrees of freedom.
BenchResult bench_latency(const SynthFn& synth, const std::vector<std::string>& texts,
                          int repeats, ClockFn clock = {});

// Real-time factor: synthesis wall-clock divided by produced audio seconds.
BenchResult bench_rtf(const SynthFn& synth, const std::vector<std::string>& texts,
                      int repeats, ClockFn clock = {});

// Drops ratings <= 1 (only ratings greater than one count), then mean and
// 95% t-interval over the rest.
MosReport aggregate_mos(const std::vector<std::pair<std::string, int>>& ratings);

std::vector<std::pair<std::string, int>> load_ratings_csv(const std::string& path);

// (baseline - ours) / ours * 100; e.g. 0.560 vs 0.517 -> 8.32.
Scalar speedup_percent(Scalar baseline, Scalar ours);

// Two-sided 97.5% Student-t quantile (the half-interval multiplier).
Scalar student_t_975(int dof);

// Sample mean and t-based 95% half-interval.
std::pair<Scalar, Scalar> mean_ci95(const std::vector<Scalar>& values);

std::string bench_human(const BenchResult& r, const std::string& label);
std::string bench_kv(const BenchResult& r, const std::string& prefix);
std::string mos_human(const MosReport& r);
std::string mos_kv(const MosReport& r);

}  // namespace ktts::bench
