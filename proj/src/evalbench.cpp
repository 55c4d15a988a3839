#include "ktts/evalbench.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "ktts/csv.hpp"

namespace ktts::bench {

namespace {

Scalar steady_seconds() {
  auto now = std::chrono::steady_clock::now().time_since_epoch();
  return std::chrono::duration<Scalar>(now).count();
}

// Regularized incomplete beta by Lentz's continued fraction.
Scalar betacf(Scalar a, Scalar b, Scalar x) {
  const Scalar tiny = 1e-300;
  const Scalar eps = 1e-15;
  Scalar qab = a + b, qap = a + 1.0, qam = a - 1.0;
  Scalar c = 1.0;
  Scalar d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  Scalar h = d;
  for (int m = 1; m <= 300; ++m) {
    int m2 = 2 * m;
    Scalar aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    Scalar del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

Scalar incbeta(Scalar a, Scalar b, Scalar x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  Scalar ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                    a * std::log(x) + b * std::log(1.0 - x);
  Scalar front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

// P(T <= t) for Student-t with nu degrees of freedom, t >= 0.
Scalar t_cdf(Scalar t, Scalar nu) {
  Scalar x = nu / (nu + t * t);
  return 1.0 - 0.5 * incbeta(nu / 2.0, 0.5, x);
}

BenchResult run_bench(const SynthFn& synth, const std::vector<std::string>& texts,
                      int repeats, ClockFn clock, bool rtf) {
  if (repeats < 2) throw DataError("bench: repeats must be >= 2");
  if (texts.empty()) throw DataError("bench: no texts");
  if (!clock) clock = steady_seconds;

  auto run_one = [&](const std::string& text) -> std::pair<Scalar, Scalar> {
    Scalar t0 = clock();
    audio::Waveform w;
    try {
      w = synth(text);
    } catch (const std::exception& e) {
      throw DataError("bench: synthesis failed on \"" + text + "\": " + e.what());
    }
    Scalar dt = clock() - t0;
    Scalar audio_s = static_cast<Scalar>(w.samples.size()) / w.sample_rate;
    return {dt, audio_s};
  };

  run_one(texts[0]);  // warm-up, excluded

  std::vector<Scalar> values;
  values.reserve(texts.size() * static_cast<size_t>(repeats));
  for (int r = 0; r < repeats; ++r) {
    for (const std::string& text : texts) {
      auto [dt, audio_s] = run_one(text);
      if (rtf) {
        if (audio_s <= 0.0)
          throw DataError("bench: zero-length synthesis output for \"" + text + "\"");
        values.push_back(dt / audio_s);
      } else {
        values.push_back(dt);
      }
    }
  }
  auto [mean, hw] = mean_ci95(values);
  BenchResult out;
  out.mean = mean;
  out.ci95_halfwidth = hw;
  out.n = static_cast<int>(values.size());
  out.unit = rtf ? "ratio" : "seconds";
  return out;
}

}  // namespace

Scalar student_t_975(int dof) {
  if (dof < 1) throw DataError("student_t_975: dof must be >= 1");
  Scalar nu = static_cast<Scalar>(dof);
  Scalar lo = 0.0, hi = 1000.0;
  while (t_cdf(hi, nu) < 0.975) hi *= 2.0;  // dof 1 needs ~12.7; generous start
  for (int it = 0; it < 200; ++it) {
    Scalar mid = 0.5 * (lo + hi);
    if (t_cdf(mid, nu) < 0.975)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-12 * std::max(1.0, hi)) break;
  }
  return 0.5 * (lo + hi);
}

std::pair<Scalar, Scalar> mean_ci95(const std::vector<Scalar>& values) {
  if (values.size() < 2) throw DataError("mean_ci95: need at least two samples");
  const Scalar n = static_cast<Scalar>(values.size());
  Scalar mean = 0;
  for (Scalar v : values) mean += v;
  mean /= n;
  Scalar ss = 0;
  for (Scalar v : values) ss += (v - mean) * (v - mean);
  Scalar sd = std::sqrt(ss / (n - 1.0));
  Scalar hw = student_t_975(static_cast<int>(values.size()) - 1) * sd / std::sqrt(n);
  return {mean, hw};
}

BenchResult bench_latency(const SynthFn& synth, const std::vector<std::string>& texts,
                          int repeats, ClockFn clock) {
  return run_bench(synth, texts, repeats, std::move(clock), false);
}

BenchResult bench_rtf(const SynthFn& synth, const std::vector<std::string>& texts,
                      int repeats, ClockFn clock) {
  return run_bench(synth, texts, repeats, std::move(clock), true);
}

MosReport aggregate_mos(const std::vector<std::pair<std::string, int>>& ratings) {
  if (ratings.empty()) throw DataError("aggregate_mos: no ratings");
  std::vector<Scalar> used;
  MosReport r;
  for (const auto& [id, score] : ratings) {
    if (score < 1 || score > 5)
      throw DataError("aggregate_mos: score " + std::to_string(score) + " for '" + id +
                      "' outside 1..5");
    if (score > 1)
      used.push_back(static_cast<Scalar>(score));
    else
      ++r.n_excluded;
  }
  if (used.empty()) throw DataError("aggregate_mos: no usable ratings after exclusion");
  r.n_used = static_cast<int>(used.size());
  if (used.size() == 1) {
    r.mos = used[0];
    r.ci95_halfwidth = 0.0;
  } else {
    auto [mean, hw] = mean_ci95(used);
    r.mos = mean;
    r.ci95_halfwidth = hw;
  }
  return r;
}

std::vector<std::pair<std::string, int>> load_ratings_csv(const std::string& path) {
  auto rows = csv::parse_file(path);
  if (rows.empty()) throw DataError(path + ": empty ratings file");
  if (rows[0].size() != 2 || rows[0][0] != "sample_id" || rows[0][1] != "score")
    throw DataError(path + ": expected header sample_id,score");
  std::vector<std::pair<std::string, int>> out;
  for (size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 2)
      throw DataError(path + " row " + std::to_string(r + 1) + ": expected 2 fields");
    int score;
    try {
      size_t pos = 0;
      score = std::stoi(rows[r][1], &pos);
      if (pos != rows[r][1].size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw DataError(path + " row " + std::to_string(r + 1) + ": bad score '" + rows[r][1] +
                      "'");
    }
    out.emplace_back(rows[r][0], score);
  }
  return out;
}

Scalar speedup_percent(Scalar baseline, Scalar ours) {
  if (ours <= 0.0) throw DataError("speedup_percent: ours must be positive");
  return (baseline - ours) / ours * 100.0;
}

std::string bench_human(const BenchResult& r, const std::string& label) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(r.unit == "ratio" ? 4 : 3);
  out << label << ": " << r.mean << " +/- " << r.ci95_halfwidth << " " << r.unit << "  (n="
      << r.n << ", 95% CI)";
  return out.str();
}

std::string bench_kv(const BenchResult& r, const std::string& prefix) {
  std::ostringstream out;
  out.precision(12);
  out << prefix << ".mean = " << r.mean << "\n"
      << prefix << ".ci95_halfwidth = " << r.ci95_halfwidth << "\n"
      << prefix << ".n = " << r.n << "\n"
      << prefix << ".unit = " << r.unit << "\n";
  return out.str();
}

std::string mos_human(const MosReport& r) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(2);
  out << "MOS: " << r.mos << " +/- " << r.ci95_halfwidth << "  (used " << r.n_used
      << ", excluded " << r.n_excluded << ")";
  return out.str();
}

std::string mos_kv(const MosReport& r) {
  std::ostringstream out;
  out.precision(12);
  out << "mos = " << r.mos << "\n"
      << "ci95_halfwidth = " << r.ci95_halfwidth << "\n"
      << "n_used = " << r.n_used << "\n"
      << "n_excluded = " << r.n_excluded << "\n";
  return out.str();
}

}  // namespace ktts::bench
