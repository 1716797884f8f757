#pragma once

#include <algorithm>
#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/non_central_t.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "lpv/core.hpp"
#include "lpv/rng.hpp"

namespace lpv::stats {

// p-value clamp for zero-variance paired differences (|t| -> infinity)
inline constexpr double kMinPValue = 1e-12;

inline double mean(const std::vector<double>& x) {
  double s = 0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double sample_sd(const std::vector<double>& x) {
  if (x.size() < 2) return 0.0;
  double m = mean(x), s = 0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

struct interval {
  double low = 0, high = 0;
};

// BCa bootstrap interval for the mean: bias correction from the bootstrap
// distribution, acceleration from jackknife skewness, interpolated
// order-statistic quantiles. Degenerate inputs collapse to a point interval.
inline interval bca_ci(const std::vector<double>& samples, double level = 0.95,
                       int n_boot = 10000, std::uint64_t boot_seed = 0x9d5a) {
  const int n = static_cast<int>(samples.size());
  if (n < 2) throw config_error("bca_ci: need at least 2 samples");
  const double theta = mean(samples);
  bool degenerate = true;
  for (double v : samples)
    if (v != samples.front()) {
      degenerate = false;
      break;
    }
  if (degenerate) return {theta, theta};

  rng r = rng::stream(boot_seed, "bca-bootstrap");
  std::vector<double> boots(n_boot);
  for (int b = 0; b < n_boot; ++b) {
    double s = 0;
    for (int i = 0; i < n; ++i)
      s += samples[r.bounded(static_cast<std::uint64_t>(n))];
    boots[b] = s / n;
  }
  std::sort(boots.begin(), boots.end());

  // bias correction from the mid-ranked position of theta-hat
  int n_less = 0, n_eq = 0;
  for (double b : boots) {
    if (b < theta) ++n_less;
    if (b == theta) ++n_eq;
  }
  double frac = (n_less + 0.5 * n_eq) / n_boot;
  if (frac <= 0.0 || frac >= 1.0) return {theta, theta};
  boost::math::normal norm01;
  double z0 = boost::math::quantile(norm01, frac);

  // jackknife acceleration
  double total = 0;
  for (double v : samples) total += v;
  std::vector<double> jack(n);
  for (int i = 0; i < n; ++i) jack[i] = (total - samples[i]) / (n - 1);
  double jm = mean(jack);
  double num = 0, den = 0;
  for (double v : jack) {
    double d = jm - v;
    num += d * d * d;
    den += d * d;
  }
  double a = den > 0 ? num / (6.0 * std::pow(den, 1.5)) : 0.0;

  auto adjusted = [&](double z) {
    double w = z0 + (z0 + z) / (1.0 - a * (z0 + z));
    return boost::math::cdf(norm01, w);
  };
  double zlo = boost::math::quantile(norm01, (1.0 - level) / 2.0);
  double a1 = adjusted(zlo);
  double a2 = adjusted(-zlo);

  auto quantile_at = [&](double alpha) {
    double pos = alpha * (n_boot - 1);
    int lo = static_cast<int>(std::floor(pos));
    int hi = std::min(lo + 1, n_boot - 1);
    double f = pos - lo;
    return boots[lo] * (1.0 - f) + boots[hi] * f;
  };
  return {quantile_at(a1), quantile_at(a2)};
}

struct t_result {
  double t = 0, p = 1;
};

// two-sided paired t on per-seed differences, df = n-1
inline t_result paired_t(const std::vector<double>& a,
                         const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw config_error("paired_t: need equal-length samples, n >= 2");
  const int n = static_cast<int>(a.size());
  std::vector<double> d(n);
  for (int i = 0; i < n; ++i) d[i] = a[i] - b[i];
  double md = mean(d), sd = sample_sd(d);
  if (sd == 0.0) {
    if (md == 0.0) return {0.0, 1.0};
    // all differences equal and non-zero: |t| is unbounded, clamp p
    return {md > 0 ? std::numeric_limits<double>::infinity()
                   : -std::numeric_limits<double>::infinity(),
            kMinPValue};
  }
  double t = md / (sd / std::sqrt(static_cast<double>(n)));
  boost::math::students_t dist(n - 1);
  double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return {t, std::max(p, kMinPValue)};
}

// step-down Holm adjustment; returns corrected p in the input order
inline std::vector<double> holm_correct(const std::vector<double>& p) {
  const int m = static_cast<int>(p.size());
  std::vector<int> order(m);
  for (int i = 0; i < m; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](int x, int y) { return p[x] < p[y]; });
  std::vector<double> out(m);
  double running = 0.0;
  for (int rank = 0; rank < m; ++rank) {
    double adj = (m - rank) * p[order[rank]];
    running = std::max(running, adj);
    out[order[rank]] = std::min(1.0, running);
  }
  return out;
}

// paired Cohen's d: mean(diff) / sd(diff); zero-variance differences map to
// a signed infinity sentinel rather than throwing
inline double cohens_d_paired(const std::vector<double>& a,
                              const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw config_error("cohens_d_paired: need equal-length samples, n >= 2");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  double md = mean(d), sd = sample_sd(d);
  if (sd == 0.0) {
    if (md == 0.0) return 0.0;
    return md > 0 ? std::numeric_limits<double>::infinity()
                  : -std::numeric_limits<double>::infinity();
  }
  return md / sd;
}

// power of the two-sided paired t-test via the noncentral t distribution
// with noncentrality d * sqrt(n)
inline double power_paired_t(double d, int n, double alpha = 0.05) {
  if (n < 2) throw config_error("power_paired_t: n must be >= 2");
  const double df = n - 1;
  boost::math::students_t tdist(df);
  double tcrit = boost::math::quantile(tdist, 1.0 - alpha / 2.0);
  double ncp = d * std::sqrt(static_cast<double>(n));
  if (std::abs(ncp) > 100.0) return ncp == 0.0 ? alpha : 1.0;
  boost::math::non_central_t nct(df, ncp);
  double upper = boost::math::cdf(boost::math::complement(nct, tcrit));
  double lower = boost::math::cdf(nct, -tcrit);
  return upper + lower;
}

// super-additivity of two ablation deltas: the joint drop relative to the
// additive prediction. Matches the published pairwise table, e.g.
// (-5.5, -3.2, -7.0) -> +1.7.
inline double interaction_strength(double delta_a, double delta_b,
                                   double delta_ab) {
  return delta_ab - (delta_a + delta_b);
}

enum class stat_status { adequate, borderline, exploratory };

inline const char* to_string(stat_status s) {
  switch (s) {
    case stat_status::adequate:
      return "Adequate";
    case stat_status::borderline:
      return "Borderline";
    default:
      return "Exploratory";
  }
}

// status thresholds; Adequate takes precedence over the overlapping
// Borderline power band
inline stat_status status_label(double d, double power) {
  if (std::abs(d) >= 2.0 && power > 0.80) return stat_status::adequate;
  if (power >= 0.75 && power <= 0.85) return stat_status::borderline;
  return stat_status::exploratory;
}

struct stat_report {
  double mean = 0;
  double ci_low = 0, ci_high = 0;
  double p_raw = 1, p_holm = 1;
  double d = 0;
  double power = 0;
  stat_status status = stat_status::exploratory;
};

// per-comparison report against a baseline, paired by seed index; p_holm is
// filled in by the caller once all comparisons are known
inline stat_report compare_paired(const std::vector<double>& variant,
                                  const std::vector<double>& baseline,
                                  std::uint64_t boot_seed = 0x9d5a) {
  stat_report r;
  std::vector<double> diff(variant.size());
  for (std::size_t i = 0; i < variant.size(); ++i)
    diff[i] = variant[i] - baseline[i];
  r.mean = mean(diff);
  auto ci = bca_ci(diff, 0.95, 10000, boot_seed);
  r.ci_low = ci.low;
  r.ci_high = ci.high;
  auto t = paired_t(variant, baseline);
  r.p_raw = t.p;
  r.d = cohens_d_paired(variant, baseline);
  double d_for_power =
      std::isinf(r.d) ? 100.0 : std::abs(r.d);
  r.power = power_paired_t(d_for_power, static_cast<int>(variant.size()));
  r.status = status_label(r.d, r.power);
  return r;
}

// exact binomial central interval for the success fraction at a given
// success probability, e.g. the chance band for a frozen random classifier
inline interval binomial_fraction_interval(int n, double p,
                                           double confidence = 0.99) {
  boost::math::binomial dist(n, p);
  double tail = (1.0 - confidence) / 2.0;
  double lo = boost::math::quantile(dist, tail);
  double hi = boost::math::quantile(dist, 1.0 - tail);
  return {lo / n, hi / n};
}

}  // namespace lpv::stats
