#pragma once

#include <string>
#include <vector>

#include "lpv/core.hpp"
#include "lpv/plasticity.hpp"
#include "lpv/rng.hpp"

namespace lpv {

// ---------------------------------------------------------------------------
// competitive hierarchy: per-stream feedforward weights feeding a shared
// layer-wide vector on which recurrent lateral inhibition, divisive
// normalisation and homeostatic gain control operate.
// ---------------------------------------------------------------------------

template <class S>
struct layer_params {
  S alpha_inhib = S(0.2);  // lateral inhibition strength
  S alpha_div = S(1.0);    // divisive floor (> 0)
  S beta_div = S(0.5);     // divisive pooled-activity weight
  S w_g = S(0.5);          // global activity weight
  S w_l = S(0.5);          // local activity weight
  int n_iters = 3;         // synchronous fixed-point steps

  void validate() const {
    if (!(alpha_div > S(0)))
      throw config_error("layer_params: alpha_div must be > 0");
    if (n_iters < 1) throw config_error("layer_params: n_iters must be >= 1");
  }
};

inline constexpr double kGainBandLo = 0.75;
inline constexpr double kGainBandHi = 1.25;

template <class S>
struct lateral_weights {
  mat<S> weights;  // dense storage; only |i-j| <= radius, i != j is ever used
  int radius = 2;

  explicit lateral_weights(int units = 0, int rad = 2)
      : weights(mat<S>::Zero(units, units)), radius(rad) {}

  // out = (L (.) M) * y restricted to the local band, diagonal excluded
  mat<S> masked_product(const mat<S>& y) const {
    const int n = static_cast<int>(weights.rows());
    mat<S> out = mat<S>::Zero(n, y.cols());
    for (int i = 0; i < n; ++i) {
      int lo = std::max(0, i - radius);
      int hi = std::min(n - 1, i + radius);
      for (int j = lo; j <= hi; ++j) {
        if (j == i) continue;
        out.row(i) += weights(i, j) * y.row(j);
      }
    }
    return out;
  }

  // band-restricted accumulate, diagonal forced to zero; returns the norm
  // of what was actually applied
  double apply_banded(const mat<S>& delta) {
    const int n = static_cast<int>(weights.rows());
    double sq = 0;
    for (int i = 0; i < n; ++i) {
      int lo = std::max(0, i - radius);
      int hi = std::min(n - 1, i + radius);
      for (int j = lo; j <= hi; ++j) {
        if (j == i) continue;
        weights(i, j) += delta(i, j);
        sq += static_cast<double>(delta(i, j)) * delta(i, j);
      }
    }
    return std::sqrt(sq);
  }

  std::size_t param_count() const {
    const int n = static_cast<int>(weights.rows());
    std::size_t c = 0;
    for (int i = 0; i < n; ++i)
      c += std::min(n - 1, i + radius) - std::max(0, i - radius);
    return c;
  }
};

// the rules give inhibition no equilibrium (rectified outputs never
// anti-correlate), so lateral strength is clipped: strong enough to force
// neighbourhood competition, bounded short of silencing the band
inline constexpr double kLateralMax = 2.5;

// band-restricted decorrelating update: inhibition between nearby units
// grows with their output correlation. Equivalent to applying the dense
// anti-Hebbian delta with flipped sign under the band mask, but touches
// only the band. Returns the applied norm.
template <class S>
double banded_decorrelation_update(lateral_weights<S>& lat, const mat<S>& y,
                                   const vec<S>& rho, S alpha_a) {
  const int n = static_cast<int>(y.rows());
  const S invb = S(1) / static_cast<S>(y.cols());
  double sq = 0;
  for (int i = 0; i < n; ++i) {
    int lo = std::max(0, i - lat.radius);
    int hi = std::min(n - 1, i + lat.radius);
    for (int j = lo; j <= hi; ++j) {
      if (j == i) continue;
      S d = rho[i] * alpha_a * invb * y.row(i).dot(y.row(j));
      lat.weights(i, j) =
          std::min(lat.weights(i, j) + d, S(kLateralMax));
      sq += static_cast<double>(d) * d;
    }
  }
  return std::sqrt(sq);
}

// window-3 moving mean over unit index; stands in for the spatial pooling
// of same-layer activity (the layout of that pooling is not recoverable,
// so the interpretation is isolated here)
template <class S>
mat<S> local_activity_pool(const mat<S>& y) {
  const int n = static_cast<int>(y.rows());
  mat<S> out(n, y.cols());
  for (int i = 0; i < n; ++i) {
    int lo = std::max(0, i - 1);
    int hi = std::min(n - 1, i + 1);
    out.row(i) = y.middleRows(lo, hi - lo + 1).colwise().mean();
  }
  return out;
}

template <class S>
vec<S> gain_bias_correction(const vec<S>& g, S kappa_g) {
  vec<S> clipped =
      g.cwiseMax(S(kGainBandLo)).cwiseMin(S(kGainBandHi));
  return kappa_g * (g - clipped);
}

template <class S>
struct layer {
  std::string name;
  std::vector<mat<S>> stream_weights;  // per stream: out_s x in_s
  lateral_weights<S> lateral;
  vec<S> gains;       // homeostatic gains, init 1
  vec<S> mean_trace;  // EMA of per-unit mean activity
  plasticity_gain<S> gain;

  int units() const {
    int u = 0;
    for (const auto& w : stream_weights) u += static_cast<int>(w.rows());
    return u;
  }

  int stream_out(int s) const {
    return static_cast<int>(stream_weights[s].rows());
  }

  int stream_row_offset(int s) const {
    int off = 0;
    for (int k = 0; k < s; ++k) off += stream_out(k);
    return off;
  }

  void init(const std::string& layer_name, const std::vector<int>& in_dims,
            const std::vector<int>& out_dims, int lateral_radius,
            std::uint64_t seed) {
    name = layer_name;
    stream_weights.clear();
    for (std::size_t s = 0; s < in_dims.size(); ++s) {
      mat<S> w(out_dims[s], in_dims[s]);
      rng r = rng::stream(seed, name + "/W" + std::to_string(s));
      kaiming_uniform(w, r);
      stream_weights.push_back(std::move(w));
    }
    const int u = units();
    lateral = lateral_weights<S>(u, lateral_radius);
    gains = vec<S>::Ones(u);
    mean_trace = vec<S>::Zero(u);
    gain = plasticity_gain<S>(u);
  }

  // batched forward; xs holds one in_s x B block per stream
  mat<S> forward(const std::vector<mat<S>>& xs, const layer_params<S>& p,
                 S kappa_g) const {
    p.validate();
    const int u = units();
    const int b = static_cast<int>(xs.front().cols());
    mat<S> h(u, b);
    int off = 0;
    for (std::size_t s = 0; s < stream_weights.size(); ++s) {
      h.middleRows(off, stream_weights[s].rows()).noalias() =
          stream_weights[s] * xs[s];
      off += static_cast<int>(stream_weights[s].rows());
    }
    vec<S> correction = gain_bias_correction(gains, kappa_g);
    h.colwise() -= correction;

    // divisive normalisation pools the pre-normalisation drive (the
    // rectified numerator), so responses are ratios of drives and the
    // output scale is invariant to the weight scale
    auto divide = [&](const mat<S>& drive) -> mat<S> {
      Eigen::Matrix<S, 1, Eigen::Dynamic> abar = drive.colwise().mean();
      mat<S> alocal = local_activity_pool(drive);
      mat<S> pooled = (p.w_l * alocal).rowwise() + (p.w_g * abar);
      Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic> denom =
          (p.alpha_div + p.beta_div * pooled.array().square()).sqrt();
      return (drive.array() / denom).matrix();
    };

    mat<S> y = divide(h.cwiseMax(S(0)));
    for (int it = 0; it < p.n_iters; ++it) {
      mat<S> drive = (h - p.alpha_inhib * lateral.masked_product(y))
                         .cwiseMax(S(0));
      y = divide(drive);
    }
    if (!all_finite(y))
      throw numerical_error("layer_forward: non-finite activation in " + name);
    return y;
  }

  std::size_t stream_param_count() const {
    std::size_t c = 0;
    for (const auto& w : stream_weights) c += w.size();
    return c;
  }
};

// gains track the per-unit mean activity; the correction derived from the
// dead-band enters the next forward pass
template <class S>
void homeostasis_update(layer<S>& lay, const mat<S>& batch_acts, S eta_g) {
  if (!(eta_g > S(0)) || eta_g > S(1))
    throw config_error("homeostasis_update: eta_g must be in (0, 1]");
  vec<S> ybar = batch_acts.rowwise().mean();
  lay.gains = (S(1) - eta_g) * lay.gains + eta_g * ybar;
  lay.mean_trace = (S(1) - eta_g) * lay.mean_trace + eta_g * ybar;
}

}  // namespace lpv
