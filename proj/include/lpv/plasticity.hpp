#pragma once

#include <cmath>
#include <vector>

#include "lpv/core.hpp"

namespace lpv {

// ---------------------------------------------------------------------------
// local plasticity rules. Every function here is a pure delta computation on
// (pre activity, post activity, current weight); the engine decides which
// weight bank each delta is applied to and composes them per Eq-style
// coefficients. Batches are column-major: X is in x B, Y is out x B.
// ---------------------------------------------------------------------------

// batch-mean outer product minus decay
template <class S>
mat<S> hebbian_delta(const mat<S>& x, const mat<S>& y, const mat<S>& w,
                     S delta_h) {
  const S invb = S(1) / static_cast<S>(x.cols());
  return invb * (y * x.transpose()) - delta_h * w;
}

// negative batch output correlation, strictly off-diagonal
template <class S>
mat<S> anti_hebbian_delta(const mat<S>& y) {
  const S invb = S(1) / static_cast<S>(y.cols());
  mat<S> d = -invb * (y * y.transpose());
  d.diagonal().setZero();
  return d;
}

// local reconstruction-error rule: x_hat = W^T y from the same layer
template <class S>
mat<S> free_energy_delta(const mat<S>& x, const mat<S>& y, const mat<S>& w,
                         S lambda_f) {
  const S invb = S(1) / static_cast<S>(x.cols());
  mat<S> xhat = w.transpose() * y;  // in x B
  return invb * (y * (x - xhat).transpose()) - lambda_f * w;
}

// cross-pass outer product: post activity of the second within-sample pass
// against the pre activity seen on the first pass
template <class S>
mat<S> recursive_delta(const mat<S>& y_pass2, const mat<S>& x_pass1,
                       const mat<S>& w, S delta_r) {
  const S invb = S(1) / static_cast<S>(y_pass2.cols());
  return invb * (y_pass2 * x_pass1.transpose()) - delta_r * w;
}

inline constexpr double kRhoClipLo = 0.5;
inline constexpr double kRhoClipHi = 1.5;

// per-neuron plasticity gain with its slow activity trace. The clip range
// is fixed; the trace/target dynamics are a homeostatic construction and
// can be switched off (rho pinned to 1).
template <class S>
struct plasticity_gain {
  vec<S> rho;          // per post-synaptic unit, clipped to [0.5, 1.5]
  vec<S> trace;        // EMA of mean post activity, decay 0.9 per batch
  S gamma = S(0.5);
  S theta_target = S(0);
  S trace_decay = S(0.9);
  bool dynamics_enabled = true;
  bool target_set = false;

  explicit plasticity_gain(int units = 0)
      : rho(vec<S>::Ones(units)), trace(vec<S>::Zero(units)) {}
};

template <class S>
void gain_update(plasticity_gain<S>& g, const mat<S>& batch_acts) {
  if (!g.dynamics_enabled) return;
  vec<S> mean_act = batch_acts.rowwise().mean();
  if (!g.target_set) {
    // target pinned to the layer's mean activity on the first batch seen
    g.theta_target = mean_act.mean();
    g.trace = mean_act;
    g.target_set = true;
  } else {
    g.trace = g.trace_decay * g.trace + (S(1) - g.trace_decay) * mean_act;
  }
  g.rho = (S(1) + g.gamma * (g.theta_target - g.trace.array()))
              .cwiseMax(S(kRhoClipLo))
              .cwiseMin(S(kRhoClipHi))
              .matrix();
}

template <class S>
struct weighted_term {
  S coeff;
  const mat<S>* delta;
};

// rho-modulated sum of rule terms, rho applied row-wise (per post neuron).
// rho is re-clipped on entry so a raw gain can never leave the fixed range.
template <class S>
mat<S> compose_delta(const vec<S>& rho, const std::vector<weighted_term<S>>& terms) {
  if (terms.empty()) throw config_error("compose_delta: no terms");
  const Eigen::Index rows = terms.front().delta->rows();
  const Eigen::Index cols = terms.front().delta->cols();
  mat<S> sum = mat<S>::Zero(rows, cols);
  for (const auto& t : terms) {
    if (t.delta->rows() != rows || t.delta->cols() != cols)
      throw config_error("compose_delta: term shapes differ");
    if (t.coeff != S(0)) sum += t.coeff * (*t.delta);
  }
  vec<S> r = rho.cwiseMax(S(kRhoClipLo)).cwiseMin(S(kRhoClipHi));
  return r.asDiagonal() * sum;
}

// --------------------------- supplementary rules ---------------------------
// feature-flagged extensions; disabled in the default configurations.

template <class S>
vec<S> circular_convolution(const vec<S>& a, const vec<S>& b) {
  const int n = static_cast<int>(a.size());
  vec<S> out = vec<S>::Zero(n);
  for (int k = 0; k < n; ++k)
    for (int m = 0; m < n; ++m) out[k] += a[m] * b[(k - m + n) % n];
  return out;
}

template <class S>
vec<S> circular_correlation(const vec<S>& a, const vec<S>& b) {
  const int n = static_cast<int>(a.size());
  vec<S> out = vec<S>::Zero(n);
  for (int k = 0; k < n; ++k)
    for (int m = 0; m < n; ++m) out[k] += a[m] * b[(m + k) % n];
  return out;
}

// holographic binding: blend of circular convolution and correlation of the
// current activity with its previous-step trace, pulled toward the weight row
template <class S>
vec<S> hrr_delta(const vec<S>& y_now, const vec<S>& y_prev_trace,
                 const vec<S>& w_row, S alpha_c, S eta_h) {
  if (y_now.size() != y_prev_trace.size() || y_now.size() != w_row.size())
    throw config_error("hrr_delta: vectors must have equal length");
  return eta_h * ((S(1) - alpha_c) * circular_convolution(y_now, y_prev_trace) +
                  alpha_c * circular_correlation(y_now, y_prev_trace) - w_row);
}

// Poincare-ball distance
template <class S>
S poincare_distance(const vec<S>& u, const vec<S>& v) {
  S du = S(1) - u.squaredNorm();
  S dv = S(1) - v.squaredNorm();
  S z = S(1) + S(2) * (u - v).squaredNorm() / (du * dv);
  return std::acosh(static_cast<double>(z));
}

// repulsive hyperbolic regulariser: delta_i = -lambda * grad_i sum_j d^-2.
// Rows at or outside the unit sphere are radially rescaled to norm 0.99
// before the gradient is taken.
template <class S>
mat<S> hyperbolic_delta(const mat<S>& w_rows, S lambda_h) {
  const int n = static_cast<int>(w_rows.rows());
  mat<S> w = w_rows;
  for (int i = 0; i < n; ++i) {
    S nrm = w.row(i).norm();
    if (nrm >= S(1)) w.row(i) *= S(0.99) / nrm;
  }
  mat<S> out = mat<S>::Zero(w.rows(), w.cols());
  if (n < 2) return out;
  constexpr double tiny = 1e-9;
  for (int i = 0; i < n; ++i) {
    vec<S> u = w.row(i).transpose();
    S au = S(1) - u.squaredNorm();
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      vec<S> v = w.row(j).transpose();
      S bv = S(1) - v.squaredNorm();
      vec<S> diff = u - v;
      S dd = diff.squaredNorm();
      double z = 1.0 + 2.0 * static_cast<double>(dd) /
                           (static_cast<double>(au) * static_cast<double>(bv));
      double dist = std::acosh(z);
      if (dist < tiny) continue;  // coincident rows have no defined direction
      // grad_u z = 4 / (bv * au) * (diff + (dd / au) * u)
      vec<S> gz = (S(4) / (bv * au)) * (diff + (dd / au) * u);
      double dzdd = 1.0 / std::sqrt(z * z - 1.0);
      // grad_u d^-2 = -2 d^-3 * dzdd * gz ; delta = -lambda * grad
      S scale = static_cast<S>(2.0 * std::pow(dist, -3.0) * dzdd) * lambda_h;
      out.row(i) += (scale * gz).transpose();
    }
  }
  return out;
}

// full-depth orthonormal 1-D Haar transform, length must be a power of two
template <class S>
vec<S> haar1d_forward(const vec<S>& x) {
  const int n = static_cast<int>(x.size());
  vec<S> cur = x, out = x;
  const S inv_sqrt2 = static_cast<S>(1.0 / std::sqrt(2.0));
  for (int len = n; len > 1; len /= 2) {
    for (int i = 0; i < len / 2; ++i) {
      out[i] = (cur[2 * i] + cur[2 * i + 1]) * inv_sqrt2;
      out[len / 2 + i] = (cur[2 * i] - cur[2 * i + 1]) * inv_sqrt2;
    }
    cur.head(len) = out.head(len);
  }
  return out;
}

template <class S>
vec<S> haar1d_inverse(const vec<S>& c) {
  const int n = static_cast<int>(c.size());
  vec<S> cur = c;
  const S inv_sqrt2 = static_cast<S>(1.0 / std::sqrt(2.0));
  for (int len = 2; len <= n; len *= 2) {
    vec<S> rec(len);
    for (int i = 0; i < len / 2; ++i) {
      rec[2 * i] = (cur[i] + cur[len / 2 + i]) * inv_sqrt2;
      rec[2 * i + 1] = (cur[i] - cur[len / 2 + i]) * inv_sqrt2;
    }
    cur.head(len) = rec;
  }
  return cur;
}

template <class S>
vec<S> soft_threshold(const vec<S>& x, S tau) {
  return x.array().sign() * (x.array().abs() - tau).max(S(0));
}

// wavelet-domain shrinkage: delta = -lambda * H^-1(soft_tau(H(w))).
// Rows whose length is not a power of two are zero-padded for the
// transform and cropped back.
template <class S>
vec<S> wavelet_delta_row(const vec<S>& w_row, S tau_w, S lambda_w) {
  int n = static_cast<int>(w_row.size());
  int p = 1;
  while (p < n) p *= 2;
  vec<S> padded = vec<S>::Zero(p);
  padded.head(n) = w_row;
  vec<S> shrunk = haar1d_inverse<S>(
      soft_threshold<S>(haar1d_forward<S>(padded), tau_w));
  return -lambda_w * shrunk.head(n);
}

template <class S>
mat<S> wavelet_delta(const mat<S>& w_rows, S tau_w, S lambda_w) {
  mat<S> out(w_rows.rows(), w_rows.cols());
  for (Eigen::Index i = 0; i < w_rows.rows(); ++i)
    out.row(i) =
        wavelet_delta_row<S>(w_rows.row(i).transpose(), tau_w, lambda_w)
            .transpose();
  return out;
}

}  // namespace lpv
