#pragma once

#include <string>
#include <vector>

#include "lpv/core.hpp"
#include "lpv/rng.hpp"

namespace lpv {

// ---------------------------------------------------------------------------
// auxiliary pathways around the main hierarchy: saliency-gated side branch,
// cross-gate fusion, Hopfield-style associative memory and the feedback
// projections applied on the second pass. Forwards are batched column-wise;
// each update function returns pure deltas for the single writer to apply.
// ---------------------------------------------------------------------------

template <class S>
mat<S> sigmoid(const mat<S>& x) {
  return (S(1) / (S(1) + (-x.array()).exp())).matrix();
}

inline constexpr double kCrossGateStrength = 0.35;
inline constexpr double kFeedbackSideMix = 0.05;
inline constexpr double kFeedbackInputMix = 0.12;
inline constexpr double kFeedbackGateMix = 0.35;

// Kaiming-uniform rows have expected norm sqrt(2) independent of fan-in.
// Banks without a divisive normalisation stage downstream (side branch,
// query projection) keep their rows capped at that scale after updates:
// correlation-driven growth on nonnegative activities is otherwise
// unbounded, so learning in these banks is directional.
inline constexpr double kRowNormCap = 1.4142135623730951;

template <class S>
void cap_row_norms(mat<S>& w, S cap = static_cast<S>(kRowNormCap)) {
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    S n = w.row(i).norm();
    if (n > cap) w.row(i) *= cap / n;
  }
}

// tile a pooled gate map across a unit vector (units are laid out in
// channel blocks of the gate's length)
template <class S>
vec<S> broadcast_gate(const vec<S>& pooled, int n_units) {
  const int m = static_cast<int>(pooled.size());
  vec<S> out(n_units);
  for (int i = 0; i < n_units; ++i) out[i] = pooled[i % m];
  return out;
}

enum class gate_mode { saliency, uniform, random_perm };

// ------------------------------- side branch -------------------------------

template <class S>
struct side_branch {
  mat<S> w_d1;  // hidden x gated-input
  mat<S> w_d2;  // out x hidden (square so the anti-Hebbian term is defined)

  void init(int input_dim, int hidden_dim, int out_dim, std::uint64_t seed) {
    rng r1 = rng::stream(seed, "side/W_d1");
    rng r2 = rng::stream(seed, "side/W_d2");
    w_d1.resize(hidden_dim, input_dim);
    w_d2.resize(out_dim, hidden_dim);
    kaiming_uniform(w_d1, r1);
    kaiming_uniform(w_d2, r2);
  }

  int out_dim() const { return static_cast<int>(w_d2.rows()); }
  int hidden_dim() const { return static_cast<int>(w_d1.rows()); }

  struct forward_result {
    mat<S> gated;  // S (.) y_L2, input x B
    mat<S> r1;     // hidden x B
    mat<S> z;      // out x B
  };

  mat<S> layer1(const mat<S>& gate, const mat<S>& y_l2, mat<S>& gated) const {
    gated = gate.cwiseProduct(y_l2);
    return (w_d1 * gated).cwiseMax(S(0));
  }

  mat<S> layer2(const mat<S>& r1) const {
    return (w_d2 * r1).cwiseMax(S(0));
  }

  // gate: input x B saliency gain applied to the layer-2 activity
  forward_result forward(const mat<S>& gate, const mat<S>& y_l2) const {
    forward_result f;
    f.r1 = layer1(gate, y_l2, f.gated);
    f.z = layer2(f.r1);
    return f;
  }

  struct deltas {
    mat<S> d1, d2;
  };

  // Hebbian + decay on both layers, plus the off-diagonal anti-Hebbian
  // output-decorrelation term on the second layer
  deltas update(const forward_result& f, S eta_d, S delta_d, S alpha_d) const {
    const S invb = S(1) / static_cast<S>(f.z.cols());
    deltas d;
    d.d1 = eta_d * (invb * (f.r1 * f.gated.transpose()) - delta_d * w_d1);
    mat<S> anti = invb * (f.z * f.z.transpose());
    anti.diagonal().setZero();
    d.d2 = eta_d * (invb * (f.z * f.r1.transpose()) - delta_d * w_d2) -
           alpha_d * anti;
    return d;
  }
};

// ------------------------------- cross gate --------------------------------

template <class S>
struct cross_gate {
  mat<S> w_x;  // side_dim x main_dim

  void init(int side_dim, int main_dim, std::uint64_t seed) {
    rng r = rng::stream(seed, "cross/W_x");
    w_x.resize(side_dim, main_dim);
    kaiming_uniform(w_x, r);
  }

  struct fused {
    mat<S> main_hat, side_hat;
  };

  fused fuse(const mat<S>& z_main, const mat<S>& z_side) const {
    const S g = static_cast<S>(kCrossGateStrength);
    fused f;
    f.main_hat =
        z_main + g * sigmoid<S>(w_x.transpose() * z_side).cwiseProduct(z_main);
    f.side_hat =
        z_side + g * sigmoid<S>(w_x * z_main).cwiseProduct(z_side);
    return f;
  }

  mat<S> update(const mat<S>& z_side, const mat<S>& z_main, S eta_x,
                S delta_x) const {
    const S invb = S(1) / static_cast<S>(z_side.cols());
    return eta_x * (invb * (z_side * z_main.transpose()) - delta_x * w_x);
  }
};

// ----------------------------- associative memory ---------------------------

inline constexpr int kMemorySlots = 96;

template <class S>
struct memory_state {
  mat<S> keys;    // slots x d_q
  mat<S> values;  // slots x d_v
  mat<S> w_q;     // d_q x (side + main)
  S beta = S(0.5);

  void init(int slots, int d_q, int d_v, int side_dim, int main_dim,
            std::uint64_t seed) {
    rng rk = rng::stream(seed, "memory/K");
    rng rv = rng::stream(seed, "memory/V");
    rng rq = rng::stream(seed, "memory/W_q");
    keys.resize(slots, d_q);
    values.resize(slots, d_v);
    w_q.resize(d_q, side_dim + main_dim);
    kaiming_uniform(keys, rk);
    kaiming_uniform(values, rv);
    kaiming_uniform(w_q, rq);
  }

  int slots() const { return static_cast<int>(keys.rows()); }
  int d_q() const { return static_cast<int>(keys.cols()); }
  int d_v() const { return static_cast<int>(values.cols()); }
};

// q = (pad(z_side_hat) + z_main_hat + W_q [z_side_hat; z_main_hat]) / 3;
// the side vector is zero-padded to the query dimension
template <class S>
mat<S> memory_query(const memory_state<S>& m, const mat<S>& z_side_hat,
                    const mat<S>& z_main_hat) {
  const int b = static_cast<int>(z_main_hat.cols());
  const int dq = m.d_q();
  mat<S> cat(z_side_hat.rows() + z_main_hat.rows(), b);
  cat << z_side_hat, z_main_hat;
  mat<S> q = mat<S>::Zero(dq, b);
  q.topRows(std::min<int>(dq, static_cast<int>(z_side_hat.rows()))) =
      z_side_hat.topRows(std::min<int>(dq, static_cast<int>(z_side_hat.rows())));
  q += z_main_hat;  // d_q == main dim by construction
  q.noalias() += m.w_q * cat;
  return q / S(3);
}

template <class S>
struct retrieval {
  mat<S> attention;  // slots x B, each column sums to 1
  mat<S> h_mem;      // d_v x B
};

// single-step softmax attention over the stored keys
template <class S>
retrieval<S> hopfield_retrieve(const memory_state<S>& m, const mat<S>& q) {
  if (!all_finite(q))
    throw numerical_error("hopfield_retrieve: non-finite query");
  mat<S> scores = m.beta * (m.keys * q);  // slots x B
  retrieval<S> r;
  r.attention.resize(scores.rows(), scores.cols());
  for (Eigen::Index c = 0; c < scores.cols(); ++c) {
    vec<S> s = scores.col(c);
    S mx = s.maxCoeff();
    vec<S> e = (s.array() - mx).exp();
    r.attention.col(c) = e / e.sum();
  }
  r.h_mem = m.values.transpose() * r.attention;
  return r;
}

template <class S>
struct memory_deltas {
  mat<S> keys, values, w_q;
};

// attention-weighted pull of keys toward queries and values toward the
// fused main output, plus the query-projection outer product; all with decay
template <class S>
memory_deltas<S> memory_update(const memory_state<S>& m, const mat<S>& attn,
                               const mat<S>& q, const mat<S>& z_main_hat,
                               const mat<S>& z_side_hat, S eta_k, S delta_k,
                               S eta_v, S delta_v, S eta_q, S delta_q) {
  const S invb = S(1) / static_cast<S>(q.cols());
  memory_deltas<S> d;
  d.keys = eta_k * (invb * (attn * q.transpose()) - delta_k * m.keys);
  d.values =
      eta_v * (invb * (attn * z_main_hat.transpose()) - delta_v * m.values);
  mat<S> cat(z_side_hat.rows() + z_main_hat.rows(), q.cols());
  cat << z_side_hat, z_main_hat;
  d.w_q = eta_q * (invb * (q * cat.transpose()) - delta_q * m.w_q);
  return d;
}

// -------------------------------- feedback ---------------------------------

template <class S>
struct feedback_weights {
  mat<S> w_fb1;   // side-hidden x d_v
  mat<S> w_fbl1;  // positions x d_v (additive input map, shared across channels)
  mat<S> w_gate;  // positions x d_v (gating map, shared across channels)

  void init(int side_hidden, int positions, int d_v, std::uint64_t seed) {
    rng r1 = rng::stream(seed, "feedback/W_fb1");
    rng r2 = rng::stream(seed, "feedback/W_fbL1");
    rng r3 = rng::stream(seed, "feedback/W_gate");
    w_fb1.resize(side_hidden, d_v);
    w_fbl1.resize(positions, d_v);
    w_gate.resize(positions, d_v);
    kaiming_uniform(w_fb1, r1);
    kaiming_uniform(w_fbl1, r2);
    kaiming_uniform(w_gate, r3);
  }

  // side-hidden modulation for pass 2
  mat<S> modulate_side(const mat<S>& r1_side, const mat<S>& h_mem) const {
    return r1_side + static_cast<S>(kFeedbackSideMix) * (w_fb1 * h_mem);
  }

  // input-map modulation for pass 2; the additive and gating maps act on
  // pooled positions and are tiled across the feature channels of R0
  mat<S> modulate_input(const mat<S>& r0, const mat<S>& h_mem,
                        int n_channels) const {
    const int positions = static_cast<int>(w_fbl1.rows());
    const int b = static_cast<int>(r0.cols());
    mat<S> add = w_fbl1 * h_mem;               // positions x B
    mat<S> gate = sigmoid<S>(w_gate * h_mem);  // positions x B
    mat<S> out(r0.rows(), b);
    for (int c = 0; c < n_channels; ++c) {
      auto block = r0.middleRows(c * positions, positions);
      out.middleRows(c * positions, positions) =
          block + static_cast<S>(kFeedbackInputMix) * add +
          static_cast<S>(kFeedbackGateMix) * gate.cwiseProduct(block);
    }
    return out;
  }

  struct deltas {
    mat<S> fb1, fbl1, gate;
  };

  // Hebbian form with the memory readout as the pre-synaptic signal
  deltas update(const mat<S>& r1_side, const mat<S>& r0_profile,
                const mat<S>& h_mem, S eta_fb, S delta_fb) const {
    const S invb = S(1) / static_cast<S>(h_mem.cols());
    deltas d;
    d.fb1 = eta_fb * (invb * (r1_side * h_mem.transpose()) - delta_fb * w_fb1);
    d.fbl1 =
        eta_fb * (invb * (r0_profile * h_mem.transpose()) - delta_fb * w_fbl1);
    d.gate =
        eta_fb * (invb * (r0_profile * h_mem.transpose()) - delta_fb * w_gate);
    return d;
  }
};

// channel-mean spatial profile of the L1 input map (positions x B); the
// post-synaptic activity stand-in for the shared feedback maps
template <class S>
mat<S> input_spatial_profile(const mat<S>& r0, int positions) {
  const int channels = static_cast<int>(r0.rows()) / positions;
  mat<S> prof = mat<S>::Zero(positions, r0.cols());
  for (int c = 0; c < channels; ++c)
    prof += r0.middleRows(c * positions, positions);
  return prof / static_cast<S>(channels);
}

}  // namespace lpv
