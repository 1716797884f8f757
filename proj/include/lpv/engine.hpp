#pragma once

#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lpv/config.hpp"
#include "lpv/data.hpp"
#include "lpv/frontend.hpp"
#include "lpv/hierarchy.hpp"
#include "lpv/pathways.hpp"
#include "lpv/plasticity.hpp"

namespace lpv {

inline constexpr int kMainDim = 384;
inline constexpr int kSideDim = 128;
inline constexpr int kSideHidden = 128;
inline constexpr double kFinalMemoryMix = 0.25;

// per-layer unit totals; streams split each layer evenly, so a single-stream
// configuration keeps the same layer widths on its one stream
inline const std::array<int, 4> kLayerUnits = {1280, 768, 512, 384};

// ------------------------------ linear probe -------------------------------

// the only label- and gradient-trained component. Softmax cross-entropy
// with a closed-form gradient; Adam with decoupled-from-nothing classic
// L2 (decay added to the gradient).
template <class S>
struct probe {
  mat<S> w_c;  // classes x dim
  vec<S> b_c;
  mat<S> m_w, v_w;
  vec<S> m_b, v_b;
  long step = 0;
  S lr = S(3e-4);
  S weight_decay = S(1e-4);

  void init(int classes, int dim, std::uint64_t seed) {
    rng r = rng::stream(seed, "probe/W_c");
    w_c.resize(classes, dim);
    kaiming_uniform(w_c, r);
    b_c = vec<S>::Zero(classes);
    m_w = mat<S>::Zero(classes, dim);
    v_w = mat<S>::Zero(classes, dim);
    m_b = vec<S>::Zero(classes);
    v_b = vec<S>::Zero(classes);
    step = 0;
  }

  mat<S> softmax(const mat<S>& z_bar) const {
    mat<S> logits = (w_c * z_bar).colwise() + b_c;
    mat<S> p(logits.rows(), logits.cols());
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      vec<S> col = logits.col(c);
      S mx = col.maxCoeff();
      vec<S> e = (col.array() - mx).exp();
      p.col(c) = e / e.sum();
    }
    return p;
  }

  struct grad_result {
    S loss;
    mat<S> g_w;
    vec<S> g_b;
    mat<S> g_input;  // dL/d z_bar, consumed only by the isolation audit
  };

  // analytic softmax-CE gradient: dL/dW = (p - onehot) z_bar^T / B
  grad_result gradient(const mat<S>& z_bar,
                       const std::vector<int>& labels) const {
    const int b = static_cast<int>(z_bar.cols());
    mat<S> p = softmax(z_bar);
    S loss = S(0);
    mat<S> g = p;
    for (int i = 0; i < b; ++i) {
      loss -= std::log(std::max(p(labels[i], i), S(1e-30)));
      g(labels[i], i) -= S(1);
    }
    g /= static_cast<S>(b);
    grad_result r;
    r.loss = loss / static_cast<S>(b);
    r.g_w = g * z_bar.transpose();
    r.g_b = g.rowwise().sum();
    r.g_input = w_c.transpose() * g;
    return r;
  }

  S adam_step(const mat<S>& z_bar, const std::vector<int>& labels) {
    grad_result r = gradient(z_bar, labels);
    mat<S> gw = r.g_w + weight_decay * w_c;
    vec<S> gb = r.g_b;
    ++step;
    const S b1 = S(0.9), b2 = S(0.999), eps = S(1e-8);
    S c1 = S(1) - std::pow(b1, static_cast<S>(step));
    S c2 = S(1) - std::pow(b2, static_cast<S>(step));
    m_w = b1 * m_w + (S(1) - b1) * gw;
    v_w = (b2 * v_w.array() + (S(1) - b2) * gw.array().square()).matrix();
    m_b = b1 * m_b + (S(1) - b1) * gb;
    v_b = (b2 * v_b.array() + (S(1) - b2) * gb.array().square()).matrix();
    w_c.array() -=
        lr * (m_w.array() / c1) / ((v_w.array() / c2).sqrt() + eps);
    b_c.array() -=
        lr * (m_b.array() / c1) / ((v_b.array() / c2).sqrt() + eps);
    return r.loss;
  }

  double accuracy(const mat<S>& z_bar, const std::vector<int>& labels) const {
    mat<S> p = softmax(z_bar);
    int hit = 0;
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      Eigen::Index arg;
      p.col(c).maxCoeff(&arg);
      if (static_cast<int>(arg) == labels[c]) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(p.cols());
  }
};

// ----------------------------- stop gradient -------------------------------

// forward identity, backward zero. The detached value is a fresh copy with
// no linkage to model storage; the backward factor exists so the audit can
// compute the representational gradient path explicitly (and so the broken
// fixture can demonstrate a violation).
template <class S>
struct stop_gradient {
  S backward_factor = S(0);

  mat<S> detach(const mat<S>& z) const { return z; }

  mat<S> backward(const mat<S>& upstream) const {
    return backward_factor * upstream;
  }
};

// ------------------------------- model state -------------------------------

template <class S>
struct batch_input {
  mat<S> r0;        // kR0Dim x B
  mat<S> saliency;  // kPooledArea x B
};

template <class S>
struct forward_trace {
  // pass 1
  std::vector<std::vector<mat<S>>> x1;  // [layer][stream] inputs
  std::vector<mat<S>> y1;               // [layer] units x B
  mat<S> side_gated1, side_r1, z_side1;
  mat<S> zm_hat1, zs_hat1;
  mat<S> q, attention, h_mem;
  // pass 2
  std::vector<mat<S>> y2;
  mat<S> z_side2, zm_hat2, zs_hat2;
  mat<S> z_final;  // rep_dim x B
};

// accumulated per-epoch diagnostics
struct update_norms {
  double hierarchy = 0, lateral = 0, side = 0, cross = 0, memory = 0,
         feedback = 0;
  double total() const {
    return hierarchy + lateral + side + cross + memory + feedback;
  }
};

template <class S>
struct model {
  run_config cfg;
  std::uint64_t seed = 0;
  std::vector<int> active_streams;
  std::array<layer<S>, 4> layers;
  side_branch<S> side;
  cross_gate<S> cross;
  memory_state<S> mem;
  feedback_weights<S> fb;
  layer_params<S> lp;

  int rep_dim() const { return kMainDim + (cfg.side_branch_on ? kSideDim : 0); }

  void init(const run_config& c, std::uint64_t s) {
    cfg = c;
    seed = s;
    active_streams.clear();
    if (c.single_stream) {
      if (c.single_stream_index < 0 || c.single_stream_index >= kFreqStreams)
        throw config_error("single_stream_index out of range");
      active_streams.push_back(c.single_stream_index);
    } else {
      for (int i = 0; i < kStreamCount; ++i) active_streams.push_back(i);
    }
    const int ns = static_cast<int>(active_streams.size());

    lp.alpha_inhib = static_cast<S>(c.alpha_inhib);
    lp.alpha_div = static_cast<S>(c.alpha_div);
    lp.beta_div = static_cast<S>(c.div_norm_on ? c.beta_div : 0.0);
    lp.w_g = static_cast<S>(c.w_g);
    lp.w_l = static_cast<S>(c.w_l);
    lp.n_iters = c.fixed_point_iters;
    lp.validate();

    for (int l = 0; l < 4; ++l) {
      if (kLayerUnits[l] % ns != 0)
        throw config_error("layer width not divisible by stream count");
      std::vector<int> in_dims, out_dims;
      for (int k = 0; k < ns; ++k) {
        int in = l == 0 ? stream_dim<S>(active_streams[k])
                        : kLayerUnits[l - 1] / ns;
        in_dims.push_back(in);
        out_dims.push_back(kLayerUnits[l] / ns);
      }
      layers[l].init("L" + std::to_string(l + 1), in_dims, out_dims,
                     c.lateral_radius, seed);
      layers[l].gain.gamma = static_cast<S>(0.5);
      layers[l].gain.dynamics_enabled = c.rho_dynamics;
    }

    side.init(kLayerUnits[1], kSideHidden, kSideDim, seed);
    cross.init(kSideDim, kMainDim, seed);
    mem.init(c.memory_slots, kMainDim, kMainDim, kSideDim, kMainDim, seed);
    mem.beta = static_cast<S>(c.hopfield_beta);
    fb.init(kSideHidden, kPooledArea, kMainDim, seed);
  }

  // slice the full-layout R0 into per-active-stream blocks
  std::vector<mat<S>> slice_streams(const mat<S>& r0) const {
    std::vector<mat<S>> xs;
    xs.reserve(active_streams.size());
    for (int s : active_streams)
      xs.push_back(r0.middleRows(stream_offset<S>(s), stream_dim<S>(s)));
    return xs;
  }

  // per-sample side gate (768 x B) from the pooled saliency map
  mat<S> make_gate(const mat<S>& saliency, std::uint64_t epoch,
                   std::uint64_t batch_index) const {
    const int units = kLayerUnits[1];
    const int b = static_cast<int>(saliency.cols());
    mat<S> gate(units, b);
    for (int i = 0; i < b; ++i) {
      vec<S> pooled = saliency.col(i);
      if (cfg.gate == "uniform") {
        pooled.setOnes();
      } else if (cfg.gate == "random") {
        std::vector<std::uint32_t> perm(pooled.size());
        for (std::size_t k = 0; k < perm.size(); ++k)
          perm[k] = static_cast<std::uint32_t>(k);
        rng r = rng::stream(fnv1a64("random-gate", seed),
                            (epoch << 24) ^ (batch_index << 4) ^ i);
        r.shuffle(perm);
        vec<S> shuffled(pooled.size());
        for (std::size_t k = 0; k < perm.size(); ++k)
          shuffled[k] = pooled[perm[k]];
        pooled = shuffled;
      }
      gate.col(i) = broadcast_gate<S>(pooled, units);
    }
    return gate;
  }

  mat<S> run_hierarchy(const mat<S>& r0, std::vector<std::vector<mat<S>>>* xs_out,
                       std::vector<mat<S>>* ys_out) const {
    std::vector<mat<S>> xs = slice_streams(r0);
    mat<S> y;
    const int ns = static_cast<int>(active_streams.size());
    for (int l = 0; l < 4; ++l) {
      if (xs_out) xs_out->push_back(xs);
      y = layers[l].forward(xs, lp,
                            static_cast<S>(cfg.homeostasis_on ? cfg.kappa_g
                                                              : 0.0));
      if (ys_out) ys_out->push_back(y);
      if (l < 3) {
        std::vector<mat<S>> next;
        next.reserve(ns);
        const int block = kLayerUnits[l] / ns;
        for (int k = 0; k < ns; ++k)
          next.push_back(y.middleRows(k * block, block));
        xs = std::move(next);
      }
    }
    return y;  // L4 output, kMainDim x B
  }

  // both within-sample passes; pure (plasticity is applied by train_batch)
  forward_trace<S> two_pass(const batch_input<S>& in, const mat<S>& gate) const {
    forward_trace<S> t;
    const int b = static_cast<int>(in.r0.cols());

    // ---- pass 1
    mat<S> z_main1 = run_hierarchy(in.r0, &t.x1, &t.y1);
    if (cfg.side_branch_on) {
      t.side_r1 = side.layer1(gate, t.y1[1], t.side_gated1);
      t.z_side1 = side.layer2(t.side_r1);
    } else {
      t.side_gated1 = mat<S>::Zero(kLayerUnits[1], b);
      t.side_r1 = mat<S>::Zero(kSideHidden, b);
      t.z_side1 = mat<S>::Zero(kSideDim, b);
    }
    if (cfg.side_branch_on) {
      auto f = cross.fuse(z_main1, t.z_side1);
      t.zm_hat1 = std::move(f.main_hat);
      t.zs_hat1 = std::move(f.side_hat);
    } else {
      t.zm_hat1 = z_main1;
      t.zs_hat1 = t.z_side1;
    }
    if (cfg.memory_on) {
      t.q = memory_query(mem, t.zs_hat1, t.zm_hat1);
      auto r = hopfield_retrieve(mem, t.q);
      t.attention = std::move(r.attention);
      t.h_mem = std::move(r.h_mem);
    } else {
      t.q = mat<S>::Zero(mem.d_q(), b);
      t.attention = mat<S>::Zero(mem.slots(), b);
      t.h_mem = mat<S>::Zero(mem.d_v(), b);
    }

    // ---- pass 2: feedback-modulated re-run, no plasticity here
    mat<S> r0_fb = (cfg.feedback_on && cfg.memory_on)
                       ? fb.modulate_input(in.r0, t.h_mem, kR0Channels)
                       : in.r0;
    mat<S> z_main2 = run_hierarchy(r0_fb, nullptr, &t.y2);
    if (cfg.side_branch_on) {
      mat<S> gated2;
      mat<S> r2 = side.layer1(gate, t.y2[1], gated2);
      if (cfg.feedback_on && cfg.memory_on)
        r2 = fb.modulate_side(r2, t.h_mem);
      t.z_side2 = side.layer2(r2);
      auto f2 = cross.fuse(z_main2, t.z_side2);
      t.zm_hat2 = std::move(f2.main_hat);
      t.zs_hat2 = std::move(f2.side_hat);
    } else {
      t.z_side2 = mat<S>::Zero(kSideDim, b);
      t.zm_hat2 = z_main2;
      t.zs_hat2 = t.z_side2;
    }

    t.z_final.resize(rep_dim(), b);
    mat<S> main_part = t.zm_hat2;
    if (cfg.memory_on)
      main_part += static_cast<S>(kFinalMemoryMix) * t.h_mem;
    if (cfg.side_branch_on)
      t.z_final << main_part, t.zs_hat2;
    else
      t.z_final = main_part;
    if (!all_finite(t.z_final))
      throw numerical_error("two_pass: non-finite representation");
    return t;
  }

  // Algorithm step for one mini-batch: pass 1, synchronous local updates,
  // pass 2, then the cross-pass recursive update and the slow traces.
  // Returns the trace used afterwards for the probe step.
  forward_trace<S> train_batch(const batch_input<S>& in, const mat<S>& gate,
                               update_norms* norms) {
    forward_trace<S> t1;
    {
      // pass 1 only: reuse two_pass machinery up to memory retrieval by
      // running it with plasticity deferred; cheaper to inline pass 1 here
      t1.x1.clear();
      t1.y1.clear();
      mat<S> z_main1 = run_hierarchy(in.r0, &t1.x1, &t1.y1);
      const int b = static_cast<int>(in.r0.cols());
      if (cfg.side_branch_on) {
        t1.side_r1 = side.layer1(gate, t1.y1[1], t1.side_gated1);
        t1.z_side1 = side.layer2(t1.side_r1);
        auto f = cross.fuse(z_main1, t1.z_side1);
        t1.zm_hat1 = std::move(f.main_hat);
        t1.zs_hat1 = std::move(f.side_hat);
      } else {
        t1.side_gated1 = mat<S>::Zero(kLayerUnits[1], b);
        t1.side_r1 = mat<S>::Zero(kSideHidden, b);
        t1.z_side1 = mat<S>::Zero(kSideDim, b);
        t1.zm_hat1 = z_main1;
        t1.zs_hat1 = t1.z_side1;
      }
      if (cfg.memory_on) {
        t1.q = memory_query(mem, t1.zs_hat1, t1.zm_hat1);
        auto r = hopfield_retrieve(mem, t1.q);
        t1.attention = std::move(r.attention);
        t1.h_mem = std::move(r.h_mem);
      } else {
        t1.q = mat<S>::Zero(mem.d_q(), b);
        t1.attention = mat<S>::Zero(mem.slots(), b);
        t1.h_mem = mat<S>::Zero(mem.d_v(), b);
      }
    }

    apply_local_updates(in, t1, norms);

    // pass 2 on the updated weights
    const int b = static_cast<int>(in.r0.cols());
    mat<S> r0_fb = (cfg.feedback_on && cfg.memory_on)
                       ? fb.modulate_input(in.r0, t1.h_mem, kR0Channels)
                       : in.r0;
    std::vector<std::vector<mat<S>>> x2;
    t1.y2.clear();
    mat<S> z_main2 = run_hierarchy(r0_fb, &x2, &t1.y2);
    if (cfg.side_branch_on) {
      mat<S> gated2;
      mat<S> r2 = side.layer1(gate, t1.y2[1], gated2);
      if (cfg.feedback_on && cfg.memory_on) r2 = fb.modulate_side(r2, t1.h_mem);
      t1.z_side2 = side.layer2(r2);
      auto f2 = cross.fuse(z_main2, t1.z_side2);
      t1.zm_hat2 = std::move(f2.main_hat);
      t1.zs_hat2 = std::move(f2.side_hat);
    } else {
      t1.z_side2 = mat<S>::Zero(kSideDim, b);
      t1.zm_hat2 = z_main2;
      t1.zs_hat2 = t1.z_side2;
    }

    apply_recursive_update(t1, norms);
    apply_slow_traces(t1);

    t1.z_final.resize(rep_dim(), b);
    mat<S> main_part = t1.zm_hat2;
    if (cfg.memory_on)
      main_part += static_cast<S>(kFinalMemoryMix) * t1.h_mem;
    if (cfg.side_branch_on)
      t1.z_final << main_part, t1.zs_hat2;
    else
      t1.z_final = main_part;
    if (!all_finite(t1.z_final))
      throw numerical_error("train_batch: non-finite representation");
    return t1;
  }

  void apply_local_updates(const batch_input<S>& in, const forward_trace<S>& t,
                           update_norms* norms) {
    const int ns = static_cast<int>(active_streams.size());
    for (int l = 0; l < 4; ++l) {
      auto& lay = layers[l];
      const int block = kLayerUnits[l] / ns;
      for (int k = 0; k < ns; ++k) {
        const mat<S>& x = t.x1[l][k];
        mat<S> yb = t.y1[l].middleRows(k * block, block);
        std::vector<weighted_term<S>> terms;
        mat<S> hebb, fe;
        if (cfg.hebbian_on && cfg.alpha_h != 0.0) {
          hebb = hebbian_delta<S>(x, yb, lay.stream_weights[k],
                                  static_cast<S>(cfg.delta_h));
          terms.push_back({static_cast<S>(cfg.alpha_h), &hebb});
        }
        if (cfg.free_energy_on && cfg.lambda_f != 0.0) {
          fe = free_energy_delta<S>(x, yb, lay.stream_weights[k],
                                    static_cast<S>(cfg.lambda_f));
          terms.push_back({static_cast<S>(cfg.lambda_f), &fe});
        }
        if (!terms.empty()) {
          vec<S> rho_block = lay.gain.rho.segment(k * block, block);
          mat<S> dw = compose_delta<S>(rho_block, terms);
          lay.stream_weights[k] += dw;
          cap_row_norms(lay.stream_weights[k]);
          if (norms) norms->hierarchy += dw.norm();
        }
        if (cfg.extended_rules) {
          if (cfg.lambda_hyp != 0.0) {
            mat<S> dh = hyperbolic_delta<S>(lay.stream_weights[k],
                                            static_cast<S>(cfg.lambda_hyp));
            lay.stream_weights[k] += dh;
            if (norms) norms->hierarchy += dh.norm();
          }
          if (cfg.lambda_wavelet != 0.0) {
            mat<S> dwv = wavelet_delta<S>(lay.stream_weights[k],
                                          static_cast<S>(cfg.tau_wavelet),
                                          static_cast<S>(cfg.lambda_wavelet));
            lay.stream_weights[k] += dwv;
            if (norms) norms->hierarchy += dwv.norm();
          }
        }
      }
      if (cfg.anti_hebbian_on && cfg.alpha_a != 0.0) {
        // lateral inhibition strengthens where outputs co-fire: the raw
        // anti-Hebbian delta is negative output correlation, and the
        // inhibition term enters the forward pass with a minus sign, so the
        // decorrelating update lands on the inhibitory weights sign-flipped
        vec<S> rho =
            lay.gain.rho.cwiseMax(S(kRhoClipLo)).cwiseMin(S(kRhoClipHi));
        double applied = banded_decorrelation_update<S>(
            lay.lateral, t.y1[l], rho, static_cast<S>(cfg.alpha_a));
        if (norms) norms->lateral += applied;
      }
      if (cfg.extended_rules && cfg.eta_hrr != 0.0 && lay.gain.target_set) {
        vec<S> ymean = t.y1[l].rowwise().mean();
        mat<S> dl(lay.lateral.weights.rows(), lay.lateral.weights.cols());
        vec<S> common = hrr_delta<S>(ymean, lay.gain.trace,
                                     vec<S>::Zero(ymean.size()),
                                     static_cast<S>(cfg.alpha_c_hrr),
                                     static_cast<S>(cfg.eta_hrr));
        for (Eigen::Index i = 0; i < dl.rows(); ++i)
          dl.row(i) = (common - static_cast<S>(cfg.eta_hrr) *
                                    lay.lateral.weights.row(i).transpose())
                          .transpose();
        double applied = lay.lateral.apply_banded(dl);
        if (norms) norms->lateral += applied;
      }
    }

    if (cfg.side_branch_on && cfg.eta_d != 0.0) {
      typename side_branch<S>::forward_result f{t.side_gated1, t.side_r1,
                                                t.z_side1};
      auto d = side.update(f, static_cast<S>(cfg.eta_d),
                           static_cast<S>(cfg.delta_d),
                           static_cast<S>(cfg.alpha_d));
      side.w_d1 += d.d1;
      side.w_d2 += d.d2;
      cap_row_norms(side.w_d1);
      cap_row_norms(side.w_d2);
      if (norms) norms->side += d.d1.norm() + d.d2.norm();
    }
    if (cfg.side_branch_on && cfg.eta_x != 0.0) {
      // the cross-gate rule correlates the raw pre-fusion outputs
      mat<S> dx = cross.update(t.z_side1, t.y1[3], static_cast<S>(cfg.eta_x),
                               static_cast<S>(cfg.delta_x));
      cross.w_x += dx;
      if (norms) norms->cross += dx.norm();
    }
    if (cfg.memory_on &&
        (cfg.eta_k != 0.0 || cfg.eta_v != 0.0 || cfg.eta_q != 0.0)) {
      auto d = memory_update<S>(
          mem, t.attention, t.q, t.zm_hat1, t.zs_hat1,
          static_cast<S>(cfg.eta_k), static_cast<S>(cfg.delta_k),
          static_cast<S>(cfg.eta_v), static_cast<S>(cfg.delta_v),
          static_cast<S>(cfg.eta_q), static_cast<S>(cfg.delta_q));
      mem.keys += d.keys;
      mem.values += d.values;
      mem.w_q += d.w_q;
      cap_row_norms(mem.w_q);
      // slots act as prototypes of the fused outputs; keep them on that
      // scale so a winning slot cannot grow without bound
      cap_row_norms(mem.keys, S(8) * static_cast<S>(kRowNormCap));
      cap_row_norms(mem.values, S(8) * static_cast<S>(kRowNormCap));
      if (norms)
        norms->memory += d.keys.norm() + d.values.norm() + d.w_q.norm();
    }
    if (cfg.feedback_on && cfg.memory_on && cfg.eta_fb != 0.0) {
      mat<S> profile = input_spatial_profile<S>(in.r0, kPooledArea);
      auto d = fb.update(t.side_r1, profile, t.h_mem,
                         static_cast<S>(cfg.eta_fb),
                         static_cast<S>(cfg.delta_fb));
      fb.w_fb1 += d.fb1;
      fb.w_fbl1 += d.fbl1;
      fb.w_gate += d.gate;
      if (norms)
        norms->feedback += d.fb1.norm() + d.fbl1.norm() + d.gate.norm();
    }
  }

  // recursive rule: pass-2 post activity against pass-1 pre activity,
  // applied after the re-run as a distinct step
  void apply_recursive_update(const forward_trace<S>& t, update_norms* norms) {
    if (!cfg.recursive_on || cfg.alpha_r == 0.0) return;
    const int ns = static_cast<int>(active_streams.size());
    for (int l = 0; l < 4; ++l) {
      auto& lay = layers[l];
      const int block = kLayerUnits[l] / ns;
      for (int k = 0; k < ns; ++k) {
        mat<S> y2b = t.y2[l].middleRows(k * block, block);
        mat<S> rec = recursive_delta<S>(y2b, t.x1[l][k],
                                        lay.stream_weights[k],
                                        static_cast<S>(cfg.delta_r));
        std::vector<weighted_term<S>> terms{
            {static_cast<S>(cfg.alpha_r), &rec}};
        vec<S> rho_block = lay.gain.rho.segment(k * block, block);
        mat<S> dw = compose_delta<S>(rho_block, terms);
        lay.stream_weights[k] += dw;
        cap_row_norms(lay.stream_weights[k]);
        if (norms) norms->hierarchy += dw.norm();
      }
    }
  }

  void apply_slow_traces(const forward_trace<S>& t) {
    for (int l = 0; l < 4; ++l) {
      homeostasis_update<S>(layers[l], t.y1[l], static_cast<S>(cfg.eta_g));
      gain_update<S>(layers[l].gain, t.y1[l]);
    }
  }

  // ---- bookkeeping

  std::map<std::string, std::size_t> param_counts() const {
    std::map<std::string, std::size_t> c;
    std::size_t hier = 0, lat = 0, gains = 0;
    for (const auto& l : layers) {
      hier += l.stream_param_count();
      lat += l.lateral.param_count();
      gains += static_cast<std::size_t>(l.gains.size());
    }
    c["hierarchy"] = hier;
    c["lateral"] = lat;
    c["homeostatic_gains"] = gains;
    c["side_branch"] =
        cfg.side_branch_on ? side.w_d1.size() + side.w_d2.size() : 0;
    c["cross_gate"] = cfg.side_branch_on ? cross.w_x.size() : 0;
    c["memory"] = cfg.memory_on
                      ? mem.keys.size() + mem.values.size() + mem.w_q.size()
                      : 0;
    c["feedback"] = (cfg.feedback_on && cfg.memory_on)
                        ? fb.w_fb1.size() + fb.w_fbl1.size() + fb.w_gate.size()
                        : 0;
    return c;
  }

  // checksum over every rule-trained weight bank (checkpoint-equivalent view)
  std::uint64_t weight_checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& l : layers) {
      for (const auto& w : l.stream_weights) h = checksum(w, h);
      h = checksum(l.lateral.weights, h);
    }
    h = checksum(side.w_d1, h);
    h = checksum(side.w_d2, h);
    h = checksum(cross.w_x, h);
    h = checksum(mem.keys, h);
    h = checksum(mem.values, h);
    h = checksum(mem.w_q, h);
    h = checksum(fb.w_fb1, h);
    h = checksum(fb.w_fbl1, h);
    h = checksum(fb.w_gate, h);
    return h;
  }

  // checksum including slow traces (full representational state)
  std::uint64_t full_checksum() const {
    std::uint64_t h = weight_checksum();
    for (const auto& l : layers) {
      h = checksum(l.gains, h);
      h = checksum(l.mean_trace, h);
      h = checksum(l.gain.rho, h);
      h = checksum(l.gain.trace, h);
    }
    return h;
  }
};

// ------------------------------- audit -------------------------------------

struct audit_result {
  double probe_grad_norm = 0;
  double repr_grad_norm = 0;
  bool barrier_zero = false;
  bool detach_decoupled = false;
  bool ok() const { return barrier_zero && detach_decoupled; }
};

// verifies Definition-style gradient isolation on a diagnostic batch: the
// probe gradient is real and non-degenerate, the gradient path into every
// representational parameter is exactly zero, and the detached copy fed to
// the probe is storage-decoupled from the model
template <class S>
audit_result stop_gradient_audit(model<S>& m, const probe<S>& p,
                                 const stop_gradient<S>& barrier,
                                 const batch_input<S>& in,
                                 const std::vector<int>& labels) {
  audit_result res;
  mat<S> gate = m.make_gate(in.saliency, 0, 0);
  forward_trace<S> t = m.two_pass(in, gate);
  mat<S> z_bar = barrier.detach(t.z_final);

  auto g = p.gradient(z_bar, labels);
  res.probe_grad_norm =
      std::sqrt(static_cast<double>(g.g_w.squaredNorm()) +
                static_cast<double>(g.g_b.squaredNorm()));

  // chain rule through the barrier: dL/dtheta = J_theta^T * (factor * dL/dz)
  mat<S> upstream = barrier.backward(g.g_input);
  res.repr_grad_norm = static_cast<double>(upstream.norm());
  res.barrier_zero = (upstream.array() == S(0)).all();

  // perturbing representational weights must not move the probe's input
  // buffer or its gradients (the detached value is a copy, not a view)
  std::uint64_t zsum_before = checksum(z_bar);
  auto gw_sum = checksum(g.g_w);
  S stash = m.layers[0].stream_weights[0](0, 0);
  m.layers[0].stream_weights[0](0, 0) += S(0.125);
  std::uint64_t zsum_after = checksum(z_bar);
  auto g2 = p.gradient(z_bar, labels);
  m.layers[0].stream_weights[0](0, 0) = stash;
  res.detach_decoupled =
      zsum_before == zsum_after && checksum(g2.g_w) == gw_sum;

  if (!res.barrier_zero)
    throw isolation_error(
        "stop-gradient audit: non-zero gradient path into representational "
        "parameters (norm " +
        std::to_string(res.repr_grad_norm) + ")");
  if (!res.detach_decoupled)
    throw isolation_error(
        "stop-gradient audit: probe input is not storage-decoupled");
  return res;
}

// ------------------------------ NCM readout --------------------------------

template <class S>
mat<S> ncm_fit(const mat<S>& features, const std::vector<int>& labels,
               int classes) {
  mat<S> means = mat<S>::Zero(features.rows(), classes);
  std::vector<int> counts(classes, 0);
  for (Eigen::Index i = 0; i < features.cols(); ++i) {
    means.col(labels[i]) += features.col(i);
    ++counts[labels[i]];
  }
  for (int c = 0; c < classes; ++c)
    if (counts[c] > 0) means.col(c) /= static_cast<S>(counts[c]);
  return means;
}

template <class S>
int ncm_classify(const vec<S>& feature, const mat<S>& means) {
  S fn = feature.norm();
  int best = 0;
  S best_sim = -S(2);
  for (Eigen::Index c = 0; c < means.cols(); ++c) {
    S mn = means.col(c).norm();
    S sim = (fn > S(0) && mn > S(0))
                ? feature.dot(means.col(c)) / (fn * mn)
                : S(-1);
    if (sim > best_sim) {
      best_sim = sim;
      best = static_cast<int>(c);
    }
  }
  return best;
}

// ------------------------------ checkpoints --------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <class S>
void write_matrix(std::ostream& out, const mat<S>& m) {
  std::uint64_t r = m.rows(), c = m.cols();
  out.write(reinterpret_cast<const char*>(&r), 8);
  out.write(reinterpret_cast<const char*>(&c), 8);
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(S) * m.size()));
}

template <class S>
void read_matrix(std::istream& in, mat<S>& m) {
  std::uint64_t r = 0, c = 0;
  in.read(reinterpret_cast<char*>(&r), 8);
  in.read(reinterpret_cast<char*>(&c), 8);
  m.resize(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(S) * m.size()));
  if (!in) throw io_error("checkpoint: truncated matrix block");
}

template <class S>
void save_checkpoint(const model<S>& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("save_checkpoint: cannot write " + path);
  out.write("LPVC", 4);
  std::uint32_t ver = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&ver), 4);
  std::uint64_t ch = config_hash(m.cfg);
  out.write(reinterpret_cast<const char*>(&ch), 8);
  std::uint64_t sd = m.seed;
  out.write(reinterpret_cast<const char*>(&sd), 8);
  std::string cfg_text = to_json(m.cfg).dump();
  std::uint64_t len = cfg_text.size();
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(cfg_text.data(), static_cast<std::streamsize>(len));
  for (const auto& l : m.layers) {
    for (const auto& w : l.stream_weights) write_matrix(out, w);
    write_matrix(out, l.lateral.weights);
    write_matrix<S>(out, l.gains);
    write_matrix<S>(out, l.mean_trace);
    write_matrix<S>(out, l.gain.rho);
    write_matrix<S>(out, l.gain.trace);
  }
  write_matrix(out, m.side.w_d1);
  write_matrix(out, m.side.w_d2);
  write_matrix(out, m.cross.w_x);
  write_matrix(out, m.mem.keys);
  write_matrix(out, m.mem.values);
  write_matrix(out, m.mem.w_q);
  write_matrix(out, m.fb.w_fb1);
  write_matrix(out, m.fb.w_fbl1);
  write_matrix(out, m.fb.w_gate);
}

template <class S>
model<S> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("load_checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (std::string(magic, 4) != "LPVC")
    throw io_error("load_checkpoint: bad magic");
  std::uint32_t ver = 0;
  in.read(reinterpret_cast<char*>(&ver), 4);
  if (ver != kCheckpointVersion)
    throw io_error("load_checkpoint: unsupported version " +
                   std::to_string(ver));
  std::uint64_t ch = 0, sd = 0, len = 0;
  in.read(reinterpret_cast<char*>(&ch), 8);
  in.read(reinterpret_cast<char*>(&sd), 8);
  in.read(reinterpret_cast<char*>(&len), 8);
  std::string cfg_text(len, '\0');
  in.read(cfg_text.data(), static_cast<std::streamsize>(len));
  run_config cfg = config_from_json(json::parse(cfg_text));
  if (config_hash(cfg) != ch)
    throw io_error("load_checkpoint: config hash mismatch");
  model<S> m;
  m.init(cfg, sd);
  for (auto& l : m.layers) {
    for (auto& w : l.stream_weights) read_matrix(in, w);
    read_matrix(in, l.lateral.weights);
    vec<S> tmp;
    mat<S> col;
    read_matrix(in, col);
    l.gains = col;
    read_matrix(in, col);
    l.mean_trace = col;
    read_matrix(in, col);
    l.gain.rho = col;
    read_matrix(in, col);
    l.gain.trace = col;
    (void)tmp;
  }
  read_matrix(in, m.side.w_d1);
  read_matrix(in, m.side.w_d2);
  read_matrix(in, m.cross.w_x);
  read_matrix(in, m.mem.keys);
  read_matrix(in, m.mem.values);
  read_matrix(in, m.mem.w_q);
  read_matrix(in, m.fb.w_fb1);
  read_matrix(in, m.fb.w_fbl1);
  read_matrix(in, m.fb.w_gate);
  return m;
}

}  // namespace lpv
