#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "lpv/core.hpp"

namespace lpv {

// ---------------------------------------------------------------------------
// fixed early vision: opponent colour, Gabor energy streams, chromatic Haar
// features and the static saliency map. Everything here is non-plastic and
// pure; the learned hierarchy consumes pooled versions of these maps.
// ---------------------------------------------------------------------------

template <class S>
using image = mat<S>;  // H x W, row = y, col = x

template <class S>
using planes3 = std::array<mat<S>, 3>;

// RGB -> LMS, Hunt-Pointer-Estevez cone matrix composed with the linear
// sRGB->XYZ (D65) primaries. Appropriate for linear-RGB inputs; CIFAR bytes
// are treated as linear.
template <class S>
mat<S> hpe_rgb_to_lms() {
  mat<S> m(3, 3);
  m << S(0.30574456703399999), S(0.62269851812700006), S(0.045275503037000009),
      S(0.157787790875), S(0.76966825065900002), S(0.088049166405999996),
      S(0.019333900000000001), S(0.11919200000000001), S(0.95030409999999998);
  return m;
}

template <class S>
mat<S> identity_rgb_to_lms() {
  return mat<S>::Identity(3, 3);
}

// opponent recombination: (L+M, L-M, S-(L+M)) computed pixel-wise from
// (L,M,S) = mapping * (R,G,B)
template <class S>
planes3<S> opponent_transform(const planes3<S>& img, const mat<S>& mapping) {
  for (const auto& ch : img)
    if (!all_finite(ch))
      throw config_error("opponent_transform: non-finite pixel value");
  if (mapping.rows() != 3 || mapping.cols() != 3)
    throw config_error("opponent_transform: mapping must be 3x3");
  if (std::abs(static_cast<double>(mapping.determinant())) < 1e-12)
    throw config_error("opponent_transform: mapping is singular");

  const auto& r = img[0];
  const auto& g = img[1];
  const auto& b = img[2];
  mat<S> lch = mapping(0, 0) * r + mapping(0, 1) * g + mapping(0, 2) * b;
  mat<S> mch = mapping(1, 0) * r + mapping(1, 1) * g + mapping(1, 2) * b;
  mat<S> sch = mapping(2, 0) * r + mapping(2, 1) * g + mapping(2, 2) * b;
  planes3<S> out;
  out[0] = lch + mch;
  out[1] = lch - mch;
  out[2] = sch - out[0];
  return out;
}

template <class S>
struct gabor_bank {
  struct kernel_pair {
    mat<S> re, im;  // phases 0 and pi/2
    int freq_index = 0;
    int orient_index = 0;
  };
  std::vector<kernel_pair> kernels;  // freq-major: k = f * n_theta + o
  std::vector<S> frequencies;        // cycles / pixel
  std::vector<S> sigmas;             // 0.56 / f
  int n_theta = 0;

  int stream_count() const { return static_cast<int>(frequencies.size()); }
};

template <class S>
std::vector<S> default_gabor_frequencies() {
  // geometric series 0.05..0.40 cycles/pixel, ratio 8^(1/6) ~ 1.414
  std::vector<S> f(7);
  for (int k = 0; k < 7; ++k)
    f[k] = static_cast<S>(0.05 * std::pow(8.0, k / 6.0));
  return f;
}

// Gaussian-windowed cosine carrier, sigma = 0.56/f, quadrature phases
// {0, pi/2}. Kernels are mean-subtracted so constants map exactly to the
// energy floor, then the pair is rescaled by a shared factor to unit joint
// norm so all frequency streams respond on a comparable scale.
template <class S>
gabor_bank<S> build_gabor_bank(const std::vector<S>& frequencies,
                               int n_theta) {
  if (frequencies.empty() || n_theta < 1)
    throw config_error("build_gabor_bank: empty bank requested");
  for (S f : frequencies) {
    if (!(f > S(0)))
      throw config_error("build_gabor_bank: frequency must be positive");
    if (f > S(0.5))
      throw config_error("build_gabor_bank: frequency above Nyquist (0.5)");
  }

  gabor_bank<S> bank;
  bank.frequencies = frequencies;
  bank.n_theta = n_theta;
  bank.sigmas.resize(frequencies.size());

  for (std::size_t fi = 0; fi < frequencies.size(); ++fi) {
    double f = static_cast<double>(frequencies[fi]);
    double sigma = 0.56 / f;
    bank.sigmas[fi] = static_cast<S>(sigma);
    int extent = static_cast<int>(std::ceil(3.0 * sigma));
    if (extent % 2 == 0) extent += 1;  // odd-sized support
    int radius = extent / 2;

    for (int oi = 0; oi < n_theta; ++oi) {
      double theta = M_PI * oi / n_theta;
      double ct = std::cos(theta), st = std::sin(theta);
      mat<S> re(extent, extent), im(extent, extent);
      for (int y = -radius; y <= radius; ++y)
        for (int x = -radius; x <= radius; ++x) {
          double xt = x * ct + y * st;
          double yt = -x * st + y * ct;
          double env = std::exp(-(xt * xt + yt * yt) / (2.0 * sigma * sigma));
          double phase = 2.0 * M_PI * f * xt;
          re(y + radius, x + radius) = static_cast<S>(env * std::cos(phase));
          im(y + radius, x + radius) =
              static_cast<S>(env * std::cos(phase + M_PI / 2.0));
        }
      re.array() -= re.mean();
      im.array() -= im.mean();
      double joint = std::sqrt((re.squaredNorm() + im.squaredNorm()) / 2.0);
      if (joint > 0.0) {
        re /= static_cast<S>(joint);
        im /= static_cast<S>(joint);
      }
      bank.kernels.push_back({std::move(re), std::move(im),
                              static_cast<int>(fi), oi});
    }
  }
  return bank;
}

template <class S>
mat<S> pad_reflect(const mat<S>& img, int pr, int pc) {
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  auto reflect = [](int i, int n) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -i - 1;
      if (i >= n) i = 2 * n - i - 1;
    }
    return i;
  };
  mat<S> out(h + 2 * pr, w + 2 * pc);
  for (int c = -pc; c < w + pc; ++c) {
    int cc = reflect(c, w);
    for (int r = -pr; r < h + pr; ++r)
      out(r + pr, c + pc) = img(reflect(r, h), cc);
  }
  return out;
}

// "same"-size correlation with mirrored borders; the inner accumulation
// runs over contiguous column segments of the padded image
template <class S>
mat<S> conv2_same_reflect(const mat<S>& img, const mat<S>& k) {
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  const int kh = static_cast<int>(k.rows());
  const int kw = static_cast<int>(k.cols());
  mat<S> padded = pad_reflect(img, kh / 2, kw / 2);
  mat<S> out = mat<S>::Zero(h, w);
  for (int c = 0; c < w; ++c) {
    auto out_col = out.col(c);
    for (int j = 0; j < kw; ++j) {
      const auto in_col = padded.col(c + j);
      for (int i = 0; i < kh; ++i) {
        S kv = k(i, j);
        if (kv != S(0)) out_col += kv * in_col.segment(i, h);
      }
    }
  }
  return out;
}

template <class S>
mat<S> conv2_prepadded(const mat<S>& padded, const mat<S>& k, int h, int w) {
  const int kh = static_cast<int>(k.rows());
  const int kw = static_cast<int>(k.cols());
  mat<S> out = mat<S>::Zero(h, w);
  for (int c = 0; c < w; ++c) {
    auto out_col = out.col(c);
    for (int j = 0; j < kw; ++j) {
      const auto in_col = padded.col(c + j);
      for (int i = 0; i < kh; ++i) {
        S kv = k(i, j);
        if (kv != S(0)) out_col += kv * in_col.segment(i, h);
      }
    }
  }
  return out;
}

// quadrature energy per (frequency, orientation) stream map, floored at eps;
// the input is padded once per kernel extent
template <class S>
std::vector<mat<S>> gabor_energy(const mat<S>& lum, const gabor_bank<S>& bank,
                                 S epsilon) {
  if (!all_finite(lum)) throw config_error("gabor_energy: non-finite input");
  if (!(epsilon > S(0))) throw config_error("gabor_energy: epsilon must be > 0");
  const int h = static_cast<int>(lum.rows());
  const int w = static_cast<int>(lum.cols());
  std::vector<mat<S>> out;
  out.reserve(bank.kernels.size());
  int cur_extent = -1;
  mat<S> padded;
  for (const auto& kp : bank.kernels) {
    int extent = static_cast<int>(kp.re.rows());
    if (extent != cur_extent) {
      padded = pad_reflect(lum, extent / 2, extent / 2);
      cur_extent = extent;
    }
    mat<S> cr = conv2_prepadded(padded, kp.re, h, w);
    mat<S> ci = conv2_prepadded(padded, kp.im, h, w);
    out.push_back(
        ((cr.array().square() + ci.array().square()).sqrt() + epsilon)
            .matrix());
  }
  return out;
}

inline constexpr double kEnergyEpsilon = 1e-6;

// one-level undecimated Haar per opponent channel, 4 subbands each
// (LL, LH, HL, HH at full resolution), averaging convention so LL of a
// constant is the constant and details are exactly zero. Boundary taps
// clamp to the edge sample.
template <class S>
std::vector<mat<S>> haar_features(const planes3<S>& opp) {
  const int h = static_cast<int>(opp[0].rows());
  const int w = static_cast<int>(opp[0].cols());
  if (h < 4 || w < 4 || h % 2 != 0 || w % 2 != 0)
    throw config_error("haar_features: dimensions must be even and >= 4");
  std::vector<mat<S>> out;
  out.reserve(12);
  for (const auto& ch : opp) {
    mat<S> ll(h, w), lh(h, w), hl(h, w), hh(h, w);
    for (int r = 0; r < h; ++r) {
      int r1 = std::min(r + 1, h - 1);
      for (int c = 0; c < w; ++c) {
        int c1 = std::min(c + 1, w - 1);
        S a = ch(r, c), b = ch(r, c1), cc = ch(r1, c), d = ch(r1, c1);
        ll(r, c) = (a + b + cc + d) * S(0.25);
        lh(r, c) = (a - b + cc - d) * S(0.25);  // horizontal detail
        hl(r, c) = (a + b - cc - d) * S(0.25);  // vertical detail
        hh(r, c) = (a - b - cc + d) * S(0.25);  // diagonal detail
      }
    }
    out.push_back(std::move(ll));
    out.push_back(std::move(lh));
    out.push_back(std::move(hl));
    out.push_back(std::move(hh));
  }
  return out;
}

template <class S>
struct saliency_weights {
  S w_int = S(1.0);
  S w_ori = S(1.0);
  S alpha_sym = S(0.5);
};

// fixed centred Gaussian bump, sigma = H/4, peak-normalised to 1
template <class S>
mat<S> make_symmetry_prior(int h, int w) {
  mat<S> p(h, w);
  double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  double sigma = h / 4.0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double dy = r - cy, dx = c - cx;
      p(r, c) = static_cast<S>(
          std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)));
    }
  return p;
}

template <class S>
mat<S> saliency_map(const mat<S>& intensity, const mat<S>& mean_orient_energy,
                    const mat<S>& sym_prior, const saliency_weights<S>& w) {
  if (!all_finite(intensity) || !all_finite(mean_orient_energy))
    throw config_error("saliency_map: non-finite input");
  mat<S> z = w.w_int * intensity + w.w_ori * mean_orient_energy +
             w.alpha_sym * sym_prior;
  return (S(1) / (S(1) + (-z.array()).exp())).matrix();
}

// mean pooling with non-overlapping stride x stride patches
template <class S>
mat<S> pool_mean(const mat<S>& m, int stride) {
  const int h = static_cast<int>(m.rows()) / stride;
  const int w = static_cast<int>(m.cols()) / stride;
  mat<S> out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      out(r, c) =
          m.block(r * stride, c * stride, stride, stride).sum() /
          static_cast<S>(stride * stride);
  return out;
}

// ---------------------------------------------------------------------------
// CIFAR-native front end: fixed 32x32 geometry pooled to 8x8 receptive
// positions. Produces the L1 input vector R0 (channel-major, 64 positions
// per channel) and the pooled saliency gate.
// ---------------------------------------------------------------------------

inline constexpr int kImageSide = 32;
inline constexpr int kPoolStride = 4;
inline constexpr int kPooledSide = kImageSide / kPoolStride;    // 8
inline constexpr int kPooledArea = kPooledSide * kPooledSide;   // 64
inline constexpr int kFreqStreams = 7;
inline constexpr int kOrients = 7;
inline constexpr int kHaarChannels = 12;
inline constexpr int kGaborStreamDim = kOrients * kPooledArea;       // 448
inline constexpr int kHaarStreamDim = kHaarChannels * kPooledArea;   // 768
inline constexpr int kStreamCount = kFreqStreams + 1;                // 8
inline constexpr int kR0Dim =
    kFreqStreams * kGaborStreamDim + kHaarStreamDim;  // 3904
inline constexpr int kR0Channels = kFreqStreams * kOrients + kHaarChannels;

template <class S>
struct frontend_features {
  vec<S> r0;          // kR0Dim, pooled stream stack feeding L1
  vec<S> saliency;    // kPooledArea, pooled saliency gate
};

template <class S>
int stream_offset(int s) {
  return s < kFreqStreams ? s * kGaborStreamDim
                          : kFreqStreams * kGaborStreamDim;
}

template <class S>
int stream_dim(int s) {
  return s < kFreqStreams ? kGaborStreamDim : kHaarStreamDim;
}

template <class S>
class front_end {
 public:
  front_end()
      : bank_(build_gabor_bank<S>(default_gabor_frequencies<S>(), kOrients)),
        mapping_(hpe_rgb_to_lms<S>()),
        prior_(make_symmetry_prior<S>(kImageSide, kImageSide)) {}

  front_end(gabor_bank<S> bank, mat<S> mapping, saliency_weights<S> sw)
      : bank_(std::move(bank)),
        mapping_(std::move(mapping)),
        sal_weights_(sw),
        prior_(make_symmetry_prior<S>(kImageSide, kImageSide)) {}

  void use_identity_mapping() { mapping_ = identity_rgb_to_lms<S>(); }

  const gabor_bank<S>& bank() const { return bank_; }

  frontend_features<S> process(const planes3<S>& rgb) const {
    planes3<S> opp = opponent_transform(rgb, mapping_);
    std::vector<mat<S>> streams =
        gabor_energy(opp[0], bank_, static_cast<S>(kEnergyEpsilon));
    std::vector<mat<S>> haar = haar_features(opp);

    // each pooled channel is spatially centred per image (contrast coding):
    // the common positive mode of the energy maps would otherwise dominate
    // every correlation the plastic layers see
    frontend_features<S> out;
    out.r0.resize(kR0Dim);
    int off = 0;
    auto emit = [&](const mat<S>& m) {
      mat<S> p = pool_mean(m, kPoolStride);
      S mean = p.mean();
      for (int r = 0; r < kPooledSide; ++r)
        for (int c = 0; c < kPooledSide; ++c)
          out.r0[off + r * kPooledSide + c] = p(r, c) - mean;
      off += kPooledArea;
    };
    for (const auto& m : streams) emit(m);
    for (const auto& m : haar) emit(m);

    mat<S> obar = mat<S>::Zero(kImageSide, kImageSide);
    for (const auto& m : streams) obar += m;
    obar /= static_cast<S>(streams.size());
    mat<S> sal = saliency_map(opp[0], obar, prior_, sal_weights_);
    mat<S> salp = pool_mean(sal, kPoolStride);
    out.saliency.resize(kPooledArea);
    for (int r = 0; r < kPooledSide; ++r)
      for (int c = 0; c < kPooledSide; ++c)
        out.saliency[r * kPooledSide + c] = salp(r, c);
    return out;
  }

 private:
  gabor_bank<S> bank_;
  mat<S> mapping_;
  saliency_weights<S> sal_weights_;
  mat<S> prior_;
};

}  // namespace lpv
