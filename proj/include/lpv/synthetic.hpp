#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>

#include "lpv/data.hpp"

namespace lpv {

// ---------------------------------------------------------------------------
// synthetic image set in exact CIFAR-10 binary format. Ten texture classes,
// each defined by a mid-frequency luminance grating orientation plus a
// chromatic high-frequency component and a low-frequency luminance
// component, with per-image phase and orientation jitter. Used by the test
// harness when the real dataset is not present.
// ---------------------------------------------------------------------------

struct synthetic_params {
  double primary_freq = 0.05 * std::pow(8.0, 3.0 / 6.0);    // ~0.141 c/px
  double chroma_freq = 0.05 * std::pow(8.0, 5.0 / 6.0);     // ~0.283 c/px
  double primary_amp_lo = 0.12, primary_amp_hi = 0.22;
  double chroma_amp_lo = 0.08, chroma_amp_hi = 0.16;
  double clutter_amp_lo = 0.03, clutter_amp_hi = 0.10;
  double orient_jitter = 0.10;  // radians
  double hue_jitter = 0.35;     // radians
  double noise_amp = 0.05;
};

// one localized grating component
struct texture_patch {
  double theta, freq, phase, amp;
  double cx, cy, sigma;  // Gaussian envelope
  double value(double x, double y) const {
    double u = x * std::cos(theta) + y * std::sin(theta);
    double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
    return amp * std::exp(-d2 / (2.0 * sigma * sigma)) *
           std::cos(2.0 * M_PI * freq * u + phase);
  }
};

inline std::array<std::uint8_t, kPixelBytes> synthesize_image(
    int class_id, rng& r, const synthetic_params& p = {}) {
  const int n = kImageSide;
  const double freqs[4] = {0.071, 0.1, 0.2, 0.283};

  // class-informative components: localized luminance gratings at the class
  // orientation and a localized chromatic grating near the class hue
  texture_patch primary;
  primary.theta = M_PI * class_id / 10.0 +
                  r.uniform(-p.orient_jitter, p.orient_jitter);
  primary.freq = p.primary_freq;
  primary.phase = r.uniform(0.0, 2.0 * M_PI);
  primary.amp = r.uniform(p.primary_amp_lo, p.primary_amp_hi);
  primary.cx = r.uniform(8.0, n - 8.0);
  primary.cy = r.uniform(8.0, n - 8.0);
  primary.sigma = r.uniform(7.0, 13.0);

  texture_patch primary2;
  primary2.theta = M_PI * class_id / 10.0 +
                   r.uniform(-p.orient_jitter, p.orient_jitter);
  primary2.freq = p.primary_freq;
  primary2.phase = r.uniform(0.0, 2.0 * M_PI);
  primary2.amp = r.uniform(p.primary_amp_lo, p.primary_amp_hi);
  primary2.cx = r.uniform(6.0, n - 6.0);
  primary2.cy = r.uniform(6.0, n - 6.0);
  primary2.sigma = r.uniform(5.0, 10.0);

  texture_patch chroma;
  chroma.theta = M_PI * ((3 * class_id + 1) % 10) / 10.0 +
                 r.uniform(-p.orient_jitter, p.orient_jitter);
  chroma.freq = p.chroma_freq;
  chroma.phase = r.uniform(0.0, 2.0 * M_PI);
  chroma.amp = r.uniform(p.chroma_amp_lo, p.chroma_amp_hi);
  chroma.cx = r.uniform(8.0, n - 8.0);
  chroma.cy = r.uniform(8.0, n - 8.0);
  chroma.sigma = r.uniform(8.0, 16.0);
  const double hue =
      2.0 * M_PI * class_id / 10.0 + r.uniform(-p.hue_jitter, p.hue_jitter);
  const double dir[3] = {std::cos(hue), std::cos(hue + 2.0 * M_PI / 3.0),
                         std::cos(hue + 4.0 * M_PI / 3.0)};

  // class-independent clutter: localized patches at random orientation,
  // frequency and position, so the image ensemble is broad-spectrum
  texture_patch clutter[2];
  for (auto& c : clutter) {
    c.theta = r.uniform(0.0, M_PI);
    c.freq = freqs[static_cast<int>(r.bounded(4))];
    c.phase = r.uniform(0.0, 2.0 * M_PI);
    c.amp = r.uniform(p.clutter_amp_lo, p.clutter_amp_hi);
    c.cx = r.uniform(4.0, n - 4.0);
    c.cy = r.uniform(4.0, n - 4.0);
    c.sigma = r.uniform(5.0, 12.0);
  }

  const double base = r.uniform(0.40, 0.60);
  std::array<std::uint8_t, kPixelBytes> bytes{};
  for (int row = 0; row < n; ++row) {
    for (int col = 0; col < n; ++col) {
      double x = col, y = row;
      double lum = base + primary.value(x, y) + primary2.value(x, y) +
                   clutter[0].value(x, y) + clutter[1].value(x, y);
      double ch_sig = chroma.value(x, y);
      for (int ch = 0; ch < 3; ++ch) {
        double v = lum + ch_sig * dir[ch] + r.uniform(-p.noise_amp, p.noise_amp);
        v = std::min(1.0, std::max(0.0, v));
        bytes[ch * 1024 + row * n + col] =
            static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return bytes;
}

// balanced in-memory set; labels cycle through the classes and the order is
// then shuffled deterministically
inline dataset make_synthetic_dataset(std::size_t n, std::uint64_t seed,
                                      const std::string& split_tag,
                                      const synthetic_params& p = {}) {
  dataset d;
  d.variant = cifar_variant::cifar10;
  d.images.resize(n);
  d.labels.resize(n);
  std::vector<std::uint32_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
  rng shuf = rng::stream(fnv1a64("synthetic-order/" + split_tag, seed), 0);
  shuf.shuffle(order);
  for (std::size_t i = 0; i < n; ++i) {
    int cls = static_cast<int>(order[i] % 10);
    rng r = rng::stream(fnv1a64("synthetic/" + split_tag, seed), i);
    d.labels[i] = static_cast<std::uint8_t>(cls);
    d.images[i] = synthesize_image(cls, r, p);
  }
  return d;
}

// write the standard CIFAR-10 file layout (10,000 records per train batch)
inline void write_cifar10_files(const dataset& train, const dataset& test,
                                const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto write = [](const dataset& d, std::size_t lo, std::size_t hi,
                  const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("write_cifar10_files: cannot write " + path);
    for (std::size_t i = lo; i < hi; ++i) {
      auto rec = serialize_record(d, i);
      out.write(reinterpret_cast<const char*>(rec.data()),
                static_cast<std::streamsize>(rec.size()));
    }
  };
  const std::size_t per_batch = 10000;
  int batch = 1;
  for (std::size_t lo = 0; lo < train.size(); lo += per_batch, ++batch)
    write(train, lo, std::min(train.size(), lo + per_batch),
          dir + "/data_batch_" + std::to_string(batch) + ".bin");
  write(test, 0, test.size(), dir + "/test_batch.bin");
}

}  // namespace lpv
