#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "lpv/core.hpp"
#include "lpv/frontend.hpp"
#include "lpv/rng.hpp"

namespace lpv {

enum class cifar_variant { cifar10, cifar100 };

inline constexpr std::size_t kPixelBytes = 3072;  // 1024 R, 1024 G, 1024 B

inline std::size_t record_bytes(cifar_variant v) {
  return v == cifar_variant::cifar10 ? kPixelBytes + 1 : kPixelBytes + 2;
}

struct dataset {
  cifar_variant variant = cifar_variant::cifar10;
  std::vector<std::array<std::uint8_t, kPixelBytes>> images;
  std::vector<std::uint8_t> labels;         // fine labels for CIFAR-100
  std::vector<std::uint8_t> coarse_labels;  // CIFAR-100 only

  std::size_t size() const { return images.size(); }
  int class_count() const {
    return variant == cifar_variant::cifar10 ? 10 : 100;
  }

  void append(const dataset& other) {
    images.insert(images.end(), other.images.begin(), other.images.end());
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
    coarse_labels.insert(coarse_labels.end(), other.coarse_labels.begin(),
                         other.coarse_labels.end());
  }

  dataset select(const std::vector<std::uint32_t>& idx) const {
    dataset out;
    out.variant = variant;
    out.images.reserve(idx.size());
    out.labels.reserve(idx.size());
    for (auto i : idx) {
      out.images.push_back(images[i]);
      out.labels.push_back(labels[i]);
      if (!coarse_labels.empty()) out.coarse_labels.push_back(coarse_labels[i]);
    }
    return out;
  }
};

// raw bytes of one record, exactly as stored on disk
inline std::vector<std::uint8_t> serialize_record(const dataset& d,
                                                  std::size_t i) {
  std::vector<std::uint8_t> rec;
  rec.reserve(record_bytes(d.variant));
  if (d.variant == cifar_variant::cifar100)
    rec.push_back(d.coarse_labels[i]);
  rec.push_back(d.labels[i]);
  rec.insert(rec.end(), d.images[i].begin(), d.images[i].end());
  return rec;
}

// parse one binary file; the size must be an exact multiple of the record
// length (1 label byte + 3072 pixel bytes; CIFAR-100 adds a coarse byte)
inline dataset load_cifar(const std::string& path, cifar_variant variant) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) throw io_error("load_cifar: no such file: " + path);
  const std::size_t rec = record_bytes(variant);
  const std::size_t actual = fs::file_size(path);
  if (actual == 0 || actual % rec != 0) {
    std::size_t n = std::max<std::size_t>(1, (actual + rec / 2) / rec);
    throw io_error("load_cifar: " + path + ": expected a multiple of " +
                   std::to_string(rec) + " bytes (" + std::to_string(n) +
                   " records = " + std::to_string(n * rec) + " bytes), got " +
                   std::to_string(actual));
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("load_cifar: cannot open " + path);

  dataset d;
  d.variant = variant;
  const std::size_t n = actual / rec;
  d.images.resize(n);
  d.labels.resize(n);
  if (variant == cifar_variant::cifar100) d.coarse_labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint8_t lab[2];
    if (variant == cifar_variant::cifar100) {
      in.read(reinterpret_cast<char*>(lab), 2);
      d.coarse_labels[i] = lab[0];
      d.labels[i] = lab[1];
    } else {
      in.read(reinterpret_cast<char*>(lab), 1);
      d.labels[i] = lab[0];
    }
    in.read(reinterpret_cast<char*>(d.images[i].data()), kPixelBytes);
    if (!in) throw io_error("load_cifar: short read in " + path);
    if (static_cast<int>(d.labels[i]) >= d.class_count())
      throw io_error("load_cifar: label byte " + std::to_string(d.labels[i]) +
                     " out of range in " + path);
  }
  return d;
}

struct train_test {
  dataset train, test;
};

// standard on-disk layout: data_batch_*.bin + test_batch.bin (CIFAR-10),
// train.bin + test.bin (CIFAR-100)
inline train_test load_cifar_dir(const std::string& dir,
                                 cifar_variant variant) {
  namespace fs = std::filesystem;
  train_test out;
  out.train.variant = out.test.variant = variant;
  if (variant == cifar_variant::cifar10) {
    bool any = false;
    for (int i = 1; i <= 5; ++i) {
      std::string p = dir + "/data_batch_" + std::to_string(i) + ".bin";
      if (fs::exists(p)) {
        out.train.append(load_cifar(p, variant));
        any = true;
      }
    }
    if (!any)
      throw io_error("load_cifar_dir: no data_batch_*.bin under " + dir);
    out.test = load_cifar(dir + "/test_batch.bin", variant);
  } else {
    out.train = load_cifar(dir + "/train.bin", variant);
    out.test = load_cifar(dir + "/test.bin", variant);
  }
  return out;
}

// pixel bytes -> [0,1] planes (row-major 32x32 per colour plane)
template <class S>
planes3<S> to_planes(const std::array<std::uint8_t, kPixelBytes>& bytes) {
  planes3<S> out;
  for (int ch = 0; ch < 3; ++ch) {
    out[ch].resize(kImageSide, kImageSide);
    const std::uint8_t* p = bytes.data() + ch * 1024;
    for (int r = 0; r < kImageSide; ++r)
      for (int c = 0; c < kImageSide; ++c)
        out[ch](r, c) = static_cast<S>(p[r * kImageSide + c]) / S(255);
  }
  return out;
}

struct split_indices {
  std::vector<std::uint32_t> train, val;
};

// seed-stable disjoint split; the permutation comes from the documented
// counter-based generator so any implementation reproduces it
inline split_indices split_train_val(std::size_t n, std::uint64_t seed,
                                     double val_fraction = 0.10) {
  auto perm = epoch_permutation(fnv1a64("train-val-split", seed), 0, n);
  std::size_t n_val = static_cast<std::size_t>(n * val_fraction + 0.5);
  split_indices s;
  s.val.assign(perm.begin(), perm.begin() + n_val);
  s.train.assign(perm.begin() + n_val, perm.end());
  return s;
}

// class-balanced subset: per-class counts differ by at most one; within a
// class, membership follows a seeded permutation
inline std::vector<std::uint32_t> stratified_subset(
    const std::vector<std::uint8_t>& labels, int class_count,
    std::size_t total, std::uint64_t seed) {
  std::vector<std::vector<std::uint32_t>> by_class(class_count);
  for (std::uint32_t i = 0; i < labels.size(); ++i)
    by_class[labels[i]].push_back(i);
  std::size_t base = total / class_count;
  std::size_t extra = total % class_count;
  std::vector<std::uint32_t> out;
  out.reserve(total);
  for (int c = 0; c < class_count; ++c) {
    auto& pool = by_class[c];
    rng r = rng::stream(fnv1a64("stratified-subset", seed), c);
    r.shuffle(pool);
    std::size_t want = base + (static_cast<std::size_t>(c) < extra ? 1 : 0);
    if (want > pool.size())
      throw config_error("stratified_subset: class " + std::to_string(c) +
                         " has only " + std::to_string(pool.size()) +
                         " samples, need " + std::to_string(want));
    out.insert(out.end(), pool.begin(), pool.begin() + want);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace lpv
