#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "latentmark/error.hpp"
#include "latentmark/rng.hpp"

namespace latentmark {

/// A c x h x w block of latent noise stored row-major in (channel, row, col)
/// order as binary32. Channel count may be zero for an empty split part;
/// height and width are always positive.
class LatentTensor {
 public:
  LatentTensor() = default;

  LatentTensor(std::size_t channels, std::size_t height, std::size_t width)
      : channels_(channels), height_(height), width_(width),
        data_(channels * height * width, 0.0f) {
    check_dims();
  }

  LatentTensor(std::size_t channels, std::size_t height, std::size_t width,
               std::vector<float> data)
      : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
    check_dims();
    if (data_.size() != channels_ * height_ * width_) {
      throw Error(ErrorKind::kShapeMismatch, "latent data length does not match c*h*w");
    }
    for (const float v : data_) {
      if (!std::isfinite(v)) throw Error(ErrorKind::kInvalidArgument, "latent value is not finite");
    }
  }

  std::size_t channels() const noexcept { return channels_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t plane_size() const noexcept { return height_ * width_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  std::span<const float> channel(std::size_t c) const {
    return std::span<const float>(data_).subspan(c * plane_size(), plane_size());
  }
  std::span<float> channel(std::size_t c) {
    return std::span<float>(data_).subspan(c * plane_size(), plane_size());
  }

  float at(std::size_t c, std::size_t row, std::size_t col) const {
    return data_[(c * height_ + row) * width_ + col];
  }
  float& at(std::size_t c, std::size_t row, std::size_t col) {
    return data_[(c * height_ + row) * width_ + col];
  }

  bool same_shape(const LatentTensor& o) const noexcept {
    return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
  }

  /// Bitwise equality of every element (distinguishes -0.0f from 0.0f).
  bool bit_equal(const LatentTensor& o) const noexcept {
    return same_shape(o) &&
           std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(float)) == 0;
  }

 private:
  void check_dims() const {
    if (height_ == 0 || width_ == 0) {
      throw Error(ErrorKind::kInvalidArgument, "latent height and width must be positive");
    }
  }

  std::size_t channels_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<float> data_;
};

/// Seed / watermark / remaining channel counts, in that order.
struct ChannelSplit {
  std::size_t seed = 1;
  std::size_t wm = 3;
  std::size_t rest = 0;

  std::size_t total() const noexcept { return seed + wm + rest; }
  friend bool operator==(const ChannelSplit&, const ChannelSplit&) = default;
};

inline LatentTensor sample_gaussian_latent(std::size_t c, std::size_t h, std::size_t w,
                                           RngState& rng) {
  if (c == 0 || h == 0 || w == 0) {
    throw Error(ErrorKind::kInvalidArgument, "latent dimensions must be positive");
  }
  LatentTensor z(c, h, w);
  NormalStream normals(rng);
  for (float& v : z.data()) v = static_cast<float>(normals.next());
  return z;
}

namespace detail {

inline LatentTensor slice_channels(const LatentTensor& z, std::size_t first, std::size_t count) {
  LatentTensor out(count, z.height(), z.width());
  const auto src = z.data().subspan(first * z.plane_size(), count * z.plane_size());
  std::copy(src.begin(), src.end(), out.data().begin());
  return out;
}

}  // namespace detail

struct SplitParts {
  LatentTensor seed;
  LatentTensor wm;
  LatentTensor rest;
};

inline SplitParts split(const LatentTensor& z, const ChannelSplit& cfg) {
  if (cfg.seed < 1 || cfg.wm < 1 || cfg.total() != z.channels()) {
    throw Error(ErrorKind::kShapeMismatch,
                "channel split " + std::to_string(cfg.seed) + "+" + std::to_string(cfg.wm) + "+" +
                    std::to_string(cfg.rest) + " does not match " + std::to_string(z.channels()) +
                    " channels");
  }
  return {detail::slice_channels(z, 0, cfg.seed), detail::slice_channels(z, cfg.seed, cfg.wm),
          detail::slice_channels(z, cfg.seed + cfg.wm, cfg.rest)};
}

inline LatentTensor merge(const LatentTensor& seed, const LatentTensor& wm,
                          const LatentTensor& rest) {
  for (const LatentTensor* p : {&wm, &rest}) {
    if (p->height() != seed.height() || p->width() != seed.width()) {
      throw Error(ErrorKind::kShapeMismatch, "merge: spatial dimensions differ");
    }
  }
  LatentTensor out(seed.channels() + wm.channels() + rest.channels(), seed.height(), seed.width());
  auto it = out.data().begin();
  for (const LatentTensor* p : {&seed, &wm, &rest}) {
    it = std::copy(p->data().begin(), p->data().end(), it);
  }
  return out;
}

inline LatentTensor merge(const SplitParts& parts) {
  return merge(parts.seed, parts.wm, parts.rest);
}

// LTN1 file format: "LTN1" | c, h, w as u32 LE | c*h*w binary32 LE.

inline constexpr std::array<char, 4> kLatentMagic = {'L', 'T', 'N', '1'};
inline constexpr std::size_t kLatentHeaderBytes = 16;
inline constexpr std::uint64_t kMaxLatentElements = std::uint64_t{1} << 30;

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

}  // namespace detail

inline std::vector<unsigned char> encode_latent(const LatentTensor& z) {
  std::vector<unsigned char> out(kLatentMagic.begin(), kLatentMagic.end());
  out.reserve(kLatentHeaderBytes + 4 * z.size());
  for (std::size_t d : {z.channels(), z.height(), z.width()}) {
    if (d > 0xFFFFFFFFu) throw Error(ErrorKind::kDimensionOverflow, "dimension exceeds u32");
    detail::put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (const float v : z.data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

inline LatentTensor decode_latent(std::span<const unsigned char> bytes) {
  if (bytes.size() < kLatentHeaderBytes) {
    if (bytes.size() >= 4 && !std::equal(kLatentMagic.begin(), kLatentMagic.end(),
                                         reinterpret_cast<const char*>(bytes.data()))) {
      throw Error(ErrorKind::kBadMagic, "not an LTN1 file");
    }
    throw Error(ErrorKind::kTruncated, "latent header truncated");
  }
  if (!std::equal(kLatentMagic.begin(), kLatentMagic.end(),
                  reinterpret_cast<const char*>(bytes.data()))) {
    throw Error(ErrorKind::kBadMagic, "not an LTN1 file");
  }
  const std::uint64_t c = detail::get_u32(bytes.data() + 4);
  const std::uint64_t h = detail::get_u32(bytes.data() + 8);
  const std::uint64_t w = detail::get_u32(bytes.data() + 12);
  if (h == 0 || w == 0) throw Error(ErrorKind::kInvalidArgument, "zero spatial dimension");
  // Each factor is < 2^32, so neither product can wrap once ch is bounded.
  const std::uint64_t ch = c * h;
  if (ch > kMaxLatentElements || ch * w > kMaxLatentElements) {
    throw Error(ErrorKind::kDimensionOverflow, "latent dimensions too large");
  }
  const std::uint64_t n = ch * w;
  const std::uint64_t payload = bytes.size() - kLatentHeaderBytes;
  if (payload < 4 * n) {
    throw Error(ErrorKind::kTruncated, "latent payload has " + std::to_string(payload / 4) +
                                           " values, header declares " + std::to_string(n));
  }
  if (payload > 4 * n) throw Error(ErrorKind::kTruncated, "trailing bytes after latent payload");
  std::vector<float> data(n);
  const unsigned char* p = bytes.data() + kLatentHeaderBytes;
  for (std::uint64_t i = 0; i < n; ++i, p += 4) data[i] = std::bit_cast<float>(detail::get_u32(p));
  return LatentTensor(c, h, w, std::move(data));
}

inline void write_latent(const LatentTensor& z, const std::filesystem::path& path) {
  const auto bytes = encode_latent(z);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + path.string());
}

inline LatentTensor read_latent(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return decode_latent(bytes);
}

}  // namespace latentmark
