#pragma once

// Baseline latent watermarks: sign-coded block bits (Gaussian-Shading style)
// and concentric Fourier rings (Tree-Ring style).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "latentmark/error.hpp"
#include "latentmark/latent.hpp"
#include "latentmark/rng.hpp"

namespace latentmark {

/// Owner bit string. Hex form packs bits MSB-first into bytes; a partial
/// final byte is zero-padded in its low bits.
class WatermarkPayload {
 public:
  WatermarkPayload() = default;
  explicit WatermarkPayload(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    for (const auto b : bits_) {
      if (b > 1) throw Error(ErrorKind::kInvalidArgument, "payload bits must be 0 or 1");
    }
  }

  static WatermarkPayload random(std::size_t bit_length, RngState& rng) {
    std::vector<std::uint8_t> bits(bit_length);
    for (std::size_t i = 0; i < bit_length; i += 64) {
      const std::uint64_t word = rng.next_u64();
      for (std::size_t b = 0; b < 64 && i + b < bit_length; ++b) {
        bits[i + b] = static_cast<std::uint8_t>((word >> b) & 1u);
      }
    }
    return WatermarkPayload(std::move(bits));
  }

  /// Exactly floor(n/2) ones in uniformly random positions.
  static WatermarkPayload random_balanced(std::size_t bit_length, RngState& rng) {
    std::vector<std::uint8_t> bits(bit_length, 0);
    std::fill_n(bits.begin(), bit_length / 2, std::uint8_t{1});
    for (std::size_t i = bit_length; i > 1; --i) std::swap(bits[i - 1], bits[rng.next_below(i)]);
    return WatermarkPayload(std::move(bits));
  }

  std::size_t bit_length() const noexcept { return bits_.size(); }
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  std::string to_hex() const {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    for (std::size_t i = 0; i < bits_.size(); i += 8) {
      unsigned byte = 0;
      for (std::size_t b = 0; b < 8; ++b) {
        byte = (byte << 1) | (i + b < bits_.size() ? bits_[i + b] : 0u);
      }
      out += kDigits[byte >> 4];
      out += kDigits[byte & 0xF];
    }
    return out;
  }

  static WatermarkPayload from_hex(const std::string& hex, std::size_t bit_length) {
    if (hex.size() != 2 * ((bit_length + 7) / 8)) {
      throw Error(ErrorKind::kConfig, "payload hex length does not match " +
                                          std::to_string(bit_length) + " bits");
    }
    std::vector<std::uint8_t> bits;
    bits.reserve(hex.size() * 4);
    for (const char ch : hex) {
      int d;
      if (ch >= '0' && ch <= '9') d = ch - '0';
      else if (ch >= 'a' && ch <= 'f') d = ch - 'a' + 10;
      else if (ch >= 'A' && ch <= 'F') d = ch - 'A' + 10;
      else throw Error(ErrorKind::kConfig, "payload hex has a non-hex digit");
      for (int b = 3; b >= 0; --b) bits.push_back(static_cast<std::uint8_t>((d >> b) & 1));
    }
    for (std::size_t i = bit_length; i < bits.size(); ++i) {
      if (bits[i]) throw Error(ErrorKind::kConfig, "payload hex has nonzero padding bits");
    }
    bits.resize(bit_length);
    return WatermarkPayload(std::move(bits));
  }

  friend bool operator==(const WatermarkPayload&, const WatermarkPayload&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

struct DetectionScore {
  double statistic = 0.0;
  bool higher_is_watermarked = true;
};

// ---------------------------------------------------------------------------
// Gaussian-Shading style

/// Spatial grid of payload bits: grid x grid blocks, each (h/grid) x (w/grid),
/// identical layout in every watermark channel.
inline constexpr std::size_t kGsGrid = 8;
inline constexpr std::size_t kGsBits = kGsGrid * kGsGrid;

namespace detail {

inline std::size_t gs_grid_for(std::size_t bit_length) {
  const auto g = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(bit_length))));
  if (g == 0 || g * g != bit_length) {
    throw Error(ErrorKind::kInvalidArgument, "payload length must be a perfect square");
  }
  return g;
}

inline void gs_check(std::size_t grid, std::size_t c_w, std::size_t h, std::size_t w) {
  if (c_w == 0) throw Error(ErrorKind::kInvalidArgument, "need at least one watermark channel");
  if (h % grid != 0 || w % grid != 0) {
    throw Error(ErrorKind::kInvalidArgument, "latent size " + std::to_string(h) + "x" +
                                                 std::to_string(w) + " not divisible by grid " +
                                                 std::to_string(grid));
  }
}

/// Payload bit index governing (row, col).
inline std::size_t gs_bit_index(std::size_t grid, std::size_t h, std::size_t w, std::size_t row,
                                std::size_t col) {
  return (row / (h / grid)) * grid + col / (w / grid);
}

}  // namespace detail

/// Each element = (bit ? +1 : -1) * |g|, g ~ N(0,1).
inline LatentTensor gs_embed(const WatermarkPayload& payload, std::size_t c_w, std::size_t h,
                             std::size_t w, RngState& rng) {
  const std::size_t grid = detail::gs_grid_for(payload.bit_length());
  detail::gs_check(grid, c_w, h, w);
  LatentTensor out(c_w, h, w);
  NormalStream normals(rng);
  const auto bits = payload.bits();
  for (std::size_t c = 0; c < c_w; ++c) {
    for (std::size_t row = 0; row < h; ++row) {
      for (std::size_t col = 0; col < w; ++col) {
        const float mag = static_cast<float>(std::abs(normals.next()));
        out.at(c, row, col) = bits[detail::gs_bit_index(grid, h, w, row, col)] ? mag : -mag;
      }
    }
  }
  return out;
}

/// Per-bit sign majority over the bit's block in every channel; ties -> 1.
inline WatermarkPayload gs_extract(const LatentTensor& wm_part, std::size_t bit_length) {
  const std::size_t grid = detail::gs_grid_for(bit_length);
  detail::gs_check(grid, wm_part.channels(), wm_part.height(), wm_part.width());
  const std::size_t h = wm_part.height(), w = wm_part.width();
  std::vector<std::int64_t> balance(bit_length, 0);
  for (std::size_t c = 0; c < wm_part.channels(); ++c) {
    for (std::size_t row = 0; row < h; ++row) {
      for (std::size_t col = 0; col < w; ++col) {
        balance[detail::gs_bit_index(grid, h, w, row, col)] += wm_part.at(c, row, col) > 0.0f ? 1 : -1;
      }
    }
  }
  std::vector<std::uint8_t> bits(bit_length);
  for (std::size_t i = 0; i < bit_length; ++i) bits[i] = balance[i] >= 0 ? 1 : 0;
  return WatermarkPayload(std::move(bits));
}

// ---------------------------------------------------------------------------
// Tree-Ring style

inline constexpr std::size_t kDefaultRingRadius = 16;

/// One complex constant per ring r = 1..radius (ring_values[r - 1]).
struct RingKey {
  std::size_t radius = kDefaultRingRadius;
  std::vector<std::complex<double>> ring_values;

  /// Ring constants ~ N(0, h*w/2) per component, the scale of unnormalized
  /// DFT coefficients of an i.i.d. N(0,1) plane.
  static RingKey random(std::size_t radius, std::size_t h, std::size_t w, RngState& rng) {
    if (radius == 0) throw Error(ErrorKind::kInvalidArgument, "ring radius must be >= 1");
    RingKey key{radius, {}};
    const double sigma = std::sqrt(static_cast<double>(h * w) / 2.0);
    NormalStream normals(rng);
    for (std::size_t r = 0; r < radius; ++r) {
      const double re = normals.next() * sigma;
      const double im = normals.next() * sigma;
      key.ring_values.emplace_back(re, im);
    }
    return key;
  }

  void validate() const {
    if (radius == 0 || ring_values.size() != radius) {
      throw Error(ErrorKind::kInvalidArgument, "ring key needs one value per ring");
    }
  }
};

namespace detail {

using ComplexPlane = std::vector<std::complex<double>>;

/// In-place 2D DFT of an h x w row-major plane (inverse includes 1/(h*w)).
inline void fft2(ComplexPlane& plane, std::size_t h, std::size_t w, bool inverse) {
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> in, out;
  in.resize(w);
  for (std::size_t r = 0; r < h; ++r) {
    std::copy_n(plane.begin() + static_cast<std::ptrdiff_t>(r * w), w, in.begin());
    inverse ? fft.inv(out, in) : fft.fwd(out, in);
    std::copy(out.begin(), out.end(), plane.begin() + static_cast<std::ptrdiff_t>(r * w));
  }
  in.resize(h);
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h; ++r) in[r] = plane[r * w + c];
    inverse ? fft.inv(out, in) : fft.fwd(out, in);
    for (std::size_t r = 0; r < h; ++r) plane[r * w + c] = out[r];
  }
}

inline int signed_freq(std::size_t idx, std::size_t n) {
  const auto i = static_cast<int>(idx);
  return i < static_cast<int>(n) / 2 ? i : i - static_cast<int>(n);
}

/// Ring index (rounded distance from DC in the centered spectrum) of a bin.
inline std::size_t ring_of(std::size_t u, std::size_t v, std::size_t n) {
  const int fu = signed_freq(u, n), fv = signed_freq(v, n);
  return static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(fu * fu + fv * fv))));
}

/// Of each conjugate pair, the bin with fu > 0, or fu == 0 and fv > 0, carries
/// the key value; its mirror carries the conjugate.
inline bool is_representative(std::size_t u, std::size_t v, std::size_t n) {
  const int fu = signed_freq(u, n), fv = signed_freq(v, n);
  return fu > 0 || (fu == 0 && fv > 0);
}

inline void tr_check(const LatentTensor& wm_part, const RingKey& key) {
  key.validate();
  if (wm_part.channels() != 1) {
    throw Error(ErrorKind::kInvalidArgument, "ring watermark uses exactly one channel");
  }
  if (wm_part.height() != wm_part.width()) {
    throw Error(ErrorKind::kInvalidArgument, "ring watermark needs a square channel");
  }
  if (2 * key.radius >= wm_part.height()) {
    throw Error(ErrorKind::kInvalidArgument, "ring radius must be below half the channel size");
  }
}

inline ComplexPlane spectrum(const LatentTensor& wm_part) {
  const auto src = wm_part.data();
  ComplexPlane plane(src.begin(), src.end());
  fft2(plane, wm_part.height(), wm_part.width(), false);
  return plane;
}

/// Inverse transform of the ring-stamped spectrum, before dropping the
/// imaginary residue.
inline ComplexPlane tr_embed_field(const RingKey& key, const LatentTensor& wm_part) {
  tr_check(wm_part, key);
  const std::size_t n = wm_part.height();
  ComplexPlane plane = spectrum(wm_part);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = 0; v < n; ++v) {
      const std::size_t r = ring_of(u, v, n);
      if (r == 0 || r > key.radius) continue;
      const auto value = key.ring_values[r - 1];
      plane[u * n + v] = is_representative(u, v, n) ? value : std::conj(value);
    }
  }
  fft2(plane, n, n, true);
  return plane;
}

}  // namespace detail

inline LatentTensor tr_embed(const RingKey& key, const LatentTensor& wm_part) {
  const auto field = detail::tr_embed_field(key, wm_part);
  LatentTensor out(1, wm_part.height(), wm_part.width());
  auto dst = out.data();
  for (std::size_t i = 0; i < field.size(); ++i) dst[i] = static_cast<float>(field[i].real());
  return out;
}

/// Negative mean squared complex distance between the ring bins and the key.
inline DetectionScore tr_score(const LatentTensor& wm_part, const RingKey& key) {
  detail::tr_check(wm_part, key);
  const std::size_t n = wm_part.height();
  const auto plane = detail::spectrum(wm_part);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = 0; v < n; ++v) {
      const std::size_t r = detail::ring_of(u, v, n);
      if (r == 0 || r > key.radius) continue;
      const auto value = key.ring_values[r - 1];
      const auto expected = detail::is_representative(u, v, n) ? value : std::conj(value);
      sum += std::norm(plane[u * n + v] - expected);
      ++count;
    }
  }
  return {-sum / static_cast<double>(count), true};
}

}  // namespace latentmark
