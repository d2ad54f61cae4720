#pragma once

// Sign-derived seeds, redundant seed storage inside the seed channel, and
// majority-vote recovery.

#include <cstdint>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "latentmark/error.hpp"
#include "latentmark/latent.hpp"

namespace latentmark {

/// M-bit seed; bits[0] is the most significant bit of as_integer().
class Seed {
 public:
  Seed() = default;
  explicit Seed(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    if (bits_.empty()) throw Error(ErrorKind::kInvalidArgument, "seed needs at least one bit");
    for (auto& b : bits_) {
      if (b > 1) throw Error(ErrorKind::kInvalidArgument, "seed bits must be 0 or 1");
    }
  }

  static Seed from_integer(uint128 value, std::size_t bit_length) {
    if (bit_length == 0 || bit_length > 128) {
      throw Error(ErrorKind::kInvalidArgument, "seed length must be in [1, 128]");
    }
    std::vector<std::uint8_t> bits(bit_length);
    for (std::size_t m = 0; m < bit_length; ++m) {
      bits[m] = static_cast<std::uint8_t>((value >> (bit_length - 1 - m)) & 1u);
    }
    return Seed(std::move(bits));
  }

  std::size_t bit_length() const noexcept { return bits_.size(); }
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }
  std::uint8_t operator[](std::size_t m) const { return bits_[m]; }

  uint128 as_integer() const {
    if (bits_.size() > 128) throw Error(ErrorKind::kCapacity, "seed wider than 128 bits");
    uint128 v = 0;
    for (const auto b : bits_) v = (v << 1) | b;
    return v;
  }

  /// ceil(M/8) bytes, big-endian, lowercase.
  std::string to_hex() const {
    const std::size_t nbytes = (bits_.size() + 7) / 8;
    const uint128 v = as_integer();
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    for (std::size_t i = nbytes; i-- > 0;) {
      const auto byte = static_cast<unsigned>((v >> (8 * i)) & 0xFFu);
      out += kDigits[byte >> 4];
      out += kDigits[byte & 0xF];
    }
    return out;
  }

  static Seed from_hex(const std::string& hex, std::size_t bit_length) {
    if (hex.size() != 2 * ((bit_length + 7) / 8)) {
      throw Error(ErrorKind::kInvalidArgument, "seed hex has wrong length");
    }
    uint128 v = 0;
    for (const char ch : hex) {
      int d;
      if (ch >= '0' && ch <= '9') d = ch - '0';
      else if (ch >= 'a' && ch <= 'f') d = ch - 'a' + 10;
      else if (ch >= 'A' && ch <= 'F') d = ch - 'A' + 10;
      else throw Error(ErrorKind::kInvalidArgument, "seed hex has a non-hex digit");
      v = (v << 4) | static_cast<unsigned>(d);
    }
    if (bit_length < 128 && (v >> bit_length) != 0) {
      throw Error(ErrorKind::kInvalidArgument, "seed hex exceeds bit length");
    }
    return from_integer(v, bit_length);
  }

  friend bool operator==(const Seed&, const Seed&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

/// Sequential mapping: flat index n -> (n / (h*w), (n % (h*w)) / w, n % w).
/// Flat indices address the seed-channel tensor directly, so the mapping is
/// the identity on storage order.
struct MappingFunction {
  std::size_t channels = 1;
  std::size_t height = 64;
  std::size_t width = 64;

  static MappingFunction sequential_for(const LatentTensor& seed_channel) {
    return {seed_channel.channels(), seed_channel.height(), seed_channel.width()};
  }

  std::size_t capacity() const noexcept { return channels * height * width; }

  std::tuple<std::size_t, std::size_t, std::size_t> position(std::size_t n) const {
    if (n >= capacity()) throw Error(ErrorKind::kCapacity, "mapping index out of range");
    const std::size_t plane = height * width;
    return {n / plane, (n % plane) / width, n % width};
  }

  std::size_t flat(std::size_t n) const {
    const auto [c, row, col] = position(n);
    return (c * height + row) * width + col;
  }
};

/// R redundant copies of an M-bit seed. R + 1 must be odd so majority votes
/// never tie.
struct RedundancyConfig {
  std::size_t redundancy = 64;
  std::size_t bit_length = 8;

  static RedundancyConfig make(std::size_t redundancy, std::size_t bit_length,
                               std::size_t capacity) {
    if (bit_length == 0) throw Error(ErrorKind::kInvalidArgument, "seed length must be >= 1");
    if ((redundancy + 1) % 2 == 0) {
      throw Error(ErrorKind::kConfig, "redundancy + 1 must be odd (got R=" +
                                          std::to_string(redundancy) + ")");
    }
    if ((redundancy + 1) * bit_length > capacity) {
      throw Error(ErrorKind::kCapacity, "(R+1)*M exceeds seed channel capacity");
    }
    return {redundancy, bit_length};
  }
};

inline std::uint8_t sign_bit(float v) { return v > 0.0f ? 1 : 0; }

namespace detail {

inline void check_mapping(const LatentTensor& seed_channel, const MappingFunction& map) {
  if (map.capacity() != seed_channel.size() || map.height != seed_channel.height() ||
      map.width != seed_channel.width()) {
    throw Error(ErrorKind::kShapeMismatch, "mapping does not match seed channel");
  }
}

}  // namespace detail

inline Seed construct_seed(const LatentTensor& seed_channel, std::size_t bit_length,
                           const MappingFunction& map) {
  detail::check_mapping(seed_channel, map);
  if (bit_length == 0 || bit_length > map.capacity()) {
    throw Error(ErrorKind::kCapacity, "seed length exceeds seed channel capacity");
  }
  const auto v = seed_channel.data();
  std::vector<std::uint8_t> bits(bit_length);
  for (std::size_t m = 0; m < bit_length; ++m) bits[m] = sign_bit(v[map.flat(m)]);
  return Seed(std::move(bits));
}

/// Writes R redundant copies of k into the seed channel by swapping values
/// (Algorithm "Seed Channel Enhancement"). Blocks r = 1..R are processed in
/// ascending order; a mismatched position r*M+m is repaired by swapping with
/// the first later position r*M+p (p > m) whose sign matches k_m. The search
/// may run into later blocks but never wraps.
inline LatentTensor enhance_seed_channel(const LatentTensor& seed_channel, const Seed& k,
                                         std::size_t redundancy, const MappingFunction& map) {
  detail::check_mapping(seed_channel, map);
  const std::size_t m_bits = k.bit_length();
  const std::size_t n = map.capacity();
  if ((redundancy + 1) * m_bits > n) {
    throw Error(ErrorKind::kCapacity, "(R+1)*M exceeds seed channel capacity");
  }
  LatentTensor out = seed_channel;
  auto v = out.data();
  for (std::size_t r = 1; r <= redundancy; ++r) {
    for (std::size_t m = 0; m < m_bits; ++m) {
      const std::size_t here = map.flat(r * m_bits + m);
      if (sign_bit(v[here]) == k[m]) continue;
      std::size_t p = m + 1;
      for (;; ++p) {
        const std::size_t idx = r * m_bits + p;
        if (idx >= n) {
          throw Error(ErrorKind::kEnhancementExhausted,
                      "no value with the required sign remains after position " +
                          std::to_string(r * m_bits + m));
        }
        const std::size_t there = map.flat(idx);
        if (sign_bit(v[there]) == k[m]) {
          std::swap(v[here], v[there]);
          break;
        }
      }
    }
  }
  return out;
}

/// Majority vote over the base copy and R redundant copies of each bit.
/// Ties (possible only when R + 1 is even) resolve to 1.
inline Seed extract_seed(const LatentTensor& seed_channel, std::size_t bit_length,
                         std::size_t redundancy, const MappingFunction& map) {
  detail::check_mapping(seed_channel, map);
  if (bit_length == 0 || (redundancy + 1) * bit_length > map.capacity()) {
    throw Error(ErrorKind::kCapacity, "(R+1)*M exceeds seed channel capacity");
  }
  const auto v = seed_channel.data();
  std::vector<std::uint8_t> bits(bit_length);
  for (std::size_t m = 0; m < bit_length; ++m) {
    std::size_t ones = 0;
    for (std::size_t r = 0; r <= redundancy; ++r) ones += sign_bit(v[map.flat(r * bit_length + m)]);
    const std::size_t zeros = redundancy + 1 - ones;
    bits[m] = zeros > ones ? 0 : 1;
  }
  return Seed(std::move(bits));
}

/// Ablation baseline: seed taken from the raw binary32 patterns of the first
/// M mapped values (FNV-1a over their bytes, truncated to M bits) instead of
/// their signs. Any perturbation of those values changes the seed.
inline Seed construct_seed_raw(const LatentTensor& seed_channel, std::size_t bit_length,
                               const MappingFunction& map) {
  detail::check_mapping(seed_channel, map);
  if (bit_length == 0 || bit_length > 64 || bit_length > map.capacity()) {
    throw Error(ErrorKind::kCapacity, "raw seed length must be in [1, min(64, capacity)]");
  }
  std::uint64_t h = 0xCBF29CE484222325ULL;
  const auto v = seed_channel.data();
  for (std::size_t m = 0; m < bit_length; ++m) {
    const auto word = std::bit_cast<std::uint32_t>(v[map.flat(m)]);
    for (int b = 0; b < 4; ++b) {
      h ^= (word >> (8 * b)) & 0xFFu;
      h *= 0x100000001B3ULL;
    }
  }
  const std::uint64_t mask = bit_length == 64 ? ~0ULL : ((1ULL << bit_length) - 1);
  return Seed::from_integer(h & mask, bit_length);
}

}  // namespace latentmark
