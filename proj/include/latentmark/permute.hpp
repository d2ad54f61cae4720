#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "latentmark/error.hpp"
#include "latentmark/rng.hpp"
#include "latentmark/seedcraft.hpp"

namespace latentmark {

/// Bijection on [0, size). shuffle() moves element i to forward[i].
class Permutation {
 public:
  Permutation() = default;
  explicit Permutation(std::vector<std::uint32_t> forward) : forward_(std::move(forward)) {
    std::vector<bool> seen(forward_.size(), false);
    for (const auto f : forward_) {
      if (f >= forward_.size() || seen[f]) {
        throw Error(ErrorKind::kInvalidArgument, "not a permutation");
      }
      seen[f] = true;
    }
  }

  static Permutation identity(std::size_t size) {
    std::vector<std::uint32_t> f(size);
    for (std::size_t i = 0; i < size; ++i) f[i] = static_cast<std::uint32_t>(i);
    return Permutation(std::move(f), Trusted{});
  }

  std::size_t size() const noexcept { return forward_.size(); }
  std::span<const std::uint32_t> forward() const noexcept { return forward_; }

  friend bool operator==(const Permutation&, const Permutation&) = default;

 private:
  struct Trusted {};
  Permutation(std::vector<std::uint32_t> forward, Trusted) : forward_(std::move(forward)) {}
  friend Permutation keyed_permutation(const Seed& k, std::size_t size);

  std::vector<std::uint32_t> forward_;
};

/// PCG64 seeded with state = k.as_integer() and the default increment, then
/// a descending Fisher-Yates pass with j = next_u64() mod (i + 1).
inline Permutation keyed_permutation(const Seed& k, std::size_t size) {
  if (size == 0) throw Error(ErrorKind::kInvalidArgument, "permutation size must be >= 1");
  if (size > 0xFFFFFFFFu) throw Error(ErrorKind::kDimensionOverflow, "permutation too large");
  RngState rng{k.as_integer(), kPcgDefaultIncrement};
  std::vector<std::uint32_t> a(size);
  for (std::size_t i = 0; i < size; ++i) a[i] = static_cast<std::uint32_t>(i);
  for (std::size_t i = size - 1; i >= 1; --i) {
    const std::size_t j = rng.next_u64() % (i + 1);
    std::swap(a[i], a[j]);
  }
  return Permutation(std::move(a), Permutation::Trusted{});
}

template <typename T>
std::vector<T> shuffle(std::span<const T> in, const Permutation& p) {
  if (in.size() != p.size()) throw Error(ErrorKind::kShapeMismatch, "shuffle length mismatch");
  std::vector<T> out(in.size());
  const auto f = p.forward();
  for (std::size_t i = 0; i < in.size(); ++i) out[f[i]] = in[i];
  return out;
}

template <typename T>
std::vector<T> unshuffle(std::span<const T> in, const Permutation& p) {
  if (in.size() != p.size()) throw Error(ErrorKind::kShapeMismatch, "unshuffle length mismatch");
  std::vector<T> out(in.size());
  const auto f = p.forward();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[f[i]];
  return out;
}

}  // namespace latentmark
