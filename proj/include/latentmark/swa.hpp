#pragma once

// Seed-keyed shuffling wrapper around a latent embedder: build a seed from
// the seed channel's signs, store it redundantly, embed the payload, and
// permute the non-seed channels with the seed; verification inverts each step.

#include <algorithm>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "latentmark/embedders.hpp"
#include "latentmark/error.hpp"
#include "latentmark/latent.hpp"
#include "latentmark/metrics.hpp"
#include "latentmark/permute.hpp"
#include "latentmark/seedcraft.hpp"

namespace latentmark {

enum class EmbedderKind { kGaussianShading, kTreeRing };

/// How the per-image seed is derived. kRawValue is the ablation baseline.
enum class SeedConstruction { kSign, kRawValue };

/// Bit accuracy at or above this counts as a G-S style detection.
inline constexpr double kDefaultBitAccuracyThreshold = 0.9;

struct SwaConfig {
  ChannelSplit split{1, 3, 0};
  std::size_t seed_bits = 8;
  std::size_t redundancy = 64;
  EmbedderKind embedder = EmbedderKind::kGaussianShading;
  std::size_t height = 64;
  std::size_t width = 64;
  WatermarkPayload payload;
  RingKey ring_key;
  SeedConstruction construction = SeedConstruction::kSign;

  std::size_t shuffle_length() const { return (split.wm + split.rest) * height * width; }
  MappingFunction mapping() const { return {split.seed, height, width}; }

  static SwaConfig gaussian_shading(WatermarkPayload payload) {
    SwaConfig cfg;
    cfg.payload = std::move(payload);
    return cfg;
  }

  static SwaConfig tree_ring(RingKey key) {
    SwaConfig cfg;
    cfg.split = {1, 1, 2};
    cfg.embedder = EmbedderKind::kTreeRing;
    cfg.ring_key = std::move(key);
    return cfg;
  }

  void validate() const {
    if (split.seed < 1 || split.wm < 1) {
      throw Error(ErrorKind::kConfig, "seed and watermark channel counts must be >= 1");
    }
    if (height == 0 || width == 0) throw Error(ErrorKind::kConfig, "latent size must be positive");
    if (construction == SeedConstruction::kSign) {
      RedundancyConfig::make(redundancy, seed_bits, split.seed * height * width);
    } else if (seed_bits == 0 || seed_bits > 64) {
      throw Error(ErrorKind::kConfig, "raw-value seeds support 1..64 bits");
    }
    if (seed_bits > 128) throw Error(ErrorKind::kConfig, "seed wider than 128 bits");
    if (embedder == EmbedderKind::kGaussianShading) {
      if (payload.bit_length() == 0) throw Error(ErrorKind::kConfig, "missing payload");
      const std::size_t grid = detail::gs_grid_for(payload.bit_length());
      detail::gs_check(grid, split.wm, height, width);
    } else {
      if (split.wm != 1) throw Error(ErrorKind::kConfig, "ring embedder needs exactly 1 watermark channel");
      if (ring_key.ring_values.empty()) throw Error(ErrorKind::kConfig, "missing ring key");
      detail::tr_check(LatentTensor(1, height, width), ring_key);
    }
  }
};

struct EmbedResult {
  LatentTensor latent;
  Seed seed;
};

struct VerifyResult {
  Seed recovered_seed;
  /// Bit accuracy (G-S) or ring statistic (T-R).
  double score = 0.0;
  std::optional<double> bit_accuracy;
  bool decision = false;
};

namespace detail {

inline Seed derive_seed(const LatentTensor& seed_channel, const SwaConfig& cfg, bool noisy_side) {
  const auto map = cfg.mapping();
  if (cfg.construction == SeedConstruction::kRawValue) {
    return construct_seed_raw(seed_channel, cfg.seed_bits, map);
  }
  return noisy_side ? extract_seed(seed_channel, cfg.seed_bits, cfg.redundancy, map)
                    : construct_seed(seed_channel, cfg.seed_bits, map);
}

inline LatentTensor embed_watermark_channels(const SwaConfig& cfg, RngState& rng) {
  if (cfg.embedder == EmbedderKind::kGaussianShading) {
    return gs_embed(cfg.payload, cfg.split.wm, cfg.height, cfg.width, rng);
  }
  return tr_embed(cfg.ring_key, sample_gaussian_latent(1, cfg.height, cfg.width, rng));
}

inline LatentTensor sample_rest(const SwaConfig& cfg, RngState& rng) {
  if (cfg.split.rest == 0) return LatentTensor(0, cfg.height, cfg.width);
  return sample_gaussian_latent(cfg.split.rest, cfg.height, cfg.width, rng);
}

}  // namespace detail

/// Watermarked latent with the seed-keyed shuffle applied.
inline EmbedResult swa_embed(const SwaConfig& cfg, RngState& rng) {
  cfg.validate();
  const auto map = cfg.mapping();
  LatentTensor seed_channel = sample_gaussian_latent(cfg.split.seed, cfg.height, cfg.width, rng);
  Seed k = detail::derive_seed(seed_channel, cfg, false);
  if (cfg.construction == SeedConstruction::kSign) {
    seed_channel = enhance_seed_channel(seed_channel, k, cfg.redundancy, map);
  }
  const LatentTensor wm = detail::embed_watermark_channels(cfg, rng);
  const LatentTensor rest = detail::sample_rest(cfg, rng);

  std::vector<float> tail(wm.data().begin(), wm.data().end());
  tail.insert(tail.end(), rest.data().begin(), rest.data().end());
  const Permutation perm = keyed_permutation(k, tail.size());
  auto shuffled = shuffle<float>(tail, perm);
  LatentTensor mixed(cfg.split.wm + cfg.split.rest, cfg.height, cfg.width, std::move(shuffled));
  LatentTensor empty(0, cfg.height, cfg.width);
  return {merge(seed_channel, mixed, empty), std::move(k)};
}

/// The same embedder without the wrapper: a plain Gaussian seed channel, the
/// watermark channels, and the remaining channels, unshuffled.
inline LatentTensor plain_embed(const SwaConfig& cfg, RngState& rng) {
  cfg.validate();
  const LatentTensor seed_channel = sample_gaussian_latent(cfg.split.seed, cfg.height, cfg.width, rng);
  const LatentTensor wm = detail::embed_watermark_channels(cfg, rng);
  const LatentTensor rest = detail::sample_rest(cfg, rng);
  return merge(seed_channel, wm, rest);
}

/// Reads back the watermark channels of a reconstructed latent: recovers the
/// seed, inverts the shuffle, and returns (seed, watermark part).
inline std::pair<Seed, LatentTensor> swa_recover_watermark(const LatentTensor& z_rec,
                                                           const SwaConfig& cfg) {
  cfg.validate();
  if (z_rec.channels() != cfg.split.total() || z_rec.height() != cfg.height ||
      z_rec.width() != cfg.width) {
    throw Error(ErrorKind::kShapeMismatch, "reconstructed latent does not match config shape");
  }
  const auto parts = split(z_rec, {cfg.split.seed, cfg.split.wm + cfg.split.rest, 0});
  Seed k = detail::derive_seed(parts.seed, cfg, true);
  const Permutation perm = keyed_permutation(k, cfg.shuffle_length());
  auto restored = unshuffle<float>(parts.wm.data(), perm);
  restored.resize(cfg.split.wm * cfg.height * cfg.width);
  return {std::move(k), LatentTensor(cfg.split.wm, cfg.height, cfg.width, std::move(restored))};
}

inline VerifyResult score_watermark(const LatentTensor& wm_part, const SwaConfig& cfg,
                                    std::optional<double> ring_threshold) {
  VerifyResult out;
  if (cfg.embedder == EmbedderKind::kGaussianShading) {
    const auto bits = gs_extract(wm_part, cfg.payload.bit_length());
    const double acc = bit_accuracy(bits.bits(), cfg.payload.bits());
    out.score = acc;
    out.bit_accuracy = acc;
    out.decision = acc >= kDefaultBitAccuracyThreshold;
  } else {
    out.score = tr_score(wm_part, cfg.ring_key).statistic;
    out.decision = ring_threshold.has_value() && out.score > *ring_threshold;
  }
  return out;
}

/// `ring_threshold` is the T-R decision threshold (see
/// calibrate_ring_threshold); without it the T-R decision is false.
inline VerifyResult swa_verify(const LatentTensor& z_rec, const SwaConfig& cfg,
                               std::optional<double> ring_threshold = std::nullopt) {
  auto [k, wm] = swa_recover_watermark(z_rec, cfg);
  VerifyResult out = score_watermark(wm, cfg, ring_threshold);
  out.recovered_seed = std::move(k);
  return out;
}

/// Verification of an unwrapped latent: the watermark channels are read in
/// place.
inline VerifyResult plain_verify(const LatentTensor& z_rec, const SwaConfig& cfg,
                                 std::optional<double> ring_threshold = std::nullopt) {
  const auto parts = split(z_rec, cfg.split);
  return score_watermark(parts.wm, cfg, ring_threshold);
}

/// Ring statistic threshold at the given false-positive rate, estimated from
/// watermark-free N(0,1) channels. A score strictly above it is a detection.
inline double calibrate_ring_threshold(const SwaConfig& cfg, double fpr, std::size_t samples,
                                       RngState& rng) {
  if (samples == 0) throw Error(ErrorKind::kInvalidArgument, "need at least one null sample");
  std::vector<double> null_scores;
  null_scores.reserve(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    null_scores.push_back(
        tr_score(sample_gaussian_latent(1, cfg.height, cfg.width, rng), cfg.ring_key).statistic);
  }
  return threshold_at_fpr(null_scores, fpr);
}

}  // namespace latentmark
