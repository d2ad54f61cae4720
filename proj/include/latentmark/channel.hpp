#pragma once

// Latent-level stand-in for the generate -> transmit -> invert round trip.

#include <cmath>
#include <string>
#include <vector>

#include "latentmark/error.hpp"
#include "latentmark/latent.hpp"
#include "latentmark/rng.hpp"

namespace latentmark {

enum class ChannelKind { kIdentity, kSignFlip, kAdditiveGaussian, kRegionalErase, kComposite };

/// Additive noise scale of the default reconstruction channel. For a
/// N(0,1) element it flips the sign with probability atan(0.8)/pi ~= 0.215.
inline constexpr double kDefaultChannelSigma = 0.8;

struct ChannelModel {
  ChannelKind kind = ChannelKind::kIdentity;
  double flip_prob = 0.0;
  double sigma = 0.0;
  double erase_fraction = 0.0;
  std::vector<ChannelModel> components;

  static ChannelModel identity() { return {}; }
  static ChannelModel sign_flip(double p) { return {ChannelKind::kSignFlip, p, 0.0, 0.0, {}}; }
  static ChannelModel additive_gaussian(double sigma) {
    return {ChannelKind::kAdditiveGaussian, 0.0, sigma, 0.0, {}};
  }
  static ChannelModel regional_erase(double fraction) {
    return {ChannelKind::kRegionalErase, 0.0, 0.0, fraction, {}};
  }
  static ChannelModel composite(std::vector<ChannelModel> parts) {
    return {ChannelKind::kComposite, 0.0, 0.0, 0.0, std::move(parts)};
  }
  static ChannelModel default_calibrated() { return additive_gaussian(kDefaultChannelSigma); }

  void validate() const {
    switch (kind) {
      case ChannelKind::kSignFlip:
        if (!(flip_prob >= 0.0 && flip_prob <= 0.5)) {
          throw Error(ErrorKind::kConfig, "flip probability must be in [0, 0.5]");
        }
        break;
      case ChannelKind::kAdditiveGaussian:
        if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
          throw Error(ErrorKind::kConfig, "sigma must be finite and >= 0");
        }
        break;
      case ChannelKind::kRegionalErase:
        if (!(erase_fraction >= 0.0 && erase_fraction < 1.0)) {
          throw Error(ErrorKind::kConfig, "erase fraction must be in [0, 1)");
        }
        break;
      case ChannelKind::kComposite:
        for (const auto& c : components) c.validate();
        break;
      case ChannelKind::kIdentity:
        break;
    }
  }
};

/// Cells of an erased region relative to its top-left corner: `full_rows`
/// rows of `cols` cells, then one partial row of `tail` cells.
struct EraseShape {
  std::size_t full_rows = 0;
  std::size_t cols = 0;
  std::size_t tail = 0;

  std::size_t rows() const noexcept { return full_rows + (tail > 0 ? 1 : 0); }
  std::size_t area() const noexcept { return full_rows * cols + tail; }
};

/// Exactly floor(fraction * h * w) cells. A true rectangle when some factor
/// pair of the area fits (the most square one is chosen); otherwise a
/// rectangle plus one partial row.
inline EraseShape erase_shape(double fraction, std::size_t h, std::size_t w) {
  const auto area = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(h * w)));
  if (area == 0) return {};
  EraseShape best{};
  std::size_t best_gap = static_cast<std::size_t>(-1);
  for (std::size_t rows = 1; rows <= h; ++rows) {
    if (area % rows != 0) continue;
    const std::size_t cols = area / rows;
    if (cols > w) continue;
    const std::size_t gap = rows > cols ? rows - cols : cols - rows;
    if (gap < best_gap) {
      best_gap = gap;
      best = {rows, cols, 0};
    }
  }
  if (best.area() == area) return best;
  auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(area))));
  if (cols > w || (area + cols - 1) / cols > h) cols = w;
  return {area / cols, cols, area % cols};
}

namespace detail {

inline void apply_in_place(const ChannelModel& model, LatentTensor& z, RngState& rng) {
  auto v = z.data();
  switch (model.kind) {
    case ChannelKind::kIdentity:
      return;
    case ChannelKind::kSignFlip:
      for (float& x : v) {
        if (rng.next_unit() < model.flip_prob) x = -x;
      }
      return;
    case ChannelKind::kAdditiveGaussian: {
      NormalStream normals(rng);
      for (float& x : v) x = static_cast<float>(x + model.sigma * normals.next());
      return;
    }
    case ChannelKind::kRegionalErase: {
      const EraseShape shape = erase_shape(model.erase_fraction, z.height(), z.width());
      if (shape.area() == 0) return;
      // Same placement in every channel, like dropped pixels.
      const std::size_t top = rng.next_below(z.height() - shape.rows() + 1);
      const std::size_t left = rng.next_below(z.width() - shape.cols + 1);
      for (std::size_t c = 0; c < z.channels(); ++c) {
        for (std::size_t r = 0; r < shape.full_rows; ++r) {
          for (std::size_t col = 0; col < shape.cols; ++col) z.at(c, top + r, left + col) = 0.0f;
        }
        for (std::size_t col = 0; col < shape.tail; ++col) {
          z.at(c, top + shape.full_rows, left + col) = 0.0f;
        }
      }
      return;
    }
    case ChannelKind::kComposite:
      for (const auto& part : model.components) apply_in_place(part, z, rng);
      return;
  }
}

}  // namespace detail

inline LatentTensor apply(const ChannelModel& model, const LatentTensor& z, RngState& rng) {
  model.validate();
  LatentTensor out = z;
  detail::apply_in_place(model, out, rng);
  return out;
}

}  // namespace latentmark
