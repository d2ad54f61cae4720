#pragma once

// Desk-scale battery for the probe attack: synthetic target models (clean,
// watermarked, or watermarked behind the shuffle wrapper) observed through a
// generator surrogate, one trained extractor per target, MMD as the score.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "latentmark/channel.hpp"
#include "latentmark/metrics.hpp"
#include "latentmark/parallel.hpp"
#include "latentmark/probe.hpp"
#include "latentmark/swa.hpp"

namespace latentmark::probe {

/// What the attacker sees of a model's output: the latent passed through the
/// `generation` channel, block-pooled, plus the model's fixed offset.
struct SurrogateConfig {
  std::size_t pool = 8;
  ChannelModel generation = ChannelModel::identity();
  /// Target model i differs from the vanilla model by a fixed offset with
  /// per-dimension standard deviation u_i * drift, u_i ~ U(0, 1).
  double drift = 0.1;
  std::size_t train = 256;
  std::size_t test = 128;

  void validate() const {
    generation.validate();
    if (pool == 0 || !(drift >= 0.0) || train < 2 || test < 2) {
      throw Error(ErrorKind::kConfig, "invalid surrogate configuration");
    }
  }
};

enum class TargetKind { kClean, kPlain, kWrapped };

inline std::string to_string(TargetKind kind) {
  switch (kind) {
    case TargetKind::kClean: return "clean";
    case TargetKind::kPlain: return "plain";
    case TargetKind::kWrapped: return "wrapped";
  }
  return "unknown";
}

/// One watermarked population to compare against the shared clean targets.
struct BatteryVariant {
  std::string name;
  SwaConfig swa;
  bool wrapped = true;
};

struct BatteryConfig {
  SurrogateConfig surrogate{};
  Hyperparameters hp{};
  std::size_t targets_per_class = 20;
  /// Draw watermarked models' payloads with equal numbers of ones and zeros.
  bool balanced_payloads = true;

  void validate() const {
    surrogate.validate();
    hp.validate();
    if (targets_per_class < 1) throw Error(ErrorKind::kConfig, "need at least one target per class");
    if (surrogate.train < hp.batch) throw Error(ErrorKind::kConfig, "train set smaller than batch");
  }
};

struct ModelReport {
  TargetKind kind = TargetKind::kClean;
  std::size_t index = 0;
  double mmd = 0.0;
  /// MMD after pooling and re-splitting the held-out target/vanilla sets.
  double control_mmd = 0.0;
  std::vector<TracePoint> trace;
};

struct AttackReport {
  std::string variant;
  double auc = 0.5;
  double stealthiness = 0.5;
  double control_auc = 0.5;
  std::vector<ModelReport> watermarked;
};

struct BatteryResult {
  std::vector<ModelReport> clean;
  std::vector<AttackReport> variants;
};

namespace detail {

enum : std::uint64_t { kStreamVanilla = 1, kStreamTarget = 2, kStreamOffset = 3, kStreamTrain = 4, kStreamControl = 5 };

struct ObservationSets {
  Matrix train;
  Matrix test;
};

template <typename Sampler>
ObservationSets observe_model(const SurrogateConfig& s, const Vector& offset, Sampler&& sample_latent,
                              RngState& rng) {
  const auto one = [&] {
    const LatentTensor z = apply(s.generation, sample_latent(rng), rng);
    Vector x = observe(z, s.pool);
    if (offset.size() > 0) x += offset;
    return x;
  };
  ObservationSets sets;
  for (auto* m : {&sets.train, &sets.test}) {
    const std::size_t n = m == &sets.train ? s.train : s.test;
    for (std::size_t i = 0; i < n; ++i) {
      Vector x = one();
      if (i == 0) m->resize(static_cast<Eigen::Index>(n), x.size());
      m->row(static_cast<Eigen::Index>(i)) = x.transpose();
    }
  }
  return sets;
}

inline Vector model_offset(const SurrogateConfig& s, Eigen::Index dim, RngState& rng) {
  const double scale = s.drift * rng.next_unit();
  NormalStream normals(rng);
  Vector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v(i) = normals.next() * scale;
  return v;
}

inline double control_mmd(const FeatureExtractor& fe, const Matrix& tar, const Matrix& van, RngState& rng) {
  Matrix pooled(tar.rows() + van.rows(), tar.cols());
  pooled << tar, van;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(pooled.rows()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<Eigen::Index>(i);
  for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[rng.next_below(i + 1)]);
  Matrix a(tar.rows(), tar.cols()), b(van.rows(), van.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) a.row(i) = pooled.row(idx[static_cast<std::size_t>(i)]);
  for (Eigen::Index i = 0; i < b.rows(); ++i) b.row(i) = pooled.row(idx[static_cast<std::size_t>(a.rows() + i)]);
  return detect(fe, a, b);
}

}  // namespace detail

/// Runs the attack against `targets_per_class` clean targets and, for each
/// variant, `targets_per_class` watermarked targets. Target i of every
/// population shares its offset and RNG streams, so variants differ only in
/// the watermark.
inline BatteryResult run_battery(const BatteryConfig& cfg, const std::vector<BatteryVariant>& variants,
                                 std::uint64_t seed, std::size_t workers) {
  cfg.validate();
  if (variants.empty()) throw Error(ErrorKind::kConfig, "battery needs at least one variant");
  for (const auto& v : variants) v.swa.validate();
  const SwaConfig& shape = variants.front().swa;
  const auto gaussian = [&](RngState& rng) {
    return sample_gaussian_latent(shape.split.total(), shape.height, shape.width, rng);
  };

  RngState vanilla_rng = RngState::derive(seed, {detail::kStreamVanilla});
  const detail::ObservationSets vanilla = detail::observe_model(cfg.surrogate, Vector(), gaussian, vanilla_rng);
  const Eigen::Index dim = vanilla.train.cols();

  const std::size_t k = cfg.targets_per_class;
  const std::size_t populations = 1 + variants.size();
  std::vector<ModelReport> reports(populations * k);

  parallel_for(reports.size(), workers, [&](std::size_t job) {
    const std::size_t pop = job / k, i = job % k;
    RngState offset_rng = RngState::derive(seed, {detail::kStreamOffset, i});
    const Vector offset = detail::model_offset(cfg.surrogate, dim, offset_rng);
    RngState data_rng = RngState::derive(seed, {detail::kStreamTarget, i});
    detail::ObservationSets tar;
    ModelReport rep;
    rep.index = i;
    if (pop == 0) {
      rep.kind = TargetKind::kClean;
      tar = detail::observe_model(cfg.surrogate, offset, gaussian, data_rng);
    } else {
      const BatteryVariant& var = variants[pop - 1];
      SwaConfig model_cfg = var.swa;
      // Each watermarked model owns its payload / ring key.
      RngState key_rng = RngState::derive(seed, {detail::kStreamTarget, i, 0xC0FFEE});
      if (model_cfg.embedder == EmbedderKind::kGaussianShading) {
        const std::size_t n = model_cfg.payload.bit_length();
        model_cfg.payload = cfg.balanced_payloads ? WatermarkPayload::random_balanced(n, key_rng)
                                                  : WatermarkPayload::random(n, key_rng);
      } else {
        model_cfg.ring_key = RingKey::random(model_cfg.ring_key.radius, model_cfg.height, model_cfg.width, key_rng);
      }
      rep.kind = var.wrapped ? TargetKind::kWrapped : TargetKind::kPlain;
      tar = detail::observe_model(
          cfg.surrogate, offset,
          [&](RngState& rng) { return var.wrapped ? swa_embed(model_cfg, rng).latent : plain_embed(model_cfg, rng); },
          data_rng);
    }
    RngState train_rng = RngState::derive(seed, {detail::kStreamTrain, i});
    TrainResult trained = train_wfe(tar.train, vanilla.train, cfg.hp, train_rng);
    rep.mmd = detect(trained.extractor, tar.test, vanilla.test);
    RngState control_rng = RngState::derive(seed, {detail::kStreamControl, i});
    rep.control_mmd = detail::control_mmd(trained.extractor, tar.test, vanilla.test, control_rng);
    rep.trace = std::move(trained.trace);
    reports[job] = std::move(rep);
  });

  BatteryResult result;
  result.clean.assign(reports.begin(), reports.begin() + static_cast<std::ptrdiff_t>(k));
  for (std::size_t v = 0; v < variants.size(); ++v) {
    AttackReport ar;
    ar.variant = variants[v].name;
    const auto first = reports.begin() + static_cast<std::ptrdiff_t>((v + 1) * k);
    ar.watermarked.assign(first, first + static_cast<std::ptrdiff_t>(k));
    std::vector<ScoredSample> scores, control;
    for (const auto& r : result.clean) {
      scores.push_back({r.mmd, false});
      control.push_back({r.control_mmd, false});
    }
    for (const auto& r : ar.watermarked) {
      scores.push_back({r.mmd, true});
      control.push_back({r.control_mmd, true});
    }
    ar.auc = auc(scores);
    ar.stealthiness = 1.0 - ar.auc;
    ar.control_auc = auc(control);
    result.variants.push_back(std::move(ar));
  }
  return result;
}

}  // namespace latentmark::probe
