#pragma once

// Experiment drivers behind the CLI: verification ROC under a channel,
// redundancy and seed-length sweeps, the seed-construction ablation, and
// repeated probe-attack batteries.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "latentmark/battery.hpp"
#include "latentmark/channel.hpp"
#include "latentmark/metrics.hpp"
#include "latentmark/parallel.hpp"
#include "latentmark/swa.hpp"

namespace latentmark {

struct VerificationStats {
  std::size_t trials = 0;
  double auc = 0.0;
  double tpr_at_1fpr = 0.0;
  /// Fraction of watermarked trials whose seed was recovered exactly.
  double seed_recovery = 0.0;
  /// Mean bit accuracy over watermarked trials (G-S only).
  double mean_bit_accuracy = 0.0;
};

namespace detail {

enum : std::uint64_t { kStreamPositive = 11, kStreamPositiveChannel = 12, kStreamNegative = 13, kStreamNegativeChannel = 14 };

}  // namespace detail

/// `trials` watermarked latents (score = verification score) against
/// `trials` watermark-free N(0,1) latents, all passed through `channel`.
/// Trial i's RNG streams depend only on (seed, i), so configurations that
/// consume the same draws (e.g. different R) see identical latents and noise.
inline VerificationStats run_verification(const SwaConfig& cfg, const ChannelModel& channel,
                                          std::size_t trials, std::uint64_t seed, std::size_t workers,
                                          bool wrapped = true) {
  cfg.validate();
  channel.validate();
  if (trials == 0) throw Error(ErrorKind::kConfig, "trials must be >= 1");
  std::vector<ScoredSample> samples(2 * trials);
  std::vector<std::uint8_t> recovered(trials, 0);
  std::vector<double> accuracy(trials, 0.0);
  parallel_for(2 * trials, workers, [&](std::size_t job) {
    const bool positive = job < trials;
    const std::size_t i = positive ? job : job - trials;
    RngState rng = RngState::derive(seed, {positive ? detail::kStreamPositive : detail::kStreamNegative, i});
    RngState noise = RngState::derive(seed, {positive ? detail::kStreamPositiveChannel : detail::kStreamNegativeChannel, i});
    if (positive) {
      if (wrapped) {
        const EmbedResult emb = swa_embed(cfg, rng);
        const VerifyResult res = swa_verify(apply(channel, emb.latent, noise), cfg);
        samples[job] = {res.score, true};
        recovered[i] = res.recovered_seed == emb.seed;
        accuracy[i] = res.bit_accuracy.value_or(0.0);
      } else {
        const VerifyResult res = plain_verify(apply(channel, plain_embed(cfg, rng), noise), cfg);
        samples[job] = {res.score, true};
        recovered[i] = 1;
        accuracy[i] = res.bit_accuracy.value_or(0.0);
      }
    } else {
      const LatentTensor z = sample_gaussian_latent(cfg.split.total(), cfg.height, cfg.width, rng);
      const LatentTensor noisy = apply(channel, z, noise);
      samples[job] = {wrapped ? swa_verify(noisy, cfg).score : plain_verify(noisy, cfg).score, false};
    }
  });
  VerificationStats s;
  s.trials = trials;
  s.auc = auc(samples);
  s.tpr_at_1fpr = tpr_at_fpr(samples, 0.01);
  double rec = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < trials; ++i) {
    rec += recovered[i];
    acc += accuracy[i];
  }
  s.seed_recovery = rec / static_cast<double>(trials);
  s.mean_bit_accuracy = acc / static_cast<double>(trials);
  return s;
}

struct RedundancyRow {
  std::size_t redundancy = 0;
  VerificationStats stats;
};

inline std::vector<RedundancyRow> sweep_redundancy(const SwaConfig& base, const ChannelModel& channel,
                                                   const std::vector<std::size_t>& redundancies,
                                                   std::size_t trials, std::uint64_t seed,
                                                   std::size_t workers) {
  if (redundancies.empty()) throw Error(ErrorKind::kConfig, "redundancy list is empty");
  std::vector<RedundancyRow> rows;
  for (const std::size_t r : redundancies) {
    SwaConfig cfg = base;
    cfg.redundancy = r;
    rows.push_back({r, run_verification(cfg, channel, trials, seed, workers)});
  }
  return rows;
}

struct SeedBitsRow {
  std::size_t seed_bits = 0;
  VerificationStats stats;
  /// Mean over battery runs.
  double stealthiness = 0.0;
  std::vector<double> run_stealthiness;
};

/// Verification ROC and probe-attack stealthiness per seed length. All
/// lengths share the clean battery targets of each run.
inline std::vector<SeedBitsRow> sweep_seedbits(const SwaConfig& base, const ChannelModel& channel,
                                               const std::vector<std::size_t>& seed_bits,
                                               std::size_t trials, const probe::BatteryConfig& battery,
                                               std::size_t battery_runs, std::uint64_t seed,
                                               std::size_t workers) {
  if (seed_bits.empty()) throw Error(ErrorKind::kConfig, "seed-bit list is empty");
  std::vector<SeedBitsRow> rows;
  std::vector<probe::BatteryVariant> variants;
  for (const std::size_t m : seed_bits) {
    SwaConfig cfg = base;
    cfg.seed_bits = m;
    cfg.validate();
    rows.push_back({m, run_verification(cfg, channel, trials, seed, workers), 0.0, {}});
    variants.push_back({"M=" + std::to_string(m), cfg, true});
  }
  for (std::size_t run = 0; run < battery_runs; ++run) {
    const auto result = probe::run_battery(battery, variants, RngState::derive(seed, {0xBA77, run}).next_u64(), workers);
    for (std::size_t v = 0; v < rows.size(); ++v) rows[v].run_stealthiness.push_back(result.variants[v].stealthiness);
  }
  for (auto& row : rows) {
    double s = 0.0;
    for (const double x : row.run_stealthiness) s += x;
    row.stealthiness = row.run_stealthiness.empty() ? 0.0 : s / static_cast<double>(row.run_stealthiness.size());
  }
  return rows;
}

struct AblationResult {
  VerificationStats with_construction;
  VerificationStats without_construction;
};

/// Sign-derived seeds with redundancy versus seeds read from raw values.
inline AblationResult ablate_seed_construction(const SwaConfig& base, const ChannelModel& channel,
                                               std::size_t trials, std::uint64_t seed,
                                               std::size_t workers) {
  SwaConfig with = base;
  with.construction = SeedConstruction::kSign;
  SwaConfig without = base;
  without.construction = SeedConstruction::kRawValue;
  return {run_verification(with, channel, trials, seed, workers),
          run_verification(without, channel, trials, seed, workers)};
}

struct AttackRun {
  probe::AttackReport plain;
  probe::AttackReport wrapped;
  std::vector<probe::ModelReport> clean;
};

struct AttackSummary {
  std::vector<AttackRun> runs;
  double median_stealthiness_plain = 0.0;
  double median_stealthiness_wrapped = 0.0;
  double median_control_auc = 0.5;
};

inline double median(std::vector<double> v) {
  if (v.empty()) throw Error(ErrorKind::kInvalidArgument, "median of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Repeated batteries comparing the unwrapped embedder with the wrapped one.
/// The control AUC is computed on the unwrapped population, where detection
/// is strongest.
inline AttackSummary run_attack(const SwaConfig& cfg, const probe::BatteryConfig& battery,
                                std::size_t runs, std::uint64_t seed, std::size_t workers) {
  if (runs == 0) throw Error(ErrorKind::kConfig, "need at least one battery run");
  AttackSummary summary;
  std::vector<double> plain, wrapped, control;
  for (std::size_t run = 0; run < runs; ++run) {
    auto result = probe::run_battery(battery, {{"plain", cfg, false}, {"wrapped", cfg, true}},
                                     RngState::derive(seed, {0xA77AC, run}).next_u64(), workers);
    plain.push_back(result.variants[0].stealthiness);
    wrapped.push_back(result.variants[1].stealthiness);
    control.push_back(result.variants[0].control_auc);
    summary.runs.push_back({std::move(result.variants[0]), std::move(result.variants[1]), std::move(result.clean)});
  }
  summary.median_stealthiness_plain = median(plain);
  summary.median_stealthiness_wrapped = median(wrapped);
  summary.median_control_auc = median(control);
  return summary;
}

}  // namespace latentmark
