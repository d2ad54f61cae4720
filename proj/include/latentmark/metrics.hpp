#pragma once

// Evaluation statistics shared by the experiments: ROC summaries, bit
// accuracy, kernel two-sample statistic, majority-vote tail, KS test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "latentmark/error.hpp"
#include "latentmark/rng.hpp"

namespace latentmark {

struct ScoredSample {
  double score = 0.0;
  bool label = false;  // true = watermarked
};

namespace detail {

inline void count_classes(std::span<const ScoredSample> samples, std::size_t& pos,
                          std::size_t& neg) {
  pos = neg = 0;
  for (const auto& s : samples) {
    if (!std::isfinite(s.score)) throw Error(ErrorKind::kInvalidArgument, "non-finite score");
    (s.label ? pos : neg)++;
  }
  if (pos == 0 || neg == 0) {
    throw Error(ErrorKind::kSingleClass, "need at least one positive and one negative sample");
  }
}

}  // namespace detail

/// Mann-Whitney U / (n_pos * n_neg) with mid-ranks, so ties count 1/2.
inline double auc(std::span<const ScoredSample> samples) {
  std::size_t pos, neg;
  detail::count_classes(samples, pos, neg);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return samples[a].score < samples[b].score; });
  // Doubled ranks keep every quantity an integer.
  std::uint64_t pos_rank2 = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && samples[order[j]].score == samples[order[i]].score) ++j;
    const std::uint64_t mid2 = i + 1 + j;  // 2 * average of ranks i+1 .. j
    for (std::size_t t = i; t < j; ++t) {
      if (samples[order[t]].label) pos_rank2 += mid2;
    }
    i = j;
  }
  const std::uint64_t u2 = pos_rank2 - static_cast<std::uint64_t>(pos) * (pos + 1);
  return static_cast<double>(u2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

inline double auc(const std::vector<ScoredSample>& samples) {
  return auc(std::span<const ScoredSample>(samples));
}

/// Smallest observed score t with (#negatives scoring > t) / n_neg <= fpr.
/// Predictions are "score > t".
inline double threshold_at_fpr(std::span<const double> negatives, double fpr) {
  if (negatives.empty()) throw Error(ErrorKind::kSingleClass, "no negative scores");
  std::vector<double> sorted(negatives.begin(), negatives.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  // sorted[k] has at most k scores strictly above it, and the tie block
  // containing sorted[allowed] is the last one that starts within budget.
  const auto allowed = static_cast<std::size_t>(
      std::floor(fpr * static_cast<double>(sorted.size()) + 1e-12));
  const std::size_t idx = std::min(allowed, sorted.size() - 1);
  return sorted[idx];
}

/// True-positive rate at the conservative threshold: the smallest sample
/// score t (over both classes) whose false-positive rate, counting
/// "score > t" as positive, does not exceed fpr_target. No interpolation.
inline double tpr_at_fpr(std::span<const ScoredSample> samples, double fpr_target = 0.01) {
  std::size_t pos, neg;
  detail::count_classes(samples, pos, neg);
  std::vector<double> neg_scores, pos_scores;
  for (const auto& s : samples) (s.label ? pos_scores : neg_scores).push_back(s.score);
  std::sort(neg_scores.begin(), neg_scores.end());
  std::sort(pos_scores.begin(), pos_scores.end());
  const auto above = [](const std::vector<double>& sorted, double t) {
    return static_cast<std::size_t>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), t));
  };
  std::vector<double> candidates(neg_scores);
  candidates.insert(candidates.end(), pos_scores.begin(), pos_scores.end());
  std::sort(candidates.begin(), candidates.end());
  for (const double t : candidates) {
    if (static_cast<double>(above(neg_scores, t)) <= fpr_target * static_cast<double>(neg) + 1e-12) {
      return static_cast<double>(above(pos_scores, t)) / static_cast<double>(pos);
    }
  }
  return 0.0;  // unreachable: the maximum score has no negatives above it
}

inline double tpr_at_fpr(const std::vector<ScoredSample>& samples, double fpr_target = 0.01) {
  return tpr_at_fpr(std::span<const ScoredSample>(samples), fpr_target);
}

inline double bit_accuracy(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::kShapeMismatch, "bit strings differ in length");
  if (a.empty()) throw Error(ErrorKind::kInvalidArgument, "empty bit strings");
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return static_cast<double>(same) / static_cast<double>(a.size());
}

/// Rows are samples.
using FeatureMatrix = Eigen::MatrixXd;

namespace detail {

inline Eigen::MatrixXd squared_distances(const FeatureMatrix& a, const FeatureMatrix& b) {
  const Eigen::VectorXd na = a.rowwise().squaredNorm();
  const Eigen::VectorXd nb = b.rowwise().squaredNorm();
  Eigen::MatrixXd d = (-2.0 * a * b.transpose()).colwise() + na;
  d.rowwise() += nb.transpose();
  return d.cwiseMax(0.0);
}

}  // namespace detail

/// Unbiased U-statistic MMD^2 with k(x, y) = exp(-|x - y|^2 / (2 bw^2)).
/// May be slightly negative.
inline double mmd2_unbiased(const FeatureMatrix& x, const FeatureMatrix& y, double bandwidth) {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
    throw Error(ErrorKind::kInvalidArgument, "kernel bandwidth must be positive");
  }
  if (x.rows() < 2 || y.rows() < 2) throw Error(ErrorKind::kInvalidArgument, "need >= 2 samples per set");
  if (x.cols() != y.cols()) throw Error(ErrorKind::kShapeMismatch, "feature dimensions differ");
  const double gamma = 1.0 / (2.0 * bandwidth * bandwidth);
  const auto kernel_sum = [gamma](const FeatureMatrix& a, const FeatureMatrix& b, bool skip_diag) {
    const Eigen::MatrixXd k = (-gamma * detail::squared_distances(a, b).array()).exp().matrix();
    double s = k.sum();
    if (skip_diag) s -= k.diagonal().sum();
    return s;
  };
  const double m = static_cast<double>(x.rows()), n = static_cast<double>(y.rows());
  return kernel_sum(x, x, true) / (m * (m - 1.0)) + kernel_sum(y, y, true) / (n * (n - 1.0)) -
         2.0 * kernel_sum(x, y, false) / (m * n);
}

/// Median pairwise Euclidean distance over the pooled rows; 1.0 if the
/// median is zero.
inline double median_heuristic_bandwidth(const FeatureMatrix& x, const FeatureMatrix& y) {
  FeatureMatrix pooled(x.rows() + y.rows(), x.cols());
  pooled << x, y;
  const Eigen::MatrixXd d = detail::squared_distances(pooled, pooled);
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(pooled.rows() * (pooled.rows() - 1) / 2));
  for (Eigen::Index i = 0; i < pooled.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < pooled.rows(); ++j) dists.push_back(std::sqrt(d(i, j)));
  }
  if (dists.empty()) return 1.0;
  auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  return *mid > 0.0 ? *mid : 1.0;
}

/// Fraction of label permutations whose MMD^2 reaches the observed value
/// (with the +1 correction).
inline double mmd_permutation_pvalue(const FeatureMatrix& x, const FeatureMatrix& y,
                                     double bandwidth, std::size_t permutations, RngState& rng) {
  const double observed = mmd2_unbiased(x, y, bandwidth);
  FeatureMatrix pooled(x.rows() + y.rows(), x.cols());
  pooled << x, y;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(pooled.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  std::size_t hits = 0;
  FeatureMatrix a(x.rows(), x.cols()), b(y.rows(), y.cols());
  for (std::size_t p = 0; p < permutations; ++p) {
    for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[rng.next_below(i + 1)]);
    for (Eigen::Index i = 0; i < x.rows(); ++i) a.row(i) = pooled.row(idx[static_cast<std::size_t>(i)]);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      b.row(i) = pooled.row(idx[static_cast<std::size_t>(x.rows() + i)]);
    }
    if (mmd2_unbiased(a, b, bandwidth) >= observed) ++hits;
  }
  return static_cast<double>(hits + 1) / static_cast<double>(permutations + 1);
}

/// P[Bin(votes, p) >= ceil(votes / 2)], summed in log space.
inline double majority_error(double p, std::size_t votes) {
  if (votes == 0 || votes % 2 == 0) {
    throw Error(ErrorKind::kInvalidArgument, "vote count must be odd and >= 1");
  }
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::kInvalidArgument, "p must be in [0, 1]");
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;
  const std::size_t need = (votes + 1) / 2;
  const double n = static_cast<double>(votes);
  const double lp = std::log(p), lq = std::log1p(-p);
  std::vector<double> terms;
  for (std::size_t i = need; i <= votes; ++i) {
    const double k = static_cast<double>(i);
    terms.push_back(std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1) + k * lp +
                    (n - k) * lq);
  }
  const double top = *std::max_element(terms.begin(), terms.end());
  double s = 0.0;
  for (const double t : terms) s += std::exp(t - top);
  return std::min(1.0, std::exp(top + std::log(s)));
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Asymptotic Kolmogorov survival function Q(lambda).
inline double kolmogorov_survival(double lambda) {
  if (lambda < 0.2) return 1.0;
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 == 1 ? term : -term);
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

/// One-sample KS test against a continuous CDF.
template <typename Cdf>
KsResult ks_test(std::span<const double> values, Cdf cdf) {
  if (values.empty()) throw Error(ErrorKind::kInvalidArgument, "KS test needs samples");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = cdf(sorted[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return {d, kolmogorov_survival(std::sqrt(n) * d)};
}

inline double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
inline double half_normal_cdf(double x) { return x <= 0.0 ? 0.0 : std::erf(x / std::sqrt(2.0)); }

inline KsResult ks_test_normal(std::span<const double> values) {
  return ks_test(values, standard_normal_cdf);
}

}  // namespace latentmark
