#pragma once

// Watermark probe attack: a trainable feature extractor pulled toward
// constant target features, far-from-vanilla features, and flat vanilla
// features, followed by an MMD comparison of the two feature sets.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "latentmark/error.hpp"
#include "latentmark/latent.hpp"
#include "latentmark/metrics.hpp"
#include "latentmark/rng.hpp"

namespace latentmark::probe {

/// Rows are observations / feature vectors.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kDtcEpsilon = 1e-8;
inline constexpr double kNormalizeEpsilon = 1e-12;
inline constexpr std::size_t kDefaultFeatureDim = 100;

/// Variance-preserving block pooling: each pool x pool block contributes
/// sum / pool, so i.i.d. N(0,1) input maps to i.i.d. N(0,1) output.
inline Vector observe(const LatentTensor& z, std::size_t pool) {
  if (pool == 0 || z.height() % pool != 0 || z.width() % pool != 0) {
    throw Error(ErrorKind::kInvalidArgument, "pool factor must divide the latent size");
  }
  const std::size_t ph = z.height() / pool, pw = z.width() / pool;
  Vector out = Vector::Zero(static_cast<Eigen::Index>(z.channels() * ph * pw));
  for (std::size_t c = 0; c < z.channels(); ++c) {
    for (std::size_t r = 0; r < z.height(); ++r) {
      for (std::size_t col = 0; col < z.width(); ++col) {
        out(static_cast<Eigen::Index>((c * ph + r / pool) * pw + col / pool)) += z.at(c, r, col);
      }
    }
  }
  return out / static_cast<double>(pool);
}

/// Affine map followed by a sigmoid: f = sigmoid(x W + b).
struct FeatureExtractor {
  Matrix weights;  // d x M_f
  Vector bias;     // M_f

  static FeatureExtractor init(std::size_t input_dim, std::size_t output_dim, RngState& rng) {
    FeatureExtractor fe{Matrix(input_dim, output_dim), Vector::Zero(static_cast<Eigen::Index>(output_dim))};
    NormalStream normals(rng);
    const double scale = 1.0 / std::sqrt(static_cast<double>(input_dim));
    for (Eigen::Index j = 0; j < fe.weights.cols(); ++j) {
      for (Eigen::Index i = 0; i < fe.weights.rows(); ++i) fe.weights(i, j) = normals.next() * scale;
    }
    return fe;
  }

  std::size_t input_dim() const { return static_cast<std::size_t>(weights.rows()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(weights.cols()); }

  Matrix forward(const Matrix& x) const {
    if (x.cols() != weights.rows()) {
      throw Error(ErrorKind::kShapeMismatch, "observation dimension does not match extractor");
    }
    Matrix a = x * weights;
    a.rowwise() += bias.transpose();
    return (1.0 / (1.0 + (-a.array()).exp())).matrix();
  }
};

// ---------------------------------------------------------------------------
// Losses. Each *_grad variant returns dL/dF for the feature matrix.

/// Mean squared distance over ordered pairs i != j.
inline double loss_at(const Matrix& tar) {
  const auto n = static_cast<double>(tar.rows());
  if (tar.rows() < 2) throw Error(ErrorKind::kInvalidArgument, "aggregation loss needs N >= 2");
  // sum_{i != j} |f_i - f_j|^2 = 2 N sum_i |f_i - mean|^2
  const Matrix centered = tar.rowwise() - tar.colwise().mean();
  return 2.0 * n * centered.squaredNorm() / (n * (n - 1.0));
}

inline Matrix loss_at_grad(const Matrix& tar) {
  const auto n = static_cast<double>(tar.rows());
  return 4.0 * (tar.rowwise() - tar.colwise().mean()) / (n - 1.0);
}

/// Mean squared cross-distance between the two sets.
inline double mean_cross_sq_distance(const Matrix& tar, const Matrix& van) {
  const double a = tar.rowwise().squaredNorm().mean();
  const double b = van.rowwise().squaredNorm().mean();
  const double c = tar.colwise().mean().dot(van.colwise().mean());
  return std::max(0.0, a + b - 2.0 * c);
}

inline double loss_dtc(const Matrix& tar, const Matrix& van) {
  if (tar.rows() < 1 || van.rows() < 1) throw Error(ErrorKind::kInvalidArgument, "empty batch");
  if (tar.cols() != van.cols()) throw Error(ErrorKind::kShapeMismatch, "feature dimensions differ");
  return 1.0 / (mean_cross_sq_distance(tar, van) + kDtcEpsilon);
}

inline std::pair<Matrix, Matrix> loss_dtc_grad(const Matrix& tar, const Matrix& van) {
  const double denom = mean_cross_sq_distance(tar, van) + kDtcEpsilon;
  const double outer = -1.0 / (denom * denom);
  const auto nt = static_cast<double>(tar.rows()), nv = static_cast<double>(van.rows());
  Matrix gt = (tar.rowwise() - van.colwise().mean()) * (2.0 * outer / nt);
  Matrix gv = (van.rowwise() - tar.colwise().mean()) * (2.0 * outer / nv);
  return {std::move(gt), std::move(gv)};
}

/// Mean KL(normalize(f) || uniform) with normalize(f)_k = (f_k + eps) / sum(f + eps).
inline double loss_gc(const Matrix& van) {
  if (van.rows() < 1) throw Error(ErrorKind::kInvalidArgument, "empty batch");
  const auto m = static_cast<double>(van.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < van.rows(); ++i) {
    const Eigen::ArrayXd shifted = van.row(i).array().transpose() + kNormalizeEpsilon;
    const Eigen::ArrayXd p = shifted / shifted.sum();
    total += (p * (p * m).log()).sum();
  }
  return total / static_cast<double>(van.rows());
}

inline Matrix loss_gc_grad(const Matrix& van) {
  const auto m = static_cast<double>(van.cols());
  const auto n = static_cast<double>(van.rows());
  Matrix g(van.rows(), van.cols());
  for (Eigen::Index i = 0; i < van.rows(); ++i) {
    const Eigen::ArrayXd shifted = van.row(i).array().transpose() + kNormalizeEpsilon;
    const double s = shifted.sum();
    const Eigen::ArrayXd logpm = (shifted / s * m).log();
    const double kl = (shifted / s * logpm).sum();
    g.row(i) = ((logpm - kl) / (s * n)).matrix().transpose();
  }
  return g;
}

struct LossWeights {
  double at = 1.0;
  double dtc = 1.0;
  double gc = 1.0;
};

struct LossValues {
  double at = 0.0;
  double dtc = 0.0;
  double gc = 0.0;
  double total = 0.0;
};

struct LossAndGrad {
  LossValues loss;
  Matrix d_weights;
  Vector d_bias;
};

inline LossValues total_loss(const FeatureExtractor& fe, const Matrix& x_tar, const Matrix& x_van,
                             const LossWeights& lambda) {
  const Matrix ft = fe.forward(x_tar), fv = fe.forward(x_van);
  LossValues v{loss_at(ft), loss_dtc(ft, fv), loss_gc(fv), 0.0};
  v.total = lambda.at * v.at + lambda.dtc * v.dtc + lambda.gc * v.gc;
  return v;
}

/// Loss and analytic gradient with respect to the extractor parameters.
inline LossAndGrad total_loss_and_grad(const FeatureExtractor& fe, const Matrix& x_tar,
                                       const Matrix& x_van, const LossWeights& lambda) {
  const Matrix ft = fe.forward(x_tar), fv = fe.forward(x_van);
  LossAndGrad out;
  out.loss = {loss_at(ft), loss_dtc(ft, fv), loss_gc(fv), 0.0};
  out.loss.total = lambda.at * out.loss.at + lambda.dtc * out.loss.dtc + lambda.gc * out.loss.gc;

  auto [dtc_t, dtc_v] = loss_dtc_grad(ft, fv);
  Matrix gt = lambda.at * loss_at_grad(ft) + lambda.dtc * dtc_t;
  Matrix gv = lambda.dtc * dtc_v + lambda.gc * loss_gc_grad(fv);
  // Through the sigmoid.
  gt.array() *= ft.array() * (1.0 - ft.array());
  gv.array() *= fv.array() * (1.0 - fv.array());
  out.d_weights = x_tar.transpose() * gt + x_van.transpose() * gv;
  out.d_bias = (gt.colwise().sum() + gv.colwise().sum()).transpose();
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct Hyperparameters {
  double lr = 0.01;
  double momentum = 0.9;
  double decay = 0.5;
  std::size_t decay_every = 50;
  std::size_t batch = 64;
  std::size_t steps = 1000;
  LossWeights lambda{};
  std::size_t feature_dim = kDefaultFeatureDim;
  /// Loss trace sampling interval (the final step is always recorded).
  std::size_t trace_every = 10;

  void validate() const {
    if (!(lr > 0.0) || !(momentum >= 0.0 && momentum < 1.0) || !(decay > 0.0 && decay <= 1.0) ||
        decay_every == 0 || batch < 2 || steps == 0 || feature_dim == 0 || trace_every == 0) {
      throw Error(ErrorKind::kConfig, "invalid attack hyperparameters");
    }
  }
};

struct TracePoint {
  std::size_t step = 0;
  double at = 0.0;
  double dtc = 0.0;
  double gc = 0.0;
};

struct TrainResult {
  FeatureExtractor extractor;
  std::vector<TracePoint> trace;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, std::vector<TracePoint> trace)
      : Error(ErrorKind::kTrainingDiverged, what), trace_(std::move(trace)) {}
  const std::vector<TracePoint>& trace() const noexcept { return trace_; }

 private:
  std::vector<TracePoint> trace_;
};

namespace detail {

/// `count` distinct row indices of [0, n) (partial Fisher-Yates).
inline void sample_rows(std::vector<Eigen::Index>& pool, std::size_t count, RngState& rng,
                        std::vector<Eigen::Index>& out) {
  out.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.next_below(pool.size() - i);
    std::swap(pool[i], pool[j]);
    out[i] = pool[i];
  }
}

}  // namespace detail

/// Minibatch SGD with momentum (v = mu v + g; theta -= lr v) and a step
/// decay of the learning rate.
inline TrainResult train_wfe(const Matrix& tar, const Matrix& van, const Hyperparameters& hp,
                             RngState& rng) {
  hp.validate();
  if (tar.cols() != van.cols()) throw Error(ErrorKind::kShapeMismatch, "observation dimensions differ");
  if (static_cast<std::size_t>(tar.rows()) < hp.batch || static_cast<std::size_t>(van.rows()) < hp.batch) {
    throw Error(ErrorKind::kInvalidArgument, "observation sets smaller than the batch size");
  }
  TrainResult result{FeatureExtractor::init(static_cast<std::size_t>(tar.cols()), hp.feature_dim, rng), {}};
  FeatureExtractor& fe = result.extractor;
  Matrix vel_w = Matrix::Zero(fe.weights.rows(), fe.weights.cols());
  Vector vel_b = Vector::Zero(fe.bias.size());

  std::vector<Eigen::Index> tar_pool(static_cast<std::size_t>(tar.rows())), van_pool(static_cast<std::size_t>(van.rows()));
  for (std::size_t i = 0; i < tar_pool.size(); ++i) tar_pool[i] = static_cast<Eigen::Index>(i);
  for (std::size_t i = 0; i < van_pool.size(); ++i) van_pool[i] = static_cast<Eigen::Index>(i);
  std::vector<Eigen::Index> tar_idx, van_idx;
  Matrix xt(static_cast<Eigen::Index>(hp.batch), tar.cols()), xv(static_cast<Eigen::Index>(hp.batch), van.cols());

  double lr = hp.lr;
  for (std::size_t step = 0; step < hp.steps; ++step) {
    if (step > 0 && step % hp.decay_every == 0) lr *= hp.decay;
    detail::sample_rows(tar_pool, hp.batch, rng, tar_idx);
    detail::sample_rows(van_pool, hp.batch, rng, van_idx);
    for (std::size_t i = 0; i < hp.batch; ++i) {
      xt.row(static_cast<Eigen::Index>(i)) = tar.row(tar_idx[i]);
      xv.row(static_cast<Eigen::Index>(i)) = van.row(van_idx[i]);
    }
    const LossAndGrad lg = total_loss_and_grad(fe, xt, xv, hp.lambda);
    const TracePoint point{step, lg.loss.at, lg.loss.dtc, lg.loss.gc};
    if (!std::isfinite(lg.loss.total) || !lg.d_weights.allFinite() || !lg.d_bias.allFinite()) {
      result.trace.push_back(point);
      throw TrainingDiverged("loss became non-finite at step " + std::to_string(step),
                             std::move(result.trace));
    }
    if (step % hp.trace_every == 0 || step + 1 == hp.steps) result.trace.push_back(point);
    vel_w = hp.momentum * vel_w + lg.d_weights;
    vel_b = hp.momentum * vel_b + lg.d_bias;
    fe.weights -= lr * vel_w;
    fe.bias -= lr * vel_b;
  }
  return result;
}

/// MMD^2 between extracted feature sets (median-heuristic bandwidth),
/// clamped at zero.
inline double detect(const FeatureExtractor& fe, const Matrix& tar, const Matrix& van) {
  if (tar.rows() == 0 || van.rows() == 0) throw Error(ErrorKind::kInvalidArgument, "empty observation set");
  const Matrix ft = fe.forward(tar), fv = fe.forward(van);
  return std::max(0.0, mmd2_unbiased(ft, fv, median_heuristic_bandwidth(ft, fv)));
}

}  // namespace latentmark::probe
