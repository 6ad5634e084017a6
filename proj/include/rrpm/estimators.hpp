#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "rrpm/errors.hpp"
#include "rrpm/problem.hpp"

namespace rrpm {

/// Stable sub-stream seed derivation (splitmix64 mix), so one run seed can
/// drive several independent generators with documented roles.
inline std::uint64_t derive_stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + (stream + 1) * 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Index sampling.
// ---------------------------------------------------------------------------

/// Random index source over {0, ..., range-1}.  Weighted samplers must give
/// every index positive probability; `probability_floor` reports
/// range * min_j P(j), which is 1 for the uniform sampler.
class IndexSampler {
 public:
  static IndexSampler uniform(int range, std::uint64_t seed) {
    if (range < 1) throw std::invalid_argument("IndexSampler: range must be positive");
    IndexSampler s;
    s.range_ = range;
    s.floor_ = 1.0;
    s.rng_.seed(seed);
    return s;
  }

  static IndexSampler weighted(std::vector<double> probabilities, std::uint64_t seed) {
    const int range = static_cast<int>(probabilities.size());
    if (range < 1) throw std::invalid_argument("IndexSampler: no probabilities");
    double sum = 0.0;
    double min_p = probabilities.front();
    for (double p : probabilities) {
      if (!(p > 0.0)) {
        throw std::invalid_argument("IndexSampler: zero-probability index breaks the sampling floor");
      }
      sum += p;
      min_p = std::min(min_p, p);
    }
    if (std::abs(sum - 1.0) > 1e-12 * range) {
      throw std::invalid_argument("IndexSampler: probabilities must sum to 1");
    }
    IndexSampler s;
    s.range_ = range;
    s.floor_ = range * min_p;
    s.weights_ = std::move(probabilities);
    s.rng_.seed(seed);
    return s;
  }

  int draw() {
    if (weights_.empty()) {
      return std::uniform_int_distribution<int>(0, range_ - 1)(rng_);
    }
    std::discrete_distribution<int> dist(weights_.begin(), weights_.end());
    return dist(rng_);
  }

  int range() const { return range_; }
  double probability_floor() const { return floor_; }
  bool is_uniform() const { return weights_.empty(); }

 private:
  IndexSampler() = default;
  int range_ = 0;
  double floor_ = 1.0;
  std::vector<double> weights_;
  std::mt19937_64 rng_;
};

/// b summand indices drawn iid with replacement from a sampler over [0, n).
inline std::vector<int> draw_summand_batch(IndexSampler& sampler, int n, int b) {
  if (sampler.range() != n) {
    throw std::invalid_argument("draw_summand_batch: sampler range does not match n");
  }
  if (b < 1) throw std::invalid_argument("draw_summand_batch: batch size must be positive");
  std::vector<int> batch(static_cast<std::size_t>(b));
  for (auto& i : batch) i = sampler.draw();
  return batch;
}

// ---------------------------------------------------------------------------
// Gradient estimators.
// ---------------------------------------------------------------------------

enum class EstimatorKind { svrg, minibatch, single_sample, full };

inline std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::svrg: return "svrg";
    case EstimatorKind::minibatch: return "minibatch";
    case EstimatorKind::single_sample: return "single_sample";
    case EstimatorKind::full: return "full";
  }
  return "unknown";
}

/// State carried by a gradient estimator between steps.  Only the SVRG kind
/// holds data: the snapshot point and the full gradient taken there, which
/// must stay in sync (enforced on construction and checkable at any time).
struct EstimatorState {
  EstimatorKind kind = EstimatorKind::full;
  int batch_size = 1;
  int epoch_length = 1;
  Vector snapshot_point;
  Vector snapshot_gradient;
};

inline EstimatorState make_plain_state(EstimatorKind kind, int batch_size = 1) {
  if (kind == EstimatorKind::svrg) {
    throw std::invalid_argument("make_plain_state: svrg state needs a snapshot");
  }
  if (batch_size < 1) throw std::invalid_argument("make_plain_state: batch size must be positive");
  EstimatorState s;
  s.kind = kind;
  s.batch_size = batch_size;
  return s;
}

/// Fresh SVRG state with the snapshot taken at x (costs n summand gradients).
inline EstimatorState make_svrg_state(const ProblemInstance& instance, const Vector& x,
                                      int batch_size, int epoch_length) {
  if (batch_size < 1 || batch_size > instance.num_summands()) {
    throw std::invalid_argument("make_svrg_state: batch size must lie in [1, n]");
  }
  if (epoch_length < 1) throw std::invalid_argument("make_svrg_state: epoch length must be positive");
  EstimatorState s;
  s.kind = EstimatorKind::svrg;
  s.batch_size = batch_size;
  s.epoch_length = epoch_length;
  s.snapshot_point = x;
  s.snapshot_gradient = evaluate_full_gradient(instance, x);
  return s;
}

/// SVRG state from an externally supplied snapshot pair; rejects stale pairs.
inline EstimatorState make_svrg_state(const ProblemInstance& instance, const Vector& x,
                                      const Vector& gradient, int batch_size, int epoch_length) {
  EstimatorState s = make_svrg_state(instance, x, batch_size, epoch_length);
  check_dimension(gradient.size(), instance.dimension(), "make_svrg_state gradient");
  const double scale = std::max(1.0, s.snapshot_gradient.cwiseAbs().maxCoeff());
  if ((gradient - s.snapshot_gradient).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw StateError("make_svrg_state: supplied gradient does not match the snapshot point");
  }
  s.snapshot_gradient = gradient;
  return s;
}

/// New state with the snapshot moved to x (costs n summand gradients).
inline EstimatorState refresh_snapshot(const EstimatorState& state, const ProblemInstance& instance,
                                       const Vector& x) {
  if (state.kind != EstimatorKind::svrg) {
    throw StateError("refresh_snapshot: estimator holds no snapshot");
  }
  return make_svrg_state(instance, x, state.batch_size, state.epoch_length);
}

/// Recomputes the snapshot gradient and fails loudly if the stored one drifted.
inline void verify_snapshot(const EstimatorState& state, const ProblemInstance& instance,
                            double tol = 1e-12) {
  if (state.kind != EstimatorKind::svrg) {
    throw StateError("verify_snapshot: estimator holds no snapshot");
  }
  const Vector expected = evaluate_full_gradient(instance, state.snapshot_point);
  const double scale = std::max(1.0, expected.cwiseAbs().maxCoeff());
  if ((state.snapshot_gradient - expected).cwiseAbs().maxCoeff() > tol * scale) {
    throw StateError("verify_snapshot: snapshot gradient is stale");
  }
}

/// Variance-reduced estimate at x:
///   v = (1/|batch|) sum_{i in batch} (grad f_i(x) - grad f_i(x~)) + grad f(x~).
/// Unbiased for grad f(x) when the batch is iid uniform.  Costs 2|batch|
/// summand gradients.
inline Vector svrg_estimate(const EstimatorState& state, const ProblemInstance& instance,
                            const Vector& x, const std::vector<int>& batch) {
  if (state.kind != EstimatorKind::svrg) {
    throw StateError("svrg_estimate: estimator state is not svrg");
  }
  check_dimension(state.snapshot_point.size(), instance.dimension(), "svrg_estimate snapshot");
  check_dimension(x.size(), instance.dimension(), "svrg_estimate point");
  check_finite(x, "svrg_estimate point");
  if (batch.empty()) throw std::invalid_argument("svrg_estimate: empty batch");

  Vector correction = Vector::Zero(instance.dimension());
  for (int i : batch) {
    const auto& summand = instance.objective().summand(i);
    correction += summand.gradient(x) - summand.gradient(state.snapshot_point);
  }
  return correction / static_cast<double>(batch.size()) + state.snapshot_gradient;
}

/// Plain stochastic estimates: the batch mean of summand gradients, or the
/// exact gradient for the full kind (which ignores the batch).
inline Vector plain_estimate(const EstimatorState& state, const ProblemInstance& instance,
                             const Vector& x, const std::vector<int>& batch) {
  if (state.kind == EstimatorKind::svrg) {
    throw StateError("plain_estimate: use svrg_estimate for svrg states");
  }
  if (state.kind == EstimatorKind::full) return evaluate_full_gradient(instance, x);
  check_dimension(x.size(), instance.dimension(), "plain_estimate point");
  check_finite(x, "plain_estimate point");
  if (batch.empty()) throw std::invalid_argument("plain_estimate: empty batch");
  Vector acc = Vector::Zero(instance.dimension());
  for (int i : batch) acc += instance.objective().summand(i).gradient(x);
  return acc / static_cast<double>(batch.size());
}

}  // namespace rrpm
