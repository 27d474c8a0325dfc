#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "gfn4rec/autograd.hpp"
#include "gfn4rec/policy.hpp"

namespace gfn4rec {

/// Stabilization terms of the flow-matching losses.
struct GFNBias {
  double b_z{1.0};  // global normalizer, enters as log b_z
  double b_r{0.1};  // reward smoothing, log(R + b_r)
  double b_f{1.0};  // forward-probability shift, log(P + b_f)

  void validate() const {
    if (!(b_z > 0.0) || !std::isfinite(b_z)) throw ConfigError("b_z must be > 0");
    if (!(b_r >= 0.0) || !std::isfinite(b_r)) throw ConfigError("b_r must be >= 0");
    if (!(b_f >= 0.0) || !std::isfinite(b_f)) throw ConfigError("b_f must be >= 0");
  }
};

inline constexpr double kRewardFloor = 1e-6;
inline constexpr double kProbClamp = 1e-7;

struct LossDiagnostics {
  std::size_t samples{0};
  std::size_t clamped_rewards{0};
};

/// log(max(R + b_r, 1e-6)) per sample as an N x 1 matrix.
inline Matrix log_shifted_rewards(std::span<const double> rewards, double b_r, LossDiagnostics* diag = nullptr) {
  Matrix out(static_cast<ag::Index>(rewards.size()), 1);
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    double v = rewards[i] + b_r;
    if (!(v > kRewardFloor)) {
      v = kRewardFloor;
      if (diag) ++diag->clamped_rewards;
    }
    out(static_cast<ag::Index>(i), 0) = std::log(v);
  }
  if (diag) diag->samples += rewards.size();
  return out;
}

namespace detail {

inline void check_terms(const TrajectoryTensors& tt, std::size_t n) {
  if (tt.step_logprobs.empty() || tt.log_flows.size() != tt.step_logprobs.size() + 1) {
    throw PreconditionError("trajectory must be complete: K step log-probs and K+1 log-flows");
  }
  for (const auto& t : tt.log_flows) {
    if (t.rows() != static_cast<ag::Index>(n) || t.cols() != 1) throw ShapeError("log-flow must be N x 1");
  }
  for (const auto& t : tt.step_logprobs) {
    if (t.rows() != static_cast<ag::Index>(n) || t.cols() != 1) throw ShapeError("step log-prob must be N x 1");
  }
}

inline Tensor shifted_logprob(const Tensor& logp, double b_f) {
  return b_f == 0.0 ? logp : ag::log_shifted_exp(logp, b_f);
}

}  // namespace detail

/// Trajectory balance, averaged over the batch:
/// (log b_z + log F(u,∅) + Σ_t log(P_t + b_f) − log(R + b_r))².
inline Tensor tb_loss(const TrajectoryTensors& tt, std::span<const double> rewards, const GFNBias& bias,
                      LossDiagnostics* diag = nullptr) {
  bias.validate();
  detail::check_terms(tt, rewards.size());
  Tensor forward = ag::add_scalar(tt.log_flows.front(), std::log(bias.b_z));
  for (const auto& lp : tt.step_logprobs) forward = ag::add(forward, detail::shifted_logprob(lp, bias.b_f));
  const Tensor residual = ag::sub(forward, Tensor::constant(log_shifted_rewards(rewards, bias.b_r, diag)));
  return ag::mean(ag::square(residual));
}

/// Detailed balance, summed over the K step terms and the leaf term, averaged
/// over the batch. The backward probability is 1 on a tree.
inline Tensor db_loss(const TrajectoryTensors& tt, std::span<const double> rewards, const GFNBias& bias,
                      LossDiagnostics* diag = nullptr) {
  bias.validate();
  detail::check_terms(tt, rewards.size());
  const std::size_t k = tt.step_logprobs.size();
  const double log_bz_step = std::log(bias.b_z) / static_cast<double>(k);
  Tensor total = ag::square(ag::sub(tt.log_flows.back(), Tensor::constant(log_shifted_rewards(rewards, bias.b_r, diag))));
  for (std::size_t t = 0; t < k; ++t) {
    const Tensor in = ag::add_scalar(ag::add(tt.log_flows[t], detail::shifted_logprob(tt.step_logprobs[t], bias.b_f)),
                                     log_bz_step);
    total = ag::add(total, ag::square(ag::sub(in, tt.log_flows[t + 1])));
  }
  return ag::mean(total);
}

namespace detail {

inline TrajectoryTensors constant_terms(const GenerationTrajectory& traj) {
  TrajectoryTensors tt;
  for (double f : traj.log_flows) tt.log_flows.push_back(ag::Tensor::scalar(f));
  for (double lp : traj.step_logprobs) tt.step_logprobs.push_back(ag::Tensor::scalar(lp));
  return tt;
}

}  // namespace detail

inline double tb_loss(const GenerationTrajectory& traj, double reward, const GFNBias& bias,
                      LossDiagnostics* diag = nullptr) {
  ag::NoGradGuard guard;
  return tb_loss(detail::constant_terms(traj), std::span<const double>(&reward, 1), bias, diag).item();
}

inline double db_loss(const GenerationTrajectory& traj, double reward, const GFNBias& bias,
                      LossDiagnostics* diag = nullptr) {
  ag::NoGradGuard guard;
  return db_loss(detail::constant_terms(traj), std::span<const double>(&reward, 1), bias, diag).item();
}

/// Maps a reward onto [0, 1] for use as a soft label.
inline double scale_reward(double reward, double r_min, double r_max) {
  if (!(r_max > r_min)) throw PreconditionError("reward range must have r_max > r_min");
  return std::clamp((reward - r_min) / (r_max - r_min), 0.0, 1.0);
}

/// Soft-label binary cross-entropy −[r log p + (1−r) log(1−p)], p clamped to [1e-7, 1−1e-7].
inline double rbce_loss(double prob, double label) {
  const double p = std::clamp(prob, kProbClamp, 1.0 - kProbClamp);
  return -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
}

/// Element-wise mean of the soft-label BCE over a probability matrix.
inline Tensor rbce_loss(const Tensor& probs, const Matrix& labels) {
  if (probs.rows() != labels.rows() || probs.cols() != labels.cols()) throw ShapeError("rbce label shape");
  const Tensor p = ag::clamp(probs, kProbClamp, 1.0 - kProbClamp);
  const Tensor pos = ag::mul(Tensor::constant(labels), ag::log(p));
  const Tensor neg = ag::mul(Tensor::constant(Matrix::Ones(labels.rows(), labels.cols()) - labels),
                             ag::log(ag::add_scalar(ag::scale(p, -1.0), 1.0)));
  return ag::scale(ag::mean(ag::add(pos, neg)), -1.0);
}

/// |1 − Σ_a F(O^t ⊕ a) / (b_z^{1/K} F(O^t))|, from log-flows.
///
/// Zero exactly when the outgoing flow of the node equals its incoming flow
/// under the detailed-balance parameterization with b_f = 0.
inline double flow_conservation_residual(double parent_log_flow, std::span<const double> child_log_flows, double b_z,
                                         std::size_t k) {
  if (child_log_flows.empty()) throw PreconditionError("node has no children");
  if (k == 0) throw PreconditionError("slate size must be positive");
  const double m = *std::max_element(child_log_flows.begin(), child_log_flows.end());
  double s = 0.0;
  for (double c : child_log_flows) s += std::exp(c - m);
  const double log_ratio = m + std::log(s) - parent_log_flow - std::log(b_z) / static_cast<double>(k);
  return std::abs(std::expm1(log_ratio));
}

inline double flow_conservation_residual(const GFNPolicy& policy, const UserRequest& request,
                                         const std::vector<ItemId>& partial, const GFNBias& bias) {
  bias.validate();
  if (partial.size() >= policy.slate_size()) throw PreconditionError("residual needs an internal node (|partial| < K)");
  const UserState state = policy.encode_state(request);
  std::vector<double> children;
  for (ItemId a : request.candidate_items()) {
    if (std::find(partial.begin(), partial.end(), a) != partial.end()) continue;
    auto next = partial;
    next.push_back(a);
    children.push_back(policy.flow_value(state, next));
  }
  return flow_conservation_residual(policy.flow_value(state, partial), children, bias.b_z, policy.slate_size());
}

}  // namespace gfn4rec
