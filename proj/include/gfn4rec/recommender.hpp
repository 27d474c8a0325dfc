#pragma once

#include <span>
#include <string>
#include <vector>

#include "gfn4rec/autograd.hpp"
#include "gfn4rec/domain.hpp"
#include "gfn4rec/nn.hpp"
#include "gfn4rec/objectives.hpp"
#include "gfn4rec/policy.hpp"
#include "gfn4rec/rng.hpp"

namespace gfn4rec {

/// Common surface of the GFN policy and the baselines as seen by the harness.
class Recommender {
 public:
  virtual ~Recommender() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t slate_size() const = 0;

  /// One slate per request. Models without an exploration mechanism treat
  /// explore as greedy.
  virtual std::vector<Slate> recommend(std::span<const UserRequest* const> requests, GenerationMode mode,
                                       Rng& rng) const = 0;

  /// N x K ranking scores of each given slate's items, used to rank users
  /// against each other per position.
  virtual Matrix position_scores(std::span<const UserRequest* const> requests,
                                 std::span<const Slate* const> slates) const = 0;

  /// Differentiable training loss on a mini-batch of observed samples.
  virtual Tensor loss(std::span<const TrainingSample* const> batch, LossDiagnostics& diag) const = 0;

  virtual nn::ParameterStore& parameters() = 0;
  virtual const nn::ParameterStore& parameters() const = 0;
};

namespace detail {

inline std::vector<const UserRequest*> requests_of(std::span<const TrainingSample* const> batch) {
  std::vector<const UserRequest*> out;
  out.reserve(batch.size());
  for (const auto* s : batch) out.push_back(&s->request);
  return out;
}

inline std::vector<const Slate*> slates_of(std::span<const TrainingSample* const> batch) {
  std::vector<const Slate*> out;
  out.reserve(batch.size());
  for (const auto* s : batch) out.push_back(&s->slate);
  return out;
}

}  // namespace detail

enum class FlowObjective { trajectory_balance, detailed_balance };

/// GFN policy trained with TB or DB.
class GFNRecommender final : public Recommender {
 public:
  GFNRecommender(const PolicyConfig& cfg, const FeatureSpace& space, FlowObjective objective, GFNBias bias,
                 std::uint64_t seed)
      : policy_(cfg, space, seed), objective_(objective), bias_((bias.validate(), bias)) {}

  std::string kind() const override { return objective_ == FlowObjective::trajectory_balance ? "gfn_tb" : "gfn_db"; }
  std::size_t slate_size() const override { return policy_.slate_size(); }
  const GFNPolicy& policy() const { return policy_; }
  GFNPolicy& policy() { return policy_; }
  const GFNBias& bias() const { return bias_; }
  FlowObjective objective() const { return objective_; }

  std::vector<Slate> recommend(std::span<const UserRequest* const> requests, GenerationMode mode,
                               Rng& rng) const override {
    std::vector<Slate> out;
    for (auto& t : policy_.generate(requests, mode, rng)) out.push_back(std::move(t.slate));
    return out;
  }

  /// Teacher-forced step log-probabilities log P(a_k | u, O^{k-1}).
  Matrix position_scores(std::span<const UserRequest* const> requests,
                         std::span<const Slate* const> slates) const override {
    ag::NoGradGuard guard;
    const auto tt = policy_.evaluate(requests, slates);
    Matrix out(static_cast<ag::Index>(requests.size()), static_cast<ag::Index>(tt.step_logprobs.size()));
    for (std::size_t k = 0; k < tt.step_logprobs.size(); ++k) out.col(static_cast<ag::Index>(k)) = tt.step_logprobs[k].value();
    return out;
  }

  Tensor loss(std::span<const TrainingSample* const> batch, LossDiagnostics& diag) const override {
    const auto reqs = detail::requests_of(batch);
    const auto slates = detail::slates_of(batch);
    std::vector<double> rewards;
    for (const auto* s : batch) rewards.push_back(s->reward);
    const auto tt = policy_.evaluate(reqs, slates);
    return objective_ == FlowObjective::trajectory_balance ? tb_loss(tt, rewards, bias_, &diag)
                                                           : db_loss(tt, rewards, bias_, &diag);
  }

  nn::ParameterStore& parameters() override { return policy_.parameters(); }
  const nn::ParameterStore& parameters() const override { return policy_.parameters(); }

 private:
  GFNPolicy policy_;
  FlowObjective objective_;
  GFNBias bias_;
};

}  // namespace gfn4rec
