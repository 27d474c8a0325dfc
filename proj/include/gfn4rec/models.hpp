#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gfn4rec/baselines.hpp"
#include "gfn4rec/recommender.hpp"

namespace gfn4rec {

struct ModelConfig {
  std::string kind{"gfn_tb"};  // gfn_tb | gfn_db | cf | rerank_cf | prm
  PolicyConfig policy;          // encoder, K and head width
  GFNBias bias;
  std::size_t rerank_m{0};  // 0 selects 4K
  bool prm_rank_positions{true};
};

inline const std::vector<std::string>& model_kinds() {
  static const std::vector<std::string> kinds{"gfn_tb", "gfn_db", "cf", "rerank_cf", "prm"};
  return kinds;
}

inline std::unique_ptr<Recommender> make_recommender(const ModelConfig& cfg, const FeatureSpace& space,
                                                     const BehaviorSpec& spec, std::uint64_t seed) {
  cfg.policy.validate();
  const auto k = static_cast<std::size_t>(cfg.policy.slate_size);
  if (cfg.kind == "gfn_tb") {
    return std::make_unique<GFNRecommender>(cfg.policy, space, FlowObjective::trajectory_balance, cfg.bias, seed);
  }
  if (cfg.kind == "gfn_db") {
    return std::make_unique<GFNRecommender>(cfg.policy, space, FlowObjective::detailed_balance, cfg.bias, seed);
  }
  if (cfg.kind == "cf") return std::make_unique<CFRecommender>(cfg.policy.encoder, space, spec, k, seed);
  if (cfg.kind == "rerank_cf") {
    return std::make_unique<RerankCFRecommender>(cfg.policy.encoder, space, spec, k, cfg.rerank_m, seed);
  }
  if (cfg.kind == "prm") {
    return std::make_unique<PRMRecommender>(cfg.policy.encoder, space, spec, k, cfg.rerank_m, seed,
                                            cfg.prm_rank_positions);
  }
  throw ConfigError("unknown model kind '" + cfg.kind + "'");
}

}  // namespace gfn4rec
