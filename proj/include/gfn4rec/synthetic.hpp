#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gfn4rec/data.hpp"
#include "gfn4rec/rng.hpp"
#include "gfn4rec/simulator.hpp"

namespace gfn4rec {

/// Ground-truth response model for synthetic corpora:
/// logit(u, i, b) = quality_scale·q_i + preference_scale·<p_u, v_i> + offset_b.
struct PlantedWorldConfig {
  int n_users{20};
  int n_items{50};
  int latent_dim{4};
  std::vector<std::string> behaviors{"click", "like"};
  double quality_scale{2.0};
  double preference_scale{1.0};
  double behavior_offset_step{-1.0};  // offset_b = b * step
  double base_offset{-0.5};
  std::uint64_t seed{0};
};

struct PlantedWorld {
  PlantedWorldConfig cfg;
  Matrix users;                // (n_users + 1) x d, row 0 unused
  Matrix items;                // (n_items + 1) x d, row 0 unused
  Eigen::VectorXd quality;     // n_items + 1

  double logit(UserId u, ItemId i, std::size_t b) const {
    return cfg.quality_scale * quality(i) + cfg.preference_scale * users.row(u).dot(items.row(i)) + cfg.base_offset +
           cfg.behavior_offset_step * static_cast<double>(b);
  }
};

inline PlantedWorld make_planted_world(const PlantedWorldConfig& cfg) {
  if (cfg.n_users < 1 || cfg.n_items < 1 || cfg.latent_dim < 1 || cfg.behaviors.empty()) {
    throw ConfigError("planted world dimensions must be positive");
  }
  Rng rng = make_rng(cfg.seed, {0x91a7});
  PlantedWorld w{cfg, Matrix::Zero(cfg.n_users + 1, cfg.latent_dim), Matrix::Zero(cfg.n_items + 1, cfg.latent_dim),
                 Eigen::VectorXd::Zero(cfg.n_items + 1)};
  const double s = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim));
  for (int u = 1; u <= cfg.n_users; ++u)
    for (int j = 0; j < cfg.latent_dim; ++j) w.users(u, j) = standard_normal(rng) * s;
  for (int i = 1; i <= cfg.n_items; ++i) {
    w.quality(i) = standard_normal(rng);
    for (int j = 0; j < cfg.latent_dim; ++j) w.items(i, j) = standard_normal(rng) * s;
  }
  return w;
}

/// Each user is exposed to `rows_per_user` uniformly drawn items in time
/// order. Responses are Bernoulli draws of the planted probabilities, or the
/// sign of the planted logit when `deterministic`.
inline InteractionLog sample_planted_log(const PlantedWorld& w, int rows_per_user, bool deterministic, Rng& rng) {
  InteractionLog log{w.cfg.behaviors, {}};
  std::int64_t t = 0;
  for (int u = 1; u <= w.cfg.n_users; ++u) {
    for (int r = 0; r < rows_per_user; ++r) {
      Interaction row;
      row.user = u;
      row.item = 1 + static_cast<ItemId>(uniform_index(rng, static_cast<std::size_t>(w.cfg.n_items)));
      row.timestamp = t++;
      for (std::size_t b = 0; b < w.cfg.behaviors.size(); ++b) {
        const double l = w.logit(u, row.item, b);
        const bool y = deterministic ? l > 0.0 : uniform01(rng) < sigmoid(l);
        row.response.push_back(y ? 1 : 0);
      }
      log.rows.push_back(std::move(row));
    }
  }
  return log;
}

/// Feature space with id-only items and a per-user profile token.
inline FeatureSpace id_feature_space(int n_users, int n_items, int n_behaviors) {
  FeatureSpace s;
  s.items = ItemCatalog::ids_only(n_items);
  s.profile_vocab = n_users + 1;
  s.n_behaviors = n_behaviors;
  return s;
}

}  // namespace gfn4rec
