#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gfn4rec/config.hpp"
#include "gfn4rec/harness.hpp"
#include "gfn4rec/models.hpp"
#include "gfn4rec/simulator.hpp"

namespace gfn4rec {

/// Typed view of a run configuration file. Every key is optional; defaults
/// follow the documented reference settings.
struct ExperimentSettings {
  ModelConfig model;
  OnlineConfig online;
  OfflineConfig offline;
  std::int64_t summary_window{100};
  std::string optimizer{"adam"};

  double rho{0.2};
  SimulatorTrainConfig simulator_train;

  std::string sweep_mode{"line"};  // line | grid
  int sweep_rounds{2};
  std::vector<std::string> sweep_order{"b_f", "b_r"};
  std::vector<std::pair<std::string, std::vector<double>>> sweep_axes;  // in search order; only listed grids
  std::vector<std::uint64_t> seeds{1};
};

namespace detail {

inline std::size_t get_size(const Config& c, const std::string& key, std::size_t fallback) {
  const auto v = c.get_int(key, static_cast<std::int64_t>(fallback));
  if (v < 0) throw ConfigError(key + " must be >= 0");
  return static_cast<std::size_t>(v);
}

inline int get_positive(const Config& c, const std::string& key, int fallback) {
  const auto v = c.get_int(key, fallback);
  if (v < 1) throw ConfigError(key + " must be >= 1");
  return static_cast<int>(v);
}

}  // namespace detail

/// Sweepable parameter names.
inline const std::vector<std::string>& sweep_parameters() {
  static const std::vector<std::string> names{"b_f", "b_r", "b_z", "learning_rate", "l2"};
  return names;
}

inline ExperimentSettings settings_from_config(const Config& c) {
  ExperimentSettings s;
  auto& enc = s.model.policy.encoder;
  s.model.kind = c.get("model.kind", s.model.kind);
  enc.embed_dim = detail::get_positive(c, "model.embed_dim", enc.embed_dim);
  enc.history_len = detail::get_positive(c, "model.history_len", enc.history_len);
  enc.n_heads = detail::get_positive(c, "model.n_heads", enc.n_heads);
  enc.n_layers = detail::get_positive(c, "model.n_layers", enc.n_layers);
  enc.state_dim = detail::get_positive(c, "model.state_dim", enc.state_dim);
  s.model.policy.slate_size = detail::get_positive(c, "model.slate_size", s.model.policy.slate_size);
  s.model.policy.head_hidden = detail::get_positive(c, "model.head_hidden", s.model.policy.head_hidden);
  s.model.rerank_m = detail::get_size(c, "model.rerank_m", s.model.rerank_m);
  s.model.prm_rank_positions = c.get_bool("model.prm_rank_positions", s.model.prm_rank_positions);
  s.model.bias.b_z = c.get_double("gfn.b_z", s.model.bias.b_z);
  s.model.bias.b_r = c.get_double("gfn.b_r", s.model.bias.b_r);
  s.model.bias.b_f = c.get_double("gfn.b_f", s.model.bias.b_f);
  s.model.bias.validate();
  s.model.policy.validate();

  s.optimizer = c.get("train.optimizer", s.optimizer);
  if (s.optimizer != "adam") throw ConfigError("unsupported optimizer '" + s.optimizer + "' (only adam)");
  nn::AdamConfig adam;
  adam.learning_rate = c.get_double("train.learning_rate", adam.learning_rate);
  adam.l2 = c.get_double("train.l2", adam.l2);
  if (!(adam.learning_rate > 0.0) || !(adam.l2 >= 0.0)) throw ConfigError("learning_rate must be > 0 and l2 >= 0");
  const auto seed = static_cast<std::uint64_t>(c.get_int("train.seed", 1));

  auto& on = s.online;
  on.adam = adam;
  on.seed = seed;
  on.episode_batch = detail::get_size(c, "train.episode_batch", on.episode_batch);
  on.warmup_episodes = detail::get_size(c, "train.warmup_episodes", on.warmup_episodes);
  on.training_steps = detail::get_size(c, "train.training_steps", on.training_steps);
  on.batch_size = detail::get_size(c, "train.batch_size", on.batch_size);
  on.eval_every = detail::get_size(c, "train.eval_every", on.eval_every);
  on.eval_batch = detail::get_size(c, "train.eval_batch", on.eval_batch);
  on.history_cap = static_cast<std::size_t>(enc.history_len);
  on.evaluate_random = c.get_bool("train.evaluate_random", on.evaluate_random);
  on.validate();

  s.offline = {.training_steps = on.training_steps,
               .batch_size = on.batch_size,
               .eval_every = on.eval_every,
               .eval_batch = on.eval_batch,
               .adam = adam,
               .seed = seed};
  s.summary_window = c.get_int("train.summary_window", s.summary_window);

  s.rho = c.get_double("simulator.rho", s.rho);
  s.simulator_train.epochs = detail::get_positive(c, "simulator.epochs", s.simulator_train.epochs);
  s.simulator_train.batch_size = detail::get_size(c, "simulator.batch_size", s.simulator_train.batch_size);
  s.simulator_train.adam.learning_rate = c.get_double("simulator.learning_rate", s.simulator_train.adam.learning_rate);
  s.simulator_train.seed = static_cast<std::uint64_t>(c.get_int("simulator.seed", 1));

  s.sweep_mode = c.get("sweep.mode", s.sweep_mode);
  if (s.sweep_mode != "line" && s.sweep_mode != "grid") throw ConfigError("sweep.mode must be line or grid");
  s.sweep_rounds = detail::get_positive(c, "sweep.rounds", s.sweep_rounds);
  s.sweep_order = c.get_strings("sweep.order", s.sweep_order);
  for (const auto& name : s.sweep_order) {
    if (std::find(sweep_parameters().begin(), sweep_parameters().end(), name) == sweep_parameters().end()) {
      throw ConfigError("unknown sweep parameter '" + name + "'");
    }
    const auto values = c.get_doubles("sweep." + name, {});
    if (!values.empty()) s.sweep_axes.emplace_back(name, values);
  }

  s.seeds.clear();
  for (double v : c.get_doubles("run.seeds", {static_cast<double>(seed)})) {
    if (v < 0 || v != std::floor(v)) throw ConfigError("run.seeds must be non-negative integers");
    s.seeds.push_back(static_cast<std::uint64_t>(v));
  }
  return s;
}

/// Sweep axes, requiring a grid for every parameter in sweep.order.
inline const std::vector<std::pair<std::string, std::vector<double>>>& require_sweep_axes(const ExperimentSettings& s) {
  if (s.sweep_order.empty()) throw ConfigError("sweep.order is empty");
  for (std::size_t i = 0; i < s.sweep_order.size(); ++i) {
    if (i >= s.sweep_axes.size() || s.sweep_axes[i].first != s.sweep_order[i]) {
      throw ConfigError("sweep." + s.sweep_order[i] + " lists no values");
    }
  }
  return s.sweep_axes;
}

/// Applies one sweep point to the settings.
inline ExperimentSettings with_point(ExperimentSettings s, const ParamPoint& p) {
  for (const auto& [name, v] : p) {
    if (name == "b_f") s.model.bias.b_f = v;
    else if (name == "b_r") s.model.bias.b_r = v;
    else if (name == "b_z") s.model.bias.b_z = v;
    else if (name == "learning_rate") s.online.adam.learning_rate = s.offline.adam.learning_rate = v;
    else if (name == "l2") s.online.adam.l2 = s.offline.adam.l2 = v;
    else throw ConfigError("unknown sweep parameter '" + name + "'");
  }
  s.model.bias.validate();
  return s;
}

/// Current values of the swept parameters.
inline ParamPoint current_point(const ExperimentSettings& s) {
  return {{"b_f", s.model.bias.b_f},
          {"b_r", s.model.bias.b_r},
          {"b_z", s.model.bias.b_z},
          {"learning_rate", s.online.adam.learning_rate},
          {"l2", s.online.adam.l2}};
}

/// Encoder dims shared by the simulator: it needs state_dim == embed_dim.
inline SimulatorConfig simulator_config(const ExperimentSettings& s, const BehaviorSpec& behaviors) {
  SimulatorConfig sc;
  sc.rho = s.rho;
  sc.seed = s.simulator_train.seed;
  sc.behaviors = behaviors;
  sc.encoder = s.model.policy.encoder;
  sc.encoder.state_dim = sc.encoder.embed_dim;
  return sc;
}

}  // namespace gfn4rec
