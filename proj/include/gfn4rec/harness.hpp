#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gfn4rec/checkpoint.hpp"
#include "gfn4rec/data.hpp"
#include "gfn4rec/metrics.hpp"
#include "gfn4rec/recommender.hpp"
#include "gfn4rec/simulator.hpp"

namespace gfn4rec {

namespace detail {

// Stream tags keep every random consumer of a run independent.
inline constexpr std::uint64_t kUserStream = 0x05e7;
inline constexpr std::uint64_t kGenerateStream = 0x6e11;
inline constexpr std::uint64_t kRespondStream = 0x7e5b;
inline constexpr std::uint64_t kBufferStream = 0xb0ff;
inline constexpr std::uint64_t kEvalUserStream = 0xe5e7;
inline constexpr std::uint64_t kEvalStream = 0xe7a1;
inline constexpr std::uint64_t kShuffleStream = 0x5f1e;

template <class T>
std::vector<const T*> pointers(const std::vector<T>& v) {
  std::vector<const T*> out;
  out.reserve(v.size());
  for (const auto& x : v) out.push_back(&x);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Evaluation

/// K distinct candidates drawn uniformly, in draw order.
inline Slate random_slate(const UserRequest& request, std::size_t k, Rng& rng) {
  std::vector<ItemId> pool = request.candidate_items();
  if (pool.size() < k) throw PreconditionError("fewer candidates than slate positions");
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
  pool.resize(k);
  return Slate{std::move(pool)};
}

/// Accuracy and diversity of given slates under the simulator. When `model`
/// is set, its position scores rank users for R-NDCG/R-MRR (online variant).
inline MetricsRecord score_slates(const std::vector<UserRequest>& requests, const std::vector<Slate>& slates,
                                  const UserSimulator& sim, std::uint64_t response_seed, std::int64_t step,
                                  std::string label, const Recommender* model) {
  const auto reqs = detail::pointers(requests);
  const auto sl = detail::pointers(slates);
  const auto responses = sim.respond_batch(reqs, sl, response_seed, 0);
  std::vector<double> rewards;
  for (const auto& r : responses) rewards.push_back(r.reward);
  const auto stats = batch_reward_stats(rewards);
  MetricsRecord rec;
  rec.step = step;
  rec.policy = std::move(label);
  rec.avg_r = stats.avg;
  rec.max_r = stats.max;
  rec.coverage = static_cast<double>(coverage(slates));
  if (!slates.empty() && slates.front().size() >= 2) {
    rec.ild = mean_ild(slates, [&sim](ItemId a, ItemId b) { return sim.similarity(a, b); });
  } else {
    rec.ild = std::numeric_limits<double>::quiet_NaN();
  }
  if (model) {
    const std::size_t k = slates.front().size();
    Matrix item_r(static_cast<ag::Index>(slates.size()), static_cast<ag::Index>(k));
    for (std::size_t r = 0; r < responses.size(); ++r) {
      const auto ir = item_rewards(responses[r].responses, sim.behaviors());
      for (std::size_t j = 0; j < k; ++j) item_r(static_cast<ag::Index>(r), static_cast<ag::Index>(j)) = ir[j];
    }
    const Matrix scores = model->position_scores(reqs, sl);
    rec.r_ndcg_online = r_ndcg(item_r, scores);
    rec.r_mrr_online = r_mrr(item_r, scores);
  }
  return rec;
}

/// Generates slates for `requests` and scores them. A pure function of the
/// parameters, the requests, `seed` and `step`.
inline MetricsRecord evaluate_online(const Recommender& model, const UserSimulator& sim,
                                     const std::vector<UserRequest>& requests, GenerationMode mode, std::uint64_t seed,
                                     std::int64_t step) {
  if (requests.empty()) throw PreconditionError("evaluation needs at least one request");
  const std::uint64_t mode_tag = mode == GenerationMode::greedy ? 0 : 1;
  Rng gen = make_rng(seed, {detail::kEvalStream, static_cast<std::uint64_t>(step), mode_tag});
  const auto reqs = detail::pointers(requests);
  const auto slates = model.recommend(reqs, mode, gen);
  const std::string label = model.kind() + (mode == GenerationMode::greedy ? "/greedy" : "/explore");
  return score_slates(requests, slates, sim, derive_seed(seed, {detail::kEvalStream, static_cast<std::uint64_t>(step), 2}),
                      step, label, &model);
}

/// The uniform-random policy on the same requests and response stream.
inline MetricsRecord evaluate_random(std::size_t k, const UserSimulator& sim, const std::vector<UserRequest>& requests,
                                     std::uint64_t seed, std::int64_t step) {
  if (requests.empty()) throw PreconditionError("evaluation needs at least one request");
  Rng gen = make_rng(seed, {detail::kEvalStream, static_cast<std::uint64_t>(step), 3});
  std::vector<Slate> slates;
  for (const auto& r : requests) slates.push_back(random_slate(r, k, gen));
  return score_slates(requests, slates, sim, derive_seed(seed, {detail::kEvalStream, static_cast<std::uint64_t>(step), 2}),
                      step, "random", nullptr);
}

/// Test-set R-NDCG/R-MRR: logged item rewards ranked by the model's position scores.
inline std::pair<double, double> evaluate_test(const Recommender& model, const std::vector<TrainingSample>& test,
                                               const BehaviorSpec& spec) {
  if (test.empty()) throw PreconditionError("test evaluation needs samples");
  std::vector<const UserRequest*> reqs;
  std::vector<const Slate*> slates;
  const std::size_t k = test.front().slate.size();
  Matrix item_r(static_cast<ag::Index>(test.size()), static_cast<ag::Index>(k));
  for (std::size_t r = 0; r < test.size(); ++r) {
    reqs.push_back(&test[r].request);
    slates.push_back(&test[r].slate);
    const auto ir = item_rewards(test[r].responses, spec);
    if (ir.size() != k) throw ShapeError("test slates differ in length");
    for (std::size_t j = 0; j < k; ++j) item_r(static_cast<ag::Index>(r), static_cast<ag::Index>(j)) = ir[j];
  }
  const Matrix scores = model.position_scores(reqs, slates);
  return {r_ndcg(item_r, scores), r_mrr(item_r, scores)};
}

// ---------------------------------------------------------------------------
// Run log

struct RunLog {
  std::string model;
  std::vector<MetricsRecord> records;
  std::vector<double> episode_rewards;  // mean list reward of each episode batch
  std::vector<double> losses;           // one per training step
  std::size_t warmup_episodes{0};
  std::size_t training_steps{0};
  std::size_t clamped_rewards{0};

  std::string to_jsonl() const {
    std::string out;
    for (const auto& r : records) out += to_json(r).dump() + "\n";
    return out;
  }
};

/// Mean of each metric over records with step in (last − window, last], per policy label.
inline nlohmann::json window_averages(const std::vector<MetricsRecord>& records, std::int64_t window) {
  nlohmann::json out = nlohmann::json::object();
  if (records.empty()) return out;
  std::int64_t last = 0;
  for (const auto& r : records) last = std::max(last, r.step);
  struct Acc {
    std::map<std::string, std::pair<double, std::size_t>> sums;
    std::size_t n{0};
    void add(const std::string& key, std::optional<double> v) {
      auto& [s, c] = sums[key];
      if (v && std::isfinite(*v)) {
        s += *v;
        ++c;
      }
    }
  };
  std::map<std::string, Acc> by_label;
  for (const auto& r : records) {
    if (r.step <= last - window) continue;
    auto& a = by_label[r.policy];
    ++a.n;
    a.add("avg_r", r.avg_r);
    a.add("max_r", r.max_r);
    a.add("coverage", r.coverage);
    a.add("ild", r.ild);
    a.add("r_ndcg_online", r.r_ndcg_online);
    a.add("r_mrr_online", r.r_mrr_online);
    a.add("r_ndcg_test", r.r_ndcg_test);
    a.add("r_mrr_test", r.r_mrr_test);
  }
  for (const auto& [label, a] : by_label) {
    nlohmann::json j{{"records", a.n}};
    for (const auto& [key, sc] : a.sums) {
      j[key] = sc.second ? nlohmann::json(sc.first / static_cast<double>(sc.second)) : nlohmann::json(nullptr);
    }
    out[label] = j;
  }
  return out;
}

inline nlohmann::json run_summary(const RunLog& log, std::int64_t window, const std::string& config_hash,
                                  const std::string& optimizer = "adam") {
  return {{"config_hash", config_hash},
          {"model", log.model},
          {"optimizer", optimizer},
          {"warmup_episodes", log.warmup_episodes},
          {"training_steps", log.training_steps},
          {"episodes", log.episode_rewards.size()},
          {"clamped_rewards", log.clamped_rewards},
          {"final_loss", log.losses.empty() ? nlohmann::json(nullptr) : nlohmann::json(log.losses.back())},
          {"summary_window", window},
          {"final", window_averages(log.records, window)}};
}

// ---------------------------------------------------------------------------
// Training

namespace detail {

inline void guarded_step(Recommender& model, nn::Adam& opt, std::span<const TrainingSample* const> batch,
                         std::int64_t step, RunLog& log) {
  LossDiagnostics diag;
  const Tensor loss = model.loss(batch, diag);
  const double value = loss.item();
  log.clamped_rewards += diag.clamped_rewards;
  if (!std::isfinite(value)) {
    nlohmann::json snap{{"step", step},
                        {"model", model.kind()},
                        {"loss", std::isnan(value) ? "nan" : "inf"},
                        {"batch_size", batch.size()},
                        {"clamped_rewards", diag.clamped_rewards},
                        {"previous_loss", log.losses.empty() ? nlohmann::json(nullptr) : nlohmann::json(log.losses.back())},
                        {"last_record", log.records.empty() ? nlohmann::json(nullptr) : to_json(log.records.back())}};
    throw DivergenceError("non-finite training loss at step " + std::to_string(step), snap.dump());
  }
  loss.backward();
  opt.step(model.parameters());
  log.losses.push_back(value);
}

}  // namespace detail

struct OnlineConfig {
  std::size_t episode_batch{128};    // requests per episode
  std::size_t warmup_episodes{100};  // episodes before the first training step
  std::size_t training_steps{5000};
  std::size_t batch_size{128};
  std::size_t eval_every{50};
  std::size_t eval_batch{128};
  std::size_t history_cap{50};  // entries kept per evolving user history
  bool evaluate_random{true};
  nn::AdamConfig adam{};
  std::uint64_t seed{0};

  void validate() const {
    if (episode_batch == 0 || batch_size == 0 || eval_batch == 0 || history_cap == 0) {
      throw ConfigError("online batch sizes must be positive");
    }
  }
};

struct OnlineHooks {
  /// Called with every training batch before the gradient step.
  std::function<void(std::int64_t step, const BufferBatch&, const ReplayBuffer&)> on_batch;
};

/// Latest request of each user, with that request's slate and responses
/// appended to its history. Users are ordered by id.
inline std::vector<UserRequest> user_pool_from_samples(const std::vector<TrainingSample>& samples, std::size_t history_cap) {
  std::map<UserId, const TrainingSample*> latest;
  for (const auto& s : samples) {
    auto& slot = latest[s.request.user_id];
    if (!slot || s.timestamp >= slot->timestamp) slot = &s;
  }
  std::vector<UserRequest> out;
  for (const auto& [_, s] : latest) {
    UserRequest r = s->request;
    for (std::size_t k = 0; k < s->slate.size(); ++k) r.history.push_back({s->slate.items[k], s->responses.column(k)});
    if (r.history.size() > history_cap) r.history.erase(r.history.begin(), r.history.end() - static_cast<std::ptrdiff_t>(history_cap));
    out.push_back(std::move(r));
  }
  if (out.empty()) throw DataError("user pool is empty");
  return out;
}

/// Fixed evaluation requests: `n` users drawn uniformly with replacement.
inline std::vector<UserRequest> draw_requests(const std::vector<UserRequest>& pool, std::size_t n, Rng& rng) {
  std::vector<UserRequest> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(pool[uniform_index(rng, pool.size())]);
  return out;
}

/// Online inference and training. Episodes sample users uniformly, generate
/// in explore mode, query the simulator, store the samples and append the
/// interactions to the user's history. After the warmup episodes, each step
/// runs one episode and one gradient step on a half-new/half-uniform batch.
inline RunLog run_online(Recommender& model, const UserSimulator& sim, std::vector<UserRequest> users,
                         const OnlineConfig& cfg, const OnlineHooks& hooks = {}) {
  cfg.validate();
  if (users.empty()) throw PreconditionError("online run needs a user pool");
  const std::size_t k = model.slate_size();
  RunLog log;
  log.model = model.kind();
  ReplayBuffer buffer(std::max<std::size_t>(1, cfg.warmup_episodes * cfg.episode_batch));
  nn::Adam opt(cfg.adam);
  Rng user_rng = make_rng(cfg.seed, {detail::kUserStream});
  Rng buffer_rng = make_rng(cfg.seed, {detail::kBufferStream});
  Rng eval_rng = make_rng(cfg.seed, {detail::kEvalUserStream});
  const auto eval_requests = draw_requests(users, cfg.eval_batch, eval_rng);

  auto episode = [&](std::uint64_t e) {
    std::vector<std::size_t> who(cfg.episode_batch);
    std::vector<UserRequest> reqs;
    for (auto& u : who) {
      u = uniform_index(user_rng, users.size());
      reqs.push_back(users[u]);
    }
    const auto rp = detail::pointers(reqs);
    Rng gen = make_rng(cfg.seed, {detail::kGenerateStream, e});
    const auto slates = model.recommend(rp, GenerationMode::explore, gen);
    const auto sp = detail::pointers(slates);
    const auto responses = sim.respond_batch(rp, sp, derive_seed(cfg.seed, {detail::kRespondStream}), e);
    double total = 0.0;
    for (std::size_t r = 0; r < reqs.size(); ++r) {
      auto& hist = users[who[r]].history;
      for (std::size_t j = 0; j < k; ++j) hist.push_back({slates[r].items[j], responses[r].responses.column(j)});
      if (hist.size() > cfg.history_cap) hist.erase(hist.begin(), hist.end() - static_cast<std::ptrdiff_t>(cfg.history_cap));
      total += responses[r].reward;
      buffer_add(buffer, TrainingSample{std::move(reqs[r]), slates[r], responses[r].reward, responses[r].responses,
                                        static_cast<std::int64_t>(e), static_cast<std::int64_t>(e)});
    }
    log.episode_rewards.push_back(total / static_cast<double>(cfg.episode_batch));
  };

  auto evaluate = [&](std::int64_t step) {
    log.records.push_back(evaluate_online(model, sim, eval_requests, GenerationMode::greedy, cfg.seed, step));
    log.records.push_back(evaluate_online(model, sim, eval_requests, GenerationMode::explore, cfg.seed, step));
    if (cfg.evaluate_random) log.records.push_back(evaluate_random(k, sim, eval_requests, cfg.seed, step));
  };

  std::uint64_t e = 0;
  for (; e < cfg.warmup_episodes; ++e) episode(e);
  log.warmup_episodes = cfg.warmup_episodes;
  if (cfg.eval_every > 0) evaluate(0);
  for (std::size_t step = 1; step <= cfg.training_steps; ++step, ++e) {
    episode(e);
    const BufferBatch batch = buffer.sample(cfg.batch_size, buffer_rng);
    if (hooks.on_batch) hooks.on_batch(static_cast<std::int64_t>(step), batch, buffer);
    detail::guarded_step(model, opt, buffer.resolve(batch), static_cast<std::int64_t>(step), log);
    ++log.training_steps;
    if (cfg.eval_every > 0 && (step % cfg.eval_every == 0 || step == cfg.training_steps)) {
      evaluate(static_cast<std::int64_t>(step));
    }
  }
  return log;
}

struct OfflineConfig {
  std::size_t training_steps{5000};
  std::size_t batch_size{128};
  std::size_t eval_every{50};
  std::size_t eval_batch{128};
  nn::AdamConfig adam{};
  std::uint64_t seed{0};
};

/// Offline training: the same gradient step as run_online over a shuffled
/// epoch iterator of logged samples. Each evaluation records test-set
/// R-NDCG/R-MRR under "<kind>/test" and, with a simulator, greedy and explore
/// online metrics on requests drawn from the test users.
inline RunLog run_offline(Recommender& model, const std::vector<TrainingSample>& train,
                          const std::vector<TrainingSample>& test, const BehaviorSpec& spec, const OfflineConfig& cfg,
                          const UserSimulator* sim = nullptr) {
  if (train.empty()) throw PreconditionError("offline run needs training samples");
  if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");
  RunLog log;
  log.model = model.kind();
  nn::Adam opt(cfg.adam);
  Rng shuffle = make_rng(cfg.seed, {detail::kShuffleStream});
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();

  std::vector<UserRequest> eval_requests;
  if (sim && !test.empty()) {
    std::vector<UserRequest> pool;
    for (const auto& s : test) pool.push_back(s.request);
    Rng eval_rng = make_rng(cfg.seed, {detail::kEvalUserStream});
    eval_requests = draw_requests(pool, cfg.eval_batch, eval_rng);
  }

  auto evaluate = [&](std::int64_t step) {
    if (!test.empty()) {
      MetricsRecord rec;
      rec.step = step;
      rec.policy = model.kind() + "/test";
      rec.avg_r = rec.max_r = rec.coverage = rec.ild = std::numeric_limits<double>::quiet_NaN();
      const auto [nd, mrr] = evaluate_test(model, test, spec);
      rec.r_ndcg_test = nd;
      rec.r_mrr_test = mrr;
      log.records.push_back(rec);
    }
    if (!eval_requests.empty()) {
      log.records.push_back(evaluate_online(model, *sim, eval_requests, GenerationMode::greedy, cfg.seed, step));
      log.records.push_back(evaluate_online(model, *sim, eval_requests, GenerationMode::explore, cfg.seed, step));
    }
  };

  if (cfg.eval_every > 0) evaluate(0);
  for (std::size_t step = 1; step <= cfg.training_steps; ++step) {
    if (cursor >= order.size()) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(shuffle, i)]);
      cursor = 0;
    }
    const std::size_t end = std::min(order.size(), cursor + cfg.batch_size);
    std::vector<const TrainingSample*> batch;
    for (; cursor < end; ++cursor) batch.push_back(&train[order[cursor]]);
    detail::guarded_step(model, opt, batch, static_cast<std::int64_t>(step), log);
    ++log.training_steps;
    if (cfg.eval_every > 0 && (step % cfg.eval_every == 0 || step == cfg.training_steps)) {
      evaluate(static_cast<std::int64_t>(step));
    }
  }
  return log;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline void save_model(const std::filesystem::path& path, const Recommender& model, CheckpointMeta meta = {}) {
  meta["model"] = model.kind();
  save_checkpoint(path, model.parameters(), meta);
}

/// Loads parameters saved by save_model into an identically configured model.
inline CheckpointMeta load_model(const std::filesystem::path& path, Recommender& model) {
  const auto blob = load_checkpoint(path);
  const auto it = blob.meta.find("model");
  if (it == blob.meta.end() || it->second != model.kind()) {
    throw ConfigError("checkpoint holds a different model than '" + model.kind() + "'");
  }
  load_into(model.parameters(), blob);
  return blob.meta;
}

// ---------------------------------------------------------------------------
// Sweeps

using ParamPoint = std::map<std::string, double>;
using SweepObjective = std::function<double(const ParamPoint&)>;

struct SweepRow {
  int round{0};          // 0 for grid sweeps
  std::string searched;  // parameter varied in this row; empty for grid sweeps
  ParamPoint point;
  double score{0.0};
};

struct SweepResult {
  ParamPoint best;
  double best_score{-std::numeric_limits<double>::infinity()};
  std::vector<SweepRow> table;
};

namespace detail {

// NaN never wins; ties keep the earlier row.
inline bool better(double a, double b) { return !std::isnan(a) && (std::isnan(b) || a > b); }

inline void select_argmax(SweepResult& r) {
  if (r.table.empty()) throw PreconditionError("sweep produced no runs");
  std::size_t arg = 0;
  for (std::size_t i = 1; i < r.table.size(); ++i)
    if (better(r.table[i].score, r.table[arg].score)) arg = i;
  r.best = r.table[arg].point;
  r.best_score = r.table[arg].score;
}

}  // namespace detail

/// Full Cartesian product, first key varying slowest. Returns the table argmax.
inline SweepResult grid_sweep(const std::map<std::string, std::vector<double>>& grid, const SweepObjective& run) {
  for (const auto& [name, values] : grid)
    if (values.empty()) throw ConfigError("empty grid for " + name);
  SweepResult out;
  std::vector<std::pair<std::string, const std::vector<double>*>> axes;
  for (const auto& [name, values] : grid) axes.emplace_back(name, &values);
  std::vector<std::size_t> idx(axes.size(), 0);
  while (true) {
    ParamPoint p;
    for (std::size_t a = 0; a < axes.size(); ++a) p[axes[a].first] = (*axes[a].second)[idx[a]];
    out.table.push_back({0, "", p, run(p)});
    std::size_t a = axes.size();
    while (a > 0) {
      --a;
      if (++idx[a] < axes[a].second->size()) break;
      idx[a] = 0;
      if (a == 0) {
        detail::select_argmax(out);
        return out;
      }
    }
    if (axes.empty()) {
      detail::select_argmax(out);
      return out;
    }
  }
}

/// Alternating line search: each round searches the parameters in `order`,
/// one at a time, holding every other parameter at its current value, then
/// fixes the searched parameter at its best value before moving on.
struct LineSearchSpec {
  std::vector<std::pair<std::string, std::vector<double>>> order;  // e.g. {b_f, grid}, {b_r, grid}
  ParamPoint start;  // initial values; a missing entry starts at its grid's first value
  int rounds{2};
};

inline SweepResult line_search(const LineSearchSpec& spec, const SweepObjective& run) {
  if (spec.order.empty() || spec.rounds < 1) throw ConfigError("line search needs parameters and rounds");
  ParamPoint current = spec.start;
  for (const auto& [name, values] : spec.order) {
    if (values.empty()) throw ConfigError("empty grid for " + name);
    if (!current.count(name)) current[name] = values.front();
  }
  SweepResult out;
  for (int round = 1; round <= spec.rounds; ++round) {
    for (const auto& [name, values] : spec.order) {
      double best_value = values.front();
      double best_score = std::numeric_limits<double>::quiet_NaN();
      for (double v : values) {
        ParamPoint p = current;
        p[name] = v;
        const double s = run(p);
        out.table.push_back({round, name, p, s});
        if (detail::better(s, best_score)) {
          best_score = s;
          best_value = v;
        }
      }
      current[name] = best_value;
    }
  }
  detail::select_argmax(out);
  return out;
}

inline nlohmann::json to_json(const SweepResult& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.table) {
    rows.push_back({{"round", row.round},
                    {"searched", row.searched},
                    {"point", row.point},
                    {"score", std::isfinite(row.score) ? nlohmann::json(row.score) : nlohmann::json(nullptr)}});
  }
  return {{"best", r.best},
          {"best_score", std::isfinite(r.best_score) ? nlohmann::json(r.best_score) : nlohmann::json(nullptr)},
          {"table", rows}};
}

/// Plain-text table: one block per searched parameter (and round), value -> score.
inline std::string format_sweep_table(const SweepResult& r) {
  std::ostringstream out;
  out.precision(6);
  std::string block;
  for (const auto& row : r.table) {
    const std::string head = row.searched.empty() ? "grid" : "round " + std::to_string(row.round) + ": " + row.searched;
    if (head != block) {
      out << (block.empty() ? "" : "\n") << head << "\n";
      block = head;
    }
    out << " ";
    for (const auto& [k, v] : row.point) out << " " << k << "=" << v;
    out << "  score=" << row.score << "\n";
  }
  out << "\nbest:";
  for (const auto& [k, v] : r.best) out << " " << k << "=" << v;
  out << "  score=" << r.best_score << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Multi-seed runner

struct SeedAggregate {
  std::vector<std::uint64_t> seeds;
  std::map<std::string, std::vector<double>> values;  // per metric, one entry per seed
  std::map<std::string, double> mean;
  std::map<std::string, double> stddev;  // sample standard deviation; 0 for a single seed
};

/// Runs `fn` once per seed, in order, and aggregates every metric it reports.
inline SeedAggregate run_seeds(const std::vector<std::uint64_t>& seeds,
                               const std::function<std::map<std::string, double>(std::uint64_t)>& fn) {
  if (seeds.empty()) throw ConfigError("seed list is empty");
  SeedAggregate agg;
  agg.seeds = seeds;
  for (auto s : seeds) {
    for (const auto& [k, v] : fn(s)) agg.values[k].push_back(v);
  }
  for (const auto& [k, v] : agg.values) {
    if (v.size() != seeds.size()) throw PreconditionError("metric " + k + " was not reported by every seed");
    const double n = static_cast<double>(v.size());
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    agg.mean[k] = m;
    agg.stddev[k] = v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  }
  return agg;
}

inline nlohmann::json to_json(const SeedAggregate& a) {
  nlohmann::json j{{"seeds", a.seeds}};
  for (const auto& [k, m] : a.mean) j["metrics"][k] = {{"mean", m}, {"stddev", a.stddev.at(k)}, {"values", a.values.at(k)}};
  return j;
}

}  // namespace gfn4rec
