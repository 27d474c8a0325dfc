#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gfn4rec/autograd.hpp"
#include "gfn4rec/domain.hpp"
#include "gfn4rec/errors.hpp"

namespace gfn4rec {

using ag::Matrix;

struct RewardStats {
  double avg{0.0};
  double max{0.0};
};

inline RewardStats batch_reward_stats(std::span<const double> rewards) {
  if (rewards.empty()) throw PreconditionError("reward stats of an empty batch");
  RewardStats s{0.0, -std::numeric_limits<double>::infinity()};
  for (double r : rewards) {
    s.avg += r;
    s.max = std::max(s.max, r);
  }
  s.avg /= static_cast<double>(rewards.size());
  return s;
}

/// Number of distinct items across the slates.
inline std::size_t coverage(std::span<const Slate> slates) {
  std::set<ItemId> seen;
  for (const auto& s : slates) seen.insert(s.items.begin(), s.items.end());
  return seen.size();
}

using ItemSimilarity = std::function<double(ItemId, ItemId)>;

/// Mean pairwise dissimilarity 1 − sim over ordered pairs i != j.
inline double ild(const Slate& slate, const ItemSimilarity& sim) {
  const std::size_t k = slate.size();
  if (k < 2) throw PreconditionError("ILD needs at least two items");
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) total += 2.0 * (1.0 - sim(slate.items[i], slate.items[j]));
  return total / static_cast<double>(k * (k - 1));
}

inline double mean_ild(std::span<const Slate> slates, const ItemSimilarity& sim) {
  if (slates.empty()) throw PreconditionError("ILD of an empty batch");
  double total = 0.0;
  for (const auto& s : slates) total += ild(s, sim);
  return total / static_cast<double>(slates.size());
}

/// 1-based rank of each entry when sorted by descending score; ties keep index order.
inline std::vector<std::size_t> descending_ranks(const Eigen::VectorXd& scores) {
  std::vector<std::size_t> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores(static_cast<ag::Index>(a)) > scores(static_cast<ag::Index>(b));
  });
  std::vector<std::size_t> rank(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r + 1;
  return rank;
}

struct RankMetric {
  double value{std::numeric_limits<double>::quiet_NaN()};
  std::size_t skipped_positions{0};
};

namespace detail {

inline void check_rank_inputs(const Matrix& rewards, const Matrix& scores) {
  if (rewards.rows() == 0 || rewards.cols() == 0) throw PreconditionError("ranking metrics need a nonempty batch");
  if (rewards.rows() != scores.rows() || rewards.cols() != scores.cols()) throw ShapeError("rewards and scores differ in shape");
}

}  // namespace detail

/// Reward-weighted NDCG. rewards and scores are N users x K positions; at each
/// position users are ranked by score and the DCG Σ R·2^{1−rank} is divided by
/// the DCG of the rewards sorted descending. Positions whose ideal DCG is not
/// positive are skipped; the result is the mean over the remaining positions.
inline RankMetric r_ndcg_detail(const Matrix& rewards, const Matrix& scores) {
  detail::check_rank_inputs(rewards, scores);
  RankMetric out;
  double total = 0.0;
  std::size_t used = 0;
  for (ag::Index k = 0; k < rewards.cols(); ++k) {
    const auto rank = descending_ranks(scores.col(k));
    std::vector<double> ideal(rewards.col(k).data(), rewards.col(k).data() + rewards.rows());
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    double dcg = 0.0, idcg = 0.0;
    for (ag::Index u = 0; u < rewards.rows(); ++u) {
      dcg += rewards(u, k) * std::exp2(1.0 - static_cast<double>(rank[static_cast<std::size_t>(u)]));
      idcg += ideal[static_cast<std::size_t>(u)] * std::exp2(-static_cast<double>(u));
    }
    if (!(idcg > 0.0)) {
      ++out.skipped_positions;
      continue;
    }
    total += dcg / idcg;
    ++used;
  }
  if (used > 0) out.value = total / static_cast<double>(used);
  return out;
}

/// Reward-weighted MRR: per position Σ R/rank divided by the batch size, averaged over positions.
inline RankMetric r_mrr_detail(const Matrix& rewards, const Matrix& scores) {
  detail::check_rank_inputs(rewards, scores);
  double total = 0.0;
  for (ag::Index k = 0; k < rewards.cols(); ++k) {
    const auto rank = descending_ranks(scores.col(k));
    double s = 0.0;
    for (ag::Index u = 0; u < rewards.rows(); ++u) s += rewards(u, k) / static_cast<double>(rank[static_cast<std::size_t>(u)]);
    total += s / static_cast<double>(rewards.rows());
  }
  return {total / static_cast<double>(rewards.cols()), 0};
}

inline double r_ndcg(const Matrix& rewards, const Matrix& scores) { return r_ndcg_detail(rewards, scores).value; }
inline double r_mrr(const Matrix& rewards, const Matrix& scores) { return r_mrr_detail(rewards, scores).value; }

/// One evaluation record of the run log. Fields that do not apply are NaN or
/// empty and serialize as null.
struct MetricsRecord {
  std::int64_t step{0};
  std::string policy;
  double avg_r{0.0};
  double max_r{0.0};
  double coverage{0.0};
  double ild{0.0};
  std::optional<double> r_ndcg_online{};
  std::optional<double> r_mrr_online{};
  std::optional<double> r_ndcg_test{};
  std::optional<double> r_mrr_test{};

  bool operator==(const MetricsRecord&) const = default;
};

namespace detail {

inline nlohmann::json optional_number(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

inline std::optional<double> read_optional(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace detail

inline nlohmann::json to_json(const MetricsRecord& r) {
  return {{"step", r.step},
          {"policy", r.policy},
          {"avg_r", detail::optional_number(r.avg_r)},
          {"max_r", detail::optional_number(r.max_r)},
          {"coverage", detail::optional_number(r.coverage)},
          {"ild", detail::optional_number(r.ild)},
          {"r_ndcg_online", detail::optional_number(r.r_ndcg_online)},
          {"r_mrr_online", detail::optional_number(r.r_mrr_online)},
          {"r_ndcg_test", detail::optional_number(r.r_ndcg_test)},
          {"r_mrr_test", detail::optional_number(r.r_mrr_test)}};
}

inline MetricsRecord metrics_from_json(const nlohmann::json& j) {
  MetricsRecord r;
  r.step = j.at("step").get<std::int64_t>();
  r.policy = j.at("policy").get<std::string>();
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  r.avg_r = detail::read_optional(j, "avg_r").value_or(nan);
  r.max_r = detail::read_optional(j, "max_r").value_or(nan);
  r.coverage = detail::read_optional(j, "coverage").value_or(nan);
  r.ild = detail::read_optional(j, "ild").value_or(nan);
  r.r_ndcg_online = detail::read_optional(j, "r_ndcg_online");
  r.r_mrr_online = detail::read_optional(j, "r_mrr_online");
  r.r_ndcg_test = detail::read_optional(j, "r_ndcg_test");
  r.r_mrr_test = detail::read_optional(j, "r_mrr_test");
  return r;
}

}  // namespace gfn4rec
