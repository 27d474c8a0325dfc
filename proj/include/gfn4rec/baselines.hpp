#pragma once

#include <algorithm>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "gfn4rec/encoder.hpp"
#include "gfn4rec/objectives.hpp"
#include "gfn4rec/recommender.hpp"

namespace gfn4rec {

/// Candidates sorted by descending score, ties by ascending id. `scores` is
/// indexed by item id - 1.
inline std::vector<ItemId> rank_by_score(const std::vector<ItemId>& candidates, const Eigen::RowVectorXd& scores) {
  std::vector<ItemId> out = candidates;
  std::stable_sort(out.begin(), out.end(), [&](ItemId a, ItemId b) {
    const double sa = scores(a - 1), sb = scores(b - 1);
    return sa > sb || (sa == sb && a < b);
  });
  return out;
}

/// Scaled per-position item rewards of each sample as rbce labels (N*K x 1,
/// sample-major).
inline Matrix rbce_labels(std::span<const TrainingSample* const> batch, const BehaviorSpec& spec) {
  const auto [lo, hi] = spec.reward_range();
  std::vector<double> labels;
  for (const auto* s : batch) {
    for (double r : item_rewards(s->responses, spec)) labels.push_back(scale_reward(r, lo, hi));
  }
  Matrix out(static_cast<ag::Index>(labels.size()), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) out(static_cast<ag::Index>(i), 0) = labels[i];
  return out;
}

/// Request encoder + item kernel scoring items by dot(s_u, e_i).
class CFScorer {
 public:
  CFScorer(nn::ParameterStore& store, const std::string& name, const EncoderConfig& cfg, const FeatureSpace& space,
           Rng& rng)
      : kernel_(store, name + ".item_kernel", space.items, cfg.embed_dim, rng),
        encoder_(store, name + ".encoder", cfg, space, kernel_, rng) {
    if (cfg.state_dim != cfg.embed_dim) throw ConfigError("dot-product scoring requires state_dim == embed_dim");
  }
  CFScorer(const CFScorer&) = delete;
  CFScorer& operator=(const CFScorer&) = delete;

  const ItemKernel& item_kernel() const { return kernel_; }
  Tensor states(std::span<const UserRequest* const> requests) const { return encoder_.encode(requests); }
  Tensor items() const { return kernel_.encode_all(); }

  /// N x |I| score matrix.
  Tensor all_scores(std::span<const UserRequest* const> requests) const {
    return ag::matmul_nt(states(requests), items());
  }

  /// Scores of listed items per request: rows are (request, position) pairs, request-major.
  Tensor listed_scores(const Tensor& states, const Tensor& items, const std::vector<std::vector<ItemId>>& lists) const {
    std::vector<ag::Index> state_rows, item_rows;
    for (std::size_t r = 0; r < lists.size(); ++r) {
      for (ItemId i : lists[r]) {
        state_rows.push_back(static_cast<ag::Index>(r));
        item_rows.push_back(i - 1);
      }
    }
    return ag::row_sum(ag::mul(ag::gather_rows(states, std::move(state_rows)), ag::gather_rows(items, std::move(item_rows))));
  }

  /// Full descending ranking of each request's candidates.
  std::vector<std::vector<ItemId>> rank(std::span<const UserRequest* const> requests) const {
    ag::NoGradGuard guard;
    const Tensor s = all_scores(requests);
    std::vector<std::vector<ItemId>> out;
    for (std::size_t r = 0; r < requests.size(); ++r) {
      out.push_back(rank_by_score(requests[r]->candidate_items(), s.value().row(static_cast<ag::Index>(r))));
    }
    return out;
  }

 private:
  ItemKernel kernel_;
  RequestEncoder encoder_;
};

namespace detail {

inline void require_candidates(std::span<const UserRequest* const> requests, std::size_t k) {
  for (const auto* r : requests) {
    if (r->candidate_items().size() < k) throw PreconditionError("fewer candidates than the slate size");
  }
}

inline std::vector<std::vector<ItemId>> slate_lists(std::span<const TrainingSample* const> batch) {
  std::vector<std::vector<ItemId>> out;
  for (const auto* s : batch) out.push_back(s->slate.items);
  return out;
}

inline Matrix reshape_rows(const Matrix& flat, ag::Index n, ag::Index k) {
  Matrix out(n, k);
  for (ag::Index r = 0; r < n; ++r)
    for (ag::Index c = 0; c < k; ++c) out(r, c) = flat(r * k + c, 0);
  return out;
}

}  // namespace detail

/// Pointwise CF: top-K of dot(s_u, e_i), trained with rbce on slate items.
class CFRecommender final : public Recommender {
 public:
  CFRecommender(const EncoderConfig& cfg, const FeatureSpace& space, const BehaviorSpec& spec, std::size_t k,
                std::uint64_t seed)
      : rng_(make_rng(seed, {0xcf})), spec_(spec), k_(k), scorer_(params_, "cf", cfg, space, rng_) {
    if (k_ < 1) throw ConfigError("slate size K must be >= 1");
  }

  std::string kind() const override { return "cf"; }
  std::size_t slate_size() const override { return k_; }
  const CFScorer& scorer() const { return scorer_; }

  std::vector<ItemId> cf_rank(const UserRequest& request) const {
    const UserRequest* p = &request;
    return scorer_.rank(std::span<const UserRequest* const>(&p, 1)).front();
  }

  std::vector<Slate> recommend(std::span<const UserRequest* const> requests, GenerationMode, Rng&) const override {
    detail::require_candidates(requests, k_);
    std::vector<Slate> out;
    for (auto& ranked : scorer_.rank(requests)) {
      ranked.resize(k_);
      out.push_back(Slate{std::move(ranked)});
    }
    return out;
  }

  Matrix position_scores(std::span<const UserRequest* const> requests,
                         std::span<const Slate* const> slates) const override {
    ag::NoGradGuard guard;
    std::vector<std::vector<ItemId>> lists;
    for (const auto* s : slates) lists.push_back(s->items);
    const Tensor s = scorer_.listed_scores(scorer_.states(requests), scorer_.items(), lists);
    return detail::reshape_rows(s.value(), static_cast<ag::Index>(requests.size()), static_cast<ag::Index>(k_));
  }

  Tensor loss(std::span<const TrainingSample* const> batch, LossDiagnostics& diag) const override {
    diag.samples += batch.size();
    const auto reqs = detail::requests_of(batch);
    const Tensor s = scorer_.listed_scores(scorer_.states(reqs), scorer_.items(), detail::slate_lists(batch));
    return rbce_loss(ag::sigmoid(s), rbce_labels(batch, spec_));
  }

  nn::ParameterStore& parameters() override { return params_; }
  const nn::ParameterStore& parameters() const override { return params_; }

 private:
  Rng rng_;
  BehaviorSpec spec_;
  std::size_t k_;
  nn::ParameterStore params_;
  CFScorer scorer_;
};

/// CF initial ranker keeps the top-m candidates; a second, separately
/// parameterized CF scorer picks the top-K of those deterministically.
class RerankCFRecommender final : public Recommender {
 public:
  RerankCFRecommender(const EncoderConfig& cfg, const FeatureSpace& space, const BehaviorSpec& spec, std::size_t k,
                      std::size_t m, std::uint64_t seed)
      : rng_(make_rng(seed, {0x2cf})), spec_(spec), k_(k), m_(m == 0 ? 4 * k : m),
        initial_(params_, "rerank_cf.initial", cfg, space, rng_), reranker_(params_, "rerank_cf.reranker", cfg, space, rng_) {
    if (k_ < 1) throw ConfigError("slate size K must be >= 1");
    if (m_ < k_) throw ConfigError("rerank candidate count m must be >= K");
  }

  std::string kind() const override { return "rerank_cf"; }
  std::size_t slate_size() const override { return k_; }
  std::size_t rerank_size() const { return m_; }
  const CFScorer& initial() const { return initial_; }
  const CFScorer& reranker() const { return reranker_; }

  std::vector<Slate> recommend(std::span<const UserRequest* const> requests, GenerationMode, Rng&) const override {
    detail::require_candidates(requests, k_);
    ag::NoGradGuard guard;
    const auto first = initial_.rank(requests);
    const Tensor s = reranker_.all_scores(requests);
    std::vector<Slate> out;
    for (std::size_t r = 0; r < requests.size(); ++r) {
      std::vector<ItemId> shortlist(first[r].begin(), first[r].begin() + static_cast<std::ptrdiff_t>(std::min(m_, first[r].size())));
      auto ranked = rank_by_score(shortlist, s.value().row(static_cast<ag::Index>(r)));
      ranked.resize(k_);
      out.push_back(Slate{std::move(ranked)});
    }
    return out;
  }

  Matrix position_scores(std::span<const UserRequest* const> requests,
                         std::span<const Slate* const> slates) const override {
    ag::NoGradGuard guard;
    std::vector<std::vector<ItemId>> lists;
    for (const auto* s : slates) lists.push_back(s->items);
    const Tensor s = reranker_.listed_scores(reranker_.states(requests), reranker_.items(), lists);
    return detail::reshape_rows(s.value(), static_cast<ag::Index>(requests.size()), static_cast<ag::Index>(k_));
  }

  /// Both stages fit the same rbce targets.
  Tensor loss(std::span<const TrainingSample* const> batch, LossDiagnostics& diag) const override {
    diag.samples += batch.size();
    const auto reqs = detail::requests_of(batch);
    const auto lists = detail::slate_lists(batch);
    const Matrix labels = rbce_labels(batch, spec_);
    const Tensor a = initial_.listed_scores(initial_.states(reqs), initial_.items(), lists);
    const Tensor b = reranker_.listed_scores(reranker_.states(reqs), reranker_.items(), lists);
    return ag::add(rbce_loss(ag::sigmoid(a), labels), rbce_loss(ag::sigmoid(b), labels));
  }

  nn::ParameterStore& parameters() override { return params_; }
  const nn::ParameterStore& parameters() const override { return params_; }

 private:
  Rng rng_;
  BehaviorSpec spec_;
  std::size_t k_;
  std::size_t m_;
  nn::ParameterStore params_;
  CFScorer initial_;
  CFScorer reranker_;
};

/// CF initial ranker followed by a transformer that re-scores the top-m
/// candidates jointly. Each token is a projection of [e_j ; s_u] plus an
/// embedding of the candidate's initial rank; one pre-norm attention block
/// and a linear head give the refined score.
class PRMRecommender final : public Recommender {
 public:
  PRMRecommender(const EncoderConfig& cfg, const FeatureSpace& space, const BehaviorSpec& spec, std::size_t k,
                 std::size_t m, std::uint64_t seed, bool rank_positions = true)
      : rng_(make_rng(seed, {0x9a3})), spec_(spec), k_(k), m_(m == 0 ? 4 * k : m), rank_positions_(rank_positions),
        n_heads_(cfg.n_heads), initial_(params_, "prm.initial", cfg, space, rng_) {
    if (k_ < 1) throw ConfigError("slate size K must be >= 1");
    if (m_ < k_) throw ConfigError("rerank candidate count m must be >= K");
    const int d = cfg.embed_dim;
    token_ = nn::Linear(params_, "prm.token", d + cfg.state_dim, d, rng_);
    positions_ = params_.add("prm.rank_position", nn::random_normal(static_cast<ag::Index>(m_), d, 0.1, rng_));
    ln_attn_ = nn::LayerNorm(params_, "prm.ln_attn", d);
    wq_ = nn::Linear(params_, "prm.attn.wq", d, d, rng_, false);
    wk_ = nn::Linear(params_, "prm.attn.wk", d, d, rng_, false);
    wv_ = nn::Linear(params_, "prm.attn.wv", d, d, rng_, false);
    wo_ = nn::Linear(params_, "prm.attn.wo", d, d, rng_);
    ln_ffn_ = nn::LayerNorm(params_, "prm.ln_ffn", d);
    ff1_ = nn::Linear(params_, "prm.ffn.in", d, 2 * d, rng_);
    ff2_ = nn::Linear(params_, "prm.ffn.out", 2 * d, d, rng_);
    head_ = nn::Linear(params_, "prm.head", d, 1, rng_);
  }

  std::string kind() const override { return "prm"; }
  std::size_t slate_size() const override { return k_; }
  std::size_t rerank_size() const { return m_; }
  const CFScorer& initial() const { return initial_; }
  void set_rank_positions(bool on) { rank_positions_ = on; }

  /// Refined scores of equal-length candidate lists (slot j = initial rank j):
  /// N*len x 1, request-major.
  Tensor rerank_scores(std::span<const UserRequest* const> requests,
                       const std::vector<std::vector<ItemId>>& lists) const {
    if (lists.size() != requests.size() || lists.empty()) throw ShapeError("one candidate list per request");
    const std::size_t len = lists.front().size();
    if (len == 0 || len > m_) throw ShapeError("candidate list length must be in [1, m]");
    std::vector<ag::Index> state_rows, item_rows, pos_rows;
    for (std::size_t r = 0; r < lists.size(); ++r) {
      if (lists[r].size() != len) throw ShapeError("candidate lists must have equal length");
      for (std::size_t j = 0; j < len; ++j) {
        state_rows.push_back(static_cast<ag::Index>(r));
        item_rows.push_back(lists[r][j] - 1);
        pos_rows.push_back(static_cast<ag::Index>(j));
      }
    }
    const Tensor states = initial_.states(requests);
    Tensor x = token_(ag::concat_cols(ag::gather_rows(initial_.items(), std::move(item_rows)),
                                      ag::gather_rows(states, std::move(state_rows))));
    if (rank_positions_) x = ag::add(x, ag::gather_rows(positions_, std::move(pos_rows)));
    const ag::BoolMatrix valid = ag::BoolMatrix::Constant(static_cast<ag::Index>(lists.size()), static_cast<ag::Index>(len), true);
    const Tensor a = ln_attn_(x);
    x = ag::add(x, wo_(ag::multi_head_attention(wq_(a), wk_(a), wv_(a), static_cast<ag::Index>(len), n_heads_, valid)));
    x = ag::add(x, ff2_(ag::gelu(ff1_(ln_ffn_(x)))));
    return head_(x);
  }

  std::vector<Slate> recommend(std::span<const UserRequest* const> requests, GenerationMode, Rng&) const override {
    detail::require_candidates(requests, k_);
    ag::NoGradGuard guard;
    const auto first = initial_.rank(requests);
    std::size_t len = m_;
    for (const auto& f : first) len = std::min(len, f.size());
    std::vector<std::vector<ItemId>> lists;
    for (const auto& f : first) lists.emplace_back(f.begin(), f.begin() + static_cast<std::ptrdiff_t>(len));
    const Tensor s = rerank_scores(requests, lists);
    std::vector<Slate> out;
    for (std::size_t r = 0; r < lists.size(); ++r) {
      std::vector<std::size_t> order(len);
      std::iota(order.begin(), order.end(), std::size_t{0});
      auto score = [&](std::size_t j) { return s.value()(static_cast<ag::Index>(r * len + j), 0); };
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double sa = score(a), sb = score(b);
        return sa > sb || (sa == sb && lists[r][a] < lists[r][b]);
      });
      Slate slate;
      for (std::size_t j = 0; j < k_; ++j) slate.items.push_back(lists[r][order[j]]);
      out.push_back(std::move(slate));
    }
    return out;
  }

  /// The slate itself is the re-ranked list, in slate order.
  Matrix position_scores(std::span<const UserRequest* const> requests,
                         std::span<const Slate* const> slates) const override {
    ag::NoGradGuard guard;
    std::vector<std::vector<ItemId>> lists;
    for (const auto* s : slates) lists.push_back(s->items);
    return detail::reshape_rows(rerank_scores(requests, lists).value(), static_cast<ag::Index>(requests.size()),
                                static_cast<ag::Index>(k_));
  }

  /// rbce on both the initial scores and the refined scores of the shown slate.
  Tensor loss(std::span<const TrainingSample* const> batch, LossDiagnostics& diag) const override {
    diag.samples += batch.size();
    const auto reqs = detail::requests_of(batch);
    const auto lists = detail::slate_lists(batch);
    const Matrix labels = rbce_labels(batch, spec_);
    const Tensor init = initial_.listed_scores(initial_.states(reqs), initial_.items(), lists);
    const Tensor refined = rerank_scores(reqs, lists);
    return ag::add(rbce_loss(ag::sigmoid(init), labels), rbce_loss(ag::sigmoid(refined), labels));
  }

  nn::ParameterStore& parameters() override { return params_; }
  const nn::ParameterStore& parameters() const override { return params_; }

 private:
  Rng rng_;
  BehaviorSpec spec_;
  std::size_t k_;
  std::size_t m_;
  bool rank_positions_;
  int n_heads_;
  nn::ParameterStore params_;
  CFScorer initial_;
  nn::Linear token_;
  Tensor positions_;
  nn::LayerNorm ln_attn_, ln_ffn_;
  nn::Linear wq_, wk_, wv_, wo_, ff1_, ff2_, head_;
};

}  // namespace gfn4rec
