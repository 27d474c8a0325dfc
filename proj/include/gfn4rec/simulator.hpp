#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "gfn4rec/encoder.hpp"
#include "gfn4rec/nn.hpp"
#include "gfn4rec/objectives.hpp"
#include "gfn4rec/rng.hpp"

namespace gfn4rec {

struct SimulatorConfig {
  double rho{0.2};
  std::uint64_t seed{0};
  BehaviorSpec behaviors{BehaviorSpec::uniform({"click"})};
  EncoderConfig encoder;

  void validate() const {
    if (!(rho >= 0.0) || !std::isfinite(rho)) throw ConfigError("rho must be >= 0");
    behaviors.validate();
    encoder.validate();
    if (encoder.state_dim != encoder.embed_dim) throw ConfigError("simulator requires state_dim == embed_dim");
  }
};

inline double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

/// Cosine similarity; 0 when either vector is zero.
inline double cosine(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

/// For each slate row, the largest cosine similarity to any other row,
/// floored at 0. A single-item slate has 0.
inline std::vector<double> max_similarity(const Matrix& embeddings) {
  const auto k = embeddings.rows();
  std::vector<double> out(static_cast<std::size_t>(k), 0.0);
  for (ag::Index i = 0; i < k; ++i) {
    for (ag::Index j = 0; j < k; ++j) {
      if (i != j) out[static_cast<std::size_t>(i)] = std::max(out[static_cast<std::size_t>(i)], cosine(embeddings.row(i), embeddings.row(j)));
    }
  }
  return out;
}

/// Response probabilities after item-influence suppression:
/// sigmoid(l_{b,i} − rho · maxsim_i). base_logits is |B| x K, embeddings K x d.
inline Matrix modified_probabilities(const Matrix& base_logits, const Matrix& embeddings, double rho) {
  if (base_logits.cols() != embeddings.rows()) throw ShapeError("one embedding row per slate item required");
  if (!(rho >= 0.0)) throw PreconditionError("rho must be >= 0");
  const auto sim = max_similarity(embeddings);
  Matrix p(base_logits.rows(), base_logits.cols());
  for (ag::Index b = 0; b < p.rows(); ++b)
    for (ag::Index i = 0; i < p.cols(); ++i) p(b, i) = sigmoid(base_logits(b, i) - rho * sim[static_cast<std::size_t>(i)]);
  return p;
}

/// Bernoulli draws from the modified probabilities, behavior-major then position.
inline MultiBehaviorResponse respond_with_logits(const Matrix& base_logits, const Matrix& embeddings, double rho,
                                                 Rng& rng) {
  const Matrix p = modified_probabilities(base_logits, embeddings, rho);
  MultiBehaviorResponse out(static_cast<std::size_t>(p.rows()), static_cast<std::size_t>(p.cols()));
  for (ag::Index b = 0; b < p.rows(); ++b)
    for (ag::Index i = 0; i < p.cols(); ++i) out.set(static_cast<std::size_t>(b), static_cast<std::size_t>(i), uniform01(rng) < p(b, i) ? 1 : 0);
  return out;
}

struct SimulatedResponse {
  MultiBehaviorResponse responses;
  double reward{0.0};
};

/// Multi-behavior user response environment. The base model scores each
/// (user, item) pair per behavior as (s_u ⊙ e_i) W_b + c_b; respond()
/// suppresses each item's logits by rho times its maximum similarity to the
/// other slate items and samples Bernoulli feedback.
class UserSimulator {
 public:
  UserSimulator(const SimulatorConfig& cfg, const FeatureSpace& space)
      : cfg_((cfg.validate(), cfg)), rng_(make_rng(cfg.seed, {0x5103})),
        kernel_(params_, "simulator.item_kernel", space.items, cfg.encoder.embed_dim, rng_),
        encoder_(params_, "simulator.encoder", cfg.encoder, space, kernel_, rng_),
        head_(params_, "simulator.behavior_head", cfg.encoder.embed_dim, static_cast<int>(cfg.behaviors.size()), rng_) {
    if (space.n_behaviors != static_cast<int>(cfg.behaviors.size())) throw ConfigError("feature space behavior count differs from the simulator behaviors");
    freeze();
  }
  UserSimulator(const UserSimulator&) = delete;
  UserSimulator& operator=(const UserSimulator&) = delete;

  const SimulatorConfig& config() const { return cfg_; }
  const BehaviorSpec& behaviors() const { return cfg_.behaviors; }
  double rho() const { return cfg_.rho; }
  void set_rho(double rho) {
    if (!(rho >= 0.0)) throw ConfigError("rho must be >= 0");
    cfg_.rho = rho;
  }
  int n_items() const { return kernel_.n_items(); }
  nn::ParameterStore& parameters() { return params_; }
  const nn::ParameterStore& parameters() const { return params_; }

  /// Base logits of listed items: rows are (request, position) pairs, columns behaviors.
  Tensor base_logits(std::span<const UserRequest* const> requests, const std::vector<std::vector<ItemId>>& lists) const {
    const Tensor states = encoder_.encode(requests);
    const Tensor items = kernel_.encode_all();
    std::vector<ag::Index> srows, irows;
    for (std::size_t r = 0; r < lists.size(); ++r) {
      for (ItemId i : lists[r]) {
        if (i < 1 || i > n_items()) throw PreconditionError("item outside the simulator catalog");
        srows.push_back(static_cast<ag::Index>(r));
        irows.push_back(i - 1);
      }
    }
    return head_(ag::mul(ag::gather_rows(states, std::move(srows)), ag::gather_rows(items, std::move(irows))));
  }

  /// |B| x K base logits of one slate.
  Matrix slate_logits(const UserRequest& request, const Slate& slate) const {
    ag::NoGradGuard guard;
    const UserRequest* p = &request;
    return base_logits(std::span<const UserRequest* const>(&p, 1), {slate.items}).value().transpose();
  }

  /// Caches the item embeddings used for similarity; call after training.
  void freeze() {
    ag::NoGradGuard guard;
    embeddings_ = kernel_.encode_all().value();
  }

  /// Frozen embedding of item i (row i-1).
  const Matrix& item_embeddings() const { return embeddings_; }

  Matrix slate_embeddings(const Slate& slate) const {
    Matrix e(static_cast<ag::Index>(slate.size()), embeddings_.cols());
    for (std::size_t k = 0; k < slate.size(); ++k) e.row(static_cast<ag::Index>(k)) = embeddings_.row(slate.items[k] - 1);
    return e;
  }

  /// Pairwise similarity (1 + cos) / 2 in [0, 1] of frozen embeddings.
  double similarity(ItemId a, ItemId b) const {
    return (1.0 + cosine(embeddings_.row(a - 1), embeddings_.row(b - 1))) / 2.0;
  }

  /// |B| x K modified response probabilities.
  Matrix response_probabilities(const UserRequest& request, const Slate& slate) const {
    return modified_probabilities(slate_logits(request, slate), slate_embeddings(slate), cfg_.rho);
  }

  /// Expected list reward under the modified probabilities.
  double expected_reward(const UserRequest& request, const Slate& slate) const {
    const Matrix p = response_probabilities(request, slate);
    double total = 0.0;
    for (ag::Index b = 0; b < p.rows(); ++b) total += cfg_.behaviors.weights[static_cast<std::size_t>(b)] * p.row(b).sum();
    return total / static_cast<double>(slate.size());
  }

  SimulatedResponse respond(const UserRequest& request, const Slate& slate, Rng& rng) const {
    auto y = respond_with_logits(slate_logits(request, slate), slate_embeddings(slate), cfg_.rho, rng);
    const double r = compute_list_reward(y, cfg_.behaviors);
    return {std::move(y), r};
  }

  /// Batched respond; request r draws from the stream derive_seed(seed, {episode, r}).
  std::vector<SimulatedResponse> respond_batch(std::span<const UserRequest* const> requests,
                                               std::span<const Slate* const> slates, std::uint64_t seed,
                                               std::uint64_t episode) const {
    if (requests.size() != slates.size()) throw ShapeError("one slate per request required");
    if (requests.empty()) return {};
    ag::NoGradGuard guard;
    std::vector<std::vector<ItemId>> lists;
    for (const auto* s : slates) lists.push_back(s->items);
    const Matrix logits = base_logits(requests, lists).value();
    std::vector<SimulatedResponse> out;
    ag::Index row = 0;
    for (std::size_t r = 0; r < requests.size(); ++r) {
      const auto k = static_cast<ag::Index>(lists[r].size());
      const Matrix l = logits.middleRows(row, k).transpose();
      row += k;
      Rng rng = make_rng(seed, {episode, r});
      auto y = respond_with_logits(l, slate_embeddings(*slates[r]), cfg_.rho, rng);
      const double rew = compute_list_reward(y, cfg_.behaviors);
      out.push_back({std::move(y), rew});
    }
    return out;
  }

 private:
  SimulatorConfig cfg_;
  Rng rng_;
  nn::ParameterStore params_;
  ItemKernel kernel_;
  RequestEncoder encoder_;
  nn::Linear head_;
  Matrix embeddings_;
};

/// Area under the ROC curve via the Mann-Whitney statistic with average ranks
/// for ties. NaN when either class is empty.
inline double roc_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("one label per score required");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]]) {
        rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::numeric_limits<double>::quiet_NaN();
  const double np = static_cast<double>(n_pos), nn_ = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn_);
}

struct SimulatorTrainConfig {
  int epochs{10};
  std::size_t batch_size{64};
  nn::AdamConfig adam{.learning_rate = 3e-3};
  std::uint64_t seed{0};
};

struct SimulatorTrainReport {
  std::vector<double> epoch_loss;
  std::vector<double> auc;  // per behavior, on the validation samples
};

/// Per-behavior AUC of the base model on the given samples.
inline std::vector<double> response_auc(const UserSimulator& sim, const std::vector<TrainingSample>& samples) {
  const std::size_t nb = sim.behaviors().size();
  std::vector<std::vector<double>> scores(nb);
  std::vector<std::vector<std::uint8_t>> labels(nb);
  for (const auto& s : samples) {
    const Matrix l = sim.slate_logits(s.request, s.slate);
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t k = 0; k < s.slate.size(); ++k) {
        scores[b].push_back(l(static_cast<ag::Index>(b), static_cast<ag::Index>(k)));
        labels[b].push_back(s.responses.at(b, k));
      }
    }
  }
  std::vector<double> out;
  for (std::size_t b = 0; b < nb; ++b) out.push_back(roc_auc(scores[b], labels[b]));
  return out;
}

/// Fits the base response model with binary cross-entropy on observed
/// responses, then freezes the similarity embeddings.
inline SimulatorTrainReport train_response_model(UserSimulator& sim, const std::vector<TrainingSample>& train,
                                                 const std::vector<TrainingSample>& valid,
                                                 const SimulatorTrainConfig& cfg) {
  if (train.empty()) throw PreconditionError("simulator training needs samples");
  if (cfg.batch_size == 0 || cfg.epochs < 0) throw ConfigError("invalid simulator training schedule");
  nn::Adam opt(cfg.adam);
  Rng rng = make_rng(cfg.seed, {0x7a11});
  SimulatorTrainReport report;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t nb = sim.behaviors().size();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      std::vector<const UserRequest*> reqs;
      std::vector<std::vector<ItemId>> lists;
      for (std::size_t j = begin; j < end; ++j) {
        const auto& s = train[order[j]];
        reqs.push_back(&s.request);
        lists.push_back(s.slate.items);
      }
      Matrix labels(0, static_cast<ag::Index>(nb));
      {
        std::size_t rows = 0;
        for (const auto& l : lists) rows += l.size();
        labels.resize(static_cast<ag::Index>(rows), static_cast<ag::Index>(nb));
        ag::Index row = 0;
        for (std::size_t j = begin; j < end; ++j) {
          const auto& s = train[order[j]];
          for (std::size_t k = 0; k < s.slate.size(); ++k, ++row)
            for (std::size_t b = 0; b < nb; ++b) labels(row, static_cast<ag::Index>(b)) = s.responses.at(b, k);
        }
      }
      const Tensor loss = rbce_loss(ag::sigmoid(sim.base_logits(reqs, lists)), labels);
      total += loss.item();
      ++batches;
      loss.backward();
      opt.step(sim.parameters());
    }
    report.epoch_loss.push_back(total / static_cast<double>(batches));
  }
  sim.freeze();
  report.auc = response_auc(sim, valid.empty() ? train : valid);
  return report;
}

}  // namespace gfn4rec
