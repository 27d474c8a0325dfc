#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gfn4rec/autograd.hpp"
#include "gfn4rec/domain.hpp"
#include "gfn4rec/encoder.hpp"
#include "gfn4rec/nn.hpp"
#include "gfn4rec/rng.hpp"

namespace gfn4rec {

enum class GenerationMode { greedy, explore };

struct UserState {
  std::vector<double> values;
};

/// Record of one autoregressive slate generation.
struct GenerationTrajectory {
  Slate slate;
  std::vector<std::vector<ItemId>> step_candidates;  // eligible items at each step, ascending id
  std::vector<std::vector<double>> step_logits;      // aligned with step_candidates
  std::vector<double> step_logprobs;                 // log P(a_t | u, O^{t-1})
  std::vector<double> log_flows;                     // log F(u, O^0..K), K+1 entries

  double logprob() const {
    double s = 0.0;
    for (double lp : step_logprobs) s += lp;
    return s;
  }
};

struct PolicyConfig {
  EncoderConfig encoder;
  int slate_size{6};
  int head_hidden{64};

  void validate() const {
    encoder.validate();
    if (slate_size < 1) throw ConfigError("slate size K must be >= 1");
    if (head_hidden < 1) throw ConfigError("head_hidden must be >= 1");
  }
};

/// Differentiable per-step quantities of a batch of (request, slate) pairs.
struct TrajectoryTensors {
  std::vector<Tensor> log_flows;      // K+1 tensors, each N x 1
  std::vector<Tensor> step_logprobs;  // K tensors, each N x 1
};

/// Autoregressive item selection model P(a_t | u, O^{t-1}) with a flow
/// estimator log F(u, O^t).
///
/// Both heads read [s_u ; mean of the selected items' kernel encodings] (zero
/// for the empty list) through a two-layer tanh network. The selection head
/// emits a query vector whose dot product with each item encoding is that
/// item's logit; already-selected and non-candidate items are masked. The
/// flow head emits the log-flow directly.
class GFNPolicy {
 public:
  GFNPolicy(const PolicyConfig& cfg, const FeatureSpace& space, std::uint64_t seed)
      : cfg_((cfg.validate(), cfg)), rng_(make_rng(seed, {0x901})),
        kernel_(params_, "policy.item_kernel", space.items, cfg.encoder.embed_dim, rng_),
        encoder_(params_, "policy.encoder", cfg.encoder, space, kernel_, rng_),
        selection_head_(params_, "policy.selection_head", cfg.encoder.state_dim + cfg.encoder.embed_dim,
                        cfg.head_hidden, cfg.encoder.embed_dim, rng_),
        flow_head_(params_, "policy.flow_head", cfg.encoder.state_dim + cfg.encoder.embed_dim, cfg.head_hidden, 1,
                   rng_) {}

  GFNPolicy(const GFNPolicy&) = delete;
  GFNPolicy& operator=(const GFNPolicy&) = delete;

  const PolicyConfig& config() const { return cfg_; }
  std::size_t slate_size() const { return static_cast<std::size_t>(cfg_.slate_size); }
  int n_items() const { return kernel_.n_items(); }
  nn::ParameterStore& parameters() { return params_; }
  const nn::ParameterStore& parameters() const { return params_; }
  const ItemKernel& item_kernel() const { return kernel_; }
  const RequestEncoder& encoder() const { return encoder_; }

  Tensor encode_states(std::span<const UserRequest* const> requests) const { return encoder_.encode(requests); }

  UserState encode_state(const UserRequest& request) const { return {encoder_.encode_request(request)}; }

  /// Mean kernel encoding of each partial list; zero rows for empty lists.
  Tensor partial_encoding(const Tensor& item_embeddings, const std::vector<std::vector<ItemId>>& partials) const {
    std::vector<ag::RowTerm> terms;
    for (std::size_t r = 0; r < partials.size(); ++r) {
      const double w = partials[r].empty() ? 0.0 : 1.0 / static_cast<double>(partials[r].size());
      for (ItemId i : partials[r]) terms.push_back({static_cast<ag::Index>(r), i - 1, w});
    }
    return ag::combine_rows(item_embeddings, static_cast<ag::Index>(partials.size()), std::move(terms));
  }

  /// Logits over the whole catalog (column j is item j+1), before masking.
  Tensor step_logits(const Tensor& states, const Tensor& partial_enc, const Tensor& item_embeddings) const {
    return ag::matmul_nt(selection_head_(ag::concat_cols(states, partial_enc)), item_embeddings);
  }

  Tensor step_log_flow(const Tensor& states, const Tensor& partial_enc) const {
    return flow_head_(ag::concat_cols(states, partial_enc));
  }

  /// eligible(r, j) is true iff item j+1 is a candidate of request r and not in partials[r].
  ag::BoolMatrix eligibility(std::span<const UserRequest* const> requests,
                             const std::vector<std::vector<ItemId>>& partials) const {
    ag::BoolMatrix m = ag::BoolMatrix::Constant(static_cast<ag::Index>(requests.size()), n_items(), false);
    for (std::size_t r = 0; r < requests.size(); ++r) {
      for (ItemId i : requests[r]->candidate_items()) {
        if (i < 1 || i > n_items()) throw PreconditionError("candidate item outside the catalog");
        m(static_cast<ag::Index>(r), i - 1) = true;
      }
      for (ItemId i : partials[r]) m(static_cast<ag::Index>(r), i - 1) = false;
    }
    return m;
  }

  /// Teacher-forced step log-probabilities and log-flows of given slates.
  TrajectoryTensors evaluate(std::span<const UserRequest* const> requests, std::span<const Slate* const> slates) const {
    if (requests.size() != slates.size()) throw ShapeError("one slate per request required");
    const std::size_t k = slate_size();
    for (std::size_t r = 0; r < requests.size(); ++r) validate_slate(*slates[r], *requests[r], k);
    const Tensor states = encode_states(requests);
    const Tensor items = kernel_.encode_all();
    TrajectoryTensors out;
    std::vector<std::vector<ItemId>> partials(requests.size());
    for (std::size_t t = 0; t <= k; ++t) {
      const Tensor penc = partial_encoding(items, partials);
      out.log_flows.push_back(step_log_flow(states, penc));
      if (t == k) break;
      const Tensor lsm = ag::masked_log_softmax(step_logits(states, penc, items), eligibility(requests, partials));
      std::vector<ag::Index> chosen(requests.size());
      for (std::size_t r = 0; r < requests.size(); ++r) chosen[r] = slates[r]->items[t] - 1;
      out.step_logprobs.push_back(ag::pick(lsm, std::move(chosen)));
      for (std::size_t r = 0; r < requests.size(); ++r) partials[r].push_back(slates[r]->items[t]);
    }
    return out;
  }

  /// Batched slate generation. Greedy takes the argmax (lowest id on ties);
  /// explore samples from the step softmax.
  std::vector<GenerationTrajectory> generate(std::span<const UserRequest* const> requests, GenerationMode mode,
                                             Rng& rng) const {
    ag::NoGradGuard guard;
    const std::size_t k = slate_size();
    for (const auto* req : requests) {
      if (req->candidate_items().size() < k) throw PreconditionError("fewer candidates than the slate size");
    }
    const Tensor states = encode_states(requests);
    const Tensor items = kernel_.encode_all();
    std::vector<GenerationTrajectory> out(requests.size());
    std::vector<std::vector<ItemId>> partials(requests.size());
    for (std::size_t t = 0; t <= k; ++t) {
      const Tensor penc = partial_encoding(items, partials);
      const Tensor flows = step_log_flow(states, penc);
      for (std::size_t r = 0; r < requests.size(); ++r) out[r].log_flows.push_back(flows.value()(static_cast<ag::Index>(r), 0));
      if (t == k) break;
      const auto eligible = eligibility(requests, partials);
      const Tensor logits = step_logits(states, penc, items);
      const Tensor lsm = ag::masked_log_softmax(logits, eligible);
      for (std::size_t r = 0; r < requests.size(); ++r) {
        const auto row = static_cast<ag::Index>(r);
        auto& traj = out[r];
        std::vector<ItemId> cands;
        std::vector<double> cand_logits;
        for (ag::Index j = 0; j < eligible.cols(); ++j) {
          if (!eligible(row, j)) continue;
          cands.push_back(static_cast<ItemId>(j + 1));
          cand_logits.push_back(logits.value()(row, j));
        }
        const std::size_t pick = mode == GenerationMode::greedy ? argmax_lowest_id(cand_logits)
                                                                : sample_index(lsm, row, cands, rng);
        const ItemId chosen = cands[pick];
        traj.slate.items.push_back(chosen);
        traj.step_logprobs.push_back(lsm.value()(row, chosen - 1));
        traj.step_candidates.push_back(std::move(cands));
        traj.step_logits.push_back(std::move(cand_logits));
        partials[r].push_back(chosen);
      }
    }
    return out;
  }

  GenerationTrajectory generate_slate(const UserRequest& request, GenerationMode mode, Rng& rng) const {
    const UserRequest* ptr = &request;
    return generate(std::span<const UserRequest* const>(&ptr, 1), mode, rng).front();
  }

  /// Logits over candidates \ partial (ascending id), for one user state.
  std::vector<std::pair<ItemId, double>> score_step(const UserState& state, const std::vector<ItemId>& partial,
                                                    const std::vector<ItemId>& candidates) const {
    ag::NoGradGuard guard;
    if (partial.size() >= slate_size()) throw PreconditionError("score_step: partial list already has K items");
    const Tensor items = kernel_.encode_all();
    const Tensor logits = step_logits(state_tensor(state), partial_encoding(items, {partial}), items);
    std::vector<std::pair<ItemId, double>> out;
    std::vector<ItemId> sorted = candidates;
    std::sort(sorted.begin(), sorted.end());
    for (ItemId i : sorted) {
      if (std::find(partial.begin(), partial.end(), i) != partial.end()) continue;
      out.emplace_back(i, logits.value()(0, i - 1));
    }
    if (out.empty()) throw PreconditionError("score_step: no eligible candidates");
    return out;
  }

  /// log F(u, O^t) for one user state and partial list (t = 0..K).
  double flow_value(const UserState& state, const std::vector<ItemId>& partial) const {
    ag::NoGradGuard guard;
    if (partial.size() > slate_size()) throw PreconditionError("flow_value: partial list longer than K");
    const Tensor items = kernel_.encode_all();
    return step_log_flow(state_tensor(state), partial_encoding(items, {partial})).item();
  }

  /// log P(O | u) = sum_t log P(a_t | u, O^{t-1}).
  double trajectory_logprob(const UserRequest& request, const Slate& slate) const {
    ag::NoGradGuard guard;
    const UserRequest* req = &request;
    const Slate* sl = &slate;
    const auto tt = evaluate(std::span<const UserRequest* const>(&req, 1), std::span<const Slate* const>(&sl, 1));
    double total = 0.0;
    for (const auto& lp : tt.step_logprobs) total += lp.item();
    return total;
  }

 private:
  Tensor state_tensor(const UserState& state) const {
    if (static_cast<int>(state.values.size()) != cfg_.encoder.state_dim) throw ShapeError("user state width");
    Matrix m(1, cfg_.encoder.state_dim);
    for (int i = 0; i < cfg_.encoder.state_dim; ++i) m(0, i) = state.values[static_cast<std::size_t>(i)];
    return Tensor::constant(std::move(m));
  }

  static std::size_t argmax_lowest_id(const std::vector<double>& logits) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.size(); ++j) {
      if (logits[j] > logits[best]) best = j;
    }
    return best;
  }

  static std::size_t sample_index(const Tensor& lsm, ag::Index row, const std::vector<ItemId>& cands, Rng& rng) {
    const double u = uniform01(rng);
    double cum = 0.0;
    for (std::size_t j = 0; j < cands.size(); ++j) {
      cum += std::exp(lsm.value()(row, cands[j] - 1));
      if (u < cum) return j;
    }
    return cands.size() - 1;
  }

  PolicyConfig cfg_;
  Rng rng_;
  nn::ParameterStore params_;
  ItemKernel kernel_;
  RequestEncoder encoder_;
  nn::Mlp selection_head_;
  nn::Mlp flow_head_;
};

}  // namespace gfn4rec
