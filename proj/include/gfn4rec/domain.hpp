#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gfn4rec/errors.hpp"

namespace gfn4rec {

/// Dense ids after ingestion remapping. 0 is the padding item.
using ItemId = std::int32_t;
using UserId = std::int32_t;
inline constexpr ItemId kPaddingItem = 0;

/// Ordered behavior labels with their reward weights w_b.
struct BehaviorSpec {
  std::vector<std::string> names;
  std::vector<double> weights;

  static BehaviorSpec uniform(std::vector<std::string> names) {
    BehaviorSpec spec{std::move(names), {}};
    spec.weights.assign(spec.names.size(), 1.0);
    spec.validate();
    return spec;
  }

  std::size_t size() const { return names.size(); }

  void validate() const {
    if (names.empty()) throw ConfigError("at least one behavior is required");
    if (weights.size() != names.size()) throw ConfigError("one weight per behavior is required");
    std::set<std::string> seen(names.begin(), names.end());
    if (seen.size() != names.size()) throw ConfigError("behavior names must be unique");
    for (double w : weights) {
      if (!std::isfinite(w)) throw ConfigError("behavior weights must be finite");
    }
  }

  /// Smallest and largest possible item reward.
  std::pair<double, double> reward_range() const {
    double lo = 0.0, hi = 0.0;
    for (double w : weights) (w < 0 ? lo : hi) += w;
    return {lo, hi};
  }
};

/// One 0/1 value per behavior.
using ResponseVector = std::vector<std::uint8_t>;

struct HistoryEntry {
  ItemId item{kPaddingItem};
  ResponseVector response;
};

struct UserProfile {
  std::vector<std::int32_t> categorical;  // dense feature-token ids
  std::vector<double> real;
};

using CandidateSet = std::shared_ptr<const std::vector<ItemId>>;

/// Everything a policy sees for one recommendation: who, what they did
/// recently (oldest first), and which items may be recommended.
struct UserRequest {
  UserId user_id{0};
  UserProfile profile;
  std::vector<HistoryEntry> history;
  CandidateSet candidates;  // sorted ascending, distinct

  const std::vector<ItemId>& candidate_items() const {
    if (!candidates || candidates->empty()) throw PreconditionError("request has an empty candidate set");
    return *candidates;
  }
};

inline CandidateSet make_candidates(std::vector<ItemId> items) {
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());
  return std::make_shared<const std::vector<ItemId>>(std::move(items));
}

/// Candidate set {1, ..., n_items}.
inline CandidateSet all_items(int n_items) {
  std::vector<ItemId> items(static_cast<std::size_t>(n_items));
  for (int i = 0; i < n_items; ++i) items[static_cast<std::size_t>(i)] = i + 1;
  return std::make_shared<const std::vector<ItemId>>(std::move(items));
}

struct Slate {
  std::vector<ItemId> items;

  std::size_t size() const { return items.size(); }
  bool operator==(const Slate&) const = default;
};

/// Checks the slate invariants: exact length, distinct items, all candidates.
inline void validate_slate(const Slate& slate, const UserRequest& request, std::size_t k) {
  if (slate.size() != k) throw PreconditionError("slate length differs from K");
  std::set<ItemId> seen;
  const auto& cands = request.candidate_items();
  for (ItemId i : slate.items) {
    if (!seen.insert(i).second) throw PreconditionError("slate repeats an item");
    if (!std::binary_search(cands.begin(), cands.end(), i)) throw PreconditionError("slate item not in candidates");
  }
}

/// |B| x K binary matrix of responses; column k holds the responses to slate item k.
class MultiBehaviorResponse {
 public:
  MultiBehaviorResponse() = default;
  MultiBehaviorResponse(std::size_t n_behaviors, std::size_t slate_size)
      : n_behaviors_(n_behaviors), slate_size_(slate_size), data_(n_behaviors * slate_size, 0) {}

  std::size_t n_behaviors() const { return n_behaviors_; }
  std::size_t slate_size() const { return slate_size_; }

  std::uint8_t at(std::size_t behavior, std::size_t position) const { return data_[index(behavior, position)]; }
  void set(std::size_t behavior, std::size_t position, std::uint8_t v) {
    if (v > 1) throw ShapeError("responses must be 0 or 1");
    data_[index(behavior, position)] = v;
  }

  ResponseVector column(std::size_t position) const {
    ResponseVector out(n_behaviors_);
    for (std::size_t b = 0; b < n_behaviors_; ++b) out[b] = at(b, position);
    return out;
  }
  void set_column(std::size_t position, std::span<const std::uint8_t> values) {
    if (values.size() != n_behaviors_) throw ShapeError("response column length differs from |B|");
    for (std::size_t b = 0; b < n_behaviors_; ++b) set(b, position, values[b]);
  }

  bool operator==(const MultiBehaviorResponse&) const = default;

 private:
  std::size_t index(std::size_t b, std::size_t k) const {
    if (b >= n_behaviors_ || k >= slate_size_) throw ShapeError("response index out of range");
    return b * slate_size_ + k;
  }

  std::size_t n_behaviors_{0};
  std::size_t slate_size_{0};
  std::vector<std::uint8_t> data_;
};

struct TrainingSample {
  UserRequest request;
  Slate slate;
  double reward{0.0};
  MultiBehaviorResponse responses;
  std::int64_t step_added{0};
  std::int64_t timestamp{0};  // latest interaction time covered by the slate
};

/// R(u, i) = sum_b w_b y_b.
inline double compute_item_reward(std::span<const std::uint8_t> response, const BehaviorSpec& spec) {
  if (response.size() != spec.size()) throw ShapeError("response length differs from number of behaviors");
  double r = 0.0;
  for (std::size_t b = 0; b < response.size(); ++b) r += spec.weights[b] * static_cast<double>(response[b]);
  return r;
}

/// Item rewards of every slate position.
inline std::vector<double> item_rewards(const MultiBehaviorResponse& responses, const BehaviorSpec& spec) {
  if (responses.n_behaviors() != spec.size()) throw ShapeError("response rows differ from number of behaviors");
  std::vector<double> out(responses.slate_size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto col = responses.column(k);
    out[k] = compute_item_reward(col, spec);
  }
  return out;
}

/// R(u, O): mean of the item rewards.
inline double compute_list_reward(const MultiBehaviorResponse& responses, const BehaviorSpec& spec) {
  if (responses.slate_size() == 0) throw ShapeError("empty response matrix");
  const auto rewards = item_rewards(responses, spec);
  double total = 0.0;
  for (double r : rewards) total += r;
  return total / static_cast<double>(rewards.size());
}

}  // namespace gfn4rec
