#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "gfn4rec/domain.hpp"
#include "gfn4rec/errors.hpp"
#include "gfn4rec/rng.hpp"

namespace gfn4rec {

struct Interaction {
  UserId user{0};
  ItemId item{kPaddingItem};
  std::int64_t timestamp{0};
  ResponseVector response;
};

/// Interaction rows in input order plus the behavior column names.
struct InteractionLog {
  std::vector<std::string> behaviors;
  std::vector<Interaction> rows;
};

/// Per-item categorical feature tokens, indexed by dense item id (row 0 is padding).
struct ItemCatalog {
  int n_items{0};
  int feature_vocab{0};
  std::vector<std::vector<std::int32_t>> features;

  static ItemCatalog ids_only(int n_items) {
    ItemCatalog c;
    c.n_items = n_items;
    c.features.resize(static_cast<std::size_t>(n_items) + 1);
    return c;
  }
};

/// User profiles indexed by dense user id (row 0 unused).
struct ProfileTable {
  int vocab{0};
  int n_real{0};
  std::vector<UserProfile> by_user;

  /// Profile holding only a per-user id token.
  static ProfileTable ids_only(int n_users) {
    ProfileTable t;
    t.vocab = n_users + 1;
    t.by_user.resize(static_cast<std::size_t>(n_users) + 1);
    for (int u = 1; u <= n_users; ++u) t.by_user[static_cast<std::size_t>(u)].categorical = {u};
    return t;
  }

  const UserProfile& at(UserId u) const {
    if (u <= 0 || static_cast<std::size_t>(u) >= by_user.size()) throw DataError("unknown user id");
    return by_user[static_cast<std::size_t>(u)];
  }
};

// ---------------------------------------------------------------------------
// Id remapping

/// Raw string id <-> dense integer id (1-based) for one entity kind.
class IdMap {
 public:
  std::int32_t intern(const std::string& raw) {
    auto [it, inserted] = ids_.try_emplace(raw, static_cast<std::int32_t>(names_.size() + 1));
    if (inserted) names_.push_back(raw);
    return it->second;
  }
  std::int32_t find(const std::string& raw) const {
    auto it = ids_.find(raw);
    return it == ids_.end() ? 0 : it->second;
  }
  const std::string& name(std::int32_t id) const { return names_.at(static_cast<std::size_t>(id - 1)); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  static IdMap from_names(const std::vector<std::string>& names) {
    IdMap m;
    for (const auto& n : names) m.intern(n);
    return m;
  }

 private:
  std::unordered_map<std::string, std::int32_t> ids_;
  std::vector<std::string> names_;
};

struct IdMaps {
  IdMap users;
  IdMap items;
  IdMap user_features;  // tokens "<feat>=<val>" (the user id token is "user=<raw>")
  IdMap item_features;

  nlohmann::json to_json() const {
    return {{"users", users.names()},
            {"items", items.names()},
            {"user_features", user_features.names()},
            {"item_features", item_features.names()}};
  }
  static IdMaps from_json(const nlohmann::json& j) {
    IdMaps m;
    m.users = IdMap::from_names(j.at("users").get<std::vector<std::string>>());
    m.items = IdMap::from_names(j.at("items").get<std::vector<std::string>>());
    m.user_features = IdMap::from_names(j.at("user_features").get<std::vector<std::string>>());
    m.item_features = IdMap::from_names(j.at("item_features").get<std::vector<std::string>>());
    return m;
  }
};

// ---------------------------------------------------------------------------
// CSV ingestion

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  const auto e = s.find_last_not_of(" \t\r\n");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

}  // namespace detail

/// Parses `user_id,item_id,timestamp,<behavior_1>,...` with 0/1 behavior columns.
/// Raw ids are interned into `maps` in first-seen order.
inline InteractionLog parse_interaction_log(std::istream& in, IdMaps& maps) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("interaction log is empty");
  auto header = detail::split(detail::trim(line), ',');
  if (header.size() < 4 || header[0] != "user_id" || header[1] != "item_id" || header[2] != "timestamp") {
    throw DataError("interaction log header must be user_id,item_id,timestamp,<behaviors...>");
  }
  InteractionLog log;
  log.behaviors.assign(header.begin() + 3, header.end());
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty()) continue;
    auto f = detail::split(line, ',');
    if (f.size() != header.size()) throw DataError("wrong field count on line " + std::to_string(lineno));
    Interaction row;
    row.user = maps.users.intern(f[0]);
    row.item = maps.items.intern(f[1]);
    try {
      row.timestamp = std::stoll(f[2]);
    } catch (const std::exception&) {
      throw DataError("bad timestamp on line " + std::to_string(lineno));
    }
    for (std::size_t b = 3; b < f.size(); ++b) {
      if (f[b] != "0" && f[b] != "1") throw DataError("behavior values must be 0/1 on line " + std::to_string(lineno));
      row.response.push_back(f[b] == "1" ? 1 : 0);
    }
    log.rows.push_back(std::move(row));
  }
  return log;
}

inline InteractionLog read_interaction_log(const std::filesystem::path& path, IdMaps& maps) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open interaction log: " + path.string());
  return parse_interaction_log(in, maps);
}

/// Parses `<id>,<feat>=<val>;<feat>=<val>...` rows (a header line is skipped
/// if its first field is literally "item_id" or "user_id"). Returns raw id ->
/// feature tokens.
inline std::map<std::string, std::vector<std::string>> parse_feature_table(std::istream& in) {
  std::map<std::string, std::vector<std::string>> out;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    const std::string id = detail::trim(line.substr(0, comma));
    if (first && (id == "item_id" || id == "user_id")) {
      first = false;
      continue;
    }
    first = false;
    std::vector<std::string> tokens;
    if (comma != std::string::npos) {
      for (auto& tok : detail::split(line.substr(comma + 1), ';')) {
        tok = detail::trim(tok);
        if (tok.empty()) continue;
        if (tok.find('=') == std::string::npos) throw DataError("feature token without '=': " + tok);
        tokens.push_back(tok);
      }
    }
    out[id] = std::move(tokens);
  }
  return out;
}

inline std::map<std::string, std::vector<std::string>> read_feature_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open feature table: " + path.string());
  return parse_feature_table(in);
}

// ---------------------------------------------------------------------------
// Filtering and remapping

struct KCoreResult {
  InteractionLog log;
  std::size_t removed_rows{0};
  int iterations{0};
  bool empty() const { return log.rows.empty(); }
};

/// Repeatedly drops rows whose user or item has fewer than k rows until no
/// such row remains.
inline KCoreResult k_core_filter(const InteractionLog& log, int k) {
  if (k < 1) throw PreconditionError("k_core_filter: k must be >= 1");
  KCoreResult result{log, 0, 0};
  auto& rows = result.log.rows;
  while (true) {
    std::unordered_map<UserId, int> user_count;
    std::unordered_map<ItemId, int> item_count;
    for (const auto& r : rows) {
      ++user_count[r.user];
      ++item_count[r.item];
    }
    const auto before = rows.size();
    std::erase_if(rows, [&](const Interaction& r) { return user_count[r.user] < k || item_count[r.item] < k; });
    ++result.iterations;
    if (rows.size() == before) break;
    result.removed_rows += before - rows.size();
  }
  return result;
}

/// Renumbers users and items densely (1..n, order of the old ids) and
/// rewrites `maps` to match. Feature tables are keyed by raw id so they are
/// unaffected.
inline InteractionLog compact_ids(const InteractionLog& log, IdMaps& maps) {
  std::vector<UserId> users;
  std::vector<ItemId> items;
  for (const auto& r : log.rows) {
    users.push_back(r.user);
    items.push_back(r.item);
  }
  std::sort(users.begin(), users.end());
  users.erase(std::unique(users.begin(), users.end()), users.end());
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());

  IdMap new_users, new_items;
  std::unordered_map<UserId, UserId> user_remap;
  std::unordered_map<ItemId, ItemId> item_remap;
  for (UserId u : users) user_remap[u] = maps.users.size() ? new_users.intern(maps.users.name(u)) : new_users.intern(std::to_string(u));
  for (ItemId i : items) item_remap[i] = maps.items.size() ? new_items.intern(maps.items.name(i)) : new_items.intern(std::to_string(i));

  InteractionLog out{log.behaviors, {}};
  out.rows.reserve(log.rows.size());
  for (auto r : log.rows) {
    r.user = user_remap.at(r.user);
    r.item = item_remap.at(r.item);
    out.rows.push_back(std::move(r));
  }
  maps.users = std::move(new_users);
  maps.items = std::move(new_items);
  return out;
}

/// Builds the item catalog and profile table for the current dense ids.
inline ItemCatalog build_item_catalog(IdMaps& maps, const std::map<std::string, std::vector<std::string>>& item_features) {
  ItemCatalog cat = ItemCatalog::ids_only(static_cast<int>(maps.items.size()));
  for (std::size_t i = 1; i <= maps.items.size(); ++i) {
    auto it = item_features.find(maps.items.name(static_cast<std::int32_t>(i)));
    if (it == item_features.end()) continue;
    for (const auto& tok : it->second) cat.features[i].push_back(maps.item_features.intern(tok) - 1);
  }
  cat.feature_vocab = static_cast<int>(maps.item_features.size());
  return cat;
}

inline ProfileTable build_profile_table(IdMaps& maps, const std::map<std::string, std::vector<std::string>>& user_features) {
  ProfileTable t;
  t.by_user.resize(maps.users.size() + 1);
  for (std::size_t u = 1; u <= maps.users.size(); ++u) {
    const auto& raw = maps.users.name(static_cast<std::int32_t>(u));
    auto& p = t.by_user[u];
    p.categorical.push_back(maps.user_features.intern("user=" + raw) - 1);
    auto it = user_features.find(raw);
    if (it == user_features.end()) continue;
    for (const auto& tok : it->second) p.categorical.push_back(maps.user_features.intern(tok) - 1);
  }
  t.vocab = static_cast<int>(maps.user_features.size());
  return t;
}

// ---------------------------------------------------------------------------
// Segmentation and splitting

/// Row indices of each user's interactions in time order (stable for ties).
inline std::map<UserId, std::vector<std::size_t>> rows_by_user(const InteractionLog& log) {
  std::map<UserId, std::vector<std::size_t>> by_user;
  for (std::size_t i = 0; i < log.rows.size(); ++i) by_user[log.rows[i].user].push_back(i);
  for (auto& [_, idx] : by_user) {
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return log.rows[a].timestamp < log.rows[b].timestamp; });
  }
  return by_user;
}

struct SegmentOptions {
  std::size_t slate_size{6};
  std::size_t history_len{50};
};

/// Cuts each user's time-ordered interactions into consecutive windows of K;
/// each window becomes an observed slate whose request history is the (at
/// most L) interactions preceding it. A trailing remainder shorter than K is
/// dropped.
inline std::vector<TrainingSample> segment_into_slates(const InteractionLog& log, const BehaviorSpec& spec,
                                                       const ProfileTable& profiles, const CandidateSet& candidates,
                                                       SegmentOptions opt) {
  if (opt.slate_size < 1) throw PreconditionError("segment_into_slates: K must be >= 1");
  if (log.behaviors.size() != spec.size()) throw ShapeError("log behaviors differ from behavior spec");
  std::vector<TrainingSample> out;
  for (const auto& [user, idx] : rows_by_user(log)) {
    const std::size_t n_slates = idx.size() / opt.slate_size;
    for (std::size_t s = 0; s < n_slates; ++s) {
      const std::size_t start = s * opt.slate_size;
      TrainingSample sample;
      sample.request.user_id = user;
      sample.request.profile = profiles.at(user);
      sample.request.candidates = candidates;
      const std::size_t hist_begin = start > opt.history_len ? start - opt.history_len : 0;
      for (std::size_t h = hist_begin; h < start; ++h) {
        const auto& r = log.rows[idx[h]];
        sample.request.history.push_back({r.item, r.response});
      }
      sample.responses = MultiBehaviorResponse(spec.size(), opt.slate_size);
      for (std::size_t k = 0; k < opt.slate_size; ++k) {
        const auto& r = log.rows[idx[start + k]];
        sample.slate.items.push_back(r.item);
        sample.responses.set_column(k, r.response);
        sample.timestamp = std::max(sample.timestamp, r.timestamp);
      }
      sample.reward = compute_list_reward(sample.responses, spec);
      sample.step_added = static_cast<std::int64_t>(s);
      out.push_back(std::move(sample));
    }
  }
  return out;
}

/// Removes samples whose slate repeats an item (a user interacted with the
/// same item twice inside one window). Such a slate has probability zero
/// under any policy that never repeats items. Returns the number removed.
inline std::size_t drop_repeated_slates(std::vector<TrainingSample>& samples) {
  const auto before = samples.size();
  std::erase_if(samples, [](const TrainingSample& s) {
    std::set<ItemId> seen(s.slate.items.begin(), s.slate.items.end());
    return seen.size() != s.slate.size();
  });
  return before - samples.size();
}

struct SplitResult {
  std::vector<TrainingSample> train;
  std::vector<TrainingSample> test;
  std::size_t users_without_train{0};  // users whose slates all went to test
};

/// The last N slates of each user (in input order, which is time order per
/// user) become test samples.
inline SplitResult split_train_test(const std::vector<TrainingSample>& samples, std::size_t n_per_user) {
  std::map<UserId, std::vector<std::size_t>> by_user;
  for (std::size_t i = 0; i < samples.size(); ++i) by_user[samples[i].request.user_id].push_back(i);
  SplitResult out;
  for (const auto& [_, idx] : by_user) {
    const std::size_t n_test = std::min(n_per_user, idx.size());
    if (n_per_user > 0 && idx.size() <= n_per_user) ++out.users_without_train;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      (j + n_test >= idx.size() ? out.test : out.train).push_back(samples[idx[j]]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Replay buffer

/// Indices drawn by one buffer_sample call. The first n_new indices come from
/// the samples added since the previous draw, the rest uniformly from the
/// whole buffer.
struct BufferBatch {
  std::vector<std::size_t> indices;
  std::size_t n_new{0};
  std::size_t new_pool_begin{0};
  std::size_t buffer_size{0};
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t min_size = 1) : min_size_(min_size) {}

  void add(TrainingSample sample) { samples_.push_back(std::move(sample)); }

  std::size_t size() const { return samples_.size(); }
  std::size_t watermark() const { return watermark_; }
  std::size_t new_count() const { return samples_.size() - watermark_; }
  std::size_t min_size() const { return min_size_; }
  const TrainingSample& at(std::size_t i) const { return samples_.at(i); }

  /// floor(batch/2) draws from the new pool (without replacement when it is
  /// large enough, with replacement otherwise; the whole buffer if the pool is
  /// empty), ceil(batch/2) uniform draws over the whole buffer. Advances the
  /// watermark to the current end.
  BufferBatch sample(std::size_t batch_size, Rng& rng) {
    if (samples_.size() < min_size_ || samples_.empty()) {
      throw PreconditionError("buffer_sample called before the buffer reached its warmup size");
    }
    BufferBatch out;
    out.buffer_size = samples_.size();
    out.new_pool_begin = watermark_;
    const std::size_t n_new = batch_size / 2;
    const std::size_t n_uniform = batch_size - n_new;
    std::size_t pool_begin = watermark_;
    std::size_t pool = samples_.size() - pool_begin;
    if (pool == 0) {
      pool_begin = 0;
      pool = samples_.size();
    }
    if (pool >= n_new) {
      // Partial Fisher-Yates over the pool's offsets.
      std::vector<std::size_t> offsets(pool);
      std::iota(offsets.begin(), offsets.end(), std::size_t{0});
      for (std::size_t j = 0; j < n_new; ++j) {
        const std::size_t pick = j + uniform_index(rng, pool - j);
        std::swap(offsets[j], offsets[pick]);
        out.indices.push_back(pool_begin + offsets[j]);
      }
    } else {
      for (std::size_t j = 0; j < n_new; ++j) out.indices.push_back(pool_begin + uniform_index(rng, pool));
    }
    out.n_new = n_new;
    for (std::size_t j = 0; j < n_uniform; ++j) out.indices.push_back(uniform_index(rng, samples_.size()));
    watermark_ = samples_.size();
    return out;
  }

  std::vector<const TrainingSample*> resolve(const BufferBatch& batch) const {
    std::vector<const TrainingSample*> out;
    out.reserve(batch.indices.size());
    for (auto i : batch.indices) out.push_back(&samples_.at(i));
    return out;
  }

 private:
  std::vector<TrainingSample> samples_;
  std::size_t watermark_{0};
  std::size_t min_size_;
};

inline void buffer_add(ReplayBuffer& buffer, TrainingSample sample) { buffer.add(std::move(sample)); }

inline std::vector<const TrainingSample*> buffer_sample(ReplayBuffer& buffer, std::size_t batch_size, Rng& rng) {
  return buffer.resolve(buffer.sample(batch_size, rng));
}

}  // namespace gfn4rec
