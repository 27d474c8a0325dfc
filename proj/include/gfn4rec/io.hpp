#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gfn4rec/checkpoint.hpp"
#include "gfn4rec/data.hpp"
#include "gfn4rec/encoder.hpp"
#include "gfn4rec/metrics.hpp"

namespace gfn4rec {

// A prepared dataset directory holds meta.json, train.jsonl and test.jsonl.
// Samples store ids, history, slate and responses; profiles and the
// candidate set (all items) are restored from meta.json on load.

struct DatasetMeta {
  BehaviorSpec behaviors;
  int n_users{0};
  int n_items{0};
  std::size_t slate_size{0};
  std::size_t history_len{0};
  ItemCatalog items;
  ProfileTable profiles;
  nlohmann::json id_maps = nlohmann::json::object();
  nlohmann::json summary = nlohmann::json::object();

  FeatureSpace feature_space() const {
    FeatureSpace s;
    s.items = items;
    s.profile_vocab = std::max(1, profiles.vocab);
    s.profile_real = profiles.n_real;
    s.n_behaviors = static_cast<int>(behaviors.size());
    return s;
  }
};

struct Dataset {
  DatasetMeta meta;
  std::vector<TrainingSample> train;
  std::vector<TrainingSample> test;
};

inline nlohmann::json to_json(const DatasetMeta& m) {
  std::vector<std::vector<std::int32_t>> profiles;
  for (const auto& p : m.profiles.by_user) profiles.push_back(p.categorical);
  return {{"behaviors", m.behaviors.names},
          {"weights", m.behaviors.weights},
          {"n_users", m.n_users},
          {"n_items", m.n_items},
          {"slate_size", m.slate_size},
          {"history_len", m.history_len},
          {"item_feature_vocab", m.items.feature_vocab},
          {"item_features", m.items.features},
          {"profile_vocab", m.profiles.vocab},
          {"profiles", profiles},
          {"id_maps", m.id_maps},
          {"summary", m.summary}};
}

inline DatasetMeta meta_from_json(const nlohmann::json& j) {
  try {
    DatasetMeta m;
    m.behaviors.names = j.at("behaviors").get<std::vector<std::string>>();
    m.behaviors.weights = j.at("weights").get<std::vector<double>>();
    m.behaviors.validate();
    m.n_users = j.at("n_users").get<int>();
    m.n_items = j.at("n_items").get<int>();
    m.slate_size = j.at("slate_size").get<std::size_t>();
    m.history_len = j.at("history_len").get<std::size_t>();
    m.items.n_items = m.n_items;
    m.items.feature_vocab = j.at("item_feature_vocab").get<int>();
    m.items.features = j.at("item_features").get<std::vector<std::vector<std::int32_t>>>();
    m.profiles.vocab = j.at("profile_vocab").get<int>();
    for (const auto& p : j.at("profiles").get<std::vector<std::vector<std::int32_t>>>()) {
      m.profiles.by_user.push_back(UserProfile{p, {}});
    }
    m.id_maps = j.value("id_maps", nlohmann::json::object());
    m.summary = j.value("summary", nlohmann::json::object());
    if (m.items.features.size() != static_cast<std::size_t>(m.n_items) + 1 ||
        m.profiles.by_user.size() != static_cast<std::size_t>(m.n_users) + 1) {
      throw DataError("dataset meta tables do not match n_users/n_items");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed dataset meta: ") + e.what());
  }
}

inline nlohmann::json sample_to_json(const TrainingSample& s) {
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& h : s.request.history) hist.push_back({h.item, h.response});
  std::vector<std::vector<std::uint8_t>> resp;
  for (std::size_t b = 0; b < s.responses.n_behaviors(); ++b) {
    std::vector<std::uint8_t> row;
    for (std::size_t k = 0; k < s.responses.slate_size(); ++k) row.push_back(s.responses.at(b, k));
    resp.push_back(std::move(row));
  }
  return {{"user", s.request.user_id}, {"history", hist},         {"slate", s.slate.items},
          {"responses", resp},         {"reward", s.reward},        {"timestamp", s.timestamp}};
}

inline TrainingSample sample_from_json(const nlohmann::json& j, const DatasetMeta& meta, const CandidateSet& candidates) {
  TrainingSample s;
  s.request.user_id = j.at("user").get<UserId>();
  s.request.profile = meta.profiles.at(s.request.user_id);
  s.request.candidates = candidates;
  for (const auto& h : j.at("history")) s.request.history.push_back({h.at(0).get<ItemId>(), h.at(1).get<ResponseVector>()});
  s.slate.items = j.at("slate").get<std::vector<ItemId>>();
  const auto resp = j.at("responses").get<std::vector<std::vector<std::uint8_t>>>();
  if (resp.size() != meta.behaviors.size()) throw DataError("sample responses do not match the behavior count");
  s.responses = MultiBehaviorResponse(resp.size(), s.slate.size());
  for (std::size_t b = 0; b < resp.size(); ++b) {
    if (resp[b].size() != s.slate.size()) throw DataError("sample responses do not match the slate length");
    for (std::size_t k = 0; k < resp[b].size(); ++k) s.responses.set(b, k, resp[b][k]);
  }
  s.reward = j.at("reward").get<double>();
  s.timestamp = j.at("timestamp").get<std::int64_t>();
  validate_slate(s.slate, s.request, meta.slate_size);
  if (s.reward != compute_list_reward(s.responses, meta.behaviors)) throw DataError("stored reward differs from recomputed reward");
  return s;
}

inline std::string samples_to_jsonl(const std::vector<TrainingSample>& samples) {
  std::string out;
  for (const auto& s : samples) out += sample_to_json(s).dump() + "\n";
  return out;
}

inline std::vector<TrainingSample> read_samples(const std::filesystem::path& path, const DatasetMeta& meta) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open samples file: " + path.string());
  const auto candidates = all_items(meta.n_items);
  std::vector<TrainingSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(sample_from_json(nlohmann::json::parse(line), meta, candidates));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const PreconditionError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_dataset(const std::filesystem::path& dir, const Dataset& d) {
  write_file_atomic(dir / "meta.json", to_json(d.meta).dump(1) + "\n");
  write_file_atomic(dir / "train.jsonl", samples_to_jsonl(d.train));
  write_file_atomic(dir / "test.jsonl", samples_to_jsonl(d.test));
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset d;
  try {
    d.meta = meta_from_json(nlohmann::json::parse(read_file(dir / "meta.json")));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed dataset meta: ") + e.what());
  }
  d.train = read_samples(dir / "train.jsonl", d.meta);
  d.test = read_samples(dir / "test.jsonl", d.meta);
  return d;
}

/// Metric records of a JSONL run log.
inline std::vector<MetricsRecord> read_metrics_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open run log: " + path.string());
  std::vector<MetricsRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(metrics_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed run log " + path.string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace gfn4rec
