// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "env_fixtures.hpp"
#include "gfn4rec/gfn4rec.hpp"
#include "gradcheck.hpp"
#include "metric_oracles.hpp"
#include "policy_fixtures.hpp"

using namespace gfn4rec;
using namespace gfn4rec::testing;

namespace {

struct Outcome {
  bool pass{true};
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += "failed: " + what;
    }
  }
  void note(const std::string& s) {
    if (!detail.empty()) detail += "; ";
    detail += s;
  }
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Enumeration environment: one user, |C| = 8, K = 2. Item i answers the three
// behaviors with the bits of i-1, weighted 1, 0.5, 0.25, so item rewards are
// all distinct and the 56 ordered slates have deterministic list rewards.

constexpr int kEnumItems = 8;
constexpr std::size_t kEnumK = 2;
const GFNBias kEnumBias{.b_z = 1.0, .b_r = 0.1, .b_f = 0.0};

double enum_item_reward(ItemId i) {
  const int bits = i - 1;
  return (bits & 1 ? 1.0 : 0.0) + (bits & 2 ? 0.5 : 0.0) + (bits & 4 ? 0.25 : 0.0);
}

struct EnumEnv {
  UserRequest request = tiny_request({1, 2, 3, 4, 5, 6, 7, 8});
  std::vector<Slate> slates = ordered_slates({1, 2, 3, 4, 5, 6, 7, 8}, kEnumK);
  std::vector<double> rewards;
  std::vector<double> target;  // (R + b_r) / Σ (R + b_r)

  EnumEnv() {
    double total = 0.0;
    for (const auto& s : slates) {
      double r = 0.0;
      for (ItemId i : s.items) r += enum_item_reward(i);
      rewards.push_back(r / static_cast<double>(kEnumK));
      total += rewards.back() + kEnumBias.b_r;
    }
    for (double r : rewards) target.push_back((r + kEnumBias.b_r) / total);
  }
};

const EnumEnv& enum_env() {
  static const EnumEnv env;
  return env;
}

struct TrainedEnum {
  std::unique_ptr<GFNPolicy> policy;
  double final_loss{0.0};
  std::size_t steps{0};
  double seconds{0.0};
};

// Full-batch Adam over all 56 slates until the loss drops below `target`.
TrainedEnum train_enum(FlowObjective objective, double target, std::size_t max_steps) {
  const auto& env = enum_env();
  const auto t0 = std::chrono::steady_clock::now();
  TrainedEnum out;
  out.policy = std::make_unique<GFNPolicy>(tiny_policy_config(static_cast<int>(kEnumK), 16, 32), tiny_space(kEnumItems), 101);
  std::vector<const UserRequest*> reqs(env.slates.size(), &env.request);
  std::vector<const Slate*> slates;
  for (const auto& s : env.slates) slates.push_back(&s);
  nn::Adam opt({.learning_rate = 1e-2});
  for (out.steps = 0; out.steps < max_steps; ++out.steps) {
    const auto tt = out.policy->evaluate(reqs, slates);
    const Tensor loss = objective == FlowObjective::trajectory_balance ? tb_loss(tt, env.rewards, kEnumBias)
                                                                        : db_loss(tt, env.rewards, kEnumBias);
    out.final_loss = loss.item();
    if (out.final_loss < target) break;
    loss.backward();
    opt.step(out.policy->parameters());
  }
  out.seconds = seconds_since(t0);
  return out;
}

std::vector<double> enumerate_probs(const GFNPolicy& policy) {
  const auto& env = enum_env();
  std::vector<double> p;
  for (const auto& s : env.slates) p.push_back(std::exp(policy.trajectory_logprob(env.request, s)));
  return p;
}

const TrainedEnum& trained_tb() {
  static const TrainedEnum t = train_enum(FlowObjective::trajectory_balance, 1e-4, 20000);
  return t;
}

// ---------------------------------------------------------------------------

Outcome criterion_proportionality() {
  Outcome o;
  const auto& t = trained_tb();
  const auto p = enumerate_probs(*t.policy);
  const auto& target = enum_env().target;
  double tv = 0.0, mass = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    tv += std::abs(p[i] - target[i]);
    mass += p[i];
  }
  tv /= 2.0;
  o.note("loss=" + fmt(t.final_loss) + " steps=" + std::to_string(t.steps) + " tv=" + fmt(tv) + " time=" + fmt(t.seconds) + "s");
  o.require(t.final_loss < 1e-4, "loss < 1e-4");
  o.require(std::abs(mass - 1.0) <= 1e-9, "enumerated mass sums to 1");
  o.require(tv <= 0.05, "tv <= 0.05");
  o.require(t.seconds <= 120.0, "runtime <= 2 min");
  return o;
}

Outcome criterion_db_fixed_point() {
  Outcome o;
  const auto& env = enum_env();
  const auto t = train_enum(FlowObjective::detailed_balance, 1e-6, 40000);
  const auto& policy = *t.policy;
  double max_res = 0.0;
  max_res = std::max(max_res, flow_conservation_residual(policy, env.request, {}, kEnumBias));
  for (ItemId a = 1; a <= kEnumItems; ++a) max_res = std::max(max_res, flow_conservation_residual(policy, env.request, {a}, kEnumBias));
  const UserState state = policy.encode_state(env.request);
  double max_leaf = 0.0;
  for (std::size_t i = 0; i < env.slates.size(); ++i) {
    const double f = std::exp(policy.flow_value(state, env.slates[i].items));
    const double want = env.rewards[i] + kEnumBias.b_r;
    max_leaf = std::max(max_leaf, std::abs(f - want) / want);
  }
  o.note("loss=" + fmt(t.final_loss) + " steps=" + std::to_string(t.steps) + " max_residual=" + fmt(max_res) +
         " max_leaf_rel=" + fmt(max_leaf));
  o.require(max_res <= 1e-2, "residual <= 1e-2 at every internal node");
  o.require(max_leaf <= 0.02, "leaf flows within 2% of R + b_r");
  return o;
}

Outcome criterion_gradients() {
  Outcome o;
  double worst_tb = 0.0, worst_db = 0.0, worst_bce = 0.0, worst_enc = 0.0;
  for (std::uint64_t inst = 0; inst < 20; ++inst) {
    Rng rng = make_rng(3000, {inst});
    GFNPolicy policy(tiny_policy_config(2, 4, 5), tiny_space(6, 3), 3100 + inst);
    std::vector<UserRequest> reqs;
    std::vector<Slate> slates;
    std::vector<double> rewards;
    for (int n = 0; n < 3; ++n) {
      std::vector<HistoryEntry> hist;
      const auto h = uniform_index(rng, 4);
      for (std::size_t j = 0; j < h; ++j) hist.push_back({1 + static_cast<ItemId>(uniform_index(rng, 6)), {static_cast<std::uint8_t>(uniform_index(rng, 2))}});
      reqs.push_back(tiny_request({1, 2, 3, 4, 5, 6}, 1 + static_cast<UserId>(uniform_index(rng, 3)), hist));
      slates.push_back(testing::random_slate(6, 2, rng));
      rewards.push_back(2.0 * uniform01(rng));
    }
    const auto rp = detail::pointers(reqs);
    const auto sp = detail::pointers(slates);
    const GFNBias bias{.b_z = 0.2 + uniform01(rng), .b_r = 0.05 + uniform01(rng), .b_f = uniform01(rng)};
    worst_tb = std::max(worst_tb, check_gradients(policy.parameters(), [&] { return tb_loss(policy.evaluate(rp, sp), rewards, bias); }).max_rel_error);
    worst_db = std::max(worst_db, check_gradients(policy.parameters(), [&] { return db_loss(policy.evaluate(rp, sp), rewards, bias); }).max_rel_error);

    Tensor z = Tensor::parameter(nn::random_normal(3, 4, 1.5, rng));
    Matrix labels(3, 4);
    for (ag::Index i = 0; i < labels.size(); ++i) labels.data()[i] = uniform01(rng);
    worst_bce = std::max(worst_bce, check_gradients({{"z", z}}, [&] { return rbce_loss(ag::sigmoid(z), labels); }).max_rel_error);

    // Encoder forward through a random linear read-out.
    nn::ParameterStore store;
    Rng init = make_rng(3200, {inst});
    FeatureSpace space = tiny_space(6, 3, 2);
    ItemKernel items(store, "enc.items", space.items, 4, init);
    RequestEncoder encoder(store, "enc", {.embed_dim = 4, .history_len = 4, .n_heads = 2, .n_layers = 2, .state_dim = 3}, space,
                           items, init);
    std::vector<UserRequest> ereqs;
    for (int n = 0; n < 3; ++n) {
      std::vector<HistoryEntry> hist;
      const auto h = uniform_index(rng, 6);
      for (std::size_t j = 0; j < h; ++j) {
        hist.push_back({1 + static_cast<ItemId>(uniform_index(rng, 6)),
                        {static_cast<std::uint8_t>(uniform_index(rng, 2)), static_cast<std::uint8_t>(uniform_index(rng, 2))}});
      }
      ereqs.push_back(tiny_request({1, 2, 3, 4, 5, 6}, 1 + n, hist));
    }
    const auto ep = detail::pointers(ereqs);
    const Tensor w = Tensor::constant(nn::random_normal(3, 3, 1.0, rng));
    worst_enc = std::max(worst_enc, check_gradients(store, [&] { return ag::sum(ag::mul(encoder.encode(ep), w)); }).max_rel_error);
  }
  o.note("tb=" + fmt(worst_tb) + " db=" + fmt(worst_db) + " rbce=" + fmt(worst_bce) + " encoder=" + fmt(worst_enc));
  o.require(worst_tb <= 1e-4, "tb_loss gradients");
  o.require(worst_db <= 1e-4, "db_loss gradients");
  o.require(worst_bce <= 1e-4, "rbce_loss gradients");
  o.require(worst_enc <= 1e-4, "encoder gradients");
  return o;
}

Outcome criterion_completeness() {
  Outcome o;
  double worst = 0.0;
  for (auto [n, k] : {std::pair{4, 2}, std::pair{5, 3}}) {
    std::vector<ItemId> items(static_cast<std::size_t>(n));
    std::iota(items.begin(), items.end(), 1);
    const auto slates = ordered_slates(items, static_cast<std::size_t>(k));
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      GFNPolicy policy(tiny_policy_config(k), tiny_space(n), 4000 + seed);
      const auto req = tiny_request(items);
      double total = 0.0;
      for (const auto& s : slates) total += std::exp(policy.trajectory_logprob(req, s));
      worst = std::max(worst, std::abs(total - 1.0));
    }
  }
  o.note("max |sum - 1| = " + fmt(worst));
  o.require(worst <= 1e-9, "probabilities sum to 1 +- 1e-9");
  return o;
}

Outcome criterion_metrics() {
  Outcome o;
  Rng rng(5000);
  double worst = 0.0;
  bool nan_agree = true;
  std::size_t cov_mismatch = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(uniform_index(rng, 6));
    const int k = 2 + static_cast<int>(uniform_index(rng, 4));
    Matrix rewards(n, k), scores(n, k);
    for (ag::Index i = 0; i < rewards.size(); ++i) {
      rewards.data()[i] = std::round(uniform01(rng) * 6) / 2;
      scores.data()[i] = std::round(standard_normal(rng) * 2) / 2;
    }
    const double nd = r_ndcg(rewards, scores), nd_ref = brute_r_ndcg(rewards, scores);
    if (std::isnan(nd_ref) || std::isnan(nd)) {
      nan_agree = nan_agree && std::isnan(nd_ref) && std::isnan(nd);
    } else {
      worst = std::max(worst, std::abs(nd - nd_ref));
    }
    worst = std::max(worst, std::abs(r_mrr(rewards, scores) - brute_r_mrr(rewards, scores)));
    const Matrix emb = nn_like_random(12, 3, rng);
    const auto sim = cosine_similarity01(emb);
    std::vector<Slate> slates;
    for (int u = 0; u < n; ++u) slates.push_back(testing::random_slate(12, static_cast<std::size_t>(k), rng));
    for (const auto& s : slates) worst = std::max(worst, std::abs(ild(s, sim) - brute_ild(s, sim)));
    cov_mismatch += coverage(slates) != brute_coverage(slates);
  }
  // Hand-enumerated batches.
  Matrix r(2, 1), s(2, 1);
  r << 2, 1;
  s << 0.9, 0.1;
  const bool perfect = r_ndcg(r, s) == 1.0 && r_mrr(r, s) == 1.25;
  s << 0.1, 0.9;
  const bool swapped = std::abs(r_ndcg(r, s) - 0.8) <= 1e-15 && r_mrr(r, s) == 1.0;
  const bool ild_orth = std::abs(ild(Slate{{1, 2, 3, 4}}, cosine_similarity01(Matrix::Identity(4, 4))) - 0.5) <= 1e-15;
  const bool cov = coverage(std::vector<Slate>{Slate{{1, 2, 3}}, Slate{{3, 2, 1}}}) == 3 &&
                   coverage(std::vector<Slate>{Slate{{1, 2, 3}}, Slate{{4, 5, 6}}}) == 6;
  o.note("max deviation=" + fmt(worst));
  o.require(worst <= 1e-9, "brute-force agreement to 1e-9");
  o.require(nan_agree, "undefined R-NDCG agrees");
  o.require(cov_mismatch == 0, "coverage agreement");
  o.require(perfect, "perfect ranking gives R-NDCG = 1");
  o.require(swapped && ild_orth && cov, "hand-enumerated examples");
  return o;
}

InteractionLog random_log(int n_users, int n_items, int n_rows, Rng& rng) {
  InteractionLog log{{"click", "like"}, {}};
  for (int r = 0; r < n_rows; ++r) {
    Interaction row;
    // Skewed popularity so that the 20-core actually removes entities.
    row.user = 1 + static_cast<UserId>(std::min<std::size_t>(uniform_index(rng, static_cast<std::size_t>(n_users)),
                                                             uniform_index(rng, static_cast<std::size_t>(n_users))));
    row.item = 1 + static_cast<ItemId>(std::min<std::size_t>(uniform_index(rng, static_cast<std::size_t>(n_items)),
                                                             uniform_index(rng, static_cast<std::size_t>(n_items))));
    row.timestamp = static_cast<std::int64_t>(uniform_index(rng, 100000));
    row.response = {static_cast<std::uint8_t>(uniform_index(rng, 2)), static_cast<std::uint8_t>(uniform_index(rng, 2))};
    log.rows.push_back(row);
  }
  return log;
}

Outcome criterion_data_pipeline() {
  Outcome o;
  Rng rng(6000);
  const auto log = random_log(120, 90, 8000, rng);
  const auto core = k_core_filter(log, 20);
  std::map<UserId, int> uc;
  std::map<ItemId, int> ic;
  for (const auto& r : core.log.rows) ++uc[r.user], ++ic[r.item];
  bool core_ok = !core.log.rows.empty();
  for (auto [_, c] : uc) core_ok = core_ok && c >= 20;
  for (auto [_, c] : ic) core_ok = core_ok && c >= 20;
  const auto again = k_core_filter(core.log, 20);
  const bool fixpoint = again.removed_rows == 0 && again.log.rows.size() == core.log.rows.size();

  IdMaps maps;
  for (int u = 1; u <= 120; ++u) maps.users.intern("u" + std::to_string(u));
  for (int i = 1; i <= 90; ++i) maps.items.intern("i" + std::to_string(i));
  const auto compact = compact_ids(core.log, maps);
  const auto spec = BehaviorSpec::uniform({"click", "like"});
  const std::size_t k = 6, n_test = 2;
  const auto samples = segment_into_slates(compact, spec, ProfileTable::ids_only(static_cast<int>(maps.users.size())),
                                           all_items(static_cast<int>(maps.items.size())), {.slate_size = k, .history_len = 50});
  bool lengths = !samples.empty();
  for (const auto& s : samples) lengths = lengths && s.slate.size() == k;

  const auto split = split_train_test(samples, n_test);
  std::map<UserId, std::vector<std::int64_t>> ts;
  for (const auto& s : samples) ts[s.request.user_id].push_back(s.timestamp);
  std::map<UserId, std::vector<std::int64_t>> test_ts;
  for (const auto& s : split.test) test_ts[s.request.user_id].push_back(s.timestamp);
  bool last_n = split.train.size() + split.test.size() == samples.size();
  for (auto& [u, all] : ts) {
    std::sort(all.begin(), all.end());
    auto got = test_ts[u];
    std::sort(got.begin(), got.end());
    const std::size_t m = std::min(n_test, all.size());
    last_n = last_n && got == std::vector<std::int64_t>(all.end() - static_cast<std::ptrdiff_t>(m), all.end());
  }
  o.note("rows " + std::to_string(log.rows.size()) + " -> " + std::to_string(core.log.rows.size()) + ", slates " +
         std::to_string(samples.size()));
  o.require(core.removed_rows > 0, "corpus exercises the filter");
  o.require(core_ok, "20-core postcondition");
  o.require(fixpoint, "k_core_filter fixpoint");
  o.require(lengths, "all slates have length K");
  o.require(last_n, "test split is the last N slates per user");
  return o;
}

// Criterion-9 environment, built once per seed.
const PlantedEnv& planted(std::uint64_t seed) {
  static std::map<std::uint64_t, PlantedEnv> cache;
  auto it = cache.find(seed);
  if (it == cache.end()) it = cache.emplace(seed, make_env(seed, 20, 50, 4, 0.2)).first;
  return it->second;
}

Outcome criterion_buffer() {
  Outcome o;
  const auto& env = planted(1);
  auto oc = small_online(71, 500);
  oc.warmup_episodes = 10;
  oc.eval_every = 0;
  std::size_t batches = 0, bad = 0, draws = 0;
  constexpr int kBins = 10;
  std::vector<double> observed(kBins, 0.0), expected(kBins, 0.0);
  OnlineHooks hooks;
  hooks.on_batch = [&](std::int64_t, const BufferBatch& b, const ReplayBuffer& buf) {
    ++batches;
    const std::size_t n = b.indices.size();
    bad += n != oc.batch_size || b.n_new != n / 2 || b.buffer_size != buf.size();
    for (std::size_t i = 0; i < b.n_new; ++i) bad += b.indices[i] < b.new_pool_begin || b.indices[i] >= b.buffer_size;
    // Bin j holds indices with floor(10 idx / size) = j; its exact share is count / size.
    std::vector<double> share(kBins, 0.0);
    for (std::size_t idx = 0; idx < b.buffer_size; ++idx) share[idx * kBins / b.buffer_size] += 1.0 / static_cast<double>(b.buffer_size);
    for (std::size_t i = b.n_new; i < n; ++i) {
      if (b.indices[i] >= b.buffer_size) {
        ++bad;
        continue;
      }
      observed[b.indices[i] * kBins / b.buffer_size] += 1.0;
      ++draws;
      for (int j = 0; j < kBins; ++j) expected[static_cast<std::size_t>(j)] += share[static_cast<std::size_t>(j)];
    }
  };
  auto model = make_recommender(env.model("gfn_tb"), env.space, env.spec, 7);
  run_online(*model, *env.sim, env.pool, oc, hooks);
  double chi2 = 0.0;
  for (int j = 0; j < kBins; ++j) {
    const auto u = static_cast<std::size_t>(j);
    chi2 += (observed[u] - expected[u]) * (observed[u] - expected[u]) / expected[u];
  }
  // df = 9; upper 1% point of chi-square(9).
  const double critical = 21.666;
  o.note("batches=" + std::to_string(batches) + " uniform draws=" + std::to_string(draws) + " chi2=" + fmt(chi2));
  o.require(batches == 500, "500 instrumented steps");
  o.require(bad == 0, "every batch is half new, half uniform");
  o.require(chi2 < critical, "chi-square non-rejecting at alpha = 0.01");
  return o;
}

Outcome criterion_log_scale() {
  Outcome o;
  const auto& env = enum_env();
  const auto p = enumerate_probs(*trained_tb().policy);
  std::vector<std::size_t> order(env.slates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return env.rewards[a] > env.rewards[b]; });
  double worst = 0.0;
  const std::size_t top = order[0];
  for (std::size_t j = 1; j < 5; ++j) {
    const std::size_t other = order[j];
    const double model_ratio = p[top] / p[other];
    const double reward_ratio = (env.rewards[top] + kEnumBias.b_r) / (env.rewards[other] + kEnumBias.b_r);
    worst = std::max(worst, std::abs(model_ratio / reward_ratio - 1.0));
  }

  // Independent per-item logits trained with rbce toward scaled item rewards,
  // then used as a sequential softmax over the remaining items.
  double r_max = 0.0;
  for (ItemId i = 1; i <= kEnumItems; ++i) r_max = std::max(r_max, enum_item_reward(i));
  Matrix labels(1, kEnumItems);
  for (ItemId i = 1; i <= kEnumItems; ++i) labels(0, i - 1) = scale_reward(enum_item_reward(i), 0.0, r_max);
  nn::ParameterStore store;
  Tensor s = store.add("scores", Matrix::Zero(1, kEnumItems));
  nn::Adam opt({.learning_rate = 0.05});
  for (int step = 0; step < 2000; ++step) {
    rbce_loss(ag::sigmoid(s), labels).backward();
    opt.step(store);
  }
  const Matrix logits = s.value();
  auto softmax_prob = [&](const Slate& slate) {
    double prob = 1.0;
    std::set<ItemId> used;
    for (ItemId a : slate.items) {
      double z = 0.0;
      for (ItemId i = 1; i <= kEnumItems; ++i)
        if (!used.count(i)) z += std::exp(logits(0, i - 1));
      prob *= std::exp(logits(0, a - 1)) / z;
      used.insert(a);
    }
    return prob;
  };
  // Both orders of the best item pair tie for the top reward; compare the mass on that set.
  double top_prob = 0.0, top_share = 0.0;
  for (std::size_t i = 0; i < env.slates.size(); ++i) {
    if (env.rewards[i] != env.rewards[top]) continue;
    top_prob += softmax_prob(env.slates[i]);
    top_share += env.target[i];
  }
  o.note("max ratio deviation=" + fmt(worst) + " rbce top-1 prob=" + fmt(top_prob) + " reward share=" + fmt(top_share));
  o.require(worst <= 0.10, "top-5 probability ratios within 10% of reward ratios");
  o.require(top_prob > top_share, "rbce softmax concentrates beyond the reward share");
  return o;
}

struct WindowStats {
  double avg_r{0.0};
  double coverage{0.0};
};

WindowStats window_stat(const RunLog& log, const std::string& label) {
  const auto w = window_averages(log.records, 100).at(label);
  return {w.at("avg_r").get<double>(), w.at("coverage").get<double>()};
}

Outcome criterion_greedy_vs_explore() {
  Outcome o;
  double g_r = 0, e_r = 0, g_c = 0, e_c = 0, cf_c = 0;
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  for (auto seed : seeds) {
    const auto& env = planted(seed);
    auto oc = small_online(seed, 1000);
    oc.eval_every = 10;
    oc.evaluate_random = false;
    auto gfn = make_recommender(env.model("gfn_tb"), env.space, env.spec, seed);
    const auto log = run_online(*gfn, *env.sim, env.pool, oc);
    auto cf = make_recommender(env.model("cf"), env.space, env.spec, seed);
    const auto cf_log = run_online(*cf, *env.sim, env.pool, oc);
    const auto g = window_stat(log, "gfn_tb/greedy"), e = window_stat(log, "gfn_tb/explore"), c = window_stat(cf_log, "cf/greedy");
    g_r += g.avg_r, e_r += e.avg_r, g_c += g.coverage, e_c += e.coverage, cf_c += c.coverage;
  }
  const double n = static_cast<double>(seeds.size());
  g_r /= n, e_r /= n, g_c /= n, e_c /= n, cf_c /= n;
  o.note("greedy r=" + fmt(g_r) + " cov=" + fmt(g_c) + "; explore r=" + fmt(e_r) + " cov=" + fmt(e_c) + "; cf cov=" + fmt(cf_c));
  o.require(g_c < e_c, "greedy coverage < explore coverage");
  o.require(g_r >= e_r, "greedy reward >= explore reward");
  o.require(e_c >= 2.0 * cf_c, "explore coverage >= 2x CF coverage");
  return o;
}

std::vector<TrainingSample> planted_samples(const PlantedWorld& w, int rows, std::uint64_t seed) {
  Rng rng(seed);
  const auto log = sample_planted_log(w, rows, true, rng);
  return segment_into_slates(log, BehaviorSpec::uniform(w.cfg.behaviors), ProfileTable::ids_only(w.cfg.n_users),
                             all_items(w.cfg.n_items), {.slate_size = 4, .history_len = 5});
}

Outcome criterion_simulator() {
  Outcome o;
  const auto world = make_planted_world({.n_users = 20, .n_items = 50, .behaviors = {"b0", "b1"}, .seed = 2});
  const auto train = planted_samples(world, 200, 5);
  const auto valid = planted_samples(world, 40, 6);
  const auto spec = BehaviorSpec::uniform(world.cfg.behaviors);
  SimulatorConfig sc{.rho = 0.2, .seed = 8, .behaviors = spec,
                     .encoder = {.embed_dim = 8, .history_len = 5, .n_heads = 2, .n_layers = 1, .state_dim = 8}};
  UserSimulator sim(sc, id_feature_space(20, 50, 2));
  const auto report = train_response_model(sim, train, valid, {.epochs = 15, .batch_size = 64, .seed = 7});
  const double auc = *std::min_element(report.auc.begin(), report.auc.end());

  // Same base logits, duplicate-heavy vs orthogonal embeddings.
  const auto& req = valid.front().request;
  const Slate slate = valid.front().slate;
  const Matrix logits = sim.slate_logits(req, slate);
  const Matrix dup = Matrix::Ones(4, 4), orth = Matrix::Identity(4, 4);
  auto expect = [&](const Matrix& emb) {
    const Matrix p = modified_probabilities(logits, emb, sim.rho());
    return p.sum() / static_cast<double>(slate.size());
  };
  auto variance = [&](const Matrix& emb) {
    const Matrix p = modified_probabilities(logits, emb, sim.rho());
    return (p.array() * (1.0 - p.array())).sum() / std::pow(static_cast<double>(slate.size()), 2);
  };
  const int draws = 10000;
  Rng rng(9);
  double sum_dup = 0.0, sum_orth = 0.0;
  for (int d = 0; d < draws; ++d) {
    sum_dup += compute_list_reward(respond_with_logits(logits, dup, sim.rho(), rng), spec);
    sum_orth += compute_list_reward(respond_with_logits(logits, orth, sim.rho(), rng), spec);
  }
  const double m_dup = sum_dup / draws, m_orth = sum_orth / draws;
  const double sd_dup = std::sqrt(variance(dup) / draws), sd_orth = std::sqrt(variance(orth) / draws);
  const bool mc_ok = m_dup + 3 * sd_dup < m_orth - 3 * sd_orth && std::abs(m_dup - expect(dup)) <= 3 * sd_dup &&
                     std::abs(m_orth - expect(orth)) <= 3 * sd_orth;

  // rho = 0: probabilities and draws equal the base model bit-for-bit.
  sim.set_rho(0.0);
  bool base_ok = true;
  for (std::size_t n = 0; n < 20; ++n) {
    const auto& s = valid[n];
    const Matrix l = sim.slate_logits(s.request, s.slate);
    const Matrix p = sim.response_probabilities(s.request, s.slate);
    Rng a(100 + n), b(100 + n);
    const auto y = sim.respond(s.request, s.slate, a).responses;
    for (ag::Index bh = 0; bh < l.rows(); ++bh) {
      for (ag::Index i = 0; i < l.cols(); ++i) {
        base_ok = base_ok && p(bh, i) == sigmoid(l(bh, i));
        base_ok = base_ok && y.at(static_cast<std::size_t>(bh), static_cast<std::size_t>(i)) == (uniform01(b) < sigmoid(l(bh, i)) ? 1 : 0);
      }
    }
  }
  o.note("min auc=" + fmt(auc) + " dup=" + fmt(m_dup) + " orth=" + fmt(m_orth) + " (3sd " + fmt(3 * sd_dup) + "/" + fmt(3 * sd_orth) + ")");
  o.require(auc >= 0.95, "response AUC >= 0.95");
  o.require(mc_ok, "duplicate-heavy slate earns less by a 3-sigma margin");
  o.require(base_ok, "rho = 0 reproduces the base model");
  return o;
}

Outcome criterion_smoke() {
  Outcome o;
  const auto& env = planted(1);
  auto oc = small_online(11, 2000);
  oc.eval_every = 10;
  auto run = [&] {
    auto model = make_recommender(env.model("gfn_tb"), env.space, env.spec, 11);
    return run_online(*model, *env.sim, env.pool, oc);
  };
  const auto t0 = std::chrono::steady_clock::now();
  RunLog a, b;
  bool completed = true;
  try {
    a = run();
    b = run();
  } catch (const DivergenceError& e) {
    completed = false;
    o.note(std::string("diverged: ") + e.what());
  }
  if (!completed) {
    o.require(false, "run completes without divergence");
    return o;
  }
  const double greedy = window_stat(a, "gfn_tb/greedy").avg_r;
  const double random = window_stat(a, "random").avg_r;
  const bool same = a.to_jsonl() == b.to_jsonl() && a.losses == b.losses && a.episode_rewards == b.episode_rewards;
  o.note("gfn_tb greedy=" + fmt(greedy) + " random=" + fmt(random) + " lift=" + fmt(greedy / random - 1.0) +
         " time(2 runs)=" + fmt(seconds_since(t0)) + "s");
  o.require(a.training_steps == 2000, "2000 training steps");
  o.require(greedy >= 1.2 * random, "reward >= 1.2x random");
  o.require(same, "bit-reproducible");
  return o;
}

Outcome criterion_sweep() {
  Outcome o;
  std::vector<ParamPoint> calls;
  auto objective = [&](const ParamPoint& p) {
    calls.push_back(p);
    return -std::pow(p.at("b_f") - 1.2 * p.at("b_r") - 0.4, 2) - 0.05 * std::pow(p.at("b_r") - 1.0, 2);
  };
  const std::vector<double> bf{0.1, 0.5, 1.0, 1.5, 2.0}, br{0.1, 0.3, 1.0, 1.5};
  const auto r = line_search({{{"b_f", bf}, {"b_r", br}}, {{"b_z", 1.0}}, 2}, objective);

  // Expected schedule, replayed independently.
  std::vector<std::pair<std::string, ParamPoint>> want;
  ParamPoint cur{{"b_f", bf[0]}, {"b_r", br[0]}, {"b_z", 1.0}};
  for (int round = 0; round < 2; ++round) {
    for (const auto& [name, grid] : {std::pair{std::string("b_f"), bf}, std::pair{std::string("b_r"), br}}) {
      double best = -1e300, best_v = grid[0];
      for (double v : grid) {
        ParamPoint p = cur;
        p[name] = v;
        want.emplace_back(name, p);
        const double sc = -std::pow(p.at("b_f") - 1.2 * p.at("b_r") - 0.4, 2) - 0.05 * std::pow(p.at("b_r") - 1.0, 2);
        if (sc > best) best = sc, best_v = v;
      }
      cur[name] = best_v;
    }
  }
  bool schedule = r.table.size() == want.size() && calls.size() == want.size();
  for (std::size_t i = 0; schedule && i < want.size(); ++i) {
    schedule = r.table[i].searched == want[i].first && r.table[i].point == want[i].second && calls[i] == want[i].second &&
               r.table[i].round == (i < 9 ? 1 : 2);
  }
  std::size_t arg = 0;
  for (std::size_t i = 0; i < r.table.size(); ++i)
    if (r.table[i].score > r.table[arg].score) arg = i;
  const bool argmax = r.best == r.table[arg].point && r.best_score == r.table[arg].score;

  // Value sets enumerated per round equal the configured grids.
  bool sets = true;
  for (int round = 1; round <= 2; ++round) {
    std::vector<double> seen_f, seen_r;
    for (const auto& row : r.table) {
      if (row.round != round) continue;
      (row.searched == "b_f" ? seen_f : seen_r).push_back(row.point.at(row.searched));
    }
    sets = sets && seen_f == bf && seen_r == br;
  }

  // The reference config file carries the same grids.
  bool config_grids = false;
  try {
    const auto settings = settings_from_config(Config::load(GFN4REC_SOURCE_DIR "/configs/reference.ini"));
    const auto& axes = require_sweep_axes(settings);
    config_grids = settings.sweep_mode == "line" && settings.sweep_rounds == 2 && axes.size() >= 2 && axes[0].first == "b_f" &&
                   axes[0].second == bf && axes[1].first == "b_r" && axes[1].second == br;
  } catch (const std::exception& e) {
    o.note(std::string("reference config: ") + e.what());
  }
  o.note("rows=" + std::to_string(r.table.size()) + " best b_f=" + fmt(r.best.at("b_f")) + " b_r=" + fmt(r.best.at("b_r")));
  o.require(schedule, "fixing order b_f then b_r for two rounds");
  o.require(argmax, "result is the table argmax");
  o.require(sets, "each round enumerates the full value sets");
  o.require(config_grids, "reference config lists the same grids");
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"proportionality", criterion_proportionality},
      {"db fixed point", criterion_db_fixed_point},
      {"gradient correctness", criterion_gradients},
      {"probability completeness", criterion_completeness},
      {"metric oracles", criterion_metrics},
      {"data pipeline", criterion_data_pipeline},
      {"buffer contract", criterion_buffer},
      {"log-scale vs reward-scale", criterion_log_scale},
      {"greedy vs explore", criterion_greedy_vs_explore},
      {"simulator sanity", criterion_simulator},
      {"end-to-end smoke", criterion_smoke},
      {"sweep mechanics", criterion_sweep},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    failed += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
