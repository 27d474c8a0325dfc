// gfn4rec command-line entry points. Exit codes: 0 success, 2 config error,
// 3 data error, 4 numeric divergence, 1 anything else.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "gfn4rec/gfn4rec.hpp"

namespace fs = std::filesystem;
using namespace gfn4rec;

namespace {

struct Common {
  std::string config;
  std::string data;
  std::string simulator;
  std::string model;
  std::optional<std::uint64_t> seed;
  std::string out;
};

Config load_config(const Common& c) {
  Config cfg = c.config.empty() ? Config{} : Config::load(c.config);
  if (!c.model.empty()) cfg.set("model.kind", c.model);
  if (c.seed) {
    cfg.set("train.seed", std::to_string(*c.seed));
    cfg.set("run.seeds", std::to_string(*c.seed));
  }
  return cfg;
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(1) << "\n"; }

// ---------------------------------------------------------------------------
// Simulator checkpoints carry their own construction parameters.

void save_simulator(const fs::path& path, const UserSimulator& sim) {
  const auto& c = sim.config();
  CheckpointMeta meta{{"model", "simulator"},
                      {"rho", nlohmann::json(c.rho).dump()},
                      {"seed", std::to_string(c.seed)},
                      {"behaviors", nlohmann::json(c.behaviors.names).dump()},
                      {"weights", nlohmann::json(c.behaviors.weights).dump()},
                      {"embed_dim", std::to_string(c.encoder.embed_dim)},
                      {"history_len", std::to_string(c.encoder.history_len)},
                      {"n_heads", std::to_string(c.encoder.n_heads)},
                      {"n_layers", std::to_string(c.encoder.n_layers)}};
  save_checkpoint(path, sim.parameters(), meta);
}

std::unique_ptr<UserSimulator> load_simulator(const fs::path& path, const DatasetMeta& data, std::optional<double> rho) {
  const auto blob = load_checkpoint(path);
  const auto& m = blob.meta;
  if (!m.count("model") || m.at("model") != "simulator") throw ConfigError(path.string() + " is not a simulator checkpoint");
  SimulatorConfig c;
  c.rho = rho.value_or(nlohmann::json::parse(m.at("rho")).get<double>());
  c.seed = std::stoull(m.at("seed"));
  c.behaviors.names = nlohmann::json::parse(m.at("behaviors")).get<std::vector<std::string>>();
  c.behaviors.weights = nlohmann::json::parse(m.at("weights")).get<std::vector<double>>();
  if (c.behaviors.names != data.behaviors.names) throw DataError("simulator behaviors differ from the dataset's");
  c.encoder.embed_dim = c.encoder.state_dim = std::stoi(m.at("embed_dim"));
  c.encoder.history_len = std::stoi(m.at("history_len"));
  c.encoder.n_heads = std::stoi(m.at("n_heads"));
  c.encoder.n_layers = std::stoi(m.at("n_layers"));
  auto sim = std::make_unique<UserSimulator>(c, data.feature_space());
  load_into(sim->parameters(), blob);
  sim->freeze();
  return sim;
}

void check_dataset_fits(const ExperimentSettings& s, const Dataset& d) {
  if (static_cast<std::size_t>(s.model.policy.slate_size) != d.meta.slate_size) {
    throw ConfigError("model.slate_size differs from the dataset's K=" + std::to_string(d.meta.slate_size));
  }
  if (d.train.empty()) throw DataError("dataset has no training samples");
}

// ---------------------------------------------------------------------------
// Commands

int cmd_generate_synthetic(int users, int items, int rows, int latent, std::uint64_t seed, const std::string& out) {
  PlantedWorldConfig wc;
  wc.n_users = users;
  wc.n_items = items;
  wc.latent_dim = latent;
  wc.seed = seed;
  const auto world = make_planted_world(wc);
  Rng rng = make_rng(seed, {1});
  const auto log = sample_planted_log(world, rows, false, rng);
  std::ostringstream csv;
  csv << "user_id,item_id,timestamp";
  for (const auto& b : log.behaviors) csv << "," << b;
  csv << "\n";
  for (const auto& r : log.rows) {
    csv << "u" << r.user << ",i" << r.item << "," << r.timestamp;
    for (auto v : r.response) csv << "," << static_cast<int>(v);
    csv << "\n";
  }
  write_file_atomic(out, csv.str());
  spdlog::info("wrote {} interactions to {}", log.rows.size(), out);
  return 0;
}

BehaviorSpec parse_weights(const std::vector<std::string>& behaviors, const std::string& spec) {
  BehaviorSpec out = BehaviorSpec::uniform(behaviors);
  if (spec.empty()) return out;
  std::istringstream in(spec);
  std::string part;
  while (std::getline(in, part, ',')) {
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw ConfigError("weights must look like name=value,...");
    const auto name = part.substr(0, eq);
    const auto it = std::find(out.names.begin(), out.names.end(), name);
    if (it == out.names.end()) throw ConfigError("weight for unknown behavior '" + name + "'");
    try {
      out.weights[static_cast<std::size_t>(it - out.names.begin())] = std::stod(part.substr(eq + 1));
    } catch (const std::exception&) {
      throw ConfigError("bad weight '" + part + "'");
    }
  }
  out.validate();
  return out;
}

int cmd_prepare_data(const std::string& log_path, const std::string& items_path, const std::string& users_path,
                     int k_core, std::size_t k, std::size_t test_n, std::size_t history_len, const std::string& weights,
                     const std::string& out) {
  IdMaps maps;
  const auto raw = read_interaction_log(log_path, maps);
  const auto filtered = k_core_filter(raw, k_core);
  if (filtered.empty()) throw DataError("k-core filter removed every interaction");
  const auto log = compact_ids(filtered.log, maps);
  const auto item_features = items_path.empty() ? decltype(read_feature_table(items_path)){} : read_feature_table(items_path);
  const auto user_features = users_path.empty() ? decltype(read_feature_table(users_path)){} : read_feature_table(users_path);

  Dataset d;
  d.meta.behaviors = parse_weights(log.behaviors, weights);
  d.meta.n_users = static_cast<int>(maps.users.size());
  d.meta.n_items = static_cast<int>(maps.items.size());
  d.meta.slate_size = k;
  d.meta.history_len = history_len;
  d.meta.items = build_item_catalog(maps, item_features);
  d.meta.profiles = build_profile_table(maps, user_features);
  d.meta.id_maps = maps.to_json();
  auto samples = segment_into_slates(log, d.meta.behaviors, d.meta.profiles, all_items(d.meta.n_items),
                                           {.slate_size = k, .history_len = history_len});
  const std::size_t repeated = drop_repeated_slates(samples);
  auto split = split_train_test(samples, test_n);
  d.train = std::move(split.train);
  d.test = std::move(split.test);
  const auto [lo, hi] = d.meta.behaviors.reward_range();
  d.meta.summary = {{"users", d.meta.n_users},
                    {"items", d.meta.n_items},
                    {"records", log.rows.size()},
                    {"removed_records", filtered.removed_rows},
                    {"train_slates", d.train.size()},
                    {"test_slates", d.test.size()},
                    {"users_without_train", split.users_without_train},
                    {"dropped_repeated_slates", repeated},
                    {"item_reward_range", {lo, hi}}};
  write_dataset(out, d);
  print_json(d.meta.summary);
  return 0;
}

int cmd_train_simulator(const Common& c) {
  const auto cfg = load_config(c);
  const auto s = settings_from_config(cfg);
  const auto d = read_dataset(c.data);
  UserSimulator sim(simulator_config(s, d.meta.behaviors), d.meta.feature_space());
  const auto report = train_response_model(sim, d.train, d.test, s.simulator_train);
  save_simulator(c.out, sim);
  print_json({{"auc", report.auc}, {"epoch_loss", report.epoch_loss}, {"behaviors", d.meta.behaviors.names}});
  return 0;
}

std::optional<double> rho_override(const Config& cfg) {
  return cfg.has("simulator.rho") ? std::optional<double>(cfg.get_double("simulator.rho", 0.0)) : std::nullopt;
}

struct RunOutput {
  RunLog log;
  std::unique_ptr<Recommender> model;
};

void write_run(const fs::path& dir, const RunOutput& r, const ExperimentSettings& s, const Config& cfg,
               std::uint64_t seed) {
  write_file_atomic(dir / "metrics.jsonl", r.log.to_jsonl());
  auto summary = run_summary(r.log, s.summary_window, config_hash(cfg), s.optimizer);
  summary["seed"] = seed;
  write_file_atomic(dir / "summary.json", summary.dump(1) + "\n");
  save_model(dir / "policy.ckpt", *r.model, {{"seed", std::to_string(seed)}, {"config_hash", config_hash(cfg)}});
}

std::map<std::string, double> flatten_final(const nlohmann::json& summary) {
  std::map<std::string, double> out;
  for (const auto& [label, metrics] : summary.at("final").items()) {
    for (const auto& [k, v] : metrics.items()) {
      if (v.is_number() && k != "records") out[label + "." + k] = v.get<double>();
    }
  }
  return out;
}

int cmd_train(const Common& c, bool online) {
  const auto cfg = load_config(c);
  const auto base = settings_from_config(cfg);
  const auto d = read_dataset(c.data);
  check_dataset_fits(base, d);
  std::unique_ptr<UserSimulator> sim;
  if (!c.simulator.empty()) sim = load_simulator(c.simulator, d.meta, rho_override(cfg));
  if (online && !sim) throw ConfigError("train-online needs --simulator");
  const auto space = d.meta.feature_space();
  const fs::path out(c.out);

  const auto agg = run_seeds(base.seeds, [&](std::uint64_t seed) {
    auto s = base;
    s.online.seed = s.offline.seed = seed;
    RunOutput r{{}, make_recommender(s.model, space, d.meta.behaviors, seed)};
    spdlog::info("{} run: model={} seed={}", online ? "online" : "offline", s.model.kind, seed);
    if (online) {
      r.log = run_online(*r.model, *sim, user_pool_from_samples(d.train, s.online.history_cap), s.online);
    } else {
      r.log = run_offline(*r.model, d.train, d.test, d.meta.behaviors, s.offline, sim.get());
    }
    const fs::path dir = base.seeds.size() == 1 ? out : out / ("seed_" + std::to_string(seed));
    write_run(dir, r, s, cfg, seed);
    return flatten_final(run_summary(r.log, s.summary_window, config_hash(cfg), s.optimizer));
  });
  auto j = to_json(agg);
  j["config_hash"] = config_hash(cfg);
  j["model"] = base.model.kind;
  write_file_atomic(out / "aggregate.json", j.dump(1) + "\n");
  print_json(j);
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& policy_path, const std::string& mode, std::size_t batch) {
  const auto cfg = load_config(c);
  const auto s = settings_from_config(cfg);
  const auto d = read_dataset(c.data);
  check_dataset_fits(s, d);
  if (c.simulator.empty()) throw ConfigError("evaluate needs --simulator");
  const auto sim = load_simulator(c.simulator, d.meta, rho_override(cfg));
  auto model = make_recommender(s.model, d.meta.feature_space(), d.meta.behaviors, 0);
  load_model(policy_path, *model);
  GenerationMode m;
  if (mode == "greedy") m = GenerationMode::greedy;
  else if (mode == "explore") m = GenerationMode::explore;
  else throw ConfigError("--mode must be greedy or explore");
  const auto pool = user_pool_from_samples(d.train, static_cast<std::size_t>(s.model.policy.encoder.history_len));
  Rng rng = make_rng(s.online.seed, {detail::kEvalUserStream});
  const auto requests = draw_requests(pool, batch, rng);
  auto rec = evaluate_online(*model, *sim, requests, m, s.online.seed, 0);
  if (!d.test.empty()) {
    const auto [nd, mrr] = evaluate_test(*model, d.test, d.meta.behaviors);
    rec.r_ndcg_test = nd;
    rec.r_mrr_test = mrr;
  }
  std::cout << to_json(rec).dump() << "\n";
  return 0;
}

int cmd_sweep(const Common& c, bool offline) {
  const auto cfg = load_config(c);
  const auto base = settings_from_config(cfg);
  const auto d = read_dataset(c.data);
  check_dataset_fits(base, d);
  if (c.simulator.empty()) throw ConfigError("sweep needs --simulator (selection is on average reward)");
  const auto sim = load_simulator(c.simulator, d.meta, rho_override(cfg));
  const auto space = d.meta.feature_space();
  const auto seed = base.online.seed;
  const std::string label = base.model.kind + "/greedy";
  const auto& axes = require_sweep_axes(base);

  auto objective = [&](const ParamPoint& p) {
    const auto s = with_point(base, p);
    auto model = make_recommender(s.model, space, d.meta.behaviors, seed);
    const auto log = offline ? run_offline(*model, d.train, d.test, d.meta.behaviors, s.offline, sim.get())
                             : run_online(*model, *sim, user_pool_from_samples(d.train, s.online.history_cap), s.online);
    const auto fin = window_averages(log.records, s.summary_window);
    const double score = fin.contains(label) && fin[label]["avg_r"].is_number() ? fin[label]["avg_r"].get<double>()
                                                                                : std::numeric_limits<double>::quiet_NaN();
    spdlog::info("sweep point {} -> {}", nlohmann::json(p).dump(), score);
    return score;
  };

  SweepResult result;
  if (base.sweep_mode == "grid") {
    std::map<std::string, std::vector<double>> grid(axes.begin(), axes.end());
    result = grid_sweep(grid, [&](const ParamPoint& p) {
      ParamPoint full = current_point(base);
      for (const auto& [k, v] : p) full[k] = v;
      return objective(full);
    });
  } else {
    LineSearchSpec spec{axes, current_point(base), base.sweep_rounds};
    for (const auto& [name, values] : axes) spec.start.erase(name);
    result = line_search(spec, objective);
  }
  auto j = to_json(result);
  j["mode"] = base.sweep_mode;
  j["selection"] = label + " avg_r";
  j["config_hash"] = config_hash(cfg);
  const fs::path out(c.out);
  write_file_atomic(out / "sweep.json", j.dump(1) + "\n");
  const auto table = format_sweep_table(result);
  write_file_atomic(out / "table.txt", table);
  std::cout << table;
  return 0;
}

// Curve data: one series per (run file, policy label).
int cmd_plot(const std::vector<std::string>& runs, const std::string& metric, const std::string& policy,
             const std::string& out) {
  static const std::vector<std::string> metrics{"avg_r", "max_r", "coverage", "ild", "r_ndcg_online",
                                                "r_mrr_online", "r_ndcg_test", "r_mrr_test"};
  if (std::find(metrics.begin(), metrics.end(), metric) == metrics.end()) throw ConfigError("unknown metric " + metric);
  struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;
  };
  std::vector<Series> series;
  for (const auto& run : runs) {
    const auto records = read_metrics_log(run);
    if (records.empty()) throw DataError("run log " + run + " is empty");
    std::map<std::string, Series> by_label;
    for (const auto& r : records) {
      if (!policy.empty() && r.policy != policy) continue;
      const auto v = to_json(r).at(metric);
      if (!v.is_number()) continue;
      auto& s = by_label[r.policy];
      s.name = fs::path(run).stem().string() + ":" + r.policy;
      s.points.emplace_back(static_cast<double>(r.step), v.get<double>());
    }
    for (auto& [_, s] : by_label) series.push_back(std::move(s));
  }
  if (series.empty()) throw DataError("no records carry metric " + metric);

  std::ostringstream csv;
  csv.precision(17);
  csv << "series,step," << metric << "\n";
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      csv << s.name << "," << x << "," << y << "\n";
      x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  }
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;

  const double w = 640, h = 400, left = 60, right = 200, top = 30, bottom = 40;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (w - left - right); };
  auto py = [&](double y) { return h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom); };
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << left << "\" y=\"18\" font-size=\"13\">" << metric << " vs step</text>\n"
      << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right << "\" y2=\"" << h - bottom << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << h - bottom << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << left << "\" y=\"" << h - bottom + 15 << "\">" << x0 << "</text>\n"
      << "<text x=\"" << w - right << "\" y=\"" << h - bottom + 15 << "\" text-anchor=\"end\">" << x1 << "</text>\n"
      << "<text x=\"" << left - 5 << "\" y=\"" << h - bottom << "\" text-anchor=\"end\">" << y0 << "</text>\n"
      << "<text x=\"" << left - 5 << "\" y=\"" << top + 5 << "\" text-anchor=\"end\">" << y1 << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = colors[i % 8];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : series[i].points) svg << px(x) << "," << py(y) << " ";
    svg << "\"/>\n<text x=\"" << w - right + 10 << "\" y=\"" << top + 15 * static_cast<double>(i + 1) << "\" fill=\"" << color
        << "\">" << series[i].name << "</text>\n";
  }
  svg << "</svg>\n";
  write_file_atomic(out + ".csv", csv.str());
  write_file_atomic(out + ".svg", svg.str());
  spdlog::info("wrote {}.svg and {}.csv ({} series)", out, out, series.size());
  return 0;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("gfn4rec");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("GFN4REC_LOG_LEVEL")) spdlog::set_level(spdlog::level::from_str(env));
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"gfn4rec: flow-matching slate recommendation with simulated online training"};
  app.require_subcommand(1);

  auto add_common = [](CLI::App* sub, Common& c, bool needs_data = true) {
    sub->add_option("--config", c.config, "Run configuration (INI)")->check(CLI::ExistingFile);
    auto* data = sub->add_option("--data", c.data, "Prepared dataset directory")->check(CLI::ExistingDirectory);
    if (needs_data) data->required();
    sub->add_option("--model", c.model, "gfn_tb | gfn_db | cf | rerank_cf | prm")
        ->check(CLI::IsMember(model_kinds()));
    sub->add_option("--seed", c.seed, "Seed (overrides train.seed and run.seeds)");
  };

  int users = 20, items = 50, rows = 100, latent = 4;
  std::uint64_t syn_seed = 1;
  std::string syn_out;
  auto* gen = app.add_subcommand("generate-synthetic", "Write a planted synthetic interaction log (CSV)");
  gen->add_option("--users", users)->check(CLI::PositiveNumber);
  gen->add_option("--items", items)->check(CLI::PositiveNumber);
  gen->add_option("--rows", rows, "Interactions per user")->check(CLI::PositiveNumber);
  gen->add_option("--latent-dim", latent)->check(CLI::PositiveNumber);
  gen->add_option("--seed", syn_seed);
  gen->add_option("--out", syn_out)->required();

  std::string log_path, items_path, users_path, weights, prep_out;
  int k_core = 20;
  std::size_t k = 6, test_n = 1, history_len = 50;
  auto* prep = app.add_subcommand("prepare-data", "Filter, segment and split an interaction log");
  prep->add_option("--log", log_path)->required()->check(CLI::ExistingFile);
  prep->add_option("--items", items_path, "Item feature table")->check(CLI::ExistingFile);
  prep->add_option("--users", users_path, "User profile table")->check(CLI::ExistingFile);
  prep->add_option("--k-core", k_core)->check(CLI::PositiveNumber);
  prep->add_option("--K", k, "Slate size")->check(CLI::PositiveNumber);
  prep->add_option("--test-n", test_n, "Test slates per user");
  prep->add_option("--history-len", history_len)->check(CLI::PositiveNumber);
  prep->add_option("--weights", weights, "Behavior weights, e.g. click=1,like=1,hate=-1");
  prep->add_option("--out", prep_out)->required();

  Common sim_c, on_c, off_c, ev_c, sw_c;
  auto* sim = app.add_subcommand("train-simulator", "Train the user response model");
  add_common(sim, sim_c);
  sim->add_option("--out", sim_c.out, "Simulator checkpoint path")->required();

  auto* on = app.add_subcommand("train-online", "Online training against the simulator");
  add_common(on, on_c);
  on->add_option("--simulator", on_c.simulator)->required()->check(CLI::ExistingFile);
  on->add_option("--out", on_c.out, "Output directory")->required();

  auto* off = app.add_subcommand("train-offline", "Offline training on logged slates");
  add_common(off, off_c);
  off->add_option("--simulator", off_c.simulator, "Optional simulator for online metrics")->check(CLI::ExistingFile);
  off->add_option("--out", off_c.out, "Output directory")->required();

  std::string policy_path, mode = "greedy";
  std::size_t eval_batch = 128;
  auto* ev = app.add_subcommand("evaluate", "Print the metrics record of a saved policy");
  add_common(ev, ev_c);
  ev->add_option("--simulator", ev_c.simulator)->required()->check(CLI::ExistingFile);
  ev->add_option("--policy", policy_path)->required()->check(CLI::ExistingFile);
  ev->add_option("--mode", mode)->check(CLI::IsMember({"greedy", "explore"}));
  ev->add_option("--batch", eval_batch)->check(CLI::PositiveNumber);

  bool sweep_offline = false;
  auto* sw = app.add_subcommand("sweep", "Grid or alternating line search over bias terms and optimizer settings");
  add_common(sw, sw_c);
  sw->add_option("--simulator", sw_c.simulator)->required()->check(CLI::ExistingFile);
  sw->add_option("--out", sw_c.out, "Output directory")->required();
  sw->add_flag("--offline", sweep_offline, "Train each point offline instead of online");

  std::vector<std::string> runs;
  std::string metric = "avg_r", plot_policy, plot_out;
  auto* plot = app.add_subcommand("plot", "Learning curves from JSONL run logs (SVG + CSV)");
  plot->add_option("--runs", runs)->required()->check(CLI::ExistingFile);
  plot->add_option("--metric", metric);
  plot->add_option("--policy", plot_policy, "Only records with this policy label");
  plot->add_option("--out", plot_out, "Output path prefix")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_generate_synthetic(users, items, rows, latent, syn_seed, syn_out);
    if (*prep) return cmd_prepare_data(log_path, items_path, users_path, k_core, k, test_n, history_len, weights, prep_out);
    if (*sim) return cmd_train_simulator(sim_c);
    if (*on) return cmd_train(on_c, true);
    if (*off) return cmd_train(off_c, false);
    if (*ev) return cmd_evaluate(ev_c, policy_path, mode, eval_batch);
    if (*sw) return cmd_sweep(sw_c, sweep_offline);
    if (*plot) return cmd_plot(runs, metric, plot_policy, plot_out);
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return 2;
  } catch (const DivergenceError& e) {
    spdlog::error("{}; snapshot: {}", e.what(), e.snapshot());
    return 4;
  } catch (const DataError& e) {
    spdlog::error("data error: {}", e.what());
    return 3;
  } catch (const PreconditionError& e) {
    spdlog::error("precondition violated: {}", e.what());
    return 3;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 1;
}
