// rince_lab: data generation, training, evaluation and analysis front end.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "rince/analysis.hpp"
#include "rince/experiment.hpp"

#ifndef RINCE_GIT_DESCRIBE
#define RINCE_GIT_DESCRIBE "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rince;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << content;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

fs::path runs_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("RINCE_LAB_RUNS_DIR"); env != nullptr && *env != '\0') return env;
  return "runs";
}

json load_config_json(const std::string& path) {
  if (path.empty()) return json::object();
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    parse_config(text);  // rethrows with line and column
    throw;
  }
}

std::vector<double> parse_list(const std::string& text, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ConfigError(std::string(flag) + ": '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw ConfigError(std::string(flag) + ": empty list");
  return out;
}

/// Dataset named by --data, or generated from the config.
Dataset load_dataset(const ExperimentConfig& cfg, const std::string& data_path, std::string* fingerprint) {
  if (data_path.empty()) return generate_dataset(cfg);
  const std::string text = read_file(data_path);
  if (fingerprint) *fingerprint = text;
  std::istringstream in(text);
  return read_dataset_csv(in, cfg);
}

struct TrainOverrides {
  std::string variant;
  std::string taus;
  bool allow_unordered = false;
  std::string rank_source;
  std::optional<double> theta;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
};

void apply_overrides(json& j, const TrainOverrides& o) {
  json& t = j["train"];
  if (!o.variant.empty()) t["variant"] = o.variant;
  if (!o.taus.empty()) t["taus"] = parse_list(o.taus, "--taus");
  if (o.allow_unordered) t["allow_unordered_taus"] = true;
  if (!o.rank_source.empty()) t["rank_source"] = o.rank_source;
  if (o.theta) t["theta"] = *o.theta;
  if (o.seed) t["seed"] = *o.seed;
  if (o.epochs) t["epochs"] = *o.epochs;
}

struct RunOutcome {
  std::string id;
  fs::path dir;
  json report;
};

/// Trains one config and writes config, checkpoint, log and manifest under root/<id>/.
RunOutcome train_run(const ExperimentConfig& cfg, const Dataset& data, const std::string& fingerprint,
                     const fs::path& root, const std::string& data_path) {
  RunOutcome out;
  out.id = run_id(cfg, fingerprint);
  out.dir = root / out.id;
  const std::string started = utc_now();
  const TrainResult result = train_experiment(cfg, data);
  write_file(out.dir / "config.json", config_to_json(cfg).dump(2) + "\n");
  write_file(out.dir / "checkpoint.json", encoder_to_json(result.state, result.cursors).dump() + "\n");
  std::ostringstream log;
  result.log.write_csv(log);
  write_file(out.dir / "train_log.csv", log.str());
  json manifest;
  manifest["run_id"] = out.id;
  manifest["config"] = config_to_json(cfg);
  manifest["git_describe"] = RINCE_GIT_DESCRIBE;
  manifest["started_at"] = started;
  manifest["finished_at"] = utc_now();
  manifest["data"] = data_path.empty() ? json("generated") : json(data_path);
  manifest["outputs"] = {{"config", "config.json"}, {"checkpoint", "checkpoint.json"}, {"train_log", "train_log.csv"}};
  write_file(out.dir / "manifest.json", manifest.dump(2) + "\n");
  return out;
}

json eval_run(const ExperimentConfig& cfg, const Dataset& data, const fs::path& checkpoint, const std::string& id) {
  if (!fs::exists(checkpoint)) throw ConfigError("checkpoint not found: " + checkpoint.string());
  json ck;
  try {
    ck = json::parse(read_file(checkpoint));
  } catch (const json::parse_error& e) {
    throw ConfigError("checkpoint is not valid JSON: " + std::string(e.what()));
  }
  const EncoderState state = encoder_from_json(ck);
  json report = evaluate_experiment(cfg, data, state);
  report["run_id"] = id;
  return report;
}

std::mutex leaderboard_mutex;

void append_leaderboard(const fs::path& root, const json& report) {
  std::lock_guard lock(leaderboard_mutex);
  fs::create_directories(root);
  const fs::path p = root / "leaderboard.csv";
  const bool fresh = !fs::exists(p);
  std::ofstream out(p, std::ios::app | std::ios::binary);
  if (fresh) out << leaderboard_header() << '\n';
  out << leaderboard_row(report) << '\n';
}

void record_report(const fs::path& dir, const json& report) {
  write_file(dir / "report.json", report.dump(2) + "\n");
  const fs::path manifest_path = dir / "manifest.json";
  if (fs::exists(manifest_path)) {
    json manifest = json::parse(read_file(manifest_path));
    manifest["outputs"]["report"] = "report.json";
    write_file(manifest_path, manifest.dump(2) + "\n");
  }
}

// ---- analyze -------------------------------------------------------------

struct AnalysisConfig {
  std::vector<std::pair<double, double>> settings{{0.1, 0.2}, {0.1, 0.7}, {0.2, 0.1}};
  double neg_mean = 0.1;
  double neg_stddev = 0.1;
  std::size_t neg_count = 64;
  std::uint64_t seed = 123;
  bool expectation = false;
  double curve_step = 0.01;
  double grid_step = 0.01;
};

AnalysisConfig parse_analysis_config(const json& j) {
  AnalysisConfig a;
  if (!j.is_object()) throw ConfigError("analysis config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "settings") {
        a.settings.clear();
        for (const auto& pair : value) {
          if (!pair.is_array() || pair.size() != 2) throw ConfigError("field 'settings' must hold [tau1, tau2] pairs");
          a.settings.emplace_back(pair[0].get<double>(), pair[1].get<double>());
        }
      } else if (key == "neg_mean") {
        a.neg_mean = value.get<double>();
      } else if (key == "neg_stddev") {
        a.neg_stddev = value.get<double>();
      } else if (key == "neg_count") {
        a.neg_count = value.get<std::size_t>();
      } else if (key == "seed") {
        a.seed = value.get<std::uint64_t>();
      } else if (key == "expectation") {
        a.expectation = value.get<bool>();
      } else if (key == "curve_step") {
        a.curve_step = value.get<double>();
      } else if (key == "grid_step") {
        a.grid_step = value.get<double>();
      } else {
        throw ConfigError("unknown field '" + key + "'");
      }
    } catch (const json::type_error&) {
      throw ConfigError("field '" + key + "' has the wrong type");
    }
  }
  for (const auto& [t1, t2] : a.settings)
    if (!(t1 > 0.0 && t2 > 0.0)) throw ConfigError("field 'settings': temperatures must be positive");
  if (a.neg_count == 0) throw ConfigError("field 'neg_count' must be positive");
  if (!(a.curve_step > 0.0) || !(a.grid_step > 0.0)) throw ConfigError("grid steps must be positive");
  return a;
}

std::string tag(double t1, double t2) {
  std::ostringstream s;
  s << t1 << '_' << t2;
  return s.str();
}

int cmd_analyze(const std::string& config_path, const std::string& out_flag) {
  const AnalysisConfig a = parse_analysis_config(load_config_json(config_path));
  const fs::path out = out_flag.empty() ? runs_root("") / "analysis" : fs::path(out_flag);
  const NegativeModel negatives = a.expectation
                                      ? NegativeModel::gaussian_expectation(a.neg_mean, a.neg_stddev, a.neg_count)
                                      : NegativeModel::gaussian_sample(a.neg_mean, a.neg_stddev, a.neg_count, a.seed);
  const std::vector<double> curve_grid = uniform_grid(-1.0, 1.0, a.curve_step);
  const std::vector<double> k_grid = uniform_grid(-1.0, 1.0, a.grid_step);
  std::vector<EquilibriumCurve> curves;
  json summary = json::array();
  for (const auto& [t1, t2] : a.settings) {
    const EquilibriumCurve c = equilibrium_curve(t1, t2, negatives, curve_grid);
    bool below_diagonal = true;
    for (std::size_t i = 0; i < c.h1.size(); ++i)
      if (c.h1[i] >= 0.5 - 1e-12 && !(c.h2_root[i] && *c.h2_root[i] < c.h1[i])) below_diagonal = false;
    bool k_increasing = true;
    for (double h1 : curve_grid) {
      double prev = -INFINITY;
      for (double h2 : k_grid) {
        const double k = tradeoff_k(h1, h2, negatives, t1, t2);
        if (!(k > prev)) k_increasing = false;
        prev = k;
      }
    }
    std::ostringstream csv;
    write_curve_csv(csv, c);
    csv << "# tau1=" << t1 << " tau2=" << t2 << " neg_mean=" << a.neg_mean << " neg_stddev=" << a.neg_stddev
        << " neg_count=" << a.neg_count << " mode=" << (a.expectation ? "expectation" : "sampled") << '\n'
        << "# non_decreasing=" << (c.non_decreasing() ? "true" : "false") << '\n'
        << "# k_increasing_in_h2=" << (k_increasing ? "true" : "false") << '\n'
        << "# root_below_diagonal_for_h1_ge_0.5=" << (below_diagonal ? "true" : "false") << '\n'
        << std::setprecision(17) << "# max_slope_h1_0.5_1=" << c.max_slope(0.5, 1.0) << '\n';
    write_file(out / ("curve_" + tag(t1, t2) + ".csv"), csv.str());
    std::ostringstream grid;
    write_k_grid_csv(grid, negatives, t1, t2, k_grid, k_grid);
    write_file(out / ("k_grid_" + tag(t1, t2) + ".csv"), grid.str());
    summary.push_back({{"tau1", t1},
                       {"tau2", t2},
                       {"non_decreasing", c.non_decreasing()},
                       {"k_increasing_in_h2", k_increasing},
                       {"root_below_diagonal_for_h1_ge_0.5", below_diagonal},
                       {"max_slope_h1_0.5_1", c.max_slope(0.5, 1.0)}});
    curves.push_back(c);
  }
  write_file(out / "summary.json", summary.dump(2) + "\n");
  std::cout << "wrote " << a.settings.size() << " curves and K grids to " << out.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rince_lab: ranked contrastive learning laboratory"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string runs_flag;
  app.add_option("--runs-dir", runs_flag, "Output root (default: $RINCE_LAB_RUNS_DIR or ./runs)");

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset as CSV");
  std::string gen_config, gen_out;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--config", gen_config, "JSON experiment config");
  gen->add_option("--out", gen_out, "Output CSV path")->required();
  gen->add_option("--seed", gen_seed, "Override data.seed");

  auto* tr = app.add_subcommand("train", "Train an encoder and write runs/<id>/");
  std::string tr_config, tr_data;
  TrainOverrides ov;
  tr->add_option("--config", tr_config, "JSON experiment config");
  tr->add_option("--data", tr_data, "Dataset CSV (generated from the config when omitted)");
  tr->add_option("--variant", ov.variant,
                 "infonce, scl-in, scl-out, rince-uni, rince-in, rince-out, rince-out-in or triplet");
  tr->add_option("--taus", ov.taus, "Comma-separated temperatures, e.g. 0.1,0.225");
  tr->add_flag("--allow-unordered-taus", ov.allow_unordered, "Accept non-increasing temperature schedules");
  tr->add_option("--rank-source", ov.rank_source, "exact or noisy");
  tr->add_option("--theta", ov.theta, "Similarity threshold for noisy rank-2 sets");
  tr->add_option("--seed", ov.seed, "Training seed");
  tr->add_option("--epochs", ov.epochs, "Number of epochs");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string ev_run, ev_checkpoint, ev_config, ev_data, ev_out;
  ev->add_option("--run", ev_run, "Run directory produced by train");
  ev->add_option("--checkpoint", ev_checkpoint, "Checkpoint path (default: <run>/checkpoint.json)");
  ev->add_option("--config", ev_config, "Config (default: config.json next to the checkpoint)");
  ev->add_option("--data", ev_data, "Dataset CSV (generated from the config when omitted)");
  ev->add_option("--out", ev_out, "Report path (default: report.json next to the checkpoint)");

  auto* an = app.add_subcommand("analyze", "Equilibrium curves and K grids as CSV");
  std::string an_config, an_out;
  an->add_option("--config", an_config, "JSON analysis config");
  an->add_option("--out", an_out, "Output directory (default: <runs>/analysis)");

  auto* sw = app.add_subcommand("sweep", "Train and evaluate one run per seed in parallel");
  std::string sw_config, sw_seeds = "123,546,937";
  TrainOverrides sw_ov;
  std::size_t jobs = 1;
  sw->add_option("--config", sw_config, "JSON experiment config");
  sw->add_option("--seeds", sw_seeds, "Comma-separated training seeds");
  sw->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  sw->add_option("--variant", sw_ov.variant, "Loss variant");
  sw->add_option("--taus", sw_ov.taus, "Comma-separated temperatures");
  sw->add_flag("--allow-unordered-taus", sw_ov.allow_unordered, "Accept non-increasing temperature schedules");
  sw->add_option("--epochs", sw_ov.epochs, "Number of epochs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    const fs::path root = runs_root(runs_flag);
    if (gen->parsed()) {
      json j = load_config_json(gen_config);
      if (gen_seed) j["data"]["seed"] = *gen_seed;
      const ExperimentConfig cfg = config_from_json(j);
      const Dataset data = generate_dataset(cfg);
      std::ostringstream csv;
      write_dataset_csv(csv, data);
      write_file(gen_out, csv.str());
      write_file(gen_out + ".spec.json", config_to_json(cfg).at("data").dump(2) + "\n");
      std::cout << gen_out << '\n';
    } else if (tr->parsed()) {
      json j = load_config_json(tr_config);
      apply_overrides(j, ov);
      const ExperimentConfig cfg = config_from_json(j);
      std::string fingerprint;
      const Dataset data = load_dataset(cfg, tr_data, &fingerprint);
      const RunOutcome run = train_run(cfg, data, fingerprint, root, tr_data);
      std::cout << run.dir.string() << '\n';
    } else if (ev->parsed()) {
      if (ev_run.empty() && ev_checkpoint.empty()) throw ConfigError("eval: give --run or --checkpoint");
      const fs::path checkpoint = ev_checkpoint.empty() ? fs::path(ev_run) / "checkpoint.json" : fs::path(ev_checkpoint);
      const fs::path dir = checkpoint.parent_path().empty() ? fs::path(".") : checkpoint.parent_path();
      if (!fs::exists(checkpoint)) throw ConfigError("checkpoint not found: " + checkpoint.string());
      const fs::path config_path = ev_config.empty() ? dir / "config.json" : fs::path(ev_config);
      const ExperimentConfig cfg = parse_config(read_file(config_path));
      std::string fingerprint;
      const Dataset data = load_dataset(cfg, ev_data, &fingerprint);
      const json report = eval_run(cfg, data, checkpoint, run_id(cfg, fingerprint));
      if (ev_out.empty()) {
        record_report(dir, report);
      } else {
        write_file(ev_out, report.dump(2) + "\n");
      }
      append_leaderboard(root, report);
      std::cout << report.at("metrics").dump() << '\n';
    } else if (an->parsed()) {
      return cmd_analyze(an_config, an_out);
    } else if (sw->parsed()) {
      const json base = load_config_json(sw_config);
      std::vector<ExperimentConfig> configs;
      for (double s : parse_list(sw_seeds, "--seeds")) {
        if (s < 0 || s != std::floor(s)) throw ConfigError("--seeds: seeds must be non-negative integers");
        json j = base;
        TrainOverrides o = sw_ov;
        o.seed = static_cast<std::uint64_t>(s);
        apply_overrides(j, o);
        configs.push_back(config_from_json(j));
      }
      std::vector<RunOutcome> outcomes(configs.size());
      std::vector<std::exception_ptr> errors(configs.size());
      std::size_t next = 0;
      std::mutex next_mutex;
      auto worker = [&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard lock(next_mutex);
            if (next >= configs.size()) return;
            i = next++;
          }
          try {
            const Dataset data = generate_dataset(configs[i]);
            outcomes[i] = train_run(configs[i], data, "", root, "");
            outcomes[i].report = eval_run(configs[i], data, outcomes[i].dir / "checkpoint.json", outcomes[i].id);
            record_report(outcomes[i].dir, outcomes[i].report);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      };
      std::vector<std::thread> pool;
      for (std::size_t t = 0; t < std::min(jobs, configs.size()); ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
      for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
      for (const auto& o : outcomes) {
        append_leaderboard(root, o.report);
        std::cout << leaderboard_row(o.report) << '\n';
      }
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
