#include "codesign/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#ifndef CODESIGN_VERSION
#define CODESIGN_VERSION "0.0.0"
#endif

namespace codesign {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

std::vector<Goal> goals_from_flat(Task task, const std::vector<double>& v) {
  Rng rng(0);
  const std::size_t n = goal_values(sample_goal(TaskConfig::defaults(task), rng)).size();
  if (v.size() % n != 0) {
    throw std::invalid_argument("config key 'finetune_goals': expected a multiple of " + std::to_string(n) +
                                " values for task " + std::string(task_name(task)));
  }
  std::vector<Goal> out;
  for (std::size_t i = 0; i < v.size(); i += n) {
    out.push_back(goal_from_values(task, std::span<const double>(v.data() + i, n)));
  }
  return out;
}

}  // namespace

std::string_view method_name(Method m) {
  switch (m) {
    case Method::ours:
      return "ours";
    case Method::shared_arch:
      return "shared_arch";
    case Method::hwasp_minimal:
      return "hwasp_minimal";
    case Method::cma_rl:
      return "cma_rl";
    case Method::cmaes:
      return "cmaes";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::ours, Method::shared_arch, Method::hwasp_minimal, Method::cma_rl, Method::cmaes}) {
    if (method_name(m) == name) return m;
  }
  throw std::invalid_argument("unknown method '" + std::string(name) +
                              "' (expected ours, shared_arch, hwasp_minimal, cma_rl or cmaes)");
}

std::string code_version() { return CODESIGN_VERSION; }

ExperimentConfig ExperimentConfig::make(Task task, std::string_view preset) {
  ExperimentConfig c;
  c.preset = std::string(preset);
  c.task = TaskConfig::defaults(task);
  if (preset == "desk") {
    c.train = TrainConfig::desk(task);
    c.train.eval_every = 5;
  } else if (preset == "paper") {
    c.train = TrainConfig::paper(task);
    c.train.eval_every = 1;
  } else {
    throw std::invalid_argument("unknown preset '" + std::string(preset) + "' (expected desk or paper)");
  }
  c.baseline.total_steps = c.train.total_steps;
  c.baseline.inner = c.train;
  c.baseline.inner.eval_every = 0;
  return c;
}

bool ExperimentConfig::apply(const std::string& key, const std::string& value) {
  auto num = [&] { return parse_number(key, value); };
  auto integer = [&] {
    const double d = num();
    if (d != std::floor(d)) throw std::invalid_argument("config key '" + key + "': expected an integer");
    return static_cast<int>(d);
  };
  if (key == "preset" || key == "task") return true;  // resolved up front
  if (key == "method") {
    method = parse_method(trim(value));
  } else if (key == "seeds") {
    seeds.clear();
    for (double d : parse_numbers(key, value)) {
      if (d < 0 || d != std::floor(d)) throw std::invalid_argument("config key 'seeds': seeds are non-negative integers");
      seeds.push_back(static_cast<std::uint64_t>(d));
    }
  } else if (key == "seed") {
    seeds = {static_cast<std::uint64_t>(num())};
  } else if (key == "total_steps") {
    train.total_steps = static_cast<long long>(num());
    baseline.total_steps = train.total_steps;
  } else if (key == "out") {
    out = trim(value);
  } else if (key == "eval_grid") {
    eval_grid = integer();
  } else if (key == "eval_margin") {
    eval_margin = num();
  } else if (key == "eval_goals") {
    eval_goals = integer();
  } else if (key == "alphas") {
    alphas = parse_numbers(key, value);
  } else if (key == "finetune_updates") {
    finetune_updates = integer();
  } else if (key == "finetune_goals") {
    finetune_goals = goals_from_flat(task.task, parse_numbers(key, value));
  } else if (key == "stl_thickness") {
    stl_thickness = num();
  } else if (key == "cma_population") {
    baseline.cma.population = integer();
  } else if (key == "cma_sigma0") {
    baseline.cma.sigma0 = num();
  } else if (key == "cma_center_lr") {
    baseline.cma.center_lr = num();
  } else if (key == "cma_covariance_lr") {
    baseline.cma.covariance_lr = num();
  } else if (key == "cma_rank_mu_lr") {
    baseline.cma.rank_mu_lr = num();
  } else if (key == "cma_rank_one_lr") {
    baseline.cma.rank_one_lr = num();
  } else if (key == "cma_generations") {
    baseline.max_generations = integer();
  } else if (key == "inner_steps") {
    baseline.inner_steps = static_cast<long long>(num());
  } else if (key.rfind("inner_", 0) == 0 && apply_train_setting(baseline.inner, key.substr(6), value)) {
    // inner_<train key> tunes the CMA-RL inner trainer only
  } else if (apply_train_setting(train, key, value)) {
    // Train keys also reach the CMA-RL inner trainer unless set there explicitly.
    apply_train_setting(baseline.inner, key, value);
    baseline.inner.eval_every = 0;
  } else if (!apply_task_setting(task, key, value)) {
    return false;
  }
  return true;
}

void ExperimentConfig::validate() const {
  task.validate();
  train.validate();
  baseline.cma.validate();
  baseline.inner.validate();
  if (seeds.empty()) throw std::invalid_argument("config: at least one seed is required");
  if (eval_grid <= 0) throw std::invalid_argument("config: eval_grid must be positive");
  if (eval_goals <= 0) throw std::invalid_argument("config: eval_goals must be positive");
  if (finetune_updates < 0) throw std::invalid_argument("config: finetune_updates must be non-negative");
  if (!(stl_thickness > 0.0)) throw std::invalid_argument("config: stl_thickness must be positive");
  if (baseline.inner_steps < 0) throw std::invalid_argument("config: inner_steps must be non-negative");
  if (!task.cutout.empty()) {
    static constexpr double kSweep[] = {0.0, 0.1, 0.2, 0.4, 0.6, 0.8, 0.9};
    const bool ok = std::any_of(std::begin(kSweep), std::end(kSweep),
                                [&](double f) { return std::abs(f - task.cutout.fraction) < 1e-12; });
    if (!ok) throw std::invalid_argument("config: cutout_fraction must be one of 0, 0.1, 0.2, 0.4, 0.6, 0.8, 0.9");
  }
  for (const Goal& g : finetune_goals) validate_goal(task, g);
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["preset"] = preset;
  j["method"] = method_name(method);
  j["task"] = codesign::to_json(task);
  j["train"] = codesign::to_json(train);
  j["seeds"] = seeds;
  j["out"] = out.generic_string();
  j["eval_grid"] = eval_grid;
  j["eval_margin"] = eval_margin;
  j["eval_goals"] = eval_goals;
  j["alphas"] = alphas;
  j["finetune_updates"] = finetune_updates;
  nlohmann::json fg = nlohmann::json::array();
  for (const Goal& g : finetune_goals) fg.push_back(goal_values(g));
  j["finetune_goals"] = fg;
  j["stl_thickness"] = stl_thickness;
  j["cma"] = {{"population", baseline.cma.population},     {"sigma0", baseline.cma.sigma0},
              {"center_lr", baseline.cma.center_lr},       {"covariance_lr", baseline.cma.covariance_lr},
              {"rank_mu_lr", baseline.cma.rank_mu_lr},     {"rank_one_lr", baseline.cma.rank_one_lr},
              {"generations", baseline.max_generations},   {"total_steps", baseline.total_steps},
              {"inner_steps", baseline.inner_steps},       {"inner", codesign::to_json(baseline.inner)}};
  return j;
}

ExperimentConfig load_experiment_config(const std::vector<KeyValue>& file_keys,
                                        const std::vector<KeyValue>& cli_keys) {
  std::string task = "push", preset = "desk";
  for (const auto* list : {&file_keys, &cli_keys}) {
    for (const KeyValue& kv : *list) {
      if (kv.key == "task") task = trim(kv.value);
      if (kv.key == "preset") preset = trim(kv.value);
    }
  }
  ExperimentConfig cfg = ExperimentConfig::make(parse_task(task), preset);
  for (const auto* list : {&file_keys, &cli_keys}) {
    for (const KeyValue& kv : *list) {
      if (!cfg.apply(kv.key, kv.value)) {
        std::string where = kv.line > 0 ? " (line " + std::to_string(kv.line) + ")" : "";
        throw std::invalid_argument("unknown config key '" + kv.key + "'" + where);
      }
    }
  }
  cfg.validate();
  return cfg;
}

fs::path output_root() {
  const char* env = std::getenv("CODESIGN_OUT");
  if (env != nullptr && *env != '\0') return fs::path(env);
  return fs::current_path();
}

fs::path resolve_output(const fs::path& out) { return out.is_absolute() ? out : output_root() / out; }

void write_manifest(const fs::path& dir, const std::string& command, const ExperimentConfig& cfg,
                    const nlohmann::json& extra) {
  fs::create_directories(dir);
  nlohmann::json j;
  j["command"] = command;
  j["version"] = code_version();
  j["config"] = cfg.to_json();
  j["seeds"] = cfg.seeds;
  j["config_hash"] = config_hash(cfg.task, cfg.train);
  if (!extra.is_null()) j["extra"] = extra;
  write_json_file(dir / "manifest.json", j);
}

// --- csv -------------------------------------------------------------------

CsvTable read_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  CsvTable t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    return out;
  };
  if (!std::getline(is, line)) throw std::runtime_error(path.string() + ": empty csv");
  t.header = split(line);
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    if (cells.size() != t.header.size()) throw std::runtime_error(path.string() + ": ragged row");
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(std::stod(c));
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable aggregate_tables(const std::vector<CsvTable>& tables) {
  if (tables.empty()) throw std::invalid_argument("aggregate: no tables");
  const auto& header = tables.front().header;
  for (const auto& t : tables) {
    if (t.header != header) throw std::invalid_argument("aggregate: headers differ");
  }
  if (header.empty() || header.front() != "env_steps") throw std::invalid_argument("aggregate: first column must be env_steps");
  CsvTable out;
  out.header = {"env_steps", "n"};
  for (std::size_t c = 1; c < header.size(); ++c) {
    out.header.push_back(header[c] + "_mean");
    out.header.push_back(header[c] + "_stderr");
  }
  std::size_t rows = tables.front().rows.size();
  for (const auto& t : tables) rows = std::min(rows, t.rows.size());
  const double n = static_cast<double>(tables.size());
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<double> row;
    for (std::size_t c = 0; c < header.size(); ++c) {
      double mean = 0.0;
      for (const auto& t : tables) mean += t.rows[r][c];
      mean /= n;
      double ss = 0.0;
      for (const auto& t : tables) ss += (t.rows[r][c] - mean) * (t.rows[r][c] - mean);
      const double se = tables.size() > 1 ? std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0;
      if (c == 0) {
        row.push_back(mean);
        row.push_back(n);
      } else {
        row.push_back(mean);
        row.push_back(se);
      }
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

void write_csv(const fs::path& path, const CsvTable& t) {
  std::ofstream os = open_out(path);
  for (std::size_t i = 0; i < t.header.size(); ++i) os << (i ? "," : "") << t.header[i];
  os << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << fmt(row[i]);
    os << '\n';
  }
}

// --- train -----------------------------------------------------------------

namespace {

void write_cma_outputs(const fs::path& dir, const TaskConfig& task, const CmaRunResult& r, std::uint64_t seed,
                       bool with_policy) {
  {
    std::ofstream m = open_out(dir / "metrics.csv");
    write_metric_header(m);
    for (const auto& row : r.curve) write_metric_row(m, row);
    std::ofstream e = open_out(dir / "eval.csv");
    e << "env_steps,mean_return,success_rate\n";
    for (const auto& row : r.curve) e << row.env_steps << ',' << fmt(row.mean_return) << ',' << fmt(row.success_rate) << '\n';
  }
  nlohmann::json best;
  best["best_fitness"] = r.best_score.mean_return;
  best["success_rate"] = r.best_score.success_rate;
  best["vector"] = std::vector<double>(r.best.data(), r.best.data() + r.best.size());
  best["design"] = {{"lengths", r.best_design.lengths}, {"angles_rad", r.best_design.angles}};
  best["env_steps"] = r.env_steps;
  write_json_file(dir / "best.json", best);
  if (with_policy) {
    nlohmann::json p;
    p["version"] = 1;
    p["task_config"] = to_json(task);
    p["policy"] = to_json(r.policy);
    p["seed"] = seed;
    write_json_file(dir / "policy.json", p);
  }
}

Architecture architecture_for(Method m) {
  switch (m) {
    case Method::shared_arch:
      return Architecture::shared;
    case Method::hwasp_minimal:
      return Architecture::hwasp;
    default:
      return Architecture::separate;
  }
}

}  // namespace

TrainArtifacts cmd_train(const ExperimentConfig& cfg) {
  cfg.validate();
  TrainArtifacts art;
  art.dir = resolve_output(cfg.out);
  write_manifest(art.dir, "train", cfg);
  const std::vector<Goal> eval_set = evaluation_goals(cfg.task, 16);
  for (std::uint64_t seed : cfg.seeds) {
    const fs::path dir = art.dir / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    art.seed_dirs.push_back(dir);
    if (cfg.method == Method::cmaes || cfg.method == Method::cma_rl) {
      BaselineConfig bc = cfg.baseline;
      bc.seed = seed;
      std::ofstream log = open_out(dir / "cma.jsonl");
      const CmaRunResult r = cfg.method == Method::cmaes ? single_traj_cmaes(cfg.task, bc, eval_set, &log)
                                                         : cma_rl(cfg.task, bc, eval_set, &log);
      write_cma_outputs(dir, cfg.task, r, seed, cfg.method == Method::cma_rl);
    } else {
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      tc.agent.architecture = architecture_for(cfg.method);
      train(cfg.task, tc, dir);
    }
  }
  for (const char* name : {"metrics", "eval"}) {
    std::vector<CsvTable> tables;
    for (const auto& d : art.seed_dirs) {
      const fs::path p = d / (std::string(name) + ".csv");
      if (fs::exists(p)) tables.push_back(read_csv(p));
    }
    if (tables.size() == art.seed_dirs.size()) {
      write_csv(art.dir / ("aggregate_" + std::string(name) + ".csv"), aggregate_tables(tables));
    }
  }
  return art;
}

// --- eval ----------------------------------------------------------------------

LoadedPolicy load_policy(const fs::path& path) {
  const nlohmann::json j = read_json_file(path);
  if (!j.contains("task_config") || !j.contains("policy")) {
    throw std::invalid_argument(path.string() + ": not a checkpoint or policy file");
  }
  LoadedPolicy p;
  p.task = task_config_from_json(j.at("task_config"));
  p.params = policy_from_json(j.at("policy"));
  if (j.contains("seed")) p.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("train_config")) p.seed = j.at("train_config").at("seed").get<std::uint64_t>();
  return p;
}

std::string_view region_name(GoalRegion r) {
  switch (r) {
    case GoalRegion::training:
      return "training";
    case GoalRegion::cutout:
      return "cutout";
    case GoalRegion::outside:
      return "outside";
  }
  return "?";
}

GoalRegion classify_goal(const TaskConfig& task, const Goal& goal) {
  if (const auto* g = std::get_if<PushGoal>(&goal)) {
    if (!task.push_goal_region.contains(g->target)) return GoalRegion::outside;
    if (task.cutout.contains(g->target)) return GoalRegion::cutout;
  }
  return GoalRegion::training;
}

std::vector<Goal> evaluation_grid(const TaskConfig& task, const ExperimentConfig& cfg) {
  if (task.task != Task::push) return evaluation_goals(task, cfg.eval_goals);
  const Rect& r = task.push_goal_region;
  const double x0 = r.x0 - cfg.eval_margin, y0 = r.y0 - cfg.eval_margin;
  const double w = r.width() + 2.0 * cfg.eval_margin, h = r.height() + 2.0 * cfg.eval_margin;
  const int n = cfg.eval_grid;
  std::vector<Goal> goals;
  goals.reserve(static_cast<std::size_t>(n * n));
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) {
      goals.push_back(PushGoal{Vec2(x0 + (ix + 0.5) * w / n, y0 + (iy + 0.5) * h / n)});
    }
  }
  return goals;
}

nlohmann::json EvalReport::to_json() const {
  auto stats = [](const RegionStats& s) {
    return nlohmann::json{{"count", s.count}, {"mean_return", s.mean_return}, {"success_rate", s.success_rate}};
  };
  nlohmann::json j;
  j["task"] = task;
  j["regions"] = {{"training", stats(training)}, {"cutout", stats(cutout)}, {"outside", stats(outside)}};
  j["design"] = {{"mean", design_mean}, {"std", design_std}, {"min", design_min}, {"max", design_max}};
  nlohmann::json gs = nlohmann::json::array();
  for (const auto& g : goals) {
    gs.push_back({{"goal", goal_values(g.goal)},
                  {"region", region_name(g.region)},
                  {"return", g.summary.episode_return},
                  {"success", g.summary.success},
                  {"success_credit", g.summary.success_credit},
                  {"lengths", g.summary.design.lengths},
                  {"angles_rad", g.summary.design.angles}});
  }
  j["goals"] = gs;
  return j;
}

EvalReport evaluate_report(const LoadedPolicy& policy, std::span<const Goal> goals) {
  EvalReport rep;
  rep.task = std::string(task_name(policy.task.task));
  const auto eps = evaluate(policy.params, policy.task, goals);
  rep.design_min.fill(std::numeric_limits<double>::infinity());
  rep.design_max.fill(-std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < goals.size(); ++i) {
    GoalRecord g{goals[i], classify_goal(policy.task, goals[i]), eps[i]};
    RegionStats& s = g.region == GoalRegion::training ? rep.training
                     : g.region == GoalRegion::cutout ? rep.cutout
                                                      : rep.outside;
    ++s.count;
    s.mean_return += eps[i].episode_return;
    s.success_rate += eps[i].success_credit;
    for (int k = 0; k < kDesignDim; ++k) {
      const double v = k < kNumLinks ? eps[i].design.lengths[k] : eps[i].design.angles[k - kNumLinks];
      rep.design_mean[k] += v;
      rep.design_std[k] += v * v;
      rep.design_min[k] = std::min(rep.design_min[k], v);
      rep.design_max[k] = std::max(rep.design_max[k], v);
    }
    rep.goals.push_back(std::move(g));
  }
  for (RegionStats* s : {&rep.training, &rep.cutout, &rep.outside}) {
    if (s->count > 0) {
      s->mean_return /= s->count;
      s->success_rate /= s->count;
    }
  }
  const double n = static_cast<double>(std::max<std::size_t>(goals.size(), 1));
  for (int k = 0; k < kDesignDim; ++k) {
    rep.design_mean[k] /= n;
    rep.design_std[k] = std::sqrt(std::max(0.0, rep.design_std[k] / n - rep.design_mean[k] * rep.design_mean[k]));
  }
  return rep;
}

EvalReport cmd_eval(const ExperimentConfig& cfg, const fs::path& checkpoint) {
  const LoadedPolicy policy = load_policy(checkpoint);
  if (policy.task.task != cfg.task.task) {
    throw std::invalid_argument("checkpoint is for task '" + std::string(task_name(policy.task.task)) +
                                "' but the config asks for '" + std::string(task_name(cfg.task.task)) + "'");
  }
  const fs::path dir = resolve_output(cfg.out);
  write_manifest(dir, "eval", cfg, {{"checkpoint", checkpoint.generic_string()}});
  const std::vector<Goal> goals = evaluation_grid(policy.task, cfg);
  const EvalReport rep = evaluate_report(policy, goals);
  write_json_file(dir / "eval_report.json", rep.to_json());
  std::ofstream os = open_out(dir / "eval_goals.csv");
  const std::size_t gd = goal_values(goals.front()).size();
  for (std::size_t i = 0; i < gd; ++i) os << "goal_" << i << ',';
  os << "region,episode_return,success,success_credit,l1,l2,l3,theta1,theta2\n";
  for (const auto& g : rep.goals) {
    for (double v : goal_values(g.goal)) os << fmt(v) << ',';
    os << region_name(g.region) << ',' << fmt(g.summary.episode_return) << ',' << (g.summary.success ? 1 : 0) << ','
       << fmt(g.summary.success_credit);
    for (double l : g.summary.design.lengths) os << ',' << fmt(l);
    for (double a : g.summary.design.angles) os << ',' << fmt(a);
    os << '\n';
  }
  return rep;
}

// --- finetune ----------------------------------------------------------------

std::vector<Goal> default_finetune_goals(const TaskConfig& task) {
  if (task.task != Task::push) return evaluation_goals(task, 4, 4242);
  std::vector<Goal> out;
  if (!task.cutout.empty()) {
    // Two goals per cutout patch (or four in a single patch), at the quarter points of its width.
    const auto& rects = task.cutout.rects;
    for (int i = 0; i < 4; ++i) {
      const Rect& r = rects[static_cast<std::size_t>(i) % rects.size()];
      const int slot = rects.size() == 1 ? i : i / static_cast<int>(rects.size());
      const double fx = rects.size() == 1 ? 0.2 + 0.2 * i : (slot == 0 ? 0.3 : 0.7);
      const double fy = rects.size() == 1 ? 0.5 : (slot == 0 ? 0.35 : 0.65);
      out.push_back(PushGoal{Vec2(r.x0 + fx * r.width(), r.y0 + fy * r.height())});
    }
    return out;
  }
  const Rect& r = task.push_goal_region;
  const double my = 0.5 * (r.y0 + r.y1);
  out.push_back(PushGoal{Vec2(r.x0 - 1.0, my)});
  out.push_back(PushGoal{Vec2(r.x1 + 1.0, my)});
  out.push_back(PushGoal{Vec2(r.x0 + 0.25 * r.width(), r.y1 + 1.0)});
  out.push_back(PushGoal{Vec2(r.x1 - 0.25 * r.width(), r.y1 + 1.0)});
  return out;
}

std::vector<FinetunePoint> cmd_finetune(const ExperimentConfig& cfg, const fs::path& checkpoint) {
  const nlohmann::json ckpt = read_json_file(checkpoint);
  Trainer tuned = Trainer::from_checkpoint(ckpt);
  if (tuned.task_config().task != cfg.task.task) {
    throw std::invalid_argument("checkpoint is for task '" + std::string(task_name(tuned.task_config().task)) +
                                "' but the config asks for '" + std::string(task_name(cfg.task.task)) + "'");
  }
  const std::vector<Goal> goals =
      cfg.finetune_goals.empty() ? default_finetune_goals(tuned.task_config()) : cfg.finetune_goals;
  const fs::path dir = resolve_output(cfg.out);
  nlohmann::json gj = nlohmann::json::array();
  for (const Goal& g : goals) gj.push_back(goal_values(g));
  write_manifest(dir, "finetune", cfg, {{"checkpoint", checkpoint.generic_string()}, {"goals", gj}});

  TrainConfig scratch_cfg = tuned.train_config();
  scratch_cfg.seed = cfg.seeds.front();
  Trainer scratch(tuned.task_config(), scratch_cfg);
  const GoalSampler sampler = [goals](Rng& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, goals.size() - 1);
    return goals[pick(rng)];
  };
  tuned.set_goal_sampler(sampler);
  scratch.set_goal_sampler(sampler);

  std::vector<FinetunePoint> points;
  auto record = [&](const char* curve, Trainer& t, int update, long long steps0) {
    const auto eps = evaluate(t.params(), t.task_config(), goals);
    for (std::size_t i = 0; i < eps.size(); ++i) {
      points.push_back({curve, update, t.env_steps() - steps0, static_cast<int>(i), eps[i].episode_return,
                        eps[i].success});
    }
  };
  for (auto [name, t] : {std::pair<const char*, Trainer*>{"finetune", &tuned}, {"scratch", &scratch}}) {
    const long long steps0 = t->env_steps();
    record(name, *t, 0, steps0);
    for (int u = 1; u <= cfg.finetune_updates; ++u) {
      t->train_batch();
      record(name, *t, u, steps0);
    }
  }

  std::ofstream os = open_out(dir / "finetune.csv");
  os << "curve,update,env_steps,goal_index,episode_return,success\n";
  for (const auto& p : points) {
    os << p.curve << ',' << p.update << ',' << p.env_steps << ',' << p.goal_index << ',' << fmt(p.episode_return)
       << ',' << (p.success ? 1 : 0) << '\n';
  }
  nlohmann::json summary;
  for (const char* curve : {"finetune", "scratch"}) {
    std::vector<bool> solved(goals.size(), false);
    double final_return = 0.0;
    for (const auto& p : points) {
      if (p.curve != curve) continue;
      if (p.success) solved[static_cast<std::size_t>(p.goal_index)] = true;
      if (p.update == cfg.finetune_updates) final_return += p.episode_return;
    }
    summary[curve] = {{"goals_solved", std::count(solved.begin(), solved.end(), true)},
                      {"final_mean_return", final_return / static_cast<double>(goals.size())}};
  }
  summary["updates"] = cfg.finetune_updates;
  summary["goals"] = gj;
  write_json_file(dir / "finetune_summary.json", summary);
  return points;
}

// --- alpha sweep ---------------------------------------------------------------

double usage_ratio(const EpisodeSummary& s) {
  const double d = s.d_used / s.d_max;
  const double c = s.mean_c_used / s.c_max;
  return c > 0.0 ? d / c : std::numeric_limits<double>::infinity();
}

std::vector<AlphaRow> cmd_alpha_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  if (!(cfg.task.tradeoff_k > 0.0)) throw std::invalid_argument("alpha-sweep: tradeoff_k must be positive");
  if (cfg.alphas.empty()) throw std::invalid_argument("alpha-sweep: no alphas given");
  const fs::path dir = resolve_output(cfg.out);
  write_manifest(dir, "alpha-sweep", cfg);
  std::vector<AlphaRow> rows;
  for (double alpha : cfg.alphas) {
    TaskConfig task = cfg.task;
    task.tradeoff_alpha = alpha;
    task.validate();
    const std::vector<Goal> goals = evaluation_goals(task, cfg.eval_goals);
    PolicyParams first;
    for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
      TrainConfig tc = cfg.train;
      tc.seed = cfg.seeds[si];
      tc.agent.architecture = architecture_for(cfg.method);
      const fs::path run = dir / ("alpha_" + fmt(alpha)) / ("seed_" + std::to_string(tc.seed));
      const TrainResult tr = train(task, tc, run);
      if (si == 0) first = tr.params;
      AlphaRow row;
      row.alpha = alpha;
      row.seed = tc.seed;
      const auto eps = evaluate(tr.params, task, goals);
      for (const auto& e : eps) {
        row.ratio += usage_ratio(e);
        row.mean_return += e.episode_return;
        row.success_rate += e.success_credit;
        row.mean_d_used += e.d_used;
        row.mean_c_used += e.mean_c_used;
      }
      const double n = static_cast<double>(eps.size());
      row.ratio /= n;
      row.mean_return /= n;
      row.success_rate /= n;
      row.mean_d_used /= n;
      row.mean_c_used /= n;
      rows.push_back(row);
    }
    const DesignVector d = design_for_goal({task, first, cfg.seeds.front()}, goals.front());
    write_text_file(dir / ("tool_alpha_" + fmt(alpha) + ".stl"), export_stl(build_tool(d, task.tool_radius), cfg.stl_thickness));
    DesignRecord rec{std::string(task_name(task.task)), goal_values(goals.front()), d, cfg.seeds.front()};
    write_json_file(dir / ("tool_alpha_" + fmt(alpha) + ".json"), to_json(rec));
  }
  std::ofstream os = open_out(dir / "alpha_sweep.csv");
  os << "alpha,seed,ratio,mean_return,success_rate,mean_d_used,mean_c_used\n";
  for (const auto& r : rows) {
    os << fmt(r.alpha) << ',' << r.seed << ',' << fmt(r.ratio) << ',' << fmt(r.mean_return) << ','
       << fmt(r.success_rate) << ',' << fmt(r.mean_d_used) << ',' << fmt(r.mean_c_used) << '\n';
  }
  std::ofstream sum = open_out(dir / "alpha_summary.csv");
  sum << "alpha,median_ratio,mean_return\n";
  for (double alpha : cfg.alphas) {
    std::vector<double> ratios;
    double ret = 0.0;
    for (const auto& r : rows) {
      if (r.alpha == alpha) {
        ratios.push_back(r.ratio);
        ret += r.mean_return;
      }
    }
    std::sort(ratios.begin(), ratios.end());
    const std::size_t m = ratios.size();
    const double median = m % 2 ? ratios[m / 2] : 0.5 * (ratios[m / 2 - 1] + ratios[m / 2]);
    sum << fmt(alpha) << ',' << fmt(median) << ',' << fmt(ret / static_cast<double>(m)) << '\n';
  }
  return rows;
}

// --- export ----------------------------------------------------------------------

DesignVector design_for_goal(const LoadedPolicy& policy, const Goal& goal) {
  auto env = Environment::make(policy.task);
  const Observation obs = env->reset(goal, evaluation_env_seed(0));
  const VectorXd mean = policy.params.design_mean(policy_features(*env, obs));
  env->step_design_action(std::span<const double>(mean.data(), static_cast<std::size_t>(mean.size())));
  return env->design();
}

ExportResult cmd_export_tool(const ExperimentConfig& cfg, const fs::path& checkpoint,
                             std::span<const double> goal_values_in, const std::string& name) {
  const LoadedPolicy policy = load_policy(checkpoint);
  const Goal goal = goal_from_values(policy.task.task, goal_values_in);
  validate_goal(policy.task, goal);
  const fs::path dir = resolve_output(cfg.out);
  write_manifest(dir, "export-tool", cfg,
                 {{"checkpoint", checkpoint.generic_string()}, {"goal", goal_values(goal)}, {"name", name}});
  ExportResult res;
  res.record.task = std::string(task_name(policy.task.task));
  res.record.goal = goal_values(goal);
  res.record.design = design_for_goal(policy, goal);
  res.record.seed = policy.seed;
  res.stl = dir / (name + ".stl");
  res.json = dir / (name + ".json");
  write_text_file(res.stl, export_stl(build_tool(res.record.design, policy.task.tool_radius), cfg.stl_thickness));
  write_json_file(res.json, to_json(res.record));
  return res;
}

// --- compare ---------------------------------------------------------------------

void cmd_compare(const std::vector<fs::path>& runs, const fs::path& out_csv) {
  if (runs.empty()) throw std::invalid_argument("compare: no runs given");
  std::ofstream os;
  bool header = false;
  for (const auto& run : runs) {
    const nlohmann::json m = read_json_file(run / "manifest.json");
    const std::string method = m.at("config").at("method").get<std::string>();
    const CsvTable t = read_csv(run / "aggregate_eval.csv");
    if (!header) {
      if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
      os = open_out(out_csv);
      os << "method,run";
      for (const auto& h : t.header) os << ',' << h;
      os << '\n';
      header = true;
    }
    for (const auto& row : t.rows) {
      const fs::path name = run.filename().empty() ? run.parent_path().filename() : run.filename();
      os << method << ',' << name.generic_string();
      for (double v : row) os << ',' << fmt(v);
      os << '\n';
    }
  }
}

}  // namespace codesign
