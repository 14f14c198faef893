#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "codesign/harness.hpp"
#include "stl_reader.hpp"

using namespace codesign;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "codesign_test_harness" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<KeyValue> kv(std::initializer_list<std::pair<const char*, const char*>> pairs) {
  std::vector<KeyValue> out;
  for (const auto& [k, v] : pairs) out.push_back({k, v, 0});
  return out;
}

ExperimentConfig tiny(const fs::path& out, const char* task = "push") {
  return load_experiment_config({}, kv({{"task", task},
                                        {"total_steps", "600"},
                                        {"batch_size", "300"},
                                        {"minibatch_size", "150"},
                                        {"hidden", "8,8"},
                                        {"value_hidden", "8,8"},
                                        {"eval_every", "1"},
                                        {"out", out.c_str()}}));
}

}  // namespace

TEST_CASE("config precedence and errors") {
  const auto file = kv({{"task", "catch_balls"}, {"batch_size", "1000"}, {"policy_lr", "1e-3"}});
  const auto cli = kv({{"batch_size", "2000"}});
  const ExperimentConfig c = load_experiment_config(file, cli);
  CHECK(c.task.task == Task::catch_balls);
  CHECK(c.train.batch_size == 2000);
  CHECK(c.train.policy_lr == 1e-3);
  CHECK(c.train.minibatch_size == 512);  // desk preset

  const ExperimentConfig paper = load_experiment_config({}, kv({{"preset", "paper"}, {"task", "push"}}));
  CHECK(paper.train.batch_size == 50000);
  CHECK(paper.train.policy_lr == 2e-5);

  try {
    load_experiment_config({}, kv({{"no_such_key", "1"}}));
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("no_such_key") != std::string::npos);
  }
  CHECK_THROWS_AS(load_experiment_config({}, kv({{"method", "magic"}})), std::invalid_argument);
  CHECK_THROWS_AS(load_experiment_config({}, kv({{"cutout_fraction", "0.3"}})), std::invalid_argument);
  CHECK_NOTHROW(load_experiment_config({}, kv({{"cutout_fraction", "0.4"}})));

  const ExperimentConfig m = load_experiment_config({}, kv({{"method", "cma_rl"}, {"inner_steps", "500"},
                                                            {"inner_batch_size", "250"}, {"inner_minibatch_size", "125"}, {"seeds", "3,4"}}));
  CHECK(m.method == Method::cma_rl);
  CHECK(m.baseline.inner_steps == 500);
  CHECK(m.baseline.inner.batch_size == 250);
  CHECK(m.train.batch_size == 4096);
  CHECK(m.seeds == std::vector<std::uint64_t>{3, 4});
}

TEST_CASE("output root from the environment") {
  const fs::path root = scratch_dir("root");
  setenv("CODESIGN_OUT", root.c_str(), 1);
  CHECK(resolve_output("runs/a") == root / "runs/a");
  CHECK(resolve_output("/abs/x") == fs::path("/abs/x"));
  unsetenv("CODESIGN_OUT");
  CHECK(resolve_output("runs/a") == fs::current_path() / "runs/a");
}

TEST_CASE("aggregate equals recomputation") {
  CsvTable a{{"env_steps", "r"}, {{10, 1.0}, {20, 2.0}, {30, 5.0}}};
  CsvTable b{{"env_steps", "r"}, {{12, 3.0}, {22, 2.0}}};
  const CsvTable g = aggregate_tables({a, b});
  REQUIRE(g.rows.size() == 2);
  CHECK(g.header == std::vector<std::string>{"env_steps", "n", "r_mean", "r_stderr"});
  CHECK(g.rows[0][0] == 11.0);
  CHECK(g.rows[0][1] == 2.0);
  CHECK(g.rows[0][2] == 2.0);
  CHECK(g.rows[0][3] == doctest::Approx(std::sqrt(2.0) / std::sqrt(2.0)));
  CHECK(g.rows[1][3] == 0.0);
  CHECK_THROWS(aggregate_tables({a, CsvTable{{"env_steps", "q"}, {}}}));
}

TEST_CASE("train writes per-seed and aggregate logs deterministically") {
  const fs::path dir = scratch_dir("train");
  ExperimentConfig cfg = tiny(dir / "a");
  cfg.seeds = {0, 1};
  const TrainArtifacts a = cmd_train(cfg);
  cfg.out = dir / "b";
  const TrainArtifacts b = cmd_train(cfg);
  REQUIRE(a.seed_dirs.size() == 2);
  for (const char* f : {"seed_0/metrics.csv", "seed_1/metrics.csv", "seed_0/eval.csv", "seed_1/checkpoint.json",
                        "aggregate_metrics.csv", "aggregate_eval.csv"}) {
    CHECK_MESSAGE(slurp(a.dir / f) == slurp(b.dir / f), f);
  }
  const std::string manifest = slurp(a.dir / "manifest.json");
  CHECK(manifest.find("\"version\"") != std::string::npos);
  CHECK(manifest.find("\"seeds\"") != std::string::npos);

  // Aggregate recomputed from the files on disk.
  const CsvTable s0 = read_csv(a.dir / "seed_0/metrics.csv");
  const CsvTable s1 = read_csv(a.dir / "seed_1/metrics.csv");
  const CsvTable agg = read_csv(a.dir / "aggregate_metrics.csv");
  CHECK(s0.header == std::vector<std::string>{"env_steps", "mean_return", "success_rate", "approx_kl", "entropy",
                                               "mean_d_used", "mean_c_used"});
  std::ostringstream want, got;
  const CsvTable re = aggregate_tables({s0, s1});
  write_csv(dir / "re.csv", re);
  CHECK(slurp(dir / "re.csv") == slurp(a.dir / "aggregate_metrics.csv"));
  CHECK(agg.rows.size() == std::min(s0.rows.size(), s1.rows.size()));
}

TEST_CASE("baseline methods through the harness") {
  const fs::path dir = scratch_dir("cma");
  ExperimentConfig cfg = tiny(dir / "cmaes", "catch_balls");
  cfg.method = Method::cmaes;
  cfg.baseline.cma.population = 4;
  cfg.baseline.max_generations = 2;
  cfg.baseline.total_steps = 1000000;
  const TrainArtifacts a = cmd_train(cfg);
  CHECK(fs::exists(a.dir / "seed_0/cma.jsonl"));
  CHECK(fs::exists(a.dir / "aggregate_eval.csv"));
  CHECK(read_csv(a.dir / "seed_0/metrics.csv").rows.size() == 2);

  cfg.out = dir / "cmarl";
  cfg.method = Method::cma_rl;
  cfg.baseline.max_generations = 1;
  cfg.baseline.inner_steps = 0;
  const TrainArtifacts b = cmd_train(cfg);
  const LoadedPolicy p = load_policy(b.dir / "seed_0/policy.json");
  CHECK(p.params.config.architecture == Architecture::hwasp);

  const fs::path cmp = dir / "compare.csv";
  cmd_compare({a.dir, b.dir}, cmp);
  const std::string text = slurp(cmp);
  CHECK(text.rfind("method,run,env_steps", 0) == 0);
  CHECK(text.find("cmaes,cmaes,") != std::string::npos);
  CHECK(text.find("cma_rl,cmarl,") != std::string::npos);
}

TEST_CASE("eval, finetune and export on a small checkpoint") {
  const fs::path dir = scratch_dir("eval");
  ExperimentConfig cfg = tiny(dir / "train");
  cfg.task = TaskConfig::defaults(Task::push);
  cfg.task.cutout = CutoutSpec::centered_pair(cfg.task.push_goal_region, 0.4);
  const TrainArtifacts a = cmd_train(cfg);
  const fs::path ckpt = a.dir / "seed_0/checkpoint.json";

  SUBCASE("grid report") {
    cfg.out = dir / "report";
    const EvalReport r = cmd_eval(cfg, ckpt);
    CHECK(r.goals.size() == 400);
    CHECK(r.training.count + r.cutout.count + r.outside.count == 400);
    CHECK(r.cutout.count > 0);
    CHECK(r.outside.count > 0);
    for (const auto& g : r.goals) CHECK(g.region == classify_goal(cfg.task, g.goal));
    int lines = 0;
    std::ifstream is(dir / "report/eval_goals.csv");
    for (std::string l; std::getline(is, l);) ++lines;
    CHECK(lines == 401);
    ExperimentConfig other = cfg;
    other.task = TaskConfig::defaults(Task::catch_balls);
    CHECK_THROWS_AS(cmd_eval(other, ckpt), std::invalid_argument);
  }
  SUBCASE("classification") {
    TaskConfig t = cfg.task;
    const Rect c = t.cutout.rects.front();
    CHECK(classify_goal(t, PushGoal{Vec2(0.5 * (c.x0 + c.x1), 0.5 * (c.y0 + c.y1))}) == GoalRegion::cutout);
    CHECK(classify_goal(t, PushGoal{Vec2(t.push_goal_region.x0 - 1.0, 16.0)}) == GoalRegion::outside);
    t.cutout = {};
    CHECK(classify_goal(t, PushGoal{Vec2(0.5 * (c.x0 + c.x1), 0.5 * (c.y0 + c.y1))}) == GoalRegion::training);
  }
  SUBCASE("finetune") {
    cfg.out = dir / "ft";
    cfg.finetune_updates = 0;
    const auto zero = cmd_finetune(cfg, ckpt);
    REQUIRE(zero.size() == 8);  // 2 curves x 4 goals
    const LoadedPolicy p = load_policy(ckpt);
    const auto goals = default_finetune_goals(p.task);
    for (const Goal& g : goals) CHECK(classify_goal(p.task, g) == GoalRegion::cutout);
    const auto eps = evaluate(p.params, p.task, goals);
    for (int i = 0; i < 4; ++i) CHECK(zero[static_cast<std::size_t>(i)].episode_return == eps[static_cast<std::size_t>(i)].episode_return);

    cfg.finetune_updates = 1;
    const auto one = cmd_finetune(cfg, ckpt);
    CHECK(one.size() == 16);
    CHECK(fs::exists(dir / "ft/finetune_summary.json"));
  }
  SUBCASE("export") {
    cfg.out = dir / "x";
    const std::vector<double> goal{18.0, 17.0};
    const ExportResult r1 = cmd_export_tool(cfg, ckpt, goal, "a");
    const ExportResult r2 = cmd_export_tool(cfg, ckpt, goal, "b");
    CHECK(slurp(r1.stl) == slurp(r2.stl));
    CHECK(slurp(r1.json) == slurp(r2.json));
    const auto mesh = stl_test::parse(slurp(r1.stl));
    CHECK(mesh.size() == 36);
    const nlohmann::json rec = nlohmann::json::parse(slurp(r1.json));
    CHECK(rec.at("goal") == nlohmann::json({18.0, 17.0}));
    try {
      cmd_export_tool(cfg, ckpt, std::vector<double>{18.0, std::nan("")});
      FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("target") != std::string::npos);
    }
  }
}

TEST_CASE("alpha sweep guard and schema") {
  const fs::path dir = scratch_dir("alpha");
  ExperimentConfig cfg = tiny(dir / "a", "catch_balls");
  CHECK_THROWS_AS(cmd_alpha_sweep(cfg), std::invalid_argument);  // K = 0
  CHECK(cfg.alphas == std::vector<double>{0.0, 0.3, 0.7, 1.0});
  cfg.task.tradeoff_k = 0.05;
  cfg.alphas = {0.0, 1.0};
  cfg.eval_goals = 2;
  const auto rows = cmd_alpha_sweep(cfg);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) CHECK(r.ratio > 0.0);
  CHECK(fs::exists(dir / "a/alpha_sweep.csv"));
  CHECK(fs::exists(dir / "a/alpha_summary.csv"));
  CHECK(fs::exists(dir / "a/tool_alpha_0.stl"));
  CHECK(fs::exists(dir / "a/tool_alpha_1.json"));
}
