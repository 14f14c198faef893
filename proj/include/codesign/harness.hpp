#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "codesign/baselines.hpp"
#include "codesign/config.hpp"

namespace codesign {

enum class Method { ours, shared_arch, hwasp_minimal, cma_rl, cmaes };

std::string_view method_name(Method m);
Method parse_method(std::string_view name);

struct ExperimentConfig {
  std::string preset = "desk";
  Method method = Method::ours;
  TaskConfig task;
  TrainConfig train;
  BaselineConfig baseline;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path out = "runs";

  int eval_grid = 20;        // cells per axis for push grid evaluation
  double eval_margin = 2.0;  // grid extends this far past the goal region
  int eval_goals = 16;       // fixed-set size for catch and scoop
  std::vector<double> alphas{0.0, 0.3, 0.7, 1.0};
  int finetune_updates = 50;
  std::vector<Goal> finetune_goals;  // empty: derived from the checkpoint's task
  double stl_thickness = 0.5;

  // Preset "desk" or "paper" for a task.
  static ExperimentConfig make(Task task, std::string_view preset);
  // Applies one key; returns false for unknown keys.
  bool apply(const std::string& key, const std::string& value);
  void validate() const;
  nlohmann::json to_json() const;
};

// Preset, then the config file's keys, then command-line keys. The task and
// preset keys are resolved first from the same precedence. Unknown keys throw
// std::invalid_argument naming the key.
ExperimentConfig load_experiment_config(const std::vector<KeyValue>& file_keys, const std::vector<KeyValue>& cli_keys);

// $CODESIGN_OUT if set, else the working directory.
std::filesystem::path output_root();
// Absolute `out` as is, relative `out` under output_root().
std::filesystem::path resolve_output(const std::filesystem::path& out);

// manifest.json: command, config, seeds, code version. No timestamps.
void write_manifest(const std::filesystem::path& dir, const std::string& command, const ExperimentConfig& cfg,
                    const nlohmann::json& extra = {});

std::string code_version();

// --- train ---------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};
CsvTable read_csv(const std::filesystem::path& path);

// Row-wise mean and standard error (n - 1) across per-seed tables, truncated to
// the shortest table. Header: env_steps, n, then <col>_mean, <col>_stderr for
// every column after env_steps.
CsvTable aggregate_tables(const std::vector<CsvTable>& tables);
void write_csv(const std::filesystem::path& path, const CsvTable& t);

struct TrainArtifacts {
  std::filesystem::path dir;
  std::vector<std::filesystem::path> seed_dirs;
};

// Per seed: <out>/seed_<s>/{metrics.csv, eval.csv, ...}; aggregates in <out>.
TrainArtifacts cmd_train(const ExperimentConfig& cfg);

// --- eval ----------------------------------------------------------------

struct LoadedPolicy {
  TaskConfig task;
  PolicyParams params;
  std::uint64_t seed = 0;
};
// Accepts trainer checkpoints and CMA-RL policy files.
LoadedPolicy load_policy(const std::filesystem::path& path);

enum class GoalRegion { training, cutout, outside };
std::string_view region_name(GoalRegion r);
GoalRegion classify_goal(const TaskConfig& task, const Goal& goal);

// Push: eval_grid x eval_grid cell centres over the goal region grown by
// eval_margin. Other tasks: the fixed evaluation set of eval_goals goals.
std::vector<Goal> evaluation_grid(const TaskConfig& task, const ExperimentConfig& cfg);

struct GoalRecord {
  Goal goal;
  GoalRegion region = GoalRegion::training;
  EpisodeSummary summary;
};

struct RegionStats {
  int count = 0;
  double mean_return = 0.0;
  double success_rate = 0.0;
};

struct EvalReport {
  std::string task;
  std::vector<GoalRecord> goals;
  RegionStats training, cutout, outside;
  std::array<double, kDesignDim> design_mean{}, design_std{}, design_min{}, design_max{};

  nlohmann::json to_json() const;
};

EvalReport evaluate_report(const LoadedPolicy& policy, std::span<const Goal> goals);
// Writes eval_report.json and eval_goals.csv into the output directory.
EvalReport cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint);

// --- finetune --------------------------------------------------------------

struct FinetunePoint {
  std::string curve;  // "finetune" or "scratch"
  int update = 0;
  long long env_steps = 0;
  int goal_index = 0;
  double episode_return = 0.0;
  bool success = false;
};

// Four goals in the checkpoint's cutout (or just outside its goal region when
// it has none).
std::vector<Goal> default_finetune_goals(const TaskConfig& task);

// Continues PPO from the checkpoint on the target goals and, separately, trains
// from scratch on them; both are evaluated on each goal after every update.
std::vector<FinetunePoint> cmd_finetune(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint);

// --- alpha sweep ---------------------------------------------------------

struct AlphaRow {
  double alpha = 0.0;
  std::uint64_t seed = 0;
  double ratio = 0.0;  // mean over eval episodes of (d_used/d_max) / (c_used/c_max)
  double mean_return = 0.0;
  double success_rate = 0.0;
  double mean_d_used = 0.0;
  double mean_c_used = 0.0;
};

double usage_ratio(const EpisodeSummary& s);
std::vector<AlphaRow> cmd_alpha_sweep(const ExperimentConfig& cfg);

// --- export ----------------------------------------------------------------

struct ExportResult {
  DesignRecord record;
  std::filesystem::path stl, json;
};

// Designer output (deterministic) for one goal of the policy's task.
DesignVector design_for_goal(const LoadedPolicy& policy, const Goal& goal);
ExportResult cmd_export_tool(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                             std::span<const double> goal_values, const std::string& name = "tool");

// --- compare ---------------------------------------------------------------

// Stacks each run's aggregate_eval.csv with a method column.
void cmd_compare(const std::vector<std::filesystem::path>& runs, const std::filesystem::path& out_csv);

}  // namespace codesign
