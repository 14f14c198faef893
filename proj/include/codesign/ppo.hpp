#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "codesign/envs.hpp"
#include "codesign/policy.hpp"

namespace codesign {

struct TrajectoryStep {
  Phase phase = Phase::design;
  std::vector<double> observation;  // raw task observation
  std::vector<double> features;     // policy input column, see FeatureLayout
  std::vector<double> action;
  double logprob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  bool done = false;
};

struct Trajectory {
  Goal goal;
  std::uint64_t env_seed = 0;
  std::vector<TrajectoryStep> steps;
  DesignVector design;
  StepInfo final_info;
  double mean_c_used = 0.0;  // over control steps

  double episode_return() const;
};

// Throws std::logic_error unless step 0 is the only design step and every
// reward is finite.
void check_trajectory(const Trajectory& t);

struct TrainConfig {
  double policy_lr = 2e-5;
  double value_lr = 1e-4;
  double entropy_beta = 0.01;
  double kl_threshold = 0.005;
  int batch_size = 50000;
  int minibatch_size = 2000;
  int ppo_epochs = 10;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_epsilon = 0.2;
  double max_grad_norm = 0.0;  // 0 disables clipping
  int num_workers = 1;
  long long total_steps = 10'000'000;
  std::uint64_t seed = 0;
  int eval_every = 0;  // batches between fixed-set evaluations, 0 = never
  AgentConfig agent;

  // Published hyperparameters for the task.
  static TrainConfig paper(Task task);
  // Small-batch settings that learn within a couple of million steps on one core.
  static TrainConfig desk(Task task);
  void validate() const;
};

using GoalSampler = std::function<Goal(Rng&)>;

// Full feature column for the environment's current observation.
std::vector<double> policy_features(const Environment& env, const Observation& obs);

// One design step then control steps until done. Deterministic mode uses the
// Gaussian means. `trace` (optional) receives every step.
Trajectory run_episode(Environment& env, const PolicyParams& params, const Goal& goal, std::uint64_t env_seed,
                       Rng& rng, bool deterministic, EpisodeTraceWriter* trace = nullptr);

// Whole episodes until at least batch_size steps. Worker w draws from its own
// stream seeded by (stream_seed, w) and fills ceil(batch_size / workers) steps.
std::vector<Trajectory> collect_batch(std::span<const std::unique_ptr<Environment>> envs,
                                      const PolicyParams& params, const TrainConfig& cfg,
                                      const GoalSampler& goals, std::uint64_t stream_seed);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// values carries one bootstrap entry past the last reward.
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      const std::vector<bool>& dones, double gamma, double lambda);

// Flattened batch, one column per step.
struct Batch {
  MatrixXd features;  // full feature columns
  MatrixXd actions;   // rows: max(design dim, control dim); unused rows are 0
  std::vector<Phase> phase;
  VectorXd logp_old;
  VectorXd values;
  VectorXd advantages;  // normalized
  VectorXd returns;

  Eigen::Index size() const { return features.cols(); }
};

Batch make_batch(const std::vector<Trajectory>& trajectories, const FeatureLayout& layout, const TrainConfig& cfg);
// Shifts and scales to mean 0, standard deviation 1 (no-op scale when constant).
void normalize_advantages(VectorXd& a);

struct PolicyGrads {
  VectorXd designer, controller, shared, design_mean, design_log_std, control_log_std, value;
};

struct LossTerms {
  double policy_loss = 0.0;  // -surrogate - beta * entropy
  double value_loss = 0.0;   // 0.5 * mean squared error
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  PolicyGrads grads;
};

// Losses and gradients on the columns `idx` of the batch.
LossTerms ppo_loss(const PolicyParams& params, const Batch& batch, std::span<const Eigen::Index> idx,
                   const TrainConfig& cfg);

struct Optimizers {
  Adam designer, controller, shared, design_mean, design_log_std, control_log_std, value;

  Optimizers() = default;
  Optimizers(const PolicyParams& params, const TrainConfig& cfg);
  nlohmann::json to_json() const;
  static Optimizers from_json(const nlohmann::json& j);
};

struct UpdateStats {
  double approx_kl = 0.0;  // mean over the last completed epoch
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  int epochs = 0;
  bool early_stopped = false;
  bool aborted = false;  // non-finite loss; parameters restored
};

// Applies one gradient step per term to every trainable block.
void apply_gradients(PolicyParams& params, Optimizers& opt, const PolicyGrads& g, double max_grad_norm);

UpdateStats ppo_update(PolicyParams& params, Optimizers& opt, const Batch& batch, const TrainConfig& cfg, Rng& rng);

struct EpisodeSummary {
  Goal goal;
  DesignVector design;
  double episode_return = 0.0;
  double success_credit = 0.0;
  bool success = false;
  double d_used = 0.0;
  double d_max = 0.0;
  double mean_c_used = 0.0;
  double c_max = 0.0;
  int steps = 0;
};

EpisodeSummary summarize(const Trajectory& t, const TradeoffConfig& tradeoff);

// Fixed evaluation goals drawn from the full goal space (cutout ignored).
std::vector<Goal> evaluation_goals(const TaskConfig& cfg, int count = 16, std::uint64_t seed = 20230717);
std::uint64_t evaluation_env_seed(std::size_t goal_index);

std::vector<EpisodeSummary> evaluate(const PolicyParams& params, const TaskConfig& cfg, std::span<const Goal> goals);

struct MetricRow {
  long long env_steps = 0;
  double mean_return = 0.0;
  double success_rate = 0.0;
  double approx_kl = 0.0;
  double entropy = 0.0;
  double mean_d_used = 0.0;
  double mean_c_used = 0.0;
  std::array<double, kDesignDim> mean_design{};
  int episodes = 0;
  int epochs = 0;
};

void write_metric_header(std::ostream& os);
void write_metric_row(std::ostream& os, const MetricRow& r);
void write_design_header(std::ostream& os);
void write_design_row(std::ostream& os, const MetricRow& r);

// Alternates collect_batch and ppo_update; checkpointable between batches.
class Trainer {
 public:
  Trainer(TaskConfig task, TrainConfig cfg);

  static Trainer from_checkpoint(const nlohmann::json& ckpt);

  void set_goal_sampler(GoalSampler goals) { goals_ = std::move(goals); }
  MetricRow train_batch();
  // Batches until env_steps >= total; calls on_batch after each.
  void run(long long total_steps, const std::function<void(const MetricRow&)>& on_batch = {});

  PolicyParams& params() { return params_; }
  const PolicyParams& params() const { return params_; }
  const TaskConfig& task_config() const { return task_; }
  const TrainConfig& train_config() const { return cfg_; }
  TrainConfig& train_config() { return cfg_; }
  Optimizers& optimizers() { return opt_; }
  long long env_steps() const { return env_steps_; }
  int batches() const { return batches_; }
  const UpdateStats& last_update() const { return last_update_; }

  nlohmann::json checkpoint() const;

 private:
  void make_envs();

  TaskConfig task_;
  TrainConfig cfg_;
  PolicyParams params_;
  Optimizers opt_;
  Rng rng_;
  std::vector<std::unique_ptr<Environment>> envs_;
  GoalSampler goals_;
  long long env_steps_ = 0;
  int batches_ = 0;
  UpdateStats last_update_;
};

struct TrainResult {
  PolicyParams params;
  std::vector<MetricRow> metrics;
  long long env_steps = 0;
};

// Writes metrics.csv, designs.csv, eval.csv (when eval_every > 0) and
// checkpoint.json into out_dir. With resume, continues from
// out_dir/checkpoint.json and appends to the logs.
TrainResult train(const TaskConfig& task, const TrainConfig& cfg, const std::filesystem::path& out_dir,
                  bool resume = false);

std::uint64_t config_hash(const TaskConfig& task, const TrainConfig& cfg);

}  // namespace codesign
