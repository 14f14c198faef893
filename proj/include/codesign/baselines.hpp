#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "codesign/cma.hpp"
#include "codesign/ppo.hpp"

namespace codesign {

struct BaselineConfig {
  CmaOptions cma;
  long long total_steps = 2'000'000;  // stop once the env-step count reaches this
  int max_generations = 0;            // 0 = no limit
  std::uint64_t seed = 0;
  // CMA-RL: PPO steps per candidate and the inner trainer's settings.
  long long inner_steps = 20'000;
  TrainConfig inner;
};

// Goal-independent design plus an open-loop control sequence, one row per control step.
struct FlatEpisodePlan {
  DesignVector design;
  MatrixXd controls;
};

// 5 design ratios followed by max_episode_steps * control_dim controls.
int plan_dimension(const TaskConfig& cfg);
FlatEpisodePlan plan_from_vector(const TaskConfig& cfg, const VectorXd& x);

struct PlanScore {
  double mean_return = 0.0;
  double success_rate = 0.0;
  double mean_d_used = 0.0;
  double mean_c_used = 0.0;
  long long env_steps = 0;
};

PlanScore evaluate_plan(const TaskConfig& cfg, const FlatEpisodePlan& plan, std::span<const Goal> goals);

struct CmaRunResult {
  VectorXd best;  // best candidate vector
  PlanScore best_score;
  DesignVector best_design;
  PolicyParams policy;  // CMA-RL: inner policy of the best candidate
  std::vector<CmaLogRow> generations;
  std::vector<MetricRow> curve;  // per generation, best-so-far on the evaluation goals
  long long env_steps = 0;
};

// Fitness of each candidate is its mean return on `goals` (fixed seeds).
CmaRunResult single_traj_cmaes(const TaskConfig& cfg, const BaselineConfig& bc, std::span<const Goal> goals,
                               std::ostream* jsonl = nullptr);

// Outer CMA-ES over design ratios; each candidate trains a design-conditioned
// controller from scratch for bc.inner_steps, then is scored deterministically
// on `goals`. Inner training and scoring steps both count toward env_steps.
CmaRunResult cma_rl(const TaskConfig& cfg, const BaselineConfig& bc, std::span<const Goal> goals,
                    std::ostream* jsonl = nullptr);

// Trains a design-conditioned controller for one fixed design (used by cma_rl).
struct InnerResult {
  PolicyParams policy;
  PlanScore score;
};
InnerResult train_fixed_design(const TaskConfig& cfg, const TrainConfig& inner, long long steps,
                               std::span<const double> design_action, std::span<const Goal> goals);

}  // namespace codesign
