#include "codesign/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace codesign {

int plan_dimension(const TaskConfig& cfg) { return kDesignDim + cfg.max_episode_steps * cfg.control_dim(); }

FlatEpisodePlan plan_from_vector(const TaskConfig& cfg, const VectorXd& x) {
  if (x.size() != plan_dimension(cfg)) throw std::invalid_argument("plan vector has the wrong dimension");
  FlatEpisodePlan plan;
  plan.design = design_from_action(cfg, std::span<const double>(x.data(), kDesignDim));
  const int k = cfg.control_dim();
  plan.controls.resize(cfg.max_episode_steps, k);
  for (int t = 0; t < cfg.max_episode_steps; ++t) {
    for (int j = 0; j < k; ++j) plan.controls(t, j) = x(kDesignDim + t * k + j);
  }
  return plan;
}

namespace {

PlanScore score_summaries(const std::vector<EpisodeSummary>& eps) {
  PlanScore s;
  for (const auto& e : eps) {
    s.mean_return += e.episode_return;
    s.success_rate += e.success_credit;
    s.mean_d_used += e.d_used;
    s.mean_c_used += e.mean_c_used;
    s.env_steps += e.steps;
  }
  const double n = static_cast<double>(std::max<std::size_t>(eps.size(), 1));
  s.mean_return /= n;
  s.success_rate /= n;
  s.mean_d_used /= n;
  s.mean_c_used /= n;
  return s;
}

MetricRow curve_row(long long steps, const PlanScore& best, const DesignVector& design) {
  MetricRow r;
  r.env_steps = steps;
  r.mean_return = best.mean_return;
  r.success_rate = best.success_rate;
  r.mean_d_used = best.mean_d_used;
  r.mean_c_used = best.mean_c_used;
  for (int k = 0; k < kNumLinks; ++k) r.mean_design[k] = design.lengths[k];
  for (int k = 0; k < kNumJoints; ++k) r.mean_design[kNumLinks + k] = design.angles[k];
  return r;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  int n = 0;
  for (double x : v) {
    if (std::isfinite(x)) {
      s += x;
      ++n;
    }
  }
  return n > 0 ? s / n : std::nan("");
}

bool budget_left(const BaselineConfig& bc, long long steps, int generation) {
  if (bc.max_generations > 0 && generation >= bc.max_generations) return false;
  return steps < bc.total_steps;
}

}  // namespace

PlanScore evaluate_plan(const TaskConfig& cfg, const FlatEpisodePlan& plan, std::span<const Goal> goals) {
  auto env = Environment::make(cfg);
  std::vector<EpisodeSummary> eps;
  eps.reserve(goals.size());
  const TradeoffConfig tradeoff = env->tradeoff();
  const int k = cfg.control_dim();
  std::vector<double> u(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < goals.size(); ++i) {
    env->reset(goals[i], evaluation_env_seed(i));
    Trajectory t;
    t.goal = goals[i];
    StepResult r = env->step_design(plan.design);
    t.design = env->design();
    t.steps.push_back({Phase::design, {}, {}, {}, 0.0, r.reward, 0.0, r.done});
    double c = 0.0;
    int n = 0;
    for (int step = 0; !r.done && step < plan.controls.rows(); ++step) {
      for (int j = 0; j < k; ++j) u[static_cast<std::size_t>(j)] = plan.controls(step, j);
      r = env->step_control(u);
      c += r.info.c_used;
      ++n;
      t.steps.push_back({Phase::control, {}, {}, {}, 0.0, r.reward, 0.0, r.done});
    }
    t.final_info = r.info;
    t.mean_c_used = n > 0 ? c / n : 0.0;
    eps.push_back(summarize(t, tradeoff));
  }
  return score_summaries(eps);
}

CmaRunResult single_traj_cmaes(const TaskConfig& cfg, const BaselineConfig& bc, std::span<const Goal> goals,
                               std::ostream* jsonl) {
  if (goals.empty()) throw std::invalid_argument("cmaes: no evaluation goals");
  Cma cma(VectorXd::Zero(plan_dimension(cfg)), bc.cma);
  Rng rng(bc.seed);
  CmaRunResult res;
  res.best = cma.mean();
  res.best_score.mean_return = -std::numeric_limits<double>::infinity();
  while (budget_left(bc, res.env_steps, cma.generation())) {
    const std::vector<VectorXd> cands = cma.ask(rng);
    std::vector<double> fitness(cands.size());
    for (std::size_t i = 0; i < cands.size(); ++i) {
      // Controls outside [-1, 1] are clamped by the environment.
      const PlanScore s = evaluate_plan(cfg, plan_from_vector(cfg, cands[i]), goals);
      res.env_steps += s.env_steps;
      fitness[i] = s.mean_return;
      if (std::isfinite(s.mean_return) && s.mean_return > res.best_score.mean_return) {
        res.best_score = s;
        res.best = cands[i];
      }
    }
    cma.tell(cands, fitness);
    res.best_design = plan_from_vector(cfg, res.best).design;
    const CmaLogRow row{cma.generation(), res.best_score.mean_return, mean_of(fitness), cma.sigma(), res.env_steps};
    res.generations.push_back(row);
    if (jsonl) write_cma_row(*jsonl, row);
    res.curve.push_back(curve_row(res.env_steps, res.best_score, res.best_design));
  }
  return res;
}

InnerResult train_fixed_design(const TaskConfig& cfg, const TrainConfig& inner, long long steps,
                               std::span<const double> design_action, std::span<const Goal> goals) {
  if (design_action.size() != static_cast<std::size_t>(kDesignDim)) {
    throw std::invalid_argument("fixed design: expected 5 design values");
  }
  TrainConfig tc = inner;
  tc.agent.architecture = Architecture::hwasp;
  // Effectively deterministic design step; the mean is frozen below.
  tc.agent.design_log_std = -20.0;
  tc.eval_every = 0;
  Trainer trainer(cfg, tc);
  trainer.params().design_mean_param = Eigen::Map<const VectorXd>(design_action.data(), kDesignDim);
  trainer.optimizers().design_mean.set_lr(0.0);
  trainer.optimizers().design_log_std.set_lr(0.0);
  trainer.run(steps);
  InnerResult out;
  out.policy = trainer.params();
  out.score = score_summaries(evaluate(out.policy, cfg, goals));
  out.score.env_steps += trainer.env_steps();
  return out;
}

CmaRunResult cma_rl(const TaskConfig& cfg, const BaselineConfig& bc, std::span<const Goal> goals,
                    std::ostream* jsonl) {
  if (goals.empty()) throw std::invalid_argument("cma-rl: no evaluation goals");
  if (bc.inner_steps < 0) throw std::invalid_argument("cma-rl: inner_steps must be non-negative");
  Cma cma(VectorXd::Zero(kDesignDim), bc.cma);
  Rng rng(bc.seed);
  CmaRunResult res;
  res.best = cma.mean();
  res.best_score.mean_return = -std::numeric_limits<double>::infinity();
  while (budget_left(bc, res.env_steps, cma.generation())) {
    const std::vector<VectorXd> cands = cma.ask(rng);
    std::vector<double> fitness(cands.size());
    for (std::size_t i = 0; i < cands.size(); ++i) {
      TrainConfig inner = bc.inner;
      inner.seed = bc.seed * 1000003ULL + static_cast<std::uint64_t>(cma.generation()) * 1009ULL + i;
      const InnerResult r =
          train_fixed_design(cfg, inner, bc.inner_steps, std::span<const double>(cands[i].data(), kDesignDim), goals);
      res.env_steps += r.score.env_steps;
      fitness[i] = r.score.mean_return;
      if (std::isfinite(r.score.mean_return) && r.score.mean_return > res.best_score.mean_return) {
        res.best_score = r.score;
        res.best = cands[i];
        res.policy = r.policy;
      }
    }
    cma.tell(cands, fitness);
    res.best_design = design_from_action(cfg, std::span<const double>(res.best.data(), kDesignDim));
    const CmaLogRow row{cma.generation(), res.best_score.mean_return, mean_of(fitness), cma.sigma(), res.env_steps};
    res.generations.push_back(row);
    if (jsonl) write_cma_row(*jsonl, row);
    res.curve.push_back(curve_row(res.env_steps, res.best_score, res.best_design));
  }
  return res;
}

}  // namespace codesign
