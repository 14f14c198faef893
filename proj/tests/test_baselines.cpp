#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "codesign/baselines.hpp"

using namespace codesign;

namespace {

FeatureLayout small_layout() {
  FeatureLayout l;
  l.task_dim = 3;
  l.goal_dim = 2;
  l.control_dim = 2;
  return l;
}

AgentConfig small_agent(Architecture a) {
  AgentConfig c;
  c.architecture = a;
  c.hidden = {6, 5};
  c.value_hidden = {6, 5};
  c.shared_depth = 2;
  c.fix_std = true;
  c.design_log_std = -0.7;
  c.control_log_std = -0.3;
  return c;
}

void randomize(Mlp& m, Rng& rng) {
  std::normal_distribution<double> n(0.0, 0.5);
  for (Eigen::Index i = 0; i < m.parameter_count(); ++i) m.params()[i] = n(rng);
}

Batch synthetic_batch(const PolicyParams& p, int n, Rng& rng, double offset) {
  const FeatureLayout& l = p.layout;
  std::normal_distribution<double> g(0.0, 1.0);
  Batch b;
  b.features.resize(l.full_dim(), n);
  b.actions = MatrixXd::Zero(std::max(kDesignDim, l.control_dim), n);
  b.phase.resize(n);
  b.logp_old.resize(n);
  b.values = VectorXd::Zero(n);
  b.advantages.resize(n);
  b.returns.resize(n);
  for (int c = 0; c < n; ++c) {
    const bool design = c % 4 == 0;
    for (int r = 0; r < l.full_dim(); ++r) b.features(r, c) = g(rng);
    b.features(l.phase_offset(), c) = design ? 0.0 : 1.0;
    if (design) b.features.block(l.design_offset(), c, kDesignDim, 1).setZero();
    b.phase[c] = design ? Phase::design : Phase::control;
    const int k = design ? kDesignDim : l.control_dim;
    for (int r = 0; r < k; ++r) b.actions(r, c) = g(rng);
    b.logp_old(c) = g(rng) * offset - 3.0;
    b.advantages(c) = g(rng);
    b.returns(c) = g(rng);
  }
  return b;
}

std::vector<Eigen::Index> all_columns(const Batch& b) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(b.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  return idx;
}

TrainConfig tiny_inner() {
  TrainConfig c = TrainConfig::desk(Task::push);
  c.batch_size = 150;
  c.minibatch_size = 50;
  c.ppo_epochs = 2;
  c.agent.hidden = {8, 8};
  c.agent.value_hidden = {8, 8};
  return c;
}

}  // namespace

TEST_CASE("plan vectors") {
  const TaskConfig push = TaskConfig::defaults(Task::push);
  CHECK(plan_dimension(push) == 305);
  CHECK(plan_dimension(TaskConfig::defaults(Task::catch_balls)) == 5 + 150 * 1);

  VectorXd x = VectorXd::Zero(305);
  x(5) = 0.25;
  x(304) = -1.0;
  const FlatEpisodePlan plan = plan_from_vector(push, x);
  CHECK(plan.controls.rows() == 150);
  CHECK(plan.controls(0, 0) == 0.25);
  CHECK(plan.controls(149, 1) == -1.0);
  CHECK(plan.design.lengths[0] == doctest::Approx(2.0));
  CHECK_THROWS_AS(plan_from_vector(push, VectorXd::Zero(304)), std::invalid_argument);
}

TEST_CASE("plan evaluation is deterministic") {
  const TaskConfig push = TaskConfig::defaults(Task::push);
  const std::vector<Goal> goal{PushGoal{Vec2(18.0, 17.0)}};
  Rng rng(4);
  std::normal_distribution<double> n(0.0, 0.5);
  VectorXd x(305);
  for (auto& v : x) v = n(rng);
  const PlanScore a = evaluate_plan(push, plan_from_vector(push, x), goal);
  const PlanScore b = evaluate_plan(push, plan_from_vector(push, x), goal);
  CHECK(a.mean_return == b.mean_return);
  CHECK(a.env_steps == b.env_steps);
  CHECK(a.env_steps == 151);  // design step plus a full control budget
  CHECK(std::isfinite(a.mean_return));
}

TEST_CASE("single-trajectory CMA-ES") {
  const TaskConfig push = TaskConfig::defaults(Task::push);
  const std::vector<Goal> goals{PushGoal{Vec2(18.0, 17.0)}, PushGoal{Vec2(25.0, 19.0)}};
  BaselineConfig bc;
  bc.cma.population = 6;
  bc.max_generations = 5;
  bc.seed = 3;
  std::ostringstream log;
  const CmaRunResult r = single_traj_cmaes(push, bc, goals, &log);
  REQUIRE(r.generations.size() == 5);
  REQUIRE(r.curve.size() == 5);
  for (std::size_t g = 1; g < r.generations.size(); ++g) {
    CHECK(r.generations[g].best_fitness >= r.generations[g - 1].best_fitness);
    CHECK(r.generations[g].env_steps > r.generations[g - 1].env_steps);
  }
  CHECK(r.env_steps == 5 * 6 * 2 * 151);
  CHECK(r.best_score.mean_return == r.generations.back().best_fitness);
  CHECK(evaluate_plan(push, plan_from_vector(push, r.best), goals).mean_return == r.best_score.mean_return);

  std::istringstream in(log.str());
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("generation"));
    CHECK(j.contains("best_fitness"));
    CHECK(j.contains("mean_fitness"));
    CHECK(j.contains("sigma"));
    CHECK(j.contains("env_steps"));
    ++rows;
  }
  CHECK(rows == 5);

  const CmaRunResult again = single_traj_cmaes(push, bc, goals);
  CHECK(again.best == r.best);

  SUBCASE("step budget stops the run") {
    BaselineConfig b2 = bc;
    b2.max_generations = 0;
    b2.total_steps = 3 * 6 * 2 * 151;
    CHECK(single_traj_cmaes(push, b2, goals).generations.size() == 3);
  }
}

TEST_CASE("fixed-design inner training") {
  const TaskConfig push = TaskConfig::defaults(Task::push);
  const std::vector<Goal> goals{PushGoal{Vec2(18.0, 17.0)}, PushGoal{Vec2(25.0, 19.0)}};
  const std::vector<double> design{0.2, -0.1, 0.0, 0.3, -0.4};

  SUBCASE("zero budget scores the initial policy") {
    const InnerResult r = train_fixed_design(push, tiny_inner(), 0, design, goals);
    const auto eps = evaluate(r.policy, push, goals);
    long long steps = 0;
    double ret = 0.0;
    for (const auto& e : eps) {
      steps += e.steps;
      ret += e.episode_return;
      const DesignVector want = design_from_action(push, design);
      for (int k = 0; k < kNumLinks; ++k) CHECK(e.design.lengths[k] == doctest::Approx(want.lengths[k]));
      for (int k = 0; k < kNumJoints; ++k) CHECK(e.design.angles[k] == doctest::Approx(want.angles[k]));
    }
    CHECK(r.score.env_steps == steps);
    CHECK(r.score.mean_return == doctest::Approx(ret / 2.0));
  }
  SUBCASE("design stays frozen while the controller learns") {
    const TrainConfig inner = tiny_inner();
    const InnerResult r0 = train_fixed_design(push, inner, 0, design, goals);
    const InnerResult r = train_fixed_design(push, inner, 300, design, goals);
    for (int k = 0; k < kDesignDim; ++k) CHECK(r.policy.design_mean_param(k) == design[static_cast<std::size_t>(k)]);
    CHECK(r.policy.controller.params() != r0.policy.controller.params());
    long long eval_steps = 0;
    for (const auto& e : evaluate(r.policy, push, goals)) eval_steps += e.steps;
    CHECK(r.score.env_steps - eval_steps >= 300);
  }
}

TEST_CASE("CMA-RL accounting and bookkeeping") {
  const TaskConfig push = TaskConfig::defaults(Task::push);
  const std::vector<Goal> goals{PushGoal{Vec2(18.0, 17.0)}};
  BaselineConfig bc;
  bc.cma.population = 4;
  bc.max_generations = 2;
  bc.inner_steps = 0;
  bc.inner = tiny_inner();
  bc.seed = 1;
  const CmaRunResult r = cma_rl(push, bc, goals);
  REQUIRE(r.generations.size() == 2);
  // Zero inner budget: only evaluation steps count.
  CHECK(r.env_steps == 2 * 4 * 151);
  CHECK(r.generations[1].best_fitness >= r.generations[0].best_fitness);
  CHECK(r.best.size() == kDesignDim);
  CHECK(r.policy.design_mean_param == r.best);

  bc.inner_steps = 150;
  bc.max_generations = 1;
  const CmaRunResult r2 = cma_rl(push, bc, goals);
  CHECK(r2.env_steps >= 4 * (150 + 151));
  CHECK(r2.env_steps == r2.generations.back().env_steps);
  CHECK_THROWS_AS(cma_rl(push, bc, std::vector<Goal>{}), std::invalid_argument);
}

TEST_CASE("hwasp matches a separate designer with a constant output") {
  Rng rng(21);
  const FeatureLayout l = small_layout();
  PolicyParams sep(small_agent(Architecture::separate), l, rng);
  randomize(sep.designer, rng);
  randomize(sep.controller, rng);
  randomize(sep.value, rng);
  const int last = sep.designer.num_layers() - 1;
  sep.designer.weight(last).setZero();
  std::normal_distribution<double> n(0.0, 0.5);
  for (int k = 0; k < kDesignDim; ++k) sep.designer.bias(last)(k) = n(rng);

  PolicyParams hw(small_agent(Architecture::hwasp), l, rng);
  hw.controller = sep.controller;
  hw.value = sep.value;
  hw.design_mean_param = sep.designer.bias(last);

  TrainConfig cfg;
  const Batch b = synthetic_batch(sep, 64, rng, 0.3);
  const auto idx = all_columns(b);
  const LossTerms ls = ppo_loss(sep, b, idx, cfg);
  const LossTerms lh = ppo_loss(hw, b, idx, cfg);
  CHECK(lh.policy_loss == doctest::Approx(ls.policy_loss).epsilon(1e-12));
  CHECK(lh.value_loss == doctest::Approx(ls.value_loss).epsilon(1e-12));
  CHECK(lh.approx_kl == doctest::Approx(ls.approx_kl).epsilon(1e-12));
  CHECK((lh.grads.controller - ls.grads.controller).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK((lh.grads.value - ls.grads.value).lpNorm<Eigen::Infinity>() < 1e-12);

  Mlp g = sep.designer;
  g.params() = ls.grads.designer;
  CHECK((lh.grads.design_mean - VectorXd(g.bias(last))).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK(lh.grads.design_mean.norm() > 0.0);
}

TEST_CASE("shared architecture loss equals the clipped surrogate") {
  Rng rng(5);
  PolicyParams p(small_agent(Architecture::shared), small_layout(), rng);
  randomize(p.shared, rng);
  TrainConfig cfg;
  cfg.entropy_beta = 0.0;
  const Batch b = synthetic_batch(p, 40, rng, 0.5);
  const auto idx = all_columns(b);

  double surr = 0.0;
  for (Eigen::Index c = 0; c < b.size(); ++c) {
    const std::vector<double> x(b.features.col(c).data(), b.features.col(c).data() + b.features.rows());
    const bool design = b.phase[static_cast<std::size_t>(c)] == Phase::design;
    const int k = design ? kDesignDim : p.layout.control_dim;
    const VectorXd mean = design ? p.design_mean(x) : p.control_mean(x);
    const double lp = gaussian_logprob(design ? p.design_head : p.control_head, mean, b.actions.col(c).head(k));
    const double ratio = std::exp(lp - b.logp_old(c));
    const double a = b.advantages(c);
    surr += std::min(ratio * a, std::clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * a);
  }
  const LossTerms lt = ppo_loss(p, b, idx, cfg);
  CHECK(lt.policy_loss == doctest::Approx(-surr / static_cast<double>(b.size())).epsilon(1e-10));
  CHECK(lt.grads.shared.norm() > 0.0);
  CHECK(p.policy_parameter_count() >= separate_policy_parameter_count(p.config, p.layout));
}
