#include "codesign/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>

#include "codesign/config.hpp"

namespace codesign {

double Trajectory::episode_return() const {
  double r = 0.0;
  for (const auto& s : steps) r += s.reward;
  return r;
}

void check_trajectory(const Trajectory& t) {
  if (t.steps.empty()) throw std::logic_error("trajectory is empty");
  if (t.steps.front().phase != Phase::design) throw std::logic_error("trajectory does not start with a design step");
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    if (i > 0 && t.steps[i].phase != Phase::control) {
      throw std::logic_error("trajectory has a design step at position " + std::to_string(i));
    }
    if (!std::isfinite(t.steps[i].reward)) {
      throw std::logic_error("trajectory has a non-finite reward at step " + std::to_string(i));
    }
  }
}

TrainConfig TrainConfig::paper(Task task) {
  TrainConfig c;
  switch (task) {
    case Task::push:
      c.agent.control_log_std = -1.0;
      c.agent.design_log_std = -2.3;
      c.kl_threshold = 0.005;
      c.value_lr = 1e-4;
      break;
    case Task::catch_balls:
      c.agent.control_log_std = 0.0;
      c.agent.design_log_std = 0.0;
      c.kl_threshold = 0.002;
      c.value_lr = 1e-4;
      break;
    case Task::scoop:
      c.agent.control_log_std = 0.0;
      c.agent.design_log_std = 0.0;
      c.kl_threshold = 0.1;
      c.value_lr = 3e-4;
      break;
  }
  c.agent.fix_std = true;
  c.policy_lr = 2e-5;
  c.entropy_beta = 0.01;
  c.batch_size = 50000;
  c.minibatch_size = 2000;
  c.ppo_epochs = 10;
  c.total_steps = 10'000'000;
  return c;
}

TrainConfig TrainConfig::desk(Task task) {
  TrainConfig c = paper(task);
  c.batch_size = 4096;
  c.minibatch_size = 512;
  c.policy_lr = 3e-4;
  c.value_lr = 1e-3;
  c.kl_threshold = std::max(c.kl_threshold, 0.02);
  c.max_grad_norm = 0.5;
  c.total_steps = 1'000'000;
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
  if (batch_size <= 0) fail("batch_size must be positive");
  if (minibatch_size <= 0) fail("minibatch_size must be positive");
  if (batch_size < minibatch_size) fail("batch_size must be at least minibatch_size");
  if (!(kl_threshold > 0.0)) fail("kl_threshold must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must lie in (0, 1]");
  if (!(gae_lambda > 0.0 && gae_lambda <= 1.0)) fail("gae_lambda must lie in (0, 1]");
  if (!(clip_epsilon > 0.0)) fail("clip_epsilon must be positive");
  if (ppo_epochs < 0) fail("ppo_epochs must be non-negative");
  if (num_workers <= 0) fail("num_workers must be positive");
  if (!(policy_lr >= 0.0) || !(value_lr >= 0.0)) fail("learning rates must be non-negative");
  if (total_steps < 0) fail("total_steps must be non-negative");
}

std::vector<double> policy_features(const Environment& env, const Observation& obs) {
  return FeatureLayout::assemble(env.task_features(obs), env.design_features(), env.goal_features(),
                                 obs.phase == Phase::control);
}

Trajectory run_episode(Environment& env, const PolicyParams& params, const Goal& goal, std::uint64_t env_seed,
                       Rng& rng, bool deterministic, EpisodeTraceWriter* trace) {
  Trajectory t;
  t.goal = goal;
  t.env_seed = env_seed;
  Observation obs = env.reset(goal, env_seed);
  double c_sum = 0.0;
  int control_steps = 0;
  int step_index = 0;
  while (true) {
    TrajectoryStep s;
    s.phase = obs.phase;
    s.observation = obs.task;
    s.features = policy_features(env, obs);
    const bool design = obs.phase == Phase::design;
    const GaussianHead& head = design ? params.design_head : params.control_head;
    const VectorXd mean = design ? params.design_mean(s.features) : params.control_mean(s.features);
    VectorXd action;
    if (deterministic) {
      action = mean;
      s.logprob = gaussian_logprob(head, mean, action);
    } else {
      auto [a, lp] = sample_action(head, mean, rng);
      action = std::move(a);
      s.logprob = lp;
    }
    s.action.assign(action.data(), action.data() + action.size());
    s.value = params.state_value(s.features);
    const StepResult r = design ? env.step_design_action(s.action) : env.step_control(s.action);
    if (trace != nullptr) trace->write(step_index, s.action, r);
    ++step_index;
    s.reward = r.reward;
    s.done = r.done;
    if (design) {
      t.design = env.design();
    } else {
      c_sum += r.info.c_used;
      ++control_steps;
    }
    t.steps.push_back(std::move(s));
    t.final_info = r.info;
    obs = r.observation;
    if (r.done) break;
  }
  t.mean_c_used = control_steps > 0 ? c_sum / control_steps : 0.0;
  return t;
}

namespace {

Rng worker_rng(std::uint64_t stream_seed, int worker) {
  std::seed_seq seq{static_cast<std::uint32_t>(stream_seed), static_cast<std::uint32_t>(stream_seed >> 32),
                    static_cast<std::uint32_t>(worker), 0x5eedu};
  return Rng(seq);
}

std::string describe_goal(const Goal& g) {
  std::ostringstream os;
  os << task_name(goal_task(g)) << " goal (";
  const auto v = goal_values(g);
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << ")";
  return os.str();
}

}  // namespace

std::vector<Trajectory> collect_batch(std::span<const std::unique_ptr<Environment>> envs,
                                      const PolicyParams& params, const TrainConfig& cfg,
                                      const GoalSampler& goals, std::uint64_t stream_seed) {
  const int workers = std::max(1, std::min<int>(cfg.num_workers, static_cast<int>(envs.size())));
  if (envs.empty()) throw std::invalid_argument("collect_batch: no environments");
  const long long quota = (static_cast<long long>(cfg.batch_size) + workers - 1) / workers;
  std::vector<std::vector<Trajectory>> out(workers);
  std::vector<std::string> errors(workers);

  auto work = [&](int w) {
    Rng rng = worker_rng(stream_seed, w);
    long long steps = 0;
    Goal goal;
    try {
      while (steps < quota) {
        goal = goals(rng);
        const std::uint64_t env_seed = rng();
        Trajectory t = run_episode(*envs[w], params, goal, env_seed, rng, false);
        steps += static_cast<long long>(t.steps.size());
        out[w].push_back(std::move(t));
      }
    } catch (const std::exception& e) {
      errors[w] = "worker " + std::to_string(w) + " aborted on " + describe_goal(goal) + ": " + e.what();
    }
  };

  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> threads;
    for (int w = 0; w < workers; ++w) threads.emplace_back(work, w);
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw std::runtime_error(e);
  }
  std::vector<Trajectory> all;
  for (auto& v : out) {
    for (auto& t : v) all.push_back(std::move(t));
  }
  return all;
}

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values, const std::vector<bool>& dones,
                      double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n + 1) {
    throw std::invalid_argument("compute_gae: values must have one more entry than rewards (got " +
                                std::to_string(values.size()) + " for " + std::to_string(n) + ")");
  }
  if (dones.size() != n) throw std::invalid_argument("compute_gae: dones and rewards differ in length");
  GaeResult r;
  r.advantages.assign(n, 0.0);
  r.returns.assign(n, 0.0);
  double next = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double live = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + gamma * values[i + 1] * live - values[i];
    next = delta + gamma * lambda * live * next;
    r.advantages[i] = next;
    r.returns[i] = next + values[i];
  }
  return r;
}

void normalize_advantages(VectorXd& a) {
  if (a.size() == 0) return;
  a.array() -= a.mean();
  const double sd = std::sqrt(a.squaredNorm() / static_cast<double>(a.size()));
  if (sd > 0.0) a /= sd;
}

Batch make_batch(const std::vector<Trajectory>& trajectories, const FeatureLayout& layout, const TrainConfig& cfg) {
  Eigen::Index n = 0;
  for (const auto& t : trajectories) {
    check_trajectory(t);
    n += static_cast<Eigen::Index>(t.steps.size());
  }
  const int action_rows = std::max(kDesignDim, layout.control_dim);
  Batch b;
  b.features.resize(layout.full_dim(), n);
  b.actions = MatrixXd::Zero(action_rows, n);
  b.phase.resize(static_cast<std::size_t>(n));
  b.logp_old.resize(n);
  b.values.resize(n);
  b.advantages.resize(n);
  b.returns.resize(n);
  Eigen::Index col = 0;
  for (const auto& t : trajectories) {
    const std::size_t m = t.steps.size();
    std::vector<double> rewards(m), values(m + 1, 0.0);
    std::vector<bool> dones(m);
    for (std::size_t i = 0; i < m; ++i) {
      rewards[i] = t.steps[i].reward;
      values[i] = t.steps[i].value;
      dones[i] = t.steps[i].done;
    }
    // Episodes always end with done (success or step budget), so the bootstrap is unused.
    const GaeResult g = compute_gae(rewards, values, dones, cfg.gamma, cfg.gae_lambda);
    for (std::size_t i = 0; i < m; ++i, ++col) {
      const auto& s = t.steps[i];
      if (static_cast<int>(s.features.size()) != layout.full_dim()) {
        throw std::invalid_argument("make_batch: feature size does not match the policy layout");
      }
      b.features.col(col) = Eigen::Map<const VectorXd>(s.features.data(), layout.full_dim());
      for (std::size_t k = 0; k < s.action.size(); ++k) b.actions(static_cast<Eigen::Index>(k), col) = s.action[k];
      b.phase[static_cast<std::size_t>(col)] = s.phase;
      b.logp_old(col) = s.logprob;
      b.values(col) = s.value;
      b.advantages(col) = g.advantages[i];
      b.returns(col) = g.returns[i];
    }
  }
  normalize_advantages(b.advantages);
  return b;
}

namespace {

// Loss derivative with respect to each sample's new log-probability, plus
// bookkeeping for kl and clipping.
struct SurrogateTerms {
  VectorXd dlogp;
  double objective = 0.0;
  double kl = 0.0;
  int clipped = 0;
};

void surrogate(const VectorXd& logp_new, const VectorXd& logp_old, const VectorXd& adv, double eps, double scale,
               SurrogateTerms& out, Eigen::Index offset) {
  for (Eigen::Index i = 0; i < logp_new.size(); ++i) {
    const double ratio = std::exp(logp_new(i) - logp_old(i));
    const double a = adv(i);
    const double clipped_ratio = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
    const double unclipped = ratio * a;
    const double clipped = clipped_ratio * a;
    out.objective += std::min(unclipped, clipped) * scale;
    out.kl += (logp_old(i) - logp_new(i)) * scale;
    const bool active = (a >= 0.0 && ratio > 1.0 + eps) || (a < 0.0 && ratio < 1.0 - eps);
    if (std::abs(ratio - 1.0) > eps) ++out.clipped;
    out.dlogp(offset + i) = active ? 0.0 : -unclipped * scale;
  }
}

MatrixXd gather(const MatrixXd& m, std::span<const Eigen::Index> idx, Eigen::Index rows) {
  MatrixXd out(rows, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(idx[j]).head(rows);
  return out;
}

VectorXd gather(const VectorXd& v, std::span<const Eigen::Index> idx) {
  VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out(static_cast<Eigen::Index>(j)) = v(idx[j]);
  return out;
}

// Gradient of logp w.r.t. the mean (columns) and log-std (summed), each
// weighted by per-sample dL/dlogp.
void gaussian_grads(const GaussianHead& head, const MatrixXd& mean, const MatrixXd& actions, const VectorXd& dlogp,
                    MatrixXd& mean_grad, VectorXd& log_std_grad) {
  const VectorXd inv_var = (-2.0 * head.log_std).array().exp();
  const MatrixXd diff = actions - mean;
  mean_grad = (diff.array().colwise() * inv_var.array()).rowwise() * dlogp.transpose().array();
  const MatrixXd z2 = diff.array().square().colwise() * inv_var.array();
  log_std_grad = (z2.array() - 1.0).matrix() * dlogp;
}

}  // namespace

LossTerms ppo_loss(const PolicyParams& params, const Batch& batch, std::span<const Eigen::Index> idx,
                   const TrainConfig& cfg) {
  const FeatureLayout& lay = params.layout;
  const Eigen::Index m = static_cast<Eigen::Index>(idx.size());
  if (m == 0) throw std::invalid_argument("ppo_loss: empty minibatch");
  const double scale = 1.0 / static_cast<double>(m);

  std::vector<Eigen::Index> d_idx, c_idx;
  for (Eigen::Index i : idx) (batch.phase[static_cast<std::size_t>(i)] == Phase::design ? d_idx : c_idx).push_back(i);
  const Eigen::Index nd = static_cast<Eigen::Index>(d_idx.size());
  const Eigen::Index nc = static_cast<Eigen::Index>(c_idx.size());

  const MatrixXd xd = gather(batch.features, d_idx, lay.full_dim());
  const MatrixXd xc = gather(batch.features, c_idx, lay.full_dim());
  const MatrixXd ad = gather(batch.actions, d_idx, kDesignDim);
  const MatrixXd ac = gather(batch.actions, c_idx, lay.control_dim);

  // Means for both phases.
  Mlp::Tape tape_d, tape_c, tape_s;
  MatrixXd mu_d, mu_c, shared_out;
  MatrixXd xs;
  switch (params.config.architecture) {
    case Architecture::separate:
      mu_d = params.designer.forward(params.designer_input(xd), tape_d);
      mu_c = params.controller.forward(params.controller_input(xc), tape_c);
      break;
    case Architecture::hwasp:
      mu_d = params.design_mean_param.replicate(1, nd);
      mu_c = params.controller.forward(params.controller_input(xc), tape_c);
      break;
    case Architecture::shared:
      xs.resize(lay.full_dim(), m);
      xs << xd, xc;
      shared_out = params.shared.forward(xs, tape_s);
      mu_d = shared_out.topLeftCorner(kDesignDim, nd);
      mu_c = shared_out.bottomRightCorner(lay.control_dim, nc);
      break;
  }

  SurrogateTerms sur;
  sur.dlogp = VectorXd::Zero(m);
  const VectorXd lp_d = gaussian_logprob(params.design_head, mu_d, ad);
  const VectorXd lp_c = gaussian_logprob(params.control_head, mu_c, ac);
  surrogate(lp_d, gather(batch.logp_old, d_idx), gather(batch.advantages, d_idx), cfg.clip_epsilon, scale, sur, 0);
  surrogate(lp_c, gather(batch.logp_old, c_idx), gather(batch.advantages, c_idx), cfg.clip_epsilon, scale, sur, nd);

  LossTerms out;
  const double h_d = gaussian_entropy(params.design_head);
  const double h_c = gaussian_entropy(params.control_head);
  out.entropy = (static_cast<double>(nd) * h_d + static_cast<double>(nc) * h_c) * scale;
  out.policy_loss = -sur.objective - cfg.entropy_beta * out.entropy;
  out.approx_kl = sur.kl;
  out.clip_fraction = static_cast<double>(sur.clipped) * scale;

  MatrixXd g_mu_d, g_mu_c;
  VectorXd g_ls_d, g_ls_c;
  gaussian_grads(params.design_head, mu_d, ad, sur.dlogp.head(nd), g_mu_d, g_ls_d);
  gaussian_grads(params.control_head, mu_c, ac, sur.dlogp.tail(nc), g_mu_c, g_ls_c);
  // d(-beta * H)/d log_std: H is linear in log_std with slope 1 per dimension.
  g_ls_d.array() -= cfg.entropy_beta * static_cast<double>(nd) * scale;
  g_ls_c.array() -= cfg.entropy_beta * static_cast<double>(nc) * scale;
  out.grads.design_log_std = g_ls_d;
  out.grads.control_log_std = g_ls_c;

  switch (params.config.architecture) {
    case Architecture::separate:
      out.grads.designer = params.designer.backward(tape_d, g_mu_d);
      out.grads.controller = params.controller.backward(tape_c, g_mu_c);
      break;
    case Architecture::hwasp:
      out.grads.design_mean = g_mu_d.rowwise().sum();
      out.grads.controller = params.controller.backward(tape_c, g_mu_c);
      break;
    case Architecture::shared: {
      MatrixXd g = MatrixXd::Zero(kDesignDim + lay.control_dim, m);
      g.topLeftCorner(kDesignDim, nd) = g_mu_d;
      g.bottomRightCorner(lay.control_dim, nc) = g_mu_c;
      out.grads.shared = params.shared.backward(tape_s, g);
      break;
    }
  }

  // Value regression over the whole minibatch.
  const MatrixXd xv = gather(batch.features, idx, lay.full_dim());
  Mlp::Tape tape_v;
  const MatrixXd v = params.value.forward(xv, tape_v);
  const VectorXd err = v.row(0).transpose() - gather(batch.returns, idx);
  out.value_loss = 0.5 * err.squaredNorm() * scale;
  out.grads.value = params.value.backward(tape_v, (err * scale).transpose());
  return out;
}

Optimizers::Optimizers(const PolicyParams& p, const TrainConfig& cfg)
    : designer(p.designer.parameter_count(), cfg.policy_lr),
      controller(p.controller.parameter_count(), cfg.policy_lr),
      shared(p.shared.parameter_count(), cfg.policy_lr),
      design_mean(p.design_mean_param.size(), cfg.policy_lr),
      design_log_std(p.design_head.log_std.size(), cfg.policy_lr),
      control_log_std(p.control_head.log_std.size(), cfg.policy_lr),
      value(p.value.parameter_count(), cfg.value_lr) {}

nlohmann::json Optimizers::to_json() const {
  return {{"designer", designer.to_json()},
          {"controller", controller.to_json()},
          {"shared", shared.to_json()},
          {"design_mean", design_mean.to_json()},
          {"design_log_std", design_log_std.to_json()},
          {"control_log_std", control_log_std.to_json()},
          {"value", value.to_json()}};
}

Optimizers Optimizers::from_json(const nlohmann::json& j) {
  Optimizers o;
  o.designer = Adam::from_json(j.at("designer"));
  o.controller = Adam::from_json(j.at("controller"));
  o.shared = Adam::from_json(j.at("shared"));
  o.design_mean = Adam::from_json(j.at("design_mean"));
  o.design_log_std = Adam::from_json(j.at("design_log_std"));
  o.control_log_std = Adam::from_json(j.at("control_log_std"));
  o.value = Adam::from_json(j.at("value"));
  return o;
}

namespace {

bool all_finite(const PolicyGrads& g) {
  for (const VectorXd* v : {&g.designer, &g.controller, &g.shared, &g.design_mean, &g.design_log_std,
                            &g.control_log_std, &g.value}) {
    if (v->size() > 0 && !v->allFinite()) return false;
  }
  return true;
}

}  // namespace

void apply_gradients(PolicyParams& p, Optimizers& opt, const PolicyGrads& g, double max_grad_norm) {
  PolicyGrads c = g;
  if (max_grad_norm > 0.0) {
    double sq = c.designer.squaredNorm() + c.controller.squaredNorm() + c.shared.squaredNorm() +
                c.design_mean.squaredNorm();
    if (p.design_head.learnable) sq += c.design_log_std.squaredNorm() + c.control_log_std.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > max_grad_norm) {
      const double s = max_grad_norm / norm;
      for (VectorXd* v : {&c.designer, &c.controller, &c.shared, &c.design_mean, &c.design_log_std,
                          &c.control_log_std}) {
        *v *= s;
      }
    }
    const double vn = c.value.norm();
    if (vn > max_grad_norm) c.value *= max_grad_norm / vn;
  }
  if (c.designer.size() > 0) opt.designer.step(p.designer.params(), c.designer);
  if (c.controller.size() > 0) opt.controller.step(p.controller.params(), c.controller);
  if (c.shared.size() > 0) opt.shared.step(p.shared.params(), c.shared);
  if (c.design_mean.size() > 0) opt.design_mean.step(p.design_mean_param, c.design_mean);
  if (p.design_head.learnable) opt.design_log_std.step(p.design_head.log_std, c.design_log_std);
  if (p.control_head.learnable) opt.control_log_std.step(p.control_head.log_std, c.control_log_std);
  opt.value.step(p.value.params(), c.value);
}

UpdateStats ppo_update(PolicyParams& params, Optimizers& opt, const Batch& batch, const TrainConfig& cfg, Rng& rng) {
  UpdateStats stats;
  const Eigen::Index n = batch.size();
  if (n == 0) return stats;
  const PolicyParams saved_params = params;
  const Optimizers saved_opt = opt;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const std::size_t mb = static_cast<std::size_t>(std::min<Eigen::Index>(cfg.minibatch_size, n));

  for (int epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double kl = 0.0, pl = 0.0, vl = 0.0, ent = 0.0, cf = 0.0;
    for (std::size_t start = 0; start < order.size(); start += mb) {
      const std::size_t len = std::min(mb, order.size() - start);
      const std::span<const Eigen::Index> idx(order.data() + start, len);
      const LossTerms lt = ppo_loss(params, batch, idx, cfg);
      if (!std::isfinite(lt.policy_loss) || !std::isfinite(lt.value_loss) || !all_finite(lt.grads)) {
        params = saved_params;
        opt = saved_opt;
        stats.aborted = true;
        return stats;
      }
      apply_gradients(params, opt, lt.grads, cfg.max_grad_norm);
      const double w = static_cast<double>(len) / static_cast<double>(n);
      kl += lt.approx_kl * w;
      pl += lt.policy_loss * w;
      vl += lt.value_loss * w;
      ent += lt.entropy * w;
      cf += lt.clip_fraction * w;
    }
    stats.approx_kl = kl;
    stats.policy_loss = pl;
    stats.value_loss = vl;
    stats.entropy = ent;
    stats.clip_fraction = cf;
    stats.epochs = epoch + 1;
    if (kl > cfg.kl_threshold) {
      stats.early_stopped = true;
      break;
    }
  }
  return stats;
}

EpisodeSummary summarize(const Trajectory& t, const TradeoffConfig& tradeoff) {
  EpisodeSummary s;
  s.goal = t.goal;
  s.design = t.design;
  s.episode_return = t.episode_return();
  s.success_credit = t.final_info.success_credit;
  s.success = t.final_info.success;
  double d = 0.0;
  for (double l : t.design.lengths) d += l;
  s.d_used = d;
  s.d_max = tradeoff.d_max;
  s.mean_c_used = t.mean_c_used;
  s.c_max = tradeoff.c_max;
  s.steps = static_cast<int>(t.steps.size());
  return s;
}

std::vector<Goal> evaluation_goals(const TaskConfig& cfg, int count, std::uint64_t seed) {
  TaskConfig full = cfg;
  full.cutout = {};
  Rng rng(seed);
  std::vector<Goal> goals;
  goals.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) goals.push_back(sample_goal(full, rng));
  return goals;
}

std::uint64_t evaluation_env_seed(std::size_t goal_index) { return 1000003ULL * (goal_index + 1); }

std::vector<EpisodeSummary> evaluate(const PolicyParams& params, const TaskConfig& cfg, std::span<const Goal> goals) {
  auto env = Environment::make(cfg);
  const TradeoffConfig tradeoff = env->tradeoff();
  Rng unused(0);
  std::vector<EpisodeSummary> out;
  out.reserve(goals.size());
  for (std::size_t i = 0; i < goals.size(); ++i) {
    out.push_back(summarize(run_episode(*env, params, goals[i], evaluation_env_seed(i), unused, true), tradeoff));
  }
  return out;
}

void write_metric_header(std::ostream& os) {
  os << "env_steps,mean_return,success_rate,approx_kl,entropy,mean_d_used,mean_c_used\n";
}

namespace {
std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}
}  // namespace

void write_metric_row(std::ostream& os, const MetricRow& r) {
  os << r.env_steps << ',' << fmt(r.mean_return) << ',' << fmt(r.success_rate) << ',' << fmt(r.approx_kl) << ','
     << fmt(r.entropy) << ',' << fmt(r.mean_d_used) << ',' << fmt(r.mean_c_used) << '\n';
}

void write_design_header(std::ostream& os) { os << "env_steps,length_0,length_1,length_2,angle_0,angle_1\n"; }

void write_design_row(std::ostream& os, const MetricRow& r) {
  os << r.env_steps;
  for (double v : r.mean_design) os << ',' << fmt(v);
  os << '\n';
}

Trainer::Trainer(TaskConfig task, TrainConfig cfg) : task_(std::move(task)), cfg_(std::move(cfg)), rng_(cfg_.seed) {
  task_.validate();
  cfg_.validate();
  make_envs();
  FeatureLayout layout;
  layout.task_dim = envs_.front()->task_obs_dim();
  layout.goal_dim = envs_.front()->goal_dim();
  layout.control_dim = task_.control_dim();
  params_ = PolicyParams(cfg_.agent, layout, rng_);
  opt_ = Optimizers(params_, cfg_);
}

void Trainer::make_envs() {
  envs_.clear();
  for (int w = 0; w < cfg_.num_workers; ++w) envs_.push_back(Environment::make(task_));
  const TaskConfig t = task_;
  goals_ = [t](Rng& rng) { return sample_goal(t, rng); };
}

MetricRow Trainer::train_batch() {
  const std::uint64_t stream = cfg_.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(batches_) + 1;
  const std::vector<Trajectory> trajs = collect_batch(envs_, params_, cfg_, goals_, stream);
  const Batch batch = make_batch(trajs, params_.layout, cfg_);
  last_update_ = ppo_update(params_, opt_, batch, cfg_, rng_);

  MetricRow row;
  env_steps_ += batch.size();
  ++batches_;
  row.env_steps = env_steps_;
  row.episodes = static_cast<int>(trajs.size());
  row.approx_kl = last_update_.approx_kl;
  row.epochs = last_update_.epochs;
  const TradeoffConfig tradeoff = envs_.front()->tradeoff();
  double ret = 0.0, succ = 0.0, d = 0.0, c = 0.0;
  for (const auto& t : trajs) {
    const EpisodeSummary s = summarize(t, tradeoff);
    ret += s.episode_return;
    succ += s.success_credit;
    d += s.d_used;
    c += s.mean_c_used;
    for (int k = 0; k < kNumLinks; ++k) row.mean_design[k] += t.design.lengths[k];
    for (int k = 0; k < kNumJoints; ++k) row.mean_design[kNumLinks + k] += t.design.angles[k];
  }
  const double ne = static_cast<double>(trajs.size());
  row.mean_return = ret / ne;
  row.success_rate = succ / ne;
  row.mean_d_used = d / ne;
  row.mean_c_used = c / ne;
  for (double& v : row.mean_design) v /= ne;
  // Entropy of the current policy, averaged over the batch's steps.
  double nd = 0.0;
  for (Phase p : batch.phase) nd += p == Phase::design ? 1.0 : 0.0;
  const double n = static_cast<double>(batch.size());
  row.entropy =
      (nd * gaussian_entropy(params_.design_head) + (n - nd) * gaussian_entropy(params_.control_head)) / n;
  return row;
}

void Trainer::run(long long total_steps, const std::function<void(const MetricRow&)>& on_batch) {
  while (env_steps_ < total_steps) {
    const MetricRow r = train_batch();
    if (on_batch) on_batch(r);
  }
}

namespace {
std::string rng_state(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}
}  // namespace

nlohmann::json Trainer::checkpoint() const {
  nlohmann::json j;
  j["version"] = 1;
  j["task_config"] = to_json(task_);
  j["train_config"] = to_json(cfg_);
  j["config_hash"] = config_hash(task_, cfg_);
  j["policy"] = to_json(params_);
  j["optimizers"] = opt_.to_json();
  j["rng"] = rng_state(rng_);
  j["env_steps"] = env_steps_;
  j["batches"] = batches_;
  return j;
}

Trainer Trainer::from_checkpoint(const nlohmann::json& j) {
  if (j.at("version").get<int>() != 1) throw std::invalid_argument("checkpoint: unsupported version");
  const TaskConfig task = task_config_from_json(j.at("task_config"));
  const TrainConfig cfg = train_config_from_json(j.at("train_config"));
  if (j.at("config_hash").get<std::uint64_t>() != config_hash(task, cfg)) {
    throw std::invalid_argument("checkpoint: config hash mismatch");
  }
  Trainer t(task, cfg);
  t.params_ = policy_from_json(j.at("policy"));
  t.opt_ = Optimizers::from_json(j.at("optimizers"));
  std::istringstream is(j.at("rng").get<std::string>());
  is >> t.rng_;
  t.env_steps_ = j.at("env_steps");
  t.batches_ = j.at("batches");
  return t;
}

TrainResult train(const TaskConfig& task, const TrainConfig& cfg, const std::filesystem::path& out_dir,
                  bool resume) {
  std::filesystem::create_directories(out_dir);
  const auto ckpt_path = out_dir / "checkpoint.json";
  std::unique_ptr<Trainer> trainer;
  if (resume && std::filesystem::exists(ckpt_path)) {
    trainer = std::make_unique<Trainer>(Trainer::from_checkpoint(read_json_file(ckpt_path)));
    // Budget may be extended on resume.
    trainer->train_config().total_steps = cfg.total_steps;
  } else {
    trainer = std::make_unique<Trainer>(task, cfg);
  }
  const bool append = resume && trainer->batches() > 0;
  const auto mode = append ? std::ios::app : std::ios::trunc;
  std::ofstream metrics(out_dir / "metrics.csv", std::ios::out | mode);
  std::ofstream designs(out_dir / "designs.csv", std::ios::out | mode);
  std::ofstream evals;
  if (!metrics || !designs) throw std::runtime_error("cannot write logs in " + out_dir.string());
  if (!append) {
    write_metric_header(metrics);
    write_design_header(designs);
  }
  const std::vector<Goal> eval_set = evaluation_goals(trainer->task_config());
  if (cfg.eval_every > 0) {
    evals.open(out_dir / "eval.csv", std::ios::out | mode);
    if (!append) evals << "env_steps,mean_return,success_rate\n";
  }

  TrainResult result;
  trainer->run(cfg.total_steps, [&](const MetricRow& r) {
    write_metric_row(metrics, r);
    write_design_row(designs, r);
    metrics.flush();
    designs.flush();
    if (!metrics || !designs) throw std::runtime_error("failed writing logs in " + out_dir.string());
    result.metrics.push_back(r);
    if (cfg.eval_every > 0 && trainer->batches() % cfg.eval_every == 0) {
      const auto ev = evaluate(trainer->params(), trainer->task_config(), eval_set);
      double ret = 0.0, succ = 0.0;
      for (const auto& e : ev) {
        ret += e.episode_return;
        succ += e.success_credit;
      }
      evals << r.env_steps << ',' << fmt(ret / ev.size()) << ',' << fmt(succ / ev.size()) << '\n';
      evals.flush();
    }
  });
  write_json_file(ckpt_path, trainer->checkpoint());
  result.params = trainer->params();
  result.env_steps = trainer->env_steps();
  return result;
}

}  // namespace codesign
