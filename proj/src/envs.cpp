#include "codesign/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace codesign {

std::string_view task_name(Task task) {
  switch (task) {
    case Task::push:
      return "push";
    case Task::catch_balls:
      return "catch";
    case Task::scoop:
      return "scoop";
  }
  return "unknown";
}

Task parse_task(std::string_view name) {
  if (name == "push") return Task::push;
  if (name == "catch" || name == "catch_balls" || name == "catch-balls") return Task::catch_balls;
  if (name == "scoop") return Task::scoop;
  throw std::invalid_argument("unknown task '" + std::string(name) + "'");
}

bool CutoutSpec::contains(const Vec2& p) const {
  return std::any_of(rects.begin(), rects.end(), [&](const Rect& r) { return r.contains(p); });
}

CutoutSpec CutoutSpec::centered_pair(const Rect& region, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("cutout fraction must lie in [0, 1)");
  }
  CutoutSpec spec;
  spec.fraction = fraction;
  if (fraction == 0.0) return spec;
  const double half_w = region.width() / 2.0;
  // Each patch covers `fraction` of its half, so scale the half by sqrt(fraction).
  const double s = std::sqrt(fraction);
  const double w = s * half_w;
  const double h = s * region.height();
  const double cy = 0.5 * (region.y0 + region.y1);
  for (double cx : {region.x0 + 0.5 * half_w, region.x0 + 1.5 * half_w}) {
    spec.rects.push_back({cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0});
  }
  return spec;
}

TaskConfig TaskConfig::defaults(Task task) {
  TaskConfig c;
  c.task = task;
  switch (task) {
    case Task::push:
      c.tool_position_init = Vec2(20.0, 10.0);
      c.control_steps_per_action = 1;
      c.max_episode_steps = 150;
      c.tool_length_ratio = {-0.5, 0.5};
      c.tool_length_init = {2.0, 2.0, 2.0};
      c.tool_angle_ratio = {-1.0, 1.0};
      c.tool_angle_scale = 90.0;
      c.max_tool_speed = 8.0;
      c.push_success_distance = 1.0;
      c.push_success_speed = 0.2;
      break;
    case Task::catch_balls:
      c.tool_position_init = Vec2(20.0, 10.0);
      c.control_steps_per_action = 1;
      c.max_episode_steps = 150;
      c.tool_length_ratio = {-0.5, 2.0};
      c.tool_length_init = {2.0, 1.0, 1.0};
      c.tool_angle_ratio = {-1.0, 1.0};
      c.tool_angle_scale = 60.0;
      c.max_tool_speed = 6.0;
      break;
    case Task::scoop:
      c.tool_position_init = Vec2(15.0, 10.0);
      c.control_steps_per_action = 5;
      c.max_episode_steps = 30;
      c.tool_length_ratio = {-0.7, 0.2};
      c.tool_length_init = {6.0, 3.0, 3.0};
      c.tool_angle_ratio = {-0.1, 0.7};
      c.tool_angle_scale = 90.0;
      c.max_tool_speed = 8.0;
      c.max_tool_angular_speed = 1.0;
      break;
  }
  return c;
}

DesignBounds TaskConfig::design_bounds() const {
  return DesignBounds::from_ratios(tool_length_init, tool_length_ratio, tool_angle_ratio,
                                   tool_angle_scale);
}

int TaskConfig::control_dim() const {
  switch (task) {
    case Task::push:
      return 2;
    case Task::catch_balls:
      return 1;
    case Task::scoop:
      return 3;
  }
  return 0;
}

void TaskConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("invalid task config: " + what); };
  if (max_episode_steps <= 0) fail("max_episode_steps must be positive");
  if (control_steps_per_action <= 0) fail("control_steps_per_action must be positive");
  if (!design_bounds().well_ordered()) fail("tool_length_ratio/tool_angle_ratio give empty bounds");
  if (tradeoff_k < 0.0) fail("tradeoff_k must be >= 0");
  if (tradeoff_alpha < 0.0 || tradeoff_alpha > 1.0) fail("tradeoff_alpha must lie in [0, 1]");
  if (max_tool_speed <= 0.0) fail("max_tool_speed must be positive");
  for (const auto& r : cutout.rects) {
    if (!r.inside(push_goal_region)) fail("cutout rectangle outside the goal region");
  }
}

Task goal_task(const Goal& goal) {
  switch (goal.index()) {
    case 0:
      return Task::push;
    case 1:
      return Task::catch_balls;
    default:
      return Task::scoop;
  }
}

std::vector<double> goal_values(const Goal& goal) {
  if (const auto* g = std::get_if<PushGoal>(&goal)) return {g->target.x(), g->target.y()};
  if (const auto* g = std::get_if<CatchGoal>(&goal)) {
    return {g->spawn_x[0],      g->spawn_x[1],      g->spawn_x[2],
            g->drop_height[0], g->drop_height[1], g->drop_height[2]};
  }
  return {static_cast<double>(std::get<ScoopGoal>(goal).count)};
}

Goal goal_from_values(Task task, std::span<const double> v) {
  auto need = [&](std::size_t n, const char* field) {
    if (v.size() != n) {
      throw std::invalid_argument(std::string("goal: field '") + field + "' expects " +
                                  std::to_string(n) + " values, got " + std::to_string(v.size()));
    }
    for (double x : v) {
      if (!std::isfinite(x)) throw std::invalid_argument(std::string("goal: field '") + field + "' is not finite");
    }
  };
  switch (task) {
    case Task::push:
      need(2, "target");
      return PushGoal{Vec2(v[0], v[1])};
    case Task::catch_balls: {
      need(6, "spawn_x/drop_height");
      CatchGoal g;
      for (int i = 0; i < 3; ++i) {
        g.spawn_x[i] = v[i];
        g.drop_height[i] = v[3 + i];
      }
      return g;
    }
    case Task::scoop:
      need(1, "count");
      if (v[0] != std::floor(v[0])) throw std::invalid_argument("goal: field 'count' must be an integer");
      return ScoopGoal{static_cast<int>(v[0])};
  }
  throw std::invalid_argument("goal: unknown task");
}

void validate_goal(const TaskConfig& cfg, const Goal& goal) {
  if (goal_task(goal) != cfg.task) {
    throw std::invalid_argument("goal does not belong to task " + std::string(task_name(cfg.task)));
  }
  if (const auto* g = std::get_if<PushGoal>(&goal)) {
    if (!g->target.allFinite()) throw std::invalid_argument("push goal: target is not finite");
    return;
  }
  if (const auto* g = std::get_if<CatchGoal>(&goal)) {
    for (int i = 0; i < 3; ++i) {
      if (!std::isfinite(g->spawn_x[i]) || !std::isfinite(g->drop_height[i])) {
        throw std::invalid_argument("catch goal: non-finite spawn");
      }
      if (g->drop_height[i] <= cfg.tool_position_init.y()) {
        throw std::invalid_argument("catch goal: drop_height must be above the tool");
      }
    }
    return;
  }
  const int n = std::get<ScoopGoal>(goal).count;
  if (n < 1 || n > cfg.scoop_max_goal) {
    throw std::invalid_argument("scoop goal: count " + std::to_string(n) + " outside [1, " +
                                std::to_string(cfg.scoop_max_goal) + "]");
  }
}

Goal sample_goal(const TaskConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  switch (cfg.task) {
    case Task::push: {
      const Rect& r = cfg.push_goal_region;
      for (int attempt = 0; attempt < 100000; ++attempt) {
        const Vec2 p(r.x0 + unit(rng) * r.width(), r.y0 + unit(rng) * r.height());
        if (!cfg.cutout.contains(p)) return PushGoal{p};
      }
      throw std::runtime_error("sample_goal: cutout covers the whole goal region");
    }
    case Task::catch_balls: {
      CatchGoal g;
      for (int i = 0; i < 3; ++i) {
        g.spawn_x[i] = cfg.catch_spawn_x[0] + unit(rng) * (cfg.catch_spawn_x[1] - cfg.catch_spawn_x[0]);
        g.drop_height[i] =
            cfg.catch_spawn_height[0] + unit(rng) * (cfg.catch_spawn_height[1] - cfg.catch_spawn_height[0]);
      }
      return g;
    }
    case Task::scoop: {
      std::uniform_int_distribution<int> n(1, cfg.scoop_max_goal);
      return ScoopGoal{n(rng)};
    }
  }
  throw std::invalid_argument("sample_goal: unknown task");
}

double tradeoff_reward(const TradeoffConfig& cfg, double d_used, double c_used) {
  return cfg.k * (1.0 - (cfg.alpha * d_used / cfg.d_max + (1.0 - cfg.alpha) * c_used / cfg.c_max));
}

DesignVector design_from_action(const TaskConfig& cfg, std::span<const double> a) {
  if (a.size() != static_cast<std::size_t>(kDesignDim)) {
    throw std::invalid_argument("design action must have 5 entries");
  }
  const double scale = cfg.tool_angle_scale * std::numbers::pi / 180.0;
  DesignVector d;
  for (int i = 0; i < kNumLinks; ++i) d.lengths[i] = cfg.tool_length_init[i] * (1.0 + a[i]);
  for (int j = 0; j < kNumJoints; ++j) d.angles[j] = cfg.tool_angle_init[j] * std::numbers::pi / 180.0 + a[kNumLinks + j] * scale;
  return d;
}

std::vector<double> design_to_action(const TaskConfig& cfg, const DesignVector& d) {
  const double scale = cfg.tool_angle_scale * std::numbers::pi / 180.0;
  std::vector<double> a(kDesignDim);
  for (int i = 0; i < kNumLinks; ++i) a[i] = d.lengths[i] / cfg.tool_length_init[i] - 1.0;
  for (int j = 0; j < kNumJoints; ++j) a[kNumLinks + j] = (d.angles[j] - cfg.tool_angle_init[j] * std::numbers::pi / 180.0) / scale;
  return a;
}

// ---------------------------------------------------------------------------
// Environment base

Environment::Environment(TaskConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  // Placeholder goal so goal_dim() is available before the first reset.
  switch (cfg_.task) {
    case Task::push:
      goal_ = PushGoal{};
      break;
    case Task::catch_balls:
      goal_ = CatchGoal{};
      break;
    case Task::scoop:
      goal_ = ScoopGoal{};
      break;
  }
}

Body& Environment::tool() { return world_.bodies.at(tool_index_); }
const Body& Environment::tool() const { return world_.bodies.at(tool_index_); }

TradeoffConfig Environment::tradeoff() const {
  TradeoffConfig t;
  t.k = cfg_.tradeoff_k;
  t.alpha = cfg_.tradeoff_alpha;
  t.d_max = cfg_.design_bounds().max_total_length();
  const int lin = cfg_.task == Task::catch_balls ? 1 : 2;
  t.c_max = cfg_.max_tool_speed * std::sqrt(static_cast<double>(lin));
  return t;
}

int Environment::goal_dim() const { return static_cast<int>(goal_features().size()); }

std::vector<double> Environment::design_features() const {
  if (phase_ == Phase::design) return std::vector<double>(kDesignDim, 0.0);
  return design_to_action(cfg_, design_);
}

Observation Environment::observe() const {
  Observation o;
  o.task = task_observation();
  o.phase = phase_;
  if (phase_ == Phase::control) o.design_echo = design_;
  return o;
}

Observation Environment::reset(const Goal& goal, std::uint64_t seed) {
  validate_goal(cfg_, goal);
  goal_ = goal;
  Rng rng(seed);
  world_ = World{};
  world_.dt = 1.0 / 60.0;
  tool_index_ = -1;
  build_scene(rng);
  phase_ = Phase::design;
  done_ = false;
  reset_called_ = true;
  control_steps_ = 0;
  design_ = DesignVector{};
  on_reset();
  return observe();
}

StepResult Environment::step_design(const DesignVector& raw) {
  if (!reset_called_) throw ProtocolError("step_design before reset");
  if (done_) throw ProtocolError("step_design on a finished episode");
  if (phase_ != Phase::design) throw ProtocolError("step_design called in the control phase");

  for (double v : raw.lengths) if (!std::isfinite(v)) throw std::invalid_argument("design: length is not finite");
  for (double v : raw.angles) if (!std::isfinite(v)) throw std::invalid_argument("design: angle is not finite");
  const DesignBounds bounds = cfg_.design_bounds();
  design_ = clamp_design(raw, bounds);
  Body tool_body;
  tool_body.kind = BodyKind::kinematic_tool;
  tool_body.position = cfg_.tool_position_init;
  tool_body.geometry = build_tool(design_, cfg_.tool_radius);
  tool_index_ = static_cast<int>(world_.bodies.size());
  world_.bodies.push_back(std::move(tool_body));
  phase_ = Phase::control;

  StepResult r;
  r.info.d_used = material_length(design_, bounds).d_used;
  r.info.c_used = 0.0;
  r.info.tradeoff_reward = tradeoff_reward(tradeoff(), r.info.d_used, 0.0);
  r.reward = r.info.tradeoff_reward;
  r.done = false;
  r.observation = observe();
  return r;
}

StepResult Environment::step_design_action(std::span<const double> action) {
  return step_design(design_from_action(cfg_, action));
}

double Environment::apply_control(std::span<const double> a) {
  Body& t = tool();
  const double v = cfg_.max_tool_speed;
  switch (cfg_.task) {
    case Task::push:
      t.velocity = Vec2(a[0] * v, a[1] * v);
      t.angular_velocity = 0.0;
      return t.velocity.norm();
    case Task::catch_balls:
      t.velocity = Vec2(a[0] * v, 0.0);
      t.angular_velocity = 0.0;
      return std::abs(t.velocity.x());
    case Task::scoop:
      t.velocity = Vec2(a[0] * v, a[1] * v);
      t.angular_velocity = a[2] * cfg_.max_tool_angular_speed;
      return t.velocity.norm();
  }
  return 0.0;
}

void Environment::clamp_tool_pose() {
  Body& t = tool();
  t.position.x() = std::clamp(t.position.x(), tool_workspace_.x0, tool_workspace_.x1);
  t.position.y() = std::clamp(t.position.y(), tool_workspace_.y0, tool_workspace_.y1);
}

StepResult Environment::step_control(std::span<const double> action) {
  if (!reset_called_) throw ProtocolError("step_control before reset");
  if (phase_ != Phase::control) throw ProtocolError("step_control called in the design phase");
  if (done_) throw ProtocolError("step_control on a finished episode");
  if (action.size() != static_cast<std::size_t>(control_dim())) {
    throw std::invalid_argument("control action has " + std::to_string(action.size()) +
                                " entries, expected " + std::to_string(control_dim()));
  }
  std::vector<double> a(action.begin(), action.end());
  for (double& x : a) x = std::isfinite(x) ? std::clamp(x, -1.0, 1.0) : 0.0;

  StepResult r;
  r.info.c_used = apply_control(a);
  for (int k = 0; k < cfg_.control_steps_per_action; ++k) {
    step(world_);
    clamp_tool_pose();
    after_substep();
  }
  ++control_steps_;
  const bool last = control_steps_ >= cfg_.max_episode_steps;

  r.info.d_used = material_length(design_, cfg_.design_bounds()).d_used;
  r.info.task_reward = task_reward(r.info, last);
  r.info.slack_reward = cfg_.slack_reward;
  r.info.tradeoff_reward = tradeoff_reward(tradeoff(), r.info.d_used, r.info.c_used);
  r.reward = r.info.task_reward + r.info.slack_reward + r.info.tradeoff_reward;
  r.done = r.info.success || last;
  done_ = r.done;
  r.observation = observe();
  return r;
}

// ---------------------------------------------------------------------------
// Tasks

namespace {

Body make_static(const Vec2& a, const Vec2& b, double radius) {
  Body s;
  s.kind = BodyKind::static_segment;
  s.geometry.segments.push_back({a, b, radius});
  return s;
}

Body make_circle(const Vec2& p, double radius, double damping = 0.0) {
  Body c;
  c.kind = BodyKind::dynamic_circle;
  c.position = p;
  c.radius = radius;
  c.mass = 1.0;
  c.linear_damping = damping;
  return c;
}

bool touching_tool(const ToolGeometry& geom, const Body& ball, double tol) {
  for (const auto& cap : geom.segments) {
    if (segment_distance(ball.position, cap.start, cap.end) <= ball.radius + cap.radius + tol) return true;
  }
  return false;
}

class PushEnv final : public Environment {
 public:
  using Environment::Environment;

  int task_obs_dim() const override { return 6; }

  std::vector<double> task_features(const Observation& o) const override {
    const Vec2 c = cfg_.tool_position_init;
    return {(o.task[0] - c.x()) / 5.0, (o.task[1] - c.y()) / 5.0, o.task[2] / 5.0,
            o.task[3] / 5.0,           (o.task[4] - c.x()) / 5.0, (o.task[5] - c.y()) / 5.0};
  }

  std::vector<double> goal_features() const override {
    const Vec2 g = std::get<PushGoal>(goal_).target;
    const Vec2 c = cfg_.tool_position_init;
    return {(g.x() - c.x()) / 5.0, (g.y() - c.y()) / 5.0};
  }

 protected:
  void build_scene(Rng&) override {
    world_.gravity = Vec2::Zero();
    world_.friction = cfg_.push_friction;
    world_.restitution = 0.0;
    world_.bodies.push_back(make_circle(cfg_.puck_start, cfg_.puck_radius, cfg_.puck_damping));
    puck_ = 0;
  }

  void on_reset() override { prev_dist_ = distance(); }

  std::vector<double> task_observation() const override {
    const Body& p = world_.bodies[puck_];
    const Vec2 anchor = tool_index_ >= 0 ? tool().position : cfg_.tool_position_init;
    return {p.position.x(), p.position.y(), p.velocity.x(), p.velocity.y(), anchor.x(), anchor.y()};
  }

  double task_reward(StepInfo& info, bool) override {
    const double d = distance();
    double r = cfg_.push_shaping_weight * (prev_dist_ - d);
    prev_dist_ = d;
    if (d < cfg_.push_success_distance && world_.bodies[puck_].velocity.norm() < cfg_.push_success_speed) {
      info.success = true;
      r += cfg_.success_reward;
    }
    info.success_credit = info.success ? 1.0 : 0.0;
    return r;
  }

 private:
  double distance() const {
    return (world_.bodies[puck_].position - std::get<PushGoal>(goal_).target).norm();
  }

  int puck_ = 0;
  double prev_dist_ = 0.0;
};

class CatchEnv final : public Environment {
 public:
  explicit CatchEnv(TaskConfig cfg) : Environment(std::move(cfg)) {
    tool_workspace_ = {cfg_.catch_tool_x_range[0], cfg_.tool_position_init.y(), cfg_.catch_tool_x_range[1],
                       cfg_.tool_position_init.y()};
  }

  int task_obs_dim() const override { return 14; }

  std::vector<double> task_features(const Observation& o) const override {
    const Vec2 c = cfg_.tool_position_init;
    std::vector<double> f;
    f.reserve(o.task.size());
    for (int i = 0; i < 3; ++i) {
      f.push_back((o.task[4 * i] - c.x()) / 8.0);
      f.push_back((o.task[4 * i + 1] - c.y()) / 8.0);
      f.push_back(o.task[4 * i + 2] / 8.0);
      f.push_back(o.task[4 * i + 3] / 8.0);
    }
    f.push_back((o.task[12] - c.x()) / 8.0);
    f.push_back((o.task[13] - c.y()) / 8.0);
    return f;
  }

  std::vector<double> goal_features() const override {
    const auto& g = std::get<CatchGoal>(goal_);
    const Vec2 c = cfg_.tool_position_init;
    std::vector<double> f;
    for (double x : g.spawn_x) f.push_back((x - c.x()) / 8.0);
    for (double h : g.drop_height) f.push_back((h - c.y()) / 8.0);
    return f;
  }

 protected:
  void build_scene(Rng&) override {
    world_.gravity = Vec2(0.0, -10.0);
    world_.friction = cfg_.catch_friction;
    world_.restitution = 0.0;
    const auto& g = std::get<CatchGoal>(goal_);
    for (int i = 0; i < 3; ++i) {
      world_.bodies.push_back(make_circle(Vec2(g.spawn_x[i], g.drop_height[i]), cfg_.ball_radius));
    }
    world_.bodies.push_back(make_static(Vec2(-100.0, -0.1), Vec2(140.0, -0.1), 0.1));
  }

  void on_reset() override {
    hold_.fill(0);
    ever_caught_.fill(false);
  }

  std::vector<double> task_observation() const override {
    std::vector<double> o;
    o.reserve(14);
    for (int i = 0; i < 3; ++i) {
      const Body& b = world_.bodies[i];
      o.insert(o.end(), {b.position.x(), b.position.y(), b.velocity.x(), b.velocity.y()});
    }
    const Vec2 anchor = tool_index_ >= 0 ? tool().position : cfg_.tool_position_init;
    o.push_back(anchor.x());
    o.push_back(anchor.y());
    return o;
  }

  void after_substep() override {
    const ToolGeometry geom = world_.tool_in_world(tool());
    // Caught: slow relative to the tool while touching it, or resting on top
    // of it (the tool is the surface under the ball's centre).
    std::array<bool, 3> support{};
    for (int i = 0; i < 3; ++i) {
      const Body& b = world_.bodies[i];
      if (!touching_tool(geom, b, 0.02)) continue;
      const auto surface = raycast_down(geom, b.position.x());
      const bool resting = surface && *surface <= b.position.y();
      const bool slow = (b.velocity - tool().velocity).norm() < cfg_.catch_speed_tolerance;
      support[i] = resting || slow;
    }
    // A ball resting on a supported ball counts as supported too.
    for (int pass = 0; pass < 2; ++pass) {
      for (int i = 0; i < 3; ++i) {
        if (support[i]) continue;
        for (int j = 0; j < 3; ++j) {
          if (j == i || !support[j]) continue;
          const Body& a = world_.bodies[i];
          const Body& b = world_.bodies[j];
          if ((a.position - b.position).norm() <= a.radius + b.radius + 0.02 && a.position.y() > b.position.y()) {
            support[i] = true;
          }
        }
      }
    }
    for (int i = 0; i < 3; ++i) hold_[i] = support[i] ? hold_[i] + 1 : 0;
  }

  double task_reward(StepInfo& info, bool last_step) override {
    double r = 0.0;
    int caught = 0;
    for (int i = 0; i < 3; ++i) {
      if (hold_[i] >= cfg_.catch_hold_steps) {
        ++caught;
        if (!ever_caught_[i]) {
          ever_caught_[i] = true;
          r += 1.0;
        }
      }
    }
    info.balls_caught = caught;
    if (caught == 3) {
      info.success = true;
      r += cfg_.success_reward;
    }
    if (info.success) {
      info.success_credit = 1.0;
    } else if (last_step && caught == 2) {
      info.success_credit = 2.0 / 3.0;
    }
    return r;
  }

 private:
  std::array<int, 3> hold_{};
  std::array<bool, 3> ever_caught_{};
};

class ScoopEnv final : public Environment {
 public:
  explicit ScoopEnv(TaskConfig cfg) : Environment(std::move(cfg)) {}

  int task_obs_dim() const override { return 4 * cfg_.scoop_ball_count + 3; }

  std::vector<double> task_features(const Observation& o) const override {
    const Vec2 c = cfg_.tool_position_init;
    std::vector<double> f(o.task.size());
    const int n = cfg_.scoop_ball_count;
    for (int i = 0; i < n; ++i) {
      f[4 * i] = (o.task[4 * i] - c.x()) / 8.0;
      f[4 * i + 1] = (o.task[4 * i + 1] - c.y()) / 8.0;
      f[4 * i + 2] = o.task[4 * i + 2] / 8.0;
      f[4 * i + 3] = o.task[4 * i + 3] / 8.0;
    }
    f[4 * n] = (o.task[4 * n] - c.x()) / 8.0;
    f[4 * n + 1] = (o.task[4 * n + 1] - c.y()) / 8.0;
    f[4 * n + 2] = o.task[4 * n + 2];
    return f;
  }

  std::vector<double> goal_features() const override {
    return {static_cast<double>(std::get<ScoopGoal>(goal_).count) / cfg_.scoop_max_goal};
  }

 protected:
  void build_scene(Rng&) override {
    if (settled_.empty()) settle_reservoir();
    world_.gravity = Vec2(0.0, -10.0);
    world_.friction = cfg_.scoop_friction;
    world_.restitution = 0.0;
    world_.bodies = settled_;
    tool_workspace_ = {0.0, -2.0, 30.0, 20.0};
  }

  std::vector<double> task_observation() const override {
    const int n = cfg_.scoop_ball_count;
    std::vector<double> o;
    o.reserve(4 * n + 3);
    for (int i = 0; i < n; ++i) {
      const Body& b = world_.bodies[i];
      o.insert(o.end(), {b.position.x(), b.position.y(), b.velocity.x(), b.velocity.y()});
    }
    if (tool_index_ >= 0) {
      o.insert(o.end(), {tool().position.x(), tool().position.y(), tool().angle});
    } else {
      o.insert(o.end(), {cfg_.tool_position_init.x(), cfg_.tool_position_init.y(), 0.0});
    }
    return o;
  }

  double task_reward(StepInfo& info, bool last_step) override {
    const int scooped = count_scooped();
    info.balls_scooped = scooped;
    if (!last_step) return 0.0;
    const int n = std::get<ScoopGoal>(goal_).count;
    double r = 1.0 - std::abs(scooped - n) / static_cast<double>(cfg_.scoop_max_goal);
    if (scooped == n) {
      info.success = true;
      info.success_credit = 1.0;
      r += cfg_.success_reward;
    }
    return r;
  }

 private:
  // Balls above the rim held up by the tool, directly or through other balls.
  int count_scooped() const {
    const int n = cfg_.scoop_ball_count;
    const ToolGeometry geom = world_.tool_in_world(tool());
    std::vector<char> held(n, 0);
    std::vector<int> frontier;
    for (int i = 0; i < n; ++i) {
      const Body& b = world_.bodies[i];
      if (b.position.y() > cfg_.scoop_rim_height && touching_tool(geom, b, 0.05)) {
        held[i] = 1;
        frontier.push_back(i);
      }
    }
    while (!frontier.empty()) {
      const int j = frontier.back();
      frontier.pop_back();
      for (int i = 0; i < n; ++i) {
        if (held[i]) continue;
        const Body& a = world_.bodies[i];
        const Body& b = world_.bodies[j];
        if (a.position.y() > cfg_.scoop_rim_height &&
            (a.position - b.position).norm() <= a.radius + b.radius + 0.05) {
          held[i] = 1;
          frontier.push_back(i);
        }
      }
    }
    return static_cast<int>(std::count(held.begin(), held.end(), 1));
  }

  void settle_reservoir() {
    World w;
    w.gravity = Vec2(0.0, -10.0);
    w.friction = cfg_.scoop_friction;
    const double r = cfg_.scoop_ball_radius;
    const double x0 = cfg_.scoop_container_x[0];
    const double x1 = cfg_.scoop_container_x[1];
    const double fy = cfg_.scoop_floor_y;
    const int per_row = std::max(1, static_cast<int>((x1 - x0 - 0.2) / (2.05 * r)));
    for (int i = 0; i < cfg_.scoop_ball_count; ++i) {
      const int row = i / per_row;
      const int col = i % per_row;
      // Alternate rows are offset so the pile packs instead of stacking in columns.
      const double off = (row % 2) * r;
      w.bodies.push_back(make_circle(Vec2(x0 + 0.1 + r + off + col * 2.05 * r, fy + 0.1 + r + row * 2.05 * r), r));
    }
    const double rim = cfg_.scoop_rim_height;
    w.bodies.push_back(make_static(Vec2(x0 - 0.1, fy), Vec2(x1 + 0.1, fy), 0.1));
    w.bodies.push_back(make_static(Vec2(x0, fy), Vec2(x0, rim), 0.1));
    w.bodies.push_back(make_static(Vec2(x1, fy), Vec2(x1, rim), 0.1));
    for (int s = 0; s < cfg_.scoop_settle_steps; ++s) step(w);
    for (auto& b : w.bodies) b.velocity = Vec2::Zero();
    settled_ = std::move(w.bodies);
  }

  std::vector<Body> settled_;
};

}  // namespace

std::unique_ptr<Environment> Environment::make(const TaskConfig& cfg) {
  switch (cfg.task) {
    case Task::push:
      return std::make_unique<PushEnv>(cfg);
    case Task::catch_balls:
      return std::make_unique<CatchEnv>(cfg);
    case Task::scoop:
      return std::make_unique<ScoopEnv>(cfg);
  }
  throw std::invalid_argument("unknown task");
}

// ---------------------------------------------------------------------------

EpisodeTraceWriter::EpisodeTraceWriter(std::ostream& os) : os_(os) {}

void EpisodeTraceWriter::write(int step, std::span<const double> action, const StepResult& result) {
  nlohmann::json j;
  j["step"] = step;
  j["phase"] = step == 0 ? "design" : "control";
  j["action"] = std::vector<double>(action.begin(), action.end());
  j["reward"] = result.reward;
  j["done"] = result.done;
  j["observation"] = result.observation.task;
  j["design"] = {result.observation.design_echo.lengths[0], result.observation.design_echo.lengths[1],
                 result.observation.design_echo.lengths[2], result.observation.design_echo.angles[0],
                 result.observation.design_echo.angles[1]};
  j["info"] = {{"success", result.info.success},         {"d_used", result.info.d_used},
               {"c_used", result.info.c_used},           {"balls_caught", result.info.balls_caught},
               {"balls_scooped", result.info.balls_scooped}};
  os_ << j.dump() << '\n';
}

}  // namespace codesign
