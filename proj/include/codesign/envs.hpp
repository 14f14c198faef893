#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "codesign/geometry.hpp"
#include "codesign/physics.hpp"

namespace codesign {

using Rng = std::mt19937_64;

enum class Task { push, catch_balls, scoop };

std::string_view task_name(Task task);
Task parse_task(std::string_view name);

struct Rect {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

  bool contains(const Vec2& p) const { return p.x() >= x0 && p.x() <= x1 && p.y() >= y0 && p.y() <= y1; }
  double area() const { return (x1 - x0) * (y1 - y0); }
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  bool inside(const Rect& outer) const {
    return x0 >= outer.x0 && x1 <= outer.x1 && y0 >= outer.y0 && y1 <= outer.y1;
  }
};

// Goal-space regions removed from training. `fraction` is the removed share
// of the training rectangle's area.
struct CutoutSpec {
  std::vector<Rect> rects;
  double fraction = 0.0;

  bool empty() const { return rects.empty(); }
  bool contains(const Vec2& p) const;

  // Two congruent patches centred in the left and right halves of `region`,
  // each with the half's aspect ratio, together covering `fraction` of it.
  static CutoutSpec centered_pair(const Rect& region, double fraction);
};

// Environment settings. Keys of the flat config file mirror these names.
struct TaskConfig {
  Task task = Task::push;
  int max_episode_steps = 150;
  double slack_reward = -0.001;
  Vec2 tool_position_init = Vec2(20.0, 10.0);
  std::array<double, kNumLinks> tool_length_init{2.0, 2.0, 2.0};
  std::array<double, 2> tool_length_ratio{-0.5, 0.5};
  std::array<double, kNumLinks> tool_angle_init{0.0, 0.0, 0.0};
  std::array<double, 2> tool_angle_ratio{-1.0, 1.0};
  double tool_angle_scale = 90.0;  // degrees
  int control_steps_per_action = 1;
  double tradeoff_k = 0.0;
  double tradeoff_alpha = 0.0;

  double success_reward = 10.0;
  double max_tool_speed = 5.0;          // world units / s, per axis
  double max_tool_angular_speed = 1.0;  // rad / s (scoop)
  double tool_radius = kToolRadius;

  // push
  Rect push_goal_region{13.0, 15.0, 29.0, 21.0};
  Vec2 puck_start = Vec2(21.0, 11.0);
  double puck_radius = 0.5;
  double puck_damping = 4.0;
  double push_shaping_weight = 1.0;
  double push_success_distance = 1.0;
  double push_success_speed = 0.2;
  double push_friction = 0.0;

  // catch
  double ball_radius = 0.4;
  std::array<double, 2> catch_spawn_x{13.0, 29.0};
  std::array<double, 2> catch_spawn_height{16.0, 24.0};
  std::array<double, 2> catch_tool_x_range{4.0, 36.0};
  double catch_friction = 0.6;
  double catch_speed_tolerance = 0.1;
  int catch_hold_steps = 10;

  // scoop
  int scoop_ball_count = 40;
  double scoop_ball_radius = 0.25;
  int scoop_max_goal = 7;
  double scoop_floor_y = 1.0;
  double scoop_rim_height = 5.0;
  std::array<double, 2> scoop_container_x{9.0, 21.0};
  double scoop_friction = 0.5;
  int scoop_settle_steps = 300;

  CutoutSpec cutout;

  static TaskConfig defaults(Task task);
  DesignBounds design_bounds() const;
  int control_dim() const;
  void validate() const;
};

struct PushGoal {
  Vec2 target = Vec2::Zero();
};
struct CatchGoal {
  std::array<double, 3> spawn_x{};
  std::array<double, 3> drop_height{};
};
struct ScoopGoal {
  int count = 1;
};
using Goal = std::variant<PushGoal, CatchGoal, ScoopGoal>;

Task goal_task(const Goal& goal);
std::vector<double> goal_values(const Goal& goal);
// Throws std::invalid_argument naming the offending field.
Goal goal_from_values(Task task, std::span<const double> values);
// Throws std::invalid_argument when the goal lies outside the task's goal space.
void validate_goal(const TaskConfig& cfg, const Goal& goal);

// Uniform over the task's goal space, excluding cfg.cutout for push.
Goal sample_goal(const TaskConfig& cfg, Rng& rng);

enum class Phase { design, control };

struct Observation {
  std::vector<double> task;  // positions/velocities of scene objects + tool anchor
  Phase phase = Phase::design;
  DesignVector design_echo;  // zeros in the design phase
};

struct StepInfo {
  bool success = false;
  double d_used = 0.0;
  double c_used = 0.0;
  int balls_caught = 0;
  int balls_scooped = 0;
  double task_reward = 0.0;
  double slack_reward = 0.0;
  double tradeoff_reward = 0.0;
  // Partial credit used for success rates (catch: 2/3 for two balls).
  double success_credit = 0.0;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

struct TradeoffConfig {
  double k = 0.0;
  double alpha = 0.0;
  double d_max = 1.0;
  double c_max = 1.0;
};

// K * [1 - (alpha * d_used / d_max + (1 - alpha) * c_used / c_max)]
double tradeoff_reward(const TradeoffConfig& cfg, double d_used, double c_used);

// Policy design actions are ratios: length = init * (1 + a), angle = a * scale.
DesignVector design_from_action(const TaskConfig& cfg, std::span<const double> action);
std::vector<double> design_to_action(const TaskConfig& cfg, const DesignVector& design);

class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Two-phase MDP: a single design transition followed by control steps.
class Environment {
 public:
  explicit Environment(TaskConfig cfg);
  virtual ~Environment() = default;
  Environment(const Environment&) = delete;
  Environment& operator=(const Environment&) = delete;

  static std::unique_ptr<Environment> make(const TaskConfig& cfg);

  Observation reset(const Goal& goal, std::uint64_t seed);
  StepResult step_design(const DesignVector& design);
  StepResult step_design_action(std::span<const double> action);
  StepResult step_control(std::span<const double> action);

  Phase phase() const { return phase_; }
  bool done() const { return done_; }
  int control_steps_taken() const { return control_steps_; }
  const TaskConfig& config() const { return cfg_; }
  const Goal& goal() const { return goal_; }
  const World& world() const { return world_; }
  const DesignVector& design() const { return design_; }
  TradeoffConfig tradeoff() const;

  int control_dim() const { return cfg_.control_dim(); }
  virtual int task_obs_dim() const = 0;
  int goal_dim() const;

  // Normalized policy inputs.
  virtual std::vector<double> task_features(const Observation& obs) const = 0;
  virtual std::vector<double> goal_features() const = 0;
  std::vector<double> design_features() const;

  Observation observe() const;

 protected:
  virtual void build_scene(Rng& rng) = 0;
  virtual std::vector<double> task_observation() const = 0;
  virtual void on_reset() {}
  // Called after every physics sub-step of a control action.
  virtual void after_substep() {}
  // Task reward for the control step that just finished; may set success.
  virtual double task_reward(StepInfo& info, bool last_step) = 0;
  // Sets tool velocities from a clamped action in [-1, 1]; returns c_used.
  virtual double apply_control(std::span<const double> action);

  Body& tool();
  const Body& tool() const;
  void clamp_tool_pose();

  TaskConfig cfg_;
  World world_;
  Goal goal_;
  int tool_index_ = -1;
  Rect tool_workspace_{0.0, 0.0, 40.0, 30.0};

 private:
  Phase phase_ = Phase::design;
  bool done_ = true;
  bool reset_called_ = false;
  int control_steps_ = 0;
  DesignVector design_;
};

// One JSON object per line: step, phase, action, reward, done, observation, info.
class EpisodeTraceWriter {
 public:
  explicit EpisodeTraceWriter(std::ostream& os);
  void write(int step, std::span<const double> action, const StepResult& result);

 private:
  std::ostream& os_;
};

}  // namespace codesign
