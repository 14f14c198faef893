#pragma once

#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "codesign/geometry.hpp"
#include "codesign/neural.hpp"

namespace codesign {

// separate: goal-conditioned designer and controller networks.
// shared:   one trunk with design and control output heads.
// hwasp:    goal-independent design distribution (free mean vector) plus a
//           controller network.
enum class Architecture { separate, shared, hwasp };

std::string_view architecture_name(Architecture a);
Architecture parse_architecture(std::string_view name);

struct AgentConfig {
  Architecture architecture = Architecture::separate;
  std::vector<int> hidden{128, 128, 128};
  std::vector<int> value_hidden{128, 128, 128};
  // Trunk width for the shared architecture; 0 picks the smallest width whose
  // parameter count is at least the separate networks'.
  int shared_width = 0;
  int shared_depth = 3;
  double design_log_std = -2.3;
  double control_log_std = -1.0;
  bool fix_std = true;
};

// Every policy input is a slice of one feature column:
//   [task features | design features (zeros in design phase) | goal features | phase flag]
struct FeatureLayout {
  int task_dim = 0;
  int goal_dim = 0;
  int control_dim = 0;

  int design_offset() const { return task_dim; }
  int goal_offset() const { return task_dim + kDesignDim; }
  int phase_offset() const { return task_dim + kDesignDim + goal_dim; }
  int full_dim() const { return task_dim + kDesignDim + goal_dim + 1; }
  int designer_dim() const { return task_dim + goal_dim; }
  int controller_dim() const { return task_dim + kDesignDim + goal_dim; }

  static std::vector<double> assemble(std::span<const double> task, std::span<const double> design,
                                      std::span<const double> goal, bool control_phase);
};

// Parameters of the designer, controller and value function.
struct PolicyParams {
  AgentConfig config;
  FeatureLayout layout;

  Mlp designer;    // separate
  Mlp controller;  // separate, hwasp
  Mlp shared;      // shared: outputs [design mean | control mean]
  VectorXd design_mean_param;  // hwasp
  Mlp value;

  GaussianHead design_head;
  GaussianHead control_head;

  PolicyParams() = default;
  PolicyParams(const AgentConfig& cfg, const FeatureLayout& layout, std::mt19937_64& rng);

  // Column-wise slices of full feature matrices.
  MatrixXd designer_input(const MatrixXd& full) const;
  MatrixXd controller_input(const MatrixXd& full) const;

  VectorXd design_mean(std::span<const double> full) const;
  VectorXd control_mean(std::span<const double> full) const;
  double state_value(std::span<const double> full) const;

  // Trainable policy parameters (networks only, excluding log-stds).
  Eigen::Index policy_parameter_count() const;
  Eigen::Index value_parameter_count() const;
};

// Policy parameter count of the separate-network agent for a layout.
Eigen::Index separate_policy_parameter_count(const AgentConfig& cfg, const FeatureLayout& layout);
int auto_shared_width(const AgentConfig& cfg, const FeatureLayout& layout);

nlohmann::json to_json(const PolicyParams& p);
PolicyParams policy_from_json(const nlohmann::json& j);

}  // namespace codesign
