#include "codesign/policy.hpp"

#include <stdexcept>
#include <string>

namespace codesign {

std::string_view architecture_name(Architecture a) {
  switch (a) {
    case Architecture::separate:
      return "separate";
    case Architecture::shared:
      return "shared";
    case Architecture::hwasp:
      return "hwasp";
  }
  return "unknown";
}

Architecture parse_architecture(std::string_view name) {
  if (name == "separate" || name == "ours") return Architecture::separate;
  if (name == "shared" || name == "shared_arch") return Architecture::shared;
  if (name == "hwasp" || name == "hwasp_minimal") return Architecture::hwasp;
  throw std::invalid_argument("unknown architecture '" + std::string(name) + "'");
}

std::vector<double> FeatureLayout::assemble(std::span<const double> task, std::span<const double> design,
                                            std::span<const double> goal, bool control_phase) {
  std::vector<double> x;
  x.reserve(task.size() + design.size() + goal.size() + 1);
  x.insert(x.end(), task.begin(), task.end());
  x.insert(x.end(), design.begin(), design.end());
  x.insert(x.end(), goal.begin(), goal.end());
  x.push_back(control_phase ? 1.0 : 0.0);
  return x;
}

namespace {

std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(out);
  return s;
}

Eigen::Index mlp_params(const std::vector<int>& sizes) {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) n += static_cast<Eigen::Index>(sizes[l + 1]) * (sizes[l] + 1);
  return n;
}

}  // namespace

Eigen::Index separate_policy_parameter_count(const AgentConfig& cfg, const FeatureLayout& layout) {
  return mlp_params(layer_sizes(layout.designer_dim(), cfg.hidden, kDesignDim)) +
         mlp_params(layer_sizes(layout.controller_dim(), cfg.hidden, layout.control_dim));
}

int auto_shared_width(const AgentConfig& cfg, const FeatureLayout& layout) {
  const Eigen::Index target = separate_policy_parameter_count(cfg, layout);
  for (int w = 8;; w += 8) {
    const std::vector<int> hidden(cfg.shared_depth, w);
    if (mlp_params(layer_sizes(layout.full_dim(), hidden, kDesignDim + layout.control_dim)) >= target) return w;
  }
}

PolicyParams::PolicyParams(const AgentConfig& cfg, const FeatureLayout& lay, std::mt19937_64& rng)
    : config(cfg), layout(lay) {
  switch (cfg.architecture) {
    case Architecture::separate:
      designer = Mlp(layer_sizes(lay.designer_dim(), cfg.hidden, kDesignDim));
      designer.init_orthogonal(rng);
      controller = Mlp(layer_sizes(lay.controller_dim(), cfg.hidden, lay.control_dim));
      controller.init_orthogonal(rng);
      break;
    case Architecture::shared: {
      const int w = cfg.shared_width > 0 ? cfg.shared_width : auto_shared_width(cfg, lay);
      config.shared_width = w;
      shared = Mlp(layer_sizes(lay.full_dim(), std::vector<int>(cfg.shared_depth, w), kDesignDim + lay.control_dim));
      shared.init_orthogonal(rng);
      if (policy_parameter_count() < separate_policy_parameter_count(cfg, lay)) {
        throw std::logic_error("shared architecture has fewer parameters than the separate networks");
      }
      break;
    }
    case Architecture::hwasp:
      design_mean_param = VectorXd::Zero(kDesignDim);
      controller = Mlp(layer_sizes(lay.controller_dim(), cfg.hidden, lay.control_dim));
      controller.init_orthogonal(rng);
      break;
  }
  value = Mlp(layer_sizes(lay.full_dim(), cfg.value_hidden, 1));
  value.init_orthogonal(rng);
  design_head.log_std = VectorXd::Constant(kDesignDim, cfg.design_log_std);
  design_head.learnable = !cfg.fix_std;
  control_head.log_std = VectorXd::Constant(lay.control_dim, cfg.control_log_std);
  control_head.learnable = !cfg.fix_std;
}

MatrixXd PolicyParams::designer_input(const MatrixXd& full) const {
  MatrixXd x(layout.designer_dim(), full.cols());
  x << full.topRows(layout.task_dim), full.middleRows(layout.goal_offset(), layout.goal_dim);
  return x;
}

MatrixXd PolicyParams::controller_input(const MatrixXd& full) const {
  return full.topRows(layout.controller_dim());
}

VectorXd PolicyParams::design_mean(std::span<const double> full) const {
  switch (config.architecture) {
    case Architecture::separate: {
      std::vector<double> x(full.begin(), full.begin() + layout.task_dim);
      x.insert(x.end(), full.begin() + layout.goal_offset(), full.begin() + layout.goal_offset() + layout.goal_dim);
      return designer.forward(x);
    }
    case Architecture::shared:
      return shared.forward(full).head(kDesignDim);
    case Architecture::hwasp:
      return design_mean_param;
  }
  return {};
}

VectorXd PolicyParams::control_mean(std::span<const double> full) const {
  if (config.architecture == Architecture::shared) return shared.forward(full).tail(layout.control_dim);
  return controller.forward(full.first(layout.controller_dim()));
}

double PolicyParams::state_value(std::span<const double> full) const { return value.forward(full)(0); }

Eigen::Index PolicyParams::policy_parameter_count() const {
  switch (config.architecture) {
    case Architecture::separate:
      return designer.parameter_count() + controller.parameter_count();
    case Architecture::shared:
      return shared.parameter_count();
    case Architecture::hwasp:
      return design_mean_param.size() + controller.parameter_count();
  }
  return 0;
}

Eigen::Index PolicyParams::value_parameter_count() const { return value.parameter_count(); }

namespace {
std::vector<double> to_vec(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }
VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}
}  // namespace

nlohmann::json to_json(const PolicyParams& p) {
  nlohmann::json j;
  j["architecture"] = architecture_name(p.config.architecture);
  j["hidden"] = p.config.hidden;
  j["value_hidden"] = p.config.value_hidden;
  j["shared_width"] = p.config.shared_width;
  j["shared_depth"] = p.config.shared_depth;
  j["fix_std"] = p.config.fix_std;
  j["layout"] = {{"task_dim", p.layout.task_dim}, {"goal_dim", p.layout.goal_dim},
                 {"control_dim", p.layout.control_dim}};
  if (p.designer.num_layers() > 0) j["designer"] = to_json(p.designer);
  if (p.controller.num_layers() > 0) j["controller"] = to_json(p.controller);
  if (p.shared.num_layers() > 0) j["shared"] = to_json(p.shared);
  if (p.design_mean_param.size() > 0) j["design_mean"] = to_vec(p.design_mean_param);
  j["value"] = to_json(p.value);
  j["design_log_std"] = to_vec(p.design_head.log_std);
  j["control_log_std"] = to_vec(p.control_head.log_std);
  return j;
}

PolicyParams policy_from_json(const nlohmann::json& j) {
  PolicyParams p;
  p.config.architecture = parse_architecture(j.at("architecture").get<std::string>());
  p.config.hidden = j.at("hidden").get<std::vector<int>>();
  p.config.value_hidden = j.at("value_hidden").get<std::vector<int>>();
  p.config.shared_width = j.at("shared_width");
  p.config.shared_depth = j.at("shared_depth");
  p.config.fix_std = j.at("fix_std");
  p.layout.task_dim = j.at("layout").at("task_dim");
  p.layout.goal_dim = j.at("layout").at("goal_dim");
  p.layout.control_dim = j.at("layout").at("control_dim");
  if (j.contains("designer")) p.designer = mlp_from_json(j.at("designer"));
  if (j.contains("controller")) p.controller = mlp_from_json(j.at("controller"));
  if (j.contains("shared")) p.shared = mlp_from_json(j.at("shared"));
  if (j.contains("design_mean")) p.design_mean_param = from_vec(j.at("design_mean").get<std::vector<double>>());
  p.value = mlp_from_json(j.at("value"));
  p.design_head.log_std = from_vec(j.at("design_log_std").get<std::vector<double>>());
  p.control_head.log_std = from_vec(j.at("control_log_std").get<std::vector<double>>());
  p.design_head.learnable = p.control_head.learnable = !p.config.fix_std;
  p.config.design_log_std = p.design_head.log_std(0);
  p.config.control_log_std = p.control_head.log_std(0);
  return p;
}

}  // namespace codesign
