#pragma once

#include <Eigen/Core>

#include <random>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

namespace codesign {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Fully connected network: tanh on hidden layers, linear output. All
// parameters live in one flat vector (per layer: weights column-major, then
// biases) so optimizers and checkpoints treat it as a single block.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<int> sizes);

  // Scaled orthogonal init: `hidden_gain` on hidden layers, `output_gain` on
  // the last layer, zero biases.
  void init_orthogonal(std::mt19937_64& rng, double hidden_gain = 1.0, double output_gain = 0.01);

  const std::vector<int>& sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  Eigen::Index parameter_count() const { return params_.size(); }

  VectorXd& params() { return params_; }
  const VectorXd& params() const { return params_; }

  Eigen::Map<const MatrixXd> weight(int layer) const;
  Eigen::Map<MatrixXd> weight(int layer);
  Eigen::Map<const VectorXd> bias(int layer) const;
  Eigen::Map<VectorXd> bias(int layer);

  // Activations of every layer for a batch (one sample per column).
  struct Tape {
    std::vector<MatrixXd> activations;
  };

  MatrixXd forward(const MatrixXd& input) const;
  MatrixXd forward(const MatrixXd& input, Tape& tape) const;
  VectorXd forward(std::span<const double> input) const;

  // Gradient of sum(output .* output_grad) with respect to the parameters
  // (flat layout). If input_grad is non-null it receives d/d input.
  VectorXd backward(const Tape& tape, const MatrixXd& output_grad, MatrixXd* input_grad = nullptr) const;

 private:
  void check_input(Eigen::Index rows) const;

  std::vector<int> sizes_;
  std::vector<Eigen::Index> weight_offset_;
  std::vector<Eigen::Index> bias_offset_;
  VectorXd params_;
};

// Diagonal Gaussian over actions with state-independent log-std.
struct GaussianHead {
  VectorXd log_std;
  bool learnable = false;

  VectorXd std() const { return log_std.array().exp(); }
};

double gaussian_logprob(const GaussianHead& head, const VectorXd& mean, const VectorXd& action);
// One log-probability per column.
VectorXd gaussian_logprob(const GaussianHead& head, const MatrixXd& mean, const MatrixXd& actions);
double gaussian_entropy(const GaussianHead& head);

// action = mean + std * xi with xi ~ N(0, I) drawn from rng.
std::pair<VectorXd, double> sample_action(const GaussianHead& head, const VectorXd& mean, std::mt19937_64& rng);

class Adam {
 public:
  Adam() = default;
  Adam(Eigen::Index n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(VectorXd& params, const VectorXd& grad);  // descends along grad

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

  nlohmann::json to_json() const;
  static Adam from_json(const nlohmann::json& j);

 private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long long t_ = 0;
  VectorXd m_, v_;
};

nlohmann::json to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& j);

}  // namespace codesign
