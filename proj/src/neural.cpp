#include "codesign/neural.hpp"

#include <Eigen/QR>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace codesign {

namespace {

// tanh through the vectorized exp; libstdc++ tanh is scalar and dominated
// training time. Absolute error is within a few ulp of 1.
template <typename Derived>
auto fast_tanh(const Eigen::ArrayBase<Derived>& z) {
  return 1.0 - 2.0 / ((2.0 * z).exp() + 1.0);
}

}  // namespace

Mlp::Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw std::invalid_argument("Mlp needs at least input and output sizes");
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] <= 0 || sizes_[l + 1] <= 0) throw std::invalid_argument("Mlp layer sizes must be positive");
    weight_offset_.push_back(offset);
    offset += static_cast<Eigen::Index>(sizes_[l + 1]) * sizes_[l];
    bias_offset_.push_back(offset);
    offset += sizes_[l + 1];
  }
  params_ = VectorXd::Zero(offset);
}

Eigen::Map<const MatrixXd> Mlp::weight(int l) const {
  return {params_.data() + weight_offset_[l], sizes_[l + 1], sizes_[l]};
}
Eigen::Map<MatrixXd> Mlp::weight(int l) { return {params_.data() + weight_offset_[l], sizes_[l + 1], sizes_[l]}; }
Eigen::Map<const VectorXd> Mlp::bias(int l) const { return {params_.data() + bias_offset_[l], sizes_[l + 1]}; }
Eigen::Map<VectorXd> Mlp::bias(int l) { return {params_.data() + bias_offset_[l], sizes_[l + 1]}; }

void Mlp::init_orthogonal(std::mt19937_64& rng, double hidden_gain, double output_gain) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int l = 0; l < num_layers(); ++l) {
    const int rows = sizes_[l + 1];
    const int cols = sizes_[l];
    const int big = std::max(rows, cols);
    const int small = std::min(rows, cols);
    MatrixXd g(big, small);
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = normal(rng);
    Eigen::HouseholderQR<MatrixXd> qr(g);
    MatrixXd q = qr.householderQ() * MatrixXd::Identity(big, small);
    // Sign fix so the result is uniformly distributed.
    const VectorXd d = qr.matrixQR().diagonal();
    for (int j = 0; j < small; ++j) {
      if (d(j) < 0) q.col(j) *= -1.0;
    }
    const double gain = (l + 1 == num_layers()) ? output_gain : hidden_gain;
    if (rows >= cols) {
      weight(l) = gain * q;
    } else {
      weight(l) = gain * q.transpose();
    }
    bias(l).setZero();
  }
}

void Mlp::check_input(Eigen::Index rows) const {
  if (sizes_.empty()) throw std::invalid_argument("Mlp: network has no layers");
  if (rows != sizes_.front()) {
    throw std::invalid_argument("Mlp: input has " + std::to_string(rows) + " features, expected " +
                                std::to_string(sizes_.front()));
  }
}

MatrixXd Mlp::forward(const MatrixXd& input) const {
  check_input(input.rows());
  MatrixXd h = input;
  for (int l = 0; l < num_layers(); ++l) {
    MatrixXd z = weight(l) * h;
    z.colwise() += bias(l);
    if (l + 1 < num_layers()) z = fast_tanh(z.array());
    h = std::move(z);
  }
  return h;
}

MatrixXd Mlp::forward(const MatrixXd& input, Tape& tape) const {
  check_input(input.rows());
  tape.activations.resize(num_layers() + 1);
  tape.activations[0] = input;
  for (int l = 0; l < num_layers(); ++l) {
    MatrixXd z = weight(l) * tape.activations[l];
    z.colwise() += bias(l);
    if (l + 1 < num_layers()) z = fast_tanh(z.array());
    tape.activations[l + 1] = std::move(z);
  }
  return tape.activations.back();
}

VectorXd Mlp::forward(std::span<const double> input) const {
  check_input(static_cast<Eigen::Index>(input.size()));
  VectorXd h = Eigen::Map<const VectorXd>(input.data(), static_cast<Eigen::Index>(input.size()));
  for (int l = 0; l < num_layers(); ++l) {
    VectorXd z = weight(l) * h + bias(l);
    if (l + 1 < num_layers()) z = fast_tanh(z.array());
    h = std::move(z);
  }
  return h;
}

VectorXd Mlp::backward(const Tape& tape, const MatrixXd& output_grad, MatrixXd* input_grad) const {
  VectorXd grad = VectorXd::Zero(params_.size());
  MatrixXd delta = output_grad;
  for (int l = num_layers() - 1; l >= 0; --l) {
    if (l + 1 < num_layers()) {
      // tanh'(z) = 1 - tanh(z)^2, with tanh(z) stored as the activation.
      delta.array() *= 1.0 - tape.activations[l + 1].array().square();
    }
    Eigen::Map<MatrixXd>(grad.data() + weight_offset_[l], sizes_[l + 1], sizes_[l]).noalias() =
        delta * tape.activations[l].transpose();
    Eigen::Map<VectorXd>(grad.data() + bias_offset_[l], sizes_[l + 1]) = delta.rowwise().sum();
    if (l > 0 || input_grad != nullptr) {
      MatrixXd prev = weight(l).transpose() * delta;
      delta = std::move(prev);
    }
  }
  if (input_grad != nullptr) *input_grad = std::move(delta);
  return grad;
}

namespace {
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
}

double gaussian_logprob(const GaussianHead& head, const VectorXd& mean, const VectorXd& action) {
  if (mean.size() != head.log_std.size() || action.size() != mean.size()) {
    throw std::invalid_argument("gaussian_logprob: dimension mismatch");
  }
  double lp = 0.0;
  for (Eigen::Index d = 0; d < mean.size(); ++d) {
    const double z = (action(d) - mean(d)) / std::exp(head.log_std(d));
    lp += -0.5 * z * z - head.log_std(d) - kHalfLog2Pi;
  }
  return lp;
}

VectorXd gaussian_logprob(const GaussianHead& head, const MatrixXd& mean, const MatrixXd& actions) {
  if (mean.rows() != head.log_std.size() || actions.rows() != mean.rows() || actions.cols() != mean.cols()) {
    throw std::invalid_argument("gaussian_logprob: dimension mismatch");
  }
  const VectorXd inv_std = (-head.log_std).array().exp();
  const double constant = -head.log_std.sum() - kHalfLog2Pi * static_cast<double>(mean.rows());
  MatrixXd z = (actions - mean).array().colwise() * inv_std.array();
  return (-0.5 * z.array().square().colwise().sum()).transpose() + constant;
}

double gaussian_entropy(const GaussianHead& head) {
  return head.log_std.sum() + static_cast<double>(head.log_std.size()) * (0.5 + kHalfLog2Pi);
}

std::pair<VectorXd, double> sample_action(const GaussianHead& head, const VectorXd& mean, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd a(mean.size());
  for (Eigen::Index d = 0; d < mean.size(); ++d) a(d) = mean(d) + std::exp(head.log_std(d)) * normal(rng);
  return {a, gaussian_logprob(head, mean, a)};
}

Adam::Adam(Eigen::Index n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(VectorXd::Zero(n)), v_(VectorXd::Zero(n)) {}

void Adam::step(VectorXd& params, const VectorXd& grad) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

namespace {
std::vector<double> to_vec(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }
VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}
}  // namespace

nlohmann::json Adam::to_json() const {
  return {{"lr", lr_}, {"beta1", beta1_}, {"beta2", beta2_}, {"eps", eps_},
          {"t", t_},   {"m", to_vec(m_)}, {"v", to_vec(v_)}};
}

Adam Adam::from_json(const nlohmann::json& j) {
  Adam a;
  a.lr_ = j.at("lr");
  a.beta1_ = j.at("beta1");
  a.beta2_ = j.at("beta2");
  a.eps_ = j.at("eps");
  a.t_ = j.at("t");
  a.m_ = from_vec(j.at("m").get<std::vector<double>>());
  a.v_ = from_vec(j.at("v").get<std::vector<double>>());
  return a;
}

nlohmann::json to_json(const Mlp& net) { return {{"sizes", net.sizes()}, {"params", to_vec(net.params())}}; }

Mlp mlp_from_json(const nlohmann::json& j) {
  Mlp net(j.at("sizes").get<std::vector<int>>());
  const auto p = j.at("params").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(p.size()) != net.parameter_count()) {
    throw std::invalid_argument("checkpoint: parameter count does not match layer sizes");
  }
  net.params() = from_vec(p);
  return net;
}

}  // namespace codesign
