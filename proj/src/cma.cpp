#include "codesign/cma.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>

namespace codesign {

void CmaOptions::validate() const {
  if (population < 2) throw std::invalid_argument("cma: population must be at least 2");
  if (!(sigma0 > 0.0)) throw std::invalid_argument("cma: sigma0 must be positive");
  for (double lr : {center_lr, covariance_lr, rank_mu_lr, rank_one_lr}) {
    if (!(lr >= 0.0)) throw std::invalid_argument("cma: learning rate multipliers must be non-negative");
  }
}

Cma::Cma(VectorXd mean, CmaOptions opts) : opts_(opts), mean_(std::move(mean)), sigma_(opts.sigma0) {
  opts_.validate();
  const int n = dim();
  if (n == 0) throw std::invalid_argument("cma: empty search space");
  const int lambda = opts_.population;
  mu_ = lambda / 2;
  weights_.resize(mu_);
  for (int i = 0; i < mu_; ++i) weights_(i) = std::log((lambda + 1) / 2.0) - std::log(i + 1.0);
  weights_ /= weights_.sum();
  mu_eff_ = 1.0 / weights_.squaredNorm();

  const double nd = n;
  c_sigma_ = (mu_eff_ + 2.0) / (nd + mu_eff_ + 5.0);
  d_sigma_ = 1.0 + 2.0 * std::max(0.0, std::sqrt((mu_eff_ - 1.0) / (nd + 1.0)) - 1.0) + c_sigma_;
  c_c_ = (4.0 + mu_eff_ / nd) / (nd + 4.0 + 2.0 * mu_eff_ / nd);
  c1_ = 2.0 / ((nd + 1.3) * (nd + 1.3) + mu_eff_);
  c_mu_ = std::min(1.0 - c1_, 2.0 * (mu_eff_ - 2.0 + 1.0 / mu_eff_) / ((nd + 2.0) * (nd + 2.0) + mu_eff_));
  c1_ *= opts_.covariance_lr * opts_.rank_one_lr;
  c_mu_ *= opts_.covariance_lr * opts_.rank_mu_lr;
  if (c1_ + c_mu_ > 1.0) {
    const double s = 1.0 / (c1_ + c_mu_);
    c1_ *= s;
    c_mu_ *= s;
  }
  chi_n_ = std::sqrt(nd) * (1.0 - 1.0 / (4.0 * nd) + 1.0 / (21.0 * nd * nd));

  cov_ = MatrixXd::Identity(n, n);
  p_sigma_ = VectorXd::Zero(n);
  p_c_ = VectorXd::Zero(n);
  basis_ = MatrixXd::Identity(n, n);
  eigenvalues_ = VectorXd::Ones(n);
  best_ = mean_;
}

std::vector<VectorXd> Cma::ask(std::mt19937_64& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  const VectorXd scale = eigenvalues_.cwiseSqrt();
  std::vector<VectorXd> out;
  out.reserve(static_cast<std::size_t>(opts_.population));
  VectorXd z(dim());
  for (int k = 0; k < opts_.population; ++k) {
    for (int i = 0; i < dim(); ++i) z(i) = normal(rng);
    out.push_back(mean_ + sigma_ * (basis_ * scale.cwiseProduct(z)));
  }
  return out;
}

int Cma::tell(const std::vector<VectorXd>& candidates, const std::vector<double>& fitness) {
  if (candidates.size() != fitness.size()) throw std::invalid_argument("cma tell: size mismatch");
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < fitness.size(); ++i) {
    if (candidates[i].size() != mean_.size()) throw std::invalid_argument("cma tell: candidate dimension mismatch");
    if (std::isfinite(fitness[i])) order.push_back(i);
  }
  const int dropped = static_cast<int>(fitness.size() - order.size());
  if (dropped > 0) std::cerr << "cma: ignoring " << dropped << " candidate(s) with non-finite fitness\n";
  ++generation_;
  if (order.empty()) return dropped;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fitness[a] > fitness[b]; });
  if (fitness[order[0]] > best_fitness_) {
    best_fitness_ = fitness[order[0]];
    best_ = candidates[order[0]];
  }

  // With fewer finite candidates than mu, recombine over what is left.
  const int mu = std::min<int>(mu_, static_cast<int>(order.size()));
  VectorXd w = weights_.head(mu);
  w /= w.sum();
  const double mu_eff = 1.0 / w.squaredNorm();

  const int n = dim();
  MatrixXd y(n, mu);
  for (int i = 0; i < mu; ++i) y.col(i) = (candidates[order[static_cast<std::size_t>(i)]] - mean_) / sigma_;
  const VectorXd y_w = y * w;
  mean_ += opts_.center_lr * sigma_ * y_w;

  // C^{-1/2} y_w through the eigen decomposition.
  const VectorXd c_inv_sqrt_y = basis_ * (basis_.transpose() * y_w).cwiseQuotient(eigenvalues_.cwiseSqrt());
  p_sigma_ = (1.0 - c_sigma_) * p_sigma_ + std::sqrt(c_sigma_ * (2.0 - c_sigma_) * mu_eff) * c_inv_sqrt_y;
  const double ps_norm = p_sigma_.norm();
  const double decay = 1.0 - std::pow(1.0 - c_sigma_, 2.0 * generation_);
  const bool h_sigma = ps_norm / std::sqrt(decay) < (1.4 + 2.0 / (n + 1.0)) * chi_n_;
  p_c_ = (1.0 - c_c_) * p_c_;
  if (h_sigma) p_c_ += std::sqrt(c_c_ * (2.0 - c_c_) * mu_eff) * y_w;

  const double delta = h_sigma ? 0.0 : c_c_ * (2.0 - c_c_);
  cov_ = (1.0 - c1_ - c_mu_ + c1_ * delta) * cov_ + c1_ * p_c_ * p_c_.transpose() +
         c_mu_ * y * w.asDiagonal() * y.transpose();
  sigma_ *= std::exp((c_sigma_ / d_sigma_) * (ps_norm / chi_n_ - 1.0));
  decompose();
  return dropped;
}

void Cma::decompose() {
  cov_ = (0.5 * (cov_ + cov_.transpose())).eval();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov_);
  if (es.info() != Eigen::Success) throw std::runtime_error("cma: eigen decomposition failed");
  basis_ = es.eigenvectors();
  eigenvalues_ = es.eigenvalues();
  const double floor = std::max(eigenvalues_.maxCoeff() * 1e-14, 1e-300);
  if (eigenvalues_.minCoeff() < floor) {
    eigenvalues_ = eigenvalues_.cwiseMax(floor);
    cov_ = basis_ * eigenvalues_.asDiagonal() * basis_.transpose();
    cov_ = (0.5 * (cov_ + cov_.transpose())).eval();
  }
}

void write_cma_row(std::ostream& os, const CmaLogRow& row) {
  nlohmann::json j;
  j["generation"] = row.generation;
  j["best_fitness"] = row.best_fitness;
  j["mean_fitness"] = row.mean_fitness;
  j["sigma"] = row.sigma;
  j["env_steps"] = row.env_steps;
  os << j.dump() << '\n';
}

}  // namespace codesign
