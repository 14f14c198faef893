#pragma once

#include <Eigen/Core>

#include <iosfwd>
#include <limits>
#include <random>
#include <vector>

#include <json.hpp>

namespace codesign {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct CmaOptions {
  int population = 24;
  double sigma0 = 0.1;
  // Multipliers on the default CMA-ES learning rates.
  double center_lr = 1.0;
  double covariance_lr = 1.0;  // scales both rank-one and rank-mu
  double rank_mu_lr = 1.0;
  double rank_one_lr = 1.0;

  void validate() const;
};

// CMA-ES with rank-one and rank-mu covariance updates and cumulative step-size
// adaptation. Fitness is maximized.
class Cma {
 public:
  Cma(VectorXd mean, CmaOptions opts);

  std::vector<VectorXd> ask(std::mt19937_64& rng) const;
  // Non-finite fitnesses are dropped from the ranking. Returns how many were dropped.
  int tell(const std::vector<VectorXd>& candidates, const std::vector<double>& fitness);

  const VectorXd& mean() const { return mean_; }
  double sigma() const { return sigma_; }
  const MatrixXd& covariance() const { return cov_; }
  double min_eigenvalue() const { return eigenvalues_.minCoeff(); }
  int generation() const { return generation_; }
  int dim() const { return static_cast<int>(mean_.size()); }
  const CmaOptions& options() const { return opts_; }

  // Best candidate seen over all generations.
  double best_fitness() const { return best_fitness_; }
  const VectorXd& best() const { return best_; }

 private:
  void decompose();

  CmaOptions opts_;
  VectorXd mean_;
  double sigma_;
  MatrixXd cov_;
  VectorXd p_sigma_, p_c_;
  MatrixXd basis_;        // eigenvectors of cov_
  VectorXd eigenvalues_;  // floored
  int generation_ = 0;
  int mu_ = 0;
  VectorXd weights_;
  double mu_eff_ = 0.0;
  double c_sigma_ = 0.0, d_sigma_ = 0.0, c_c_ = 0.0, c1_ = 0.0, c_mu_ = 0.0, chi_n_ = 0.0;
  double best_fitness_ = -std::numeric_limits<double>::infinity();
  VectorXd best_;
};

struct CmaLogRow {
  int generation = 0;
  double best_fitness = 0.0;
  double mean_fitness = 0.0;
  double sigma = 0.0;
  long long env_steps = 0;
};

// One JSON object per line.
void write_cma_row(std::ostream& os, const CmaLogRow& row);

}  // namespace codesign
