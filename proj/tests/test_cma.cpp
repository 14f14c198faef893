#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include <json.hpp>

#include "codesign/cma.hpp"

using namespace codesign;

namespace {

double sphere(const VectorXd& x, const VectorXd& opt) { return -(x - opt).squaredNorm(); }

// Runs up to `generations`; returns the generation at which the best
// candidate first came within `tol` of the optimum, or -1.
int run_sphere(std::uint64_t seed, int generations, double tol, Cma* out = nullptr) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  VectorXd x0(5);
  for (auto& v : x0) v = u(rng);
  Cma cma(x0, CmaOptions{});
  const VectorXd opt = VectorXd::Zero(5);
  int hit = -1;
  for (int g = 0; g < generations; ++g) {
    const auto c = cma.ask(rng);
    std::vector<double> f;
    for (const auto& x : c) f.push_back(sphere(x, opt));
    cma.tell(c, f);
    if (hit < 0 && cma.best().norm() <= tol) hit = g + 1;
  }
  if (out) *out = cma;
  return hit;
}

}  // namespace

TEST_CASE("ask") {
  std::mt19937_64 rng(1);
  SUBCASE("tiny sigma collapses on the mean") {
    CmaOptions o;
    o.sigma0 = 1e-12;
    Cma cma(VectorXd::Constant(3, 2.0), o);
    for (const auto& c : cma.ask(rng)) CHECK((c - cma.mean()).norm() < 1e-10);
  }
  SUBCASE("fixed seed") {
    Cma cma(VectorXd::Zero(4), CmaOptions{});
    std::mt19937_64 a(5), b(5);
    const auto ca = cma.ask(a);
    const auto cb = cma.ask(b);
    REQUIRE(ca.size() == 24);
    for (std::size_t i = 0; i < ca.size(); ++i) CHECK(ca[i] == cb[i]);
  }
  SUBCASE("sample covariance matches sigma^2 C") {
    // Adapt on an ill-conditioned bowl so C is far from the identity.
    Cma cma(VectorXd::Constant(3, 1.0), CmaOptions{});
    VectorXd scale(3);
    scale << 1.0, 10.0, 100.0;
    for (int g = 0; g < 15; ++g) {
      const auto c = cma.ask(rng);
      std::vector<double> f;
      for (const auto& x : c) f.push_back(-x.cwiseProduct(scale).squaredNorm());
      cma.tell(c, f);
    }
    const MatrixXd target = cma.sigma() * cma.sigma() * cma.covariance();
    MatrixXd acc = MatrixXd::Zero(3, 3);
    const int n = 100000;
    int drawn = 0;
    while (drawn < n) {
      for (const auto& c : cma.ask(rng)) {
        const VectorXd d = c - cma.mean();
        acc += d * d.transpose();
        if (++drawn == n) break;
      }
    }
    acc /= n;
    CHECK((acc - target).norm() / target.norm() < 0.05);
  }
}

TEST_CASE("tell") {
  std::mt19937_64 rng(2);
  SUBCASE("identical candidates keep the mean") {
    Cma cma(VectorXd::Constant(4, 0.5), CmaOptions{});
    const std::vector<VectorXd> c(24, cma.mean());
    std::vector<double> f(24);
    for (int i = 0; i < 24; ++i) f[i] = i;
    cma.tell(c, f);
    CHECK((cma.mean() - VectorXd::Constant(4, 0.5)).norm() < 1e-15);
  }
  SUBCASE("non-finite fitness is excluded") {
    Cma cma(VectorXd::Zero(2), CmaOptions{});
    auto c = cma.ask(rng);
    std::vector<double> f(c.size(), 1.0);
    f[0] = std::nan("");
    f[1] = -std::numeric_limits<double>::infinity();
    // A huge outlier that would dominate the mean if it were ranked.
    c[0] = VectorXd::Constant(2, 1e6);
    CHECK(cma.tell(c, f) == 2);
    CHECK(cma.mean().norm() < 1.0);
    CHECK(std::isfinite(cma.sigma()));
  }
  SUBCASE("covariance stays symmetric positive definite") {
    Cma cma(VectorXd::Constant(6, 3.0), CmaOptions{});
    for (int g = 0; g < 100; ++g) {
      const auto c = cma.ask(rng);
      std::vector<double> f;
      for (const auto& x : c) f.push_back(sphere(x, VectorXd::Zero(6)));
      cma.tell(c, f);
      CHECK(cma.min_eigenvalue() > 0.0);
      CHECK((cma.covariance() - cma.covariance().transpose()).norm() == 0.0);
      CHECK(cma.sigma() > 0.0);
    }
  }
  SUBCASE("size mismatch") {
    Cma cma(VectorXd::Zero(2), CmaOptions{});
    CHECK_THROWS_AS(cma.tell({VectorXd::Zero(2)}, {1.0, 2.0}), std::invalid_argument);
  }
}

TEST_CASE("sphere convergence in dimension 5") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const int hit = run_sphere(seed, 200, 1e-6);
    CHECK(hit > 0);
    CHECK(hit <= 200);
  }
}

TEST_CASE("mean approaches a shifted optimum") {
  // Median over seeds of the mean's distance never rises across a 10-generation window.
  VectorXd opt(5);
  opt << 0.3, -0.2, 0.5, 0.1, -0.4;
  std::vector<std::vector<double>> dist(5);
  for (int s = 0; s < 5; ++s) {
    std::mt19937_64 rng(100 + s);
    Cma cma(VectorXd::Zero(5), CmaOptions{});
    for (int g = 0; g < 60; ++g) {
      const auto c = cma.ask(rng);
      std::vector<double> f;
      for (const auto& x : c) f.push_back(sphere(x, opt));
      cma.tell(c, f);
      dist[s].push_back((cma.mean() - opt).norm());
    }
  }
  auto median_at = [&](int g) {
    std::vector<double> v;
    for (const auto& d : dist) v.push_back(d[g]);
    std::nth_element(v.begin(), v.begin() + 2, v.end());
    return v[2];
  };
  for (int g = 10; g < 60; g += 10) CHECK(median_at(g) <= median_at(g - 10));
}

TEST_CASE("best fitness bookkeeping is elitist") {
  std::mt19937_64 rng(3);
  Cma cma(VectorXd::Constant(3, 1.0), CmaOptions{});
  double last = -std::numeric_limits<double>::infinity();
  std::uniform_real_distribution<double> noise(-1.0, 1.0);
  for (int g = 0; g < 30; ++g) {
    const auto c = cma.ask(rng);
    std::vector<double> f;
    for (const auto& x : c) f.push_back(sphere(x, VectorXd::Zero(3)) + noise(rng));
    cma.tell(c, f);
    CHECK(cma.best_fitness() >= last);
    last = cma.best_fitness();
  }
}

TEST_CASE("jsonl row") {
  std::ostringstream os;
  write_cma_row(os, {3, -0.5, -1.25, 0.07, 12345});
  const auto j = nlohmann::json::parse(os.str());
  CHECK(j.at("generation") == 3);
  CHECK(j.at("best_fitness") == -0.5);
  CHECK(j.at("mean_fitness") == -1.25);
  CHECK(j.at("sigma") == 0.07);
  CHECK(j.at("env_steps") == 12345);
  CHECK(os.str().back() == '\n');
}

TEST_CASE("options") {
  CmaOptions o;
  o.population = 1;
  CHECK_THROWS_AS(Cma(VectorXd::Zero(2), o), std::invalid_argument);
  CHECK_THROWS_AS(Cma(VectorXd(), CmaOptions{}), std::invalid_argument);
}
