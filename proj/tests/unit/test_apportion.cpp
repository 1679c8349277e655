#include <random>

#include "doctest.h"
#include "robust_design/apportion.hpp"
#include "robust_design/errors.hpp"

using namespace robust_design;

namespace {

std::vector<int> apportion(std::initializer_list<double> w, int n) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(w.size()));
  Eigen::Index i = 0;
  for (double x : w) v(i++) = x;
  return efficient_apportionment(Design(v, n), n).counts();
}

}  // namespace

TEST_CASE("worked examples") {
  CHECK(apportion({0.5, 0.3, 0.2}, 10) == std::vector<int>{5, 3, 2});
  CHECK(apportion({0.55, 0.25, 0.20}, 7) == std::vector<int>{3, 2, 2});
  CHECK(apportion({1.0}, 9) == std::vector<int>{9});
  CHECK(apportion({0.5, 0.0, 0.5}, 3) == std::vector<int>{2, 0, 1});
}

TEST_CASE("support larger than n is rejected") {
  CHECK_THROWS_AS(apportion({0.25, 0.25, 0.25, 0.25}, 3), InvalidArgument);
}

TEST_CASE("randomized invariants") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> size_d(1, 12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 2000; ++rep) {
    const int size = size_d(rng);
    Eigen::VectorXd w(size);
    for (int i = 0; i < size; ++i) w(i) = u(rng) < 0.25 ? 0.0 : u(rng);
    if (w.sum() == 0.0) w(0) = 1.0;
    w /= w.sum();
    w /= w.sum();
    const int support = static_cast<int>((w.array() > 0).count());
    const int n = support + std::uniform_int_distribution<int>(0, 40)(rng);
    const ExactDesign e = efficient_apportionment(Design(w, n), n);
    CHECK(e.n() == n);
    for (int i = 0; i < size; ++i) {
      if (w(i) == 0.0) CHECK(e.counts()[static_cast<std::size_t>(i)] == 0);
      if (w(i) > 0.0) CHECK(e.counts()[static_cast<std::size_t>(i)] >= 1);
      CHECK(std::abs(e.counts()[static_cast<std::size_t>(i)] - n * w(i)) < 1.0 + 0.5 * support * w(i));
    }
    const ExactDesign again = efficient_apportionment(e.as_design(), n);
    CHECK(again.counts() == e.counts());
  }
}
