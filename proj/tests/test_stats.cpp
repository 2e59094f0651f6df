#include <doctest.h>

#include <cmath>

#include "bitlab/stats.hpp"

using namespace bitlab;

TEST_CASE("regularized incomplete beta: boundary and reference values") {
  CHECK(stats::regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0);
  CHECK(stats::regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0);
  // I_x(1, 1) = x.
  CHECK(stats::regularized_incomplete_beta(1.0, 1.0, 0.3) == doctest::Approx(0.3).epsilon(1e-12));
  // I_x(1, b) = 1 - (1-x)^b.
  CHECK(stats::regularized_incomplete_beta(1.0, 4.0, 0.2) ==
        doctest::Approx(1.0 - std::pow(0.8, 4)).epsilon(1e-12));
  // Symmetry I_x(a, b) = 1 - I_{1-x}(b, a).
  CHECK(stats::regularized_incomplete_beta(2.5, 1.5, 0.4) ==
        doctest::Approx(1.0 - stats::regularized_incomplete_beta(1.5, 2.5, 0.6)).epsilon(1e-12));
}

TEST_CASE("student t two-sided p: known quantiles") {
  // t = 0 gives p = 1 for every dof.
  CHECK(stats::student_t_two_sided_p(0.0, 5.0) == doctest::Approx(1.0).epsilon(1e-12));
  // dof = 1 is the Cauchy distribution: p = 1 - (2/pi) atan(|t|).
  for (double t : {0.5, 1.0, 3.0}) {
    const double expected = 1.0 - 2.0 / 3.141592653589793 * std::atan(t);
    CHECK(stats::student_t_two_sided_p(t, 1.0) == doctest::Approx(expected).epsilon(1e-10));
  }
  // Large dof approaches the normal tail: t = 1.96, dof = 1e6 -> ~0.05.
  CHECK(stats::student_t_two_sided_p(1.96, 1e6) == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(stats::student_t_two_sided_p(-3.0, 7.0) ==
        doctest::Approx(stats::student_t_two_sided_p(3.0, 7.0)).epsilon(1e-12));
}

TEST_CASE("mean and sample stddev") {
  CHECK(stats::mean({1.0, 2.0, 3.0, 4.0}) == doctest::Approx(2.5));
  CHECK(stats::sample_stddev({1.0, 2.0, 3.0, 4.0}) ==
        doctest::Approx(1.2909944487358056).epsilon(1e-12));
  CHECK_THROWS(stats::mean({}));
  CHECK_THROWS(stats::sample_stddev({1.0}));
}
