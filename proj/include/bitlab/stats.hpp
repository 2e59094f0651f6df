#pragma once

#include <cstddef>
#include <vector>

namespace bitlab::stats {

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation
// (modified Lentz) converged to 1e-12.
double regularized_incomplete_beta(double a, double b, double x);

// Two-sided p-value of a Student-t statistic with the given degrees of
// freedom: I_{v/(v+t^2)}(v/2, 1/2).
double student_t_two_sided_p(double t, double dof);

double mean(const std::vector<double>& xs);

// Sample standard deviation, n-1 denominator.
double sample_stddev(const std::vector<double>& xs);

}  // namespace bitlab::stats
