#pragma once

#include <Eigen/Core>

namespace stereobias::stats {

/// Upper tail of the standard normal, P(Z > z).
double normal_sf(double z);

/// Two-sided Wald p-value for a z statistic.
double two_sided_normal_p(double z);

/// Regularized incomplete beta I_x(a, b) by the Lentz continued fraction.
double incomplete_beta(double a, double b, double x);

/// Upper tail of the F(d1, d2) distribution, P(F > f).
double f_sf(double f, double d1, double d2);

double pearson(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y);

/// Median of a copy of `values` (mean of the middle pair for even sizes).
double median(Eigen::VectorXd values);

}  // namespace stereobias::stats
