#pragma once

namespace prism::special {

/// Regularized lower incomplete gamma P(a,x) and upper Q(a,x) = 1 - P(a,x).
/// Series expansion for x < a+1, Lentz continued fraction otherwise.
double gamma_p(double a, double x);
double gamma_q(double a, double x);

/// Upper tail of the chi-squared distribution with df degrees of freedom.
double chi2_sf(double x, double df);

/// Regularized incomplete beta I_x(a,b).
double beta_inc(double a, double b, double x);

/// Student-t CDF and upper-tail quantile (two-sided level -> positive t).
double student_t_cdf(double t, double df);
double student_t_ppf(double p, double df);

}  // namespace prism::special
