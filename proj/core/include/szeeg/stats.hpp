#pragma once

namespace szeeg::stats {

// Regularized incomplete beta function I_x(a, b), a,b > 0, x in [0,1].
double reg_incomplete_beta(double a, double b, double x);

// Two-sided p-value for a Student-t statistic with df degrees of freedom.
double student_t_p_two_sided(double t, double df);

// Upper-tail probability P(F >= f) for an F statistic with (df1, df2).
double f_upper_tail(double f, double df1, double df2);

}  // namespace szeeg::stats
