#pragma once

#include <cmath>

namespace ebcc {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Upper tail 1 - Phi(x), accurate far into the tail.
inline double normal_sf(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

double normal_quantile(double p);

// Upper tail of Student's t with dof degrees of freedom.
double student_t_sf(double t, double dof);

}  // namespace ebcc
