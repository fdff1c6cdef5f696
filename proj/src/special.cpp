#include "ebcc/special.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace ebcc {

double normal_quantile(double p) { return boost::math::quantile(boost::math::normal_distribution<double>(), p); }

double student_t_sf(double t, double dof) {
    return boost::math::cdf(boost::math::complement(boost::math::students_t_distribution<double>(dof), t));
}

}  // namespace ebcc
