#pragma once

#include "ebcc/types.hpp"

namespace ebcc {

struct LassoOptions {
    int max_sweeps = 10000;
    double tolerance = 1e-8;  // duality gap, relative to the null-model objective
};

// Lasso with intercept on standardized columns, solved by cyclic coordinate
// descent on the Gram matrix:
//   min (1/2n) |y - b0 - X_s b|^2 + lambda |b|_1
// Coefficients are reported on the original column scale.
class Lasso {
public:
    Lasso(const Matrix& x, const Vector& y, LassoOptions opt = {});

    // Warm-starts from the previous solution.
    const Vector& fit(double lambda);
    // Smallest lambda with an all-zero solution.
    double lambda_max() const;
    Vector coefficients() const;
    double intercept() const;
    int sweeps() const { return sweeps_; }

private:
    LassoOptions opt_;
    Index n_, p_;
    Vector center_, scale_;
    double y_mean_;
    double yy_;
    Matrix gram_;
    Vector corr_;
    Vector beta_;  // standardized scale
    Vector grad_;
    int sweeps_ = 0;
};

Vector lasso(const Matrix& x, const Vector& y, double lambda, LassoOptions opt = {});

// lambda minimizing k-fold cross-validated squared error over a log grid from
// lambda_max down to lambda_max * min_ratio. Fold of row i is i mod folds.
double cv_lambda(const Matrix& x, const Vector& y, int folds = 5, int grid = 50, double min_ratio = 1e-2);

}  // namespace ebcc
