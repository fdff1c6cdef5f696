#include "ebcc/lasso.hpp"

#include <cmath>

namespace ebcc {

Lasso::Lasso(const Matrix& x, const Vector& y, LassoOptions opt) : opt_(opt), n_(x.rows()), p_(x.cols()) {
    if (y.size() != n_) throw std::invalid_argument("lasso: X and y disagree in length");
    if (n_ < 2) throw std::invalid_argument("lasso needs at least two rows");
    if (!x.allFinite() || !y.allFinite()) throw std::domain_error("lasso input is not finite");
    const double n = static_cast<double>(n_);
    center_ = x.colwise().mean();
    Matrix xs = x.rowwise() - center_.transpose();
    scale_ = (xs.colwise().squaredNorm() / n).cwiseSqrt();
    for (Index j = 0; j < p_; ++j) {
        if (scale_(j) > 0.0)
            xs.col(j) /= scale_(j);
        else
            xs.col(j).setZero();
    }
    y_mean_ = y.mean();
    const Vector yc = y.array() - y_mean_;
    yy_ = yc.squaredNorm() / n;
    gram_ = Matrix::Zero(p_, p_);
    gram_.selfadjointView<Eigen::Lower>().rankUpdate(xs.transpose(), 1.0 / n);
    gram_.triangularView<Eigen::StrictlyUpper>() = gram_.transpose();
    corr_ = xs.transpose() * yc / n;
    beta_ = Vector::Zero(p_);
    grad_ = corr_;
}

double Lasso::lambda_max() const { return corr_.cwiseAbs().maxCoeff(); }

const Vector& Lasso::fit(double lambda) {
    if (!(lambda >= 0.0)) throw std::domain_error("lasso lambda must be nonnegative");
    const double null_obj = std::max(0.5 * yy_, 1e-300);
    // One cyclic pass; returns the largest coefficient change.
    auto pass = [&](double& size) {
        double biggest = 0.0;
        size = 0.0;
        for (Index j = 0; j < p_; ++j) {
            const double old = beta_(j);
            const double gjj = gram_(j, j);
            if (gjj <= 0.0) continue;
            const double z = grad_(j) + gjj * old;
            const double fresh = (z > lambda ? z - lambda : z < -lambda ? z + lambda : 0.0) / gjj;
            if (fresh != old) {
                const double d = fresh - old;
                grad_.noalias() -= gram_.col(j) * d;
                beta_(j) = fresh;
                biggest = std::max(biggest, std::abs(d));
            }
            size = std::max(size, std::abs(fresh));
        }
        if (!grad_.allFinite()) throw NumericError("lasso diverged");
        return biggest;
    };
    sweeps_ = 0;
    while (sweeps_ < opt_.max_sweeps) {
        double size = 0.0;
        const double biggest = pass(size);
        ++sweeps_;
        if (lambda > 0.0) {
            // Duality gap with the residual scaled into the dual feasible set.
            const double bc = beta_.dot(corr_);
            const double rr = yy_ - bc - beta_.dot(grad_);
            const double ry = yy_ - bc;
            const double s = std::max(1.0, grad_.cwiseAbs().maxCoeff() / lambda);
            const double primal = 0.5 * rr + lambda * beta_.lpNorm<1>();
            const double dual = ry / s - 0.5 * rr / (s * s);
            if (primal - dual <= opt_.tolerance * null_obj) return beta_;
        } else if (biggest <= 1e-12 * (1.0 + size)) {
            return beta_;
        }
    }
    throw NumericError("lasso did not converge within the sweep limit");
}

Vector Lasso::coefficients() const {
    Vector b = Vector::Zero(p_);
    for (Index j = 0; j < p_; ++j)
        if (scale_(j) > 0.0) b(j) = beta_(j) / scale_(j);
    return b;
}

double Lasso::intercept() const { return y_mean_ - coefficients().dot(center_); }

Vector lasso(const Matrix& x, const Vector& y, double lambda, LassoOptions opt) {
    Lasso fit(x, y, opt);
    fit.fit(lambda);
    return fit.coefficients();
}

double cv_lambda(const Matrix& x, const Vector& y, int folds, int grid, double min_ratio) {
    const Index n = x.rows();
    if (folds < 2 || folds > n) throw std::domain_error("cv_lambda: bad fold count");
    if (grid < 1) throw std::domain_error("cv_lambda: empty grid");
    const double top = Lasso(x, y).lambda_max();
    if (!(top > 0.0)) return 0.0;
    std::vector<double> lambdas(grid);
    for (int g = 0; g < grid; ++g)
        lambdas[g] = top * std::pow(min_ratio, grid == 1 ? 0.0 : static_cast<double>(g) / (grid - 1));

    std::vector<double> err(grid, 0.0);
    for (int f = 0; f < folds; ++f) {
        std::vector<Index> train, test;
        for (Index i = 0; i < n; ++i) (i % folds == f ? test : train).push_back(i);
        Matrix xt = x(train, Eigen::all);
        Vector yt = y(train);
        Matrix xv = x(test, Eigen::all);
        Vector yv = y(test);
        Lasso fit(xt, yt);
        for (int g = 0; g < grid; ++g) {
            fit.fit(lambdas[g]);
            const Vector pred = (xv * fit.coefficients()).array() + fit.intercept();
            err[g] += (yv - pred).squaredNorm();
        }
    }
    return lambdas[std::min_element(err.begin(), err.end()) - err.begin()];
}

}  // namespace ebcc
