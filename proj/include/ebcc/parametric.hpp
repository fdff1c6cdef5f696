#pragma once

#include "ebcc/calibration.hpp"

#include <cmath>
#include <concepts>

namespace ebcc {

// Likelihood-ratio e-value exp(a z - a^2/2) of N(a,1) against N(0,1). The
// exponent saturates at +-700 instead of overflowing.
template <std::floating_point Scalar>
Scalar lrt_z(Scalar z, Scalar a) {
    using std::exp;
    Scalar x = a * z - a * a / Scalar(2);
    if (x > Scalar(700)) x = Scalar(700);
    if (x < Scalar(-700)) x = Scalar(-700);
    return exp(x);
}

template <class DerivedZ, class DerivedA>
Vector lrt_z(const Eigen::MatrixBase<DerivedZ>& z, const Eigen::MatrixBase<DerivedA>& a) {
    Vector e(z.size());
    for (Index k = 0; k < z.size(); ++k) e(k) = lrt_z<double>(z(k), a(k));
    return e;
}

// v without its j-th entry.
template <class Derived>
Vector drop(const Eigen::MatrixBase<Derived>& v, Index j) {
    Vector out(v.size() - 1);
    out << v.head(j), v.tail(v.size() - j - 1);
    return out;
}

// Sufficient statistics are stored on a dyadic grid so that recomputing them
// from a resample returns the identical bits.
inline constexpr double kStatGrid = 0x1p-36;
inline constexpr double kStatLimit = 0x1p14;
double snap(double x);

struct ZInstance {
    Vector z;
    Matrix sigma;
    Vector a;
    void validate() const;
};

// S_j = Z_{-j} - Sigma_{-j,j} Z_j
Vector z_suffstat(const ZInstance& inst, Index j);
// Z with Z_j = y and Z_{-j} = S_j + Sigma_{-j,j} y.
Vector z_from_suffstat(const Vector& s, const Matrix& sigma, Index j, double y);
Vector z_resample(const Vector& s, const Matrix& sigma, Index j, Rng& rng);

class ZResampler : public Resampler {
public:
    ZResampler(const ZInstance& inst, Index j);
    Vector draw(Rng& rng) const override;
    std::optional<double> conditional_budget() const override { return 1.0; }
    const Vector& suffstat() const { return s_; }

private:
    Vector s_;
    Vector coef_;  // Sigma_{-j,j} / Sigma_jj
    double sd_;
    Vector a_;
};

struct TInstance {
    Vector z;
    Matrix psi;
    double w_norm_sq = 0.0;
    int dof = 1;
    Vector a;
    void validate() const;
};

Vector t_stats(const TInstance& inst);

struct TSuffStat {
    Vector u;  // Z_{-j} - Psi_{-j,j} Z_j / Psi_jj
    double v;  // |W|^2 + Z_j^2 / Psi_jj
};

TSuffStat t_suffstat(const TInstance& inst, Index j);
// Instance sharing (U_j, V_j) whose j-th t-statistic equals tj.
TInstance t_instance_from_suffstat(const TSuffStat& s, const Matrix& psi, int dof, Index j, double tj);
// t-statistics of that instance, in closed form.
Vector t_from_suffstat(const TSuffStat& s, const Matrix& psi, int dof, Index j, double tj);
Vector t_resample(const TSuffStat& s, const Matrix& psi, int dof, Index j, Rng& rng);

// Density ratio of the noncentral t (noncentrality a) to the central t at t.
double lrt_t(double t, double a, int dof);

class TResampler : public Resampler {
public:
    TResampler(const TInstance& inst, Index j);
    Vector draw(Rng& rng) const override;
    std::optional<double> conditional_budget() const override { return 1.0; }

private:
    TSuffStat s_;
    Vector cross_;  // Psi_kj / sqrt(Psi_jj Psi_kk), k != j
    Vector diag_;   // Psi_kk, k != j
    int dof_;
    Vector a_;
};

// Largest point of {0, 1, m/(m-1), ..., m/2, m} not above x.
double truncation_T(double x, Index m);

// Root b >= 1 of b Phi(delta/2 + ln(alpha b)/delta) = 1.
double marginal_boost_factor(double delta, double alpha);

}  // namespace ebcc
