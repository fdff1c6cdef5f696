#pragma once

#include "ebcc/calibration.hpp"

#include <limits>

namespace ebcc {

enum class SMethod { Equicorrelated, Mvr };

// Diagonal of the knockoff S-matrix.
Vector s_matrix(const Matrix& sigma, SMethod method = SMethod::Equicorrelated);

struct GaussianDesignModel {
    Vector mu;
    Matrix sigma;
    Vector s;
    void validate() const;
};

// Precomputed pieces of X~ | X ~ N(X - (X - mu) Sigma^-1 S, 2S - S Sigma^-1 S).
class KnockoffSampler {
public:
    explicit KnockoffSampler(const GaussianDesignModel& model);
    Matrix sample(const Matrix& x, Rng& rng) const;
    const GaussianDesignModel& model() const { return model_; }

private:
    GaussianDesignModel model_;
    Matrix shift_;   // Sigma^-1 S
    Matrix factor_;  // transposed square root of 2S - S Sigma^-1 S
};

Matrix sample_knockoffs(const GaussianDesignModel& model, const Matrix& x, Rng& rng);

// W_j = |b_j| - |b_{j+m}| from a lasso fit on [X, X~].
Vector lcd_stats(const Matrix& x, const Matrix& xk, const Vector& y, double lambda);

enum class ThresholdVariant { Standard, EarlyStop };

inline constexpr double kNoThreshold = std::numeric_limits<double>::infinity();

double knockoff_threshold(const Vector& w, double alpha_kn, ThresholdVariant variant = ThresholdVariant::EarlyStop);

// e_j = m 1{W_j >= T} / (1 + #{W_k <= -T})
Vector knockoff_evalues(const Vector& w, double threshold);

struct DerandomizedEValues {
    int d = 0;
    double alpha_kn = 0.0;
    std::vector<Vector> w;
    std::vector<double> thresholds;
    Vector e;
};

DerandomizedEValues derandomized_evalues(const KnockoffSampler& sampler, const Matrix& x, const Vector& y, int d,
                                         double alpha_kn, double lambda, Rng& rng);

// Cross-validated lambda for the augmented design of a hold-out dataset.
double knockoff_lambda(const KnockoffSampler& sampler, const Matrix& x, const Vector& y, Rng& rng);

// Redraws column j from its Gaussian conditional given the other columns
// and reruns the derandomized pipeline.
class CrtResampler : public Resampler {
public:
    CrtResampler(const KnockoffSampler& sampler, const Matrix& x, const Vector& y, Index j, int d, double alpha_kn,
                 double lambda);
    Vector draw(Rng& rng) const override;
    std::optional<double> evalue_bound() const override { return static_cast<double>(x_.cols()); }

    // The design with column j redrawn.
    Matrix draw_design(Rng& rng) const;
    double conditional_sd() const { return sd_; }
    const Vector& coefficients() const { return coef_; }

private:
    const KnockoffSampler& sampler_;
    const Matrix& x_;
    const Vector& y_;
    int d_;
    double alpha_kn_, lambda_;
    Vector coef_;
    double sd_;
    Vector mean_offset_;  // mu_j + (X_{-j} - mu_{-j}) coef
};

}  // namespace ebcc
