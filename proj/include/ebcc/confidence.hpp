#pragma once

#include "ebcc/types.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <utility>

namespace ebcc {

struct Interval {
    double lower = -std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();
};

// Empirical-Bernstein interval for the mean of K samples in [lo, hi]:
// mean +- (sqrt(2 V ln(3/a) / K) + 3 (hi - lo) ln(3/a) / K), V the empirical variance.
template <class Derived>
Interval bernstein_ci(const Eigen::DenseBase<Derived>& samples, double lo, double hi, double alpha) {
    check_level(alpha, "alpha_ci");
    const Index k = samples.size();
    if (k < 2) throw std::domain_error("bernstein_ci needs at least two samples");
    if (!(hi >= lo)) throw std::domain_error("bernstein_ci needs lo <= hi");
    const double mean = samples.derived().mean();
    double v = 0.0;
    for (Index i = 0; i < k; ++i) {
        double s = samples(i);
        if (s < lo || s > hi) throw std::domain_error("bernstein_ci sample outside [lo, hi]");
        v += (s - mean) * (s - mean);
    }
    v /= static_cast<double>(k);
    const double l = std::log(3.0 / alpha);
    const double half = std::sqrt(2.0 * v * l / k) + 3.0 * (hi - lo) * l / k;
    return {mean - half, mean + half};
}

// Hedged-capital confidence sequence for the mean of [0,1]-valued samples,
// run over a grid of candidate means. A candidate is dropped for good once the
// average of its long and short capital reaches 1/alpha.
class HedgedCapitalCS {
public:
    explicit HedgedCapitalCS(double alpha, int grid = 1024);

    void update(double x);
    template <class Range>
    void update_batch(const Range& xs) {
        for (double x : xs) update(x);
    }

    Interval interval() const;
    long count() const { return t_; }
    double alpha() const { return alpha_; }

private:
    double alpha_;
    double inv_alpha_;
    double log_term_;
    int grid_;
    std::vector<double> q_, cap_long_, cap_short_, clip_long_, clip_short_;
    std::vector<char> alive_;
    int lo_ = 0, hi_ = 0;
    long t_ = 0;
    double sum_ = 0.0;
    double sq_dev_ = 0.0;
    double sigma2_ = 0.25;
};

// rho minimizing the asymptotic boundary width at sample size k0.
double avcs_rho(double alpha, double k0);

// Half-width of the asymptotic anytime-valid CS after k samples.
double avcs_radius(double sigma, double k, double rho, double alpha);

// Asymptotic (Gaussian-mixture) anytime-valid confidence sequence.
class AsymptoticCS {
public:
    AsymptoticCS(double alpha, double rho);

    void update(double x);
    Interval interval() const;
    long count() const { return k_; }
    double mean() const { return mean_; }
    double sd() const { return k_ > 0 ? std::sqrt(m2_ / static_cast<double>(k_)) : 0.0; }

private:
    double alpha_, rho_;
    long k_ = 0;
    double mean_ = 0.0, m2_ = 0.0;
};

enum class StopReason { Boost, NoBoost, BudgetExhausted };

struct HybridOptions {
    double alpha = 0.05;
    long exact_budget = 3000;
    long asymptotic_budget = 2000;
    long batch_size = 100;
    // Known range of the samples; without it the bounded phase is skipped and
    // the whole budget goes to the asymptotic sequence.
    std::optional<std::pair<double, double>> bounds;
    // Stop with Boost once the upper end is <= target, NoBoost once the lower end is > target.
    double target = 0.0;
};

struct HybridResult {
    Interval interval;
    StopReason reason = StopReason::BudgetExhausted;
    long samples = 0;
};

HybridResult hybrid_cs(const std::function<double()>& draw, const HybridOptions& opt);

}  // namespace ebcc
