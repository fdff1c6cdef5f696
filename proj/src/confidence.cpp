#include "ebcc/confidence.hpp"

#include <cmath>

namespace ebcc {

HedgedCapitalCS::HedgedCapitalCS(double alpha, int grid)
    : alpha_(alpha), inv_alpha_(1.0 / alpha), log_term_(2.0 * std::log(2.0 / alpha)), grid_(grid) {
    check_level(alpha, "alpha_cs");
    if (grid < 2) throw std::domain_error("hedged CS grid needs at least two points");
    q_.resize(grid);
    clip_long_.resize(grid);
    clip_short_.resize(grid);
    for (int i = 0; i < grid; ++i) {
        double q = static_cast<double>(i) / (grid - 1);
        q_[i] = q;
        clip_long_[i] = q > 0.0 ? 0.5 / q : std::numeric_limits<double>::infinity();
        clip_short_[i] = q < 1.0 ? 0.5 / (1.0 - q) : std::numeric_limits<double>::infinity();
    }
    cap_long_.assign(grid, 1.0);
    cap_short_.assign(grid, 1.0);
    alive_.assign(grid, 1);
    hi_ = grid - 1;
}

void HedgedCapitalCS::update(double x) {
    if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("hedged CS sample outside [0,1]");
    ++t_;
    // Predictable bet size, built from the variance estimate before x.
    const double lambda = std::sqrt(log_term_ / (sigma2_ * static_cast<double>(t_)));

    int survivors = 0;
    double least = std::numeric_limits<double>::infinity();
    for (int i = lo_; i <= hi_; ++i) {
        if (!alive_[i]) continue;
        const double d = x - q_[i];
        cap_long_[i] *= 1.0 + std::min(lambda, clip_long_[i]) * d;
        cap_short_[i] *= 1.0 - std::min(lambda, clip_short_[i]) * d;
        const double k = 0.5 * (cap_long_[i] + cap_short_[i]);
        least = std::min(least, k);
        if (k < inv_alpha_) ++survivors;
    }
    // Every candidate rejected at once only happens through grid coarseness;
    // keep the least-rejected ones rather than return an empty set.
    const double cut = survivors > 0 ? inv_alpha_ : std::nextafter(least, std::numeric_limits<double>::infinity());
    int new_lo = -1, new_hi = -1;
    for (int i = lo_; i <= hi_; ++i) {
        if (!alive_[i]) continue;
        if (0.5 * (cap_long_[i] + cap_short_[i]) >= cut) {
            alive_[i] = 0;
            continue;
        }
        if (new_lo < 0) new_lo = i;
        new_hi = i;
    }
    lo_ = new_lo;
    hi_ = new_hi;

    sum_ += x;
    const double mu = (0.5 + sum_) / (t_ + 1.0);
    sq_dev_ += (x - mu) * (x - mu);
    sigma2_ = (0.25 + sq_dev_) / (t_ + 1.0);
}

Interval HedgedCapitalCS::interval() const {
    const double step = 1.0 / (grid_ - 1);
    return {std::max(0.0, q_[lo_] - step), std::min(1.0, q_[hi_] + step)};
}

double avcs_rho(double alpha, double k0) {
    check_level(alpha, "alpha_cs");
    if (!(k0 > 0)) throw std::domain_error("avcs_rho needs a positive sample size");
    const double l = -2.0 * std::log(alpha);
    return std::sqrt((l + std::log(l + 1.0)) / k0);
}

double avcs_radius(double sigma, double k, double rho, double alpha) {
    const double r2k = rho * rho * k + 1.0;
    return sigma * std::sqrt(2.0 * r2k / (k * k * rho * rho) * std::log(std::sqrt(r2k) / alpha));
}

AsymptoticCS::AsymptoticCS(double alpha, double rho) : alpha_(alpha), rho_(rho) {
    check_level(alpha, "alpha_cs");
    if (!(rho > 0)) throw std::domain_error("AVCS rho must be positive");
}

void AsymptoticCS::update(double x) {
    if (!std::isfinite(x)) throw std::domain_error("AVCS sample is not finite");
    ++k_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(k_);
    m2_ += delta * (x - mean_);
}

Interval AsymptoticCS::interval() const {
    if (k_ < 2) return {};
    double r = avcs_radius(sd(), static_cast<double>(k_), rho_, alpha_);
    if (!(r > 0)) r = 1e-12 * (1.0 + std::abs(mean_));
    return {mean_ - r, mean_ + r};
}

namespace {

bool decisive(const Interval& iv, double target, StopReason& reason) {
    if (iv.upper <= target) {
        reason = StopReason::Boost;
        return true;
    }
    if (iv.lower > target) {
        reason = StopReason::NoBoost;
        return true;
    }
    return false;
}

}  // namespace

HybridResult hybrid_cs(const std::function<double()>& draw, const HybridOptions& opt) {
    if (opt.exact_budget < 0 || opt.asymptotic_budget < 0) throw std::domain_error("CS budgets must be nonnegative");
    if (opt.batch_size < 1) throw std::domain_error("batch_size must be positive");
    HybridResult res;
    const long cap = opt.exact_budget + opt.asymptotic_budget;
    const long bounded = opt.bounds ? opt.exact_budget : 0;
    AsymptoticCS asym(opt.alpha, avcs_rho(opt.alpha, static_cast<double>(bounded + opt.batch_size)));

    if (bounded > 0) {
        const double lo = opt.bounds->first, hi = opt.bounds->second;
        const double width = hi > lo ? hi - lo : 1.0;
        HedgedCapitalCS hedged(opt.alpha);
        while (res.samples < bounded) {
            const long nb = std::min(opt.batch_size, bounded - res.samples);
            for (long i = 0; i < nb; ++i) {
                double x = draw();
                hedged.update(std::clamp((x - lo) / width, 0.0, 1.0));
                asym.update(x);
            }
            res.samples += nb;
            Interval s = hedged.interval();
            res.interval = {lo + width * s.lower, lo + width * s.upper};
            if (decisive(res.interval, opt.target, res.reason)) return res;
        }
    }
    while (res.samples < cap) {
        const long nb = std::min(opt.batch_size, cap - res.samples);
        for (long i = 0; i < nb; ++i) asym.update(draw());
        res.samples += nb;
        res.interval = asym.interval();
        if (decisive(res.interval, opt.target, res.reason)) return res;
    }
    res.reason = StopReason::BudgetExhausted;
    return res;
}

}  // namespace ebcc
